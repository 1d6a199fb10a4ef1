// Acceptance gate: one PASS/FAIL line per criterion.
//   acceptance                  all criteria
//   acceptance --criterion N    one criterion
//   acceptance --heavy          also the 15x15 decay run of criterion 6

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include "enzgrid/analysis.hpp"
#include "enzgrid/config.hpp"
#include "enzgrid/io.hpp"
#include "enzgrid/materials.hpp"
#include "enzgrid/oracle.hpp"

using namespace enzgrid;
namespace fs = std::filesystem;
using fdtd::Component;
using geometry::Point;
using cplx = std::complex<double>;

namespace {

const fs::path kConfigs = ENZGRID_CONFIG_DIR;
const fs::path kCli = ENZGRID_CLI;

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        notes.push_back(what + (ok ? "" : "  <-- violated"));
    }
    void info(const std::string& what) { notes.push_back("(info) " + what); }
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

class Stopwatch {
public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

bool within(double value, double target, double rel) { return std::abs(value - target) <= rel * std::abs(target); }

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("enzgrid_acceptance_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

struct Run {
    config::RunConfig rc;
    config::Execution ex;
};

std::vector<Run> run_config(const std::string& name, Outcome& o) {
    std::vector<Run> out;
    for (const auto& rc : config::load_runs(kConfigs / (name + ".json"))) {
        out.push_back({rc, config::execute(rc)});
        const auto& ex = out.back().ex;
        o.info(fmt("%s/%s: %dx%d cells, %ld steps, converged %s, %.1f s", name.c_str(), rc.variant.c_str(), ex.raster.nx,
                   ex.raster.ny, ex.result.steps, ex.result.converged ? "yes" : "no", ex.seconds));
    }
    return out;
}

Point source_of(const config::Execution& ex) { return std::get<fdtd::DipoleSource>(ex.sources.front()).position; }

std::size_t nearest_cavity(const geometry::Scene& scene, Point p) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < scene.cavity_centers.size(); ++k)
        if (geometry::distance(scene.cavity_centers[k], p) < geometry::distance(scene.cavity_centers[best], p)) best = k;
    return best;
}

// Index of the recorded frequency closest to the drive.
std::size_t drive_index(const config::Execution& ex) {
    const double w = fdtd::carrier(fdtd::waveform_of(ex.sources.front()));
    const auto& f = ex.result.frequencies;
    std::size_t best = 0;
    for (std::size_t k = 1; k < f.size(); ++k)
        if (std::abs(f[k] - w) < std::abs(f[best] - w)) best = k;
    return best;
}

// ---------------------------------------------------------------------------

Outcome coherence_chain() {
    Outcome o;
    struct Target {
        const char* preset;
        double wavelength, tau, lc, tol_tau, tol_lc;
    };
    const Target targets[] = {{"sic", 10.3e-6, 1.061e-12, 1.4e-3, 0.10, 0.10},
                              {"tin", 667e-9, 2.08e-15, 434e-9, 0.15, 0.15}};
    const auto dir = scratch("material");
    for (const auto& t : targets) {
        const auto json_path = dir / (std::string(t.preset) + ".json");
        const std::string cmd = "\"" + kCli.string() + "\" material --preset " + t.preset + " --json \"" +
                                json_path.string() + "\" > /dev/null";
        Stopwatch sw;
        const int rc = std::system(cmd.c_str());
        const double secs = sw.seconds();
        o.check(rc == 0, fmt("%s: material command exit %d", t.preset, rc));
        if (rc != 0) continue;
        const auto j = io::read_json(json_path);
        const double lam = j.at("enz_wavelength_m"), tau = j.at("coherence_time_s"), lc = j.at("coherence_length_m");
        o.check(within(lam, t.wavelength, 0.02), fmt("%s: ENZ wavelength %.4g m (target %.4g +-2%%)", t.preset, lam, t.wavelength));
        o.check(within(tau, t.tau, t.tol_tau),
                fmt("%s: tau_c %.4g s (target %.4g +-%.0f%%)", t.preset, tau, t.tau, 100 * t.tol_tau));
        o.check(within(lc, t.lc, t.tol_lc), fmt("%s: L_c %.4g m (target %.4g +-%.0f%%)", t.preset, lc, t.lc, 100 * t.tol_lc));
        o.check(secs < 1.0, fmt("%s: runtime %.3f s (< 1 s)", t.preset, secs));
    }
    return o;
}

Outcome node_budget() {
    Outcome o;
    Stopwatch sw;
    const double lc = 1.4e-3, a = 2.089e-6;
    const auto n = analysis::node_budget(lc, a);
    o.check(n >= 1'400'000 && n <= 1'420'000, fmt("node_budget(1.4 mm, 2.089 um) = %llu", static_cast<unsigned long long>(n)));
    const double ratio = lc / a;
    const long m = static_cast<long>(ratio) + 1;
    std::uint64_t count = 0;
    for (long i = -m; i <= m; ++i)
        for (long j = -m; j <= m; ++j)
            if (static_cast<double>(i * i + j * j) <= ratio * ratio) ++count;
    const double rel = std::abs(static_cast<double>(count) - static_cast<double>(n)) / static_cast<double>(n);
    o.check(rel <= 0.01, fmt("lattice enumeration %llu, relative difference %.2e", static_cast<unsigned long long>(count), rel));
    o.check(sw.seconds() < 5.0, fmt("runtime %.2f s (< 5 s)", sw.seconds()));
    return o;
}

Outcome plasmonic_ratio() {
    Outcome o;
    const auto r = materials::coherence_report(materials::load_preset("tin"));
    const double ratio = r.coherence_length / 10e-9;
    o.check(ratio >= 40.0, fmt("L_c(TiN) / 10 nm = %.1f (>= 40)", ratio));
    return o;
}

// Vacuum dipole runs at 20 cells per wavelength; G read at 1..5 wavelengths
// along x, y and the diagonal.
Outcome green_equivalence() {
    Outcome o;
    Stopwatch sw;
    const double lam = 1e-6, cell = lam / 20, w = wavelength_to_omega(lam);
    geometry::Scene scene;
    scene.background = scene.materials.add("vacuum", geometry::Vacuum{});
    scene.bounds = {-5.6e-6, -5.6e-6, 5.6e-6, 5.6e-6};
    fdtd::PmlSpec pml;
    pml.cells = 12;
    const auto raster = geometry::rasterize(scene, cell, pml.padding());
    fdtd::EngineOptions opt;
    opt.pml = pml;
    opt.dt = fdtd::snapped_dt(cell, 0.5, w);

    std::vector<fdtd::Monitor> mons;
    std::vector<std::pair<std::string, double>> where;
    for (int k = 1; k <= 5; ++k) {
        const double r = k * lam, s = r / std::sqrt(2.0);
        for (auto [tag, p] : {std::pair{"x", Point{r, 0}}, std::pair{"y", Point{0, r}}, std::pair{"d", Point{s, s}}}) {
            const std::string name = std::string(tag) + std::to_string(k);
            mons.push_back(fdtd::PointMonitor{name, p});
            where.push_back({name, r});
        }
    }
    fdtd::RunControl ctl;
    ctl.steady_tolerance = 1e-4;
    auto drive = [&](Point orientation, Point& src) {
        fdtd::Engine e(raster, opt);
        e.add_source(fdtd::DipoleSource{{0, 0}, orientation, 1.0, fdtd::RampedCW{w, 8}});
        const auto c = orientation.x != 0.0 ? Component::Ex : Component::Ey;
        const auto [i, j] = e.nearest(c, {0, 0});
        src = e.position(c, i, j);
        return fdtd::run(e, mons, ctl);
    };
    Point src_x, src_y;
    const auto rx = drive({1, 0}, src_x);
    const auto ry = drive({0, 1}, src_y);
    o.check(rx.converged && ry.converged, "both dipole runs reached steady state");

    // Reference: the closed-form dyadic with the grid's own wavenumber along
    // the source-to-sample direction (numerical dispersion of the Yee scheme).
    const double dt = opt.dt;
    auto reference = [&](Point from, Point to, bool grid_k) {
        double k = w / kC0;
        if (grid_k) k = oracle::yee_wavenumber(w, cell, dt, std::atan2(to.y - from.y, to.x - from.x));
        return oracle::vacuum_green_2d({from.x, from.y}, {to.x, to.y}, k * kC0);
    };
    double worst = 0.0, worst_raw = 0.0;
    for (const auto& [name, r] : where) {
        const auto g = analysis::extract_green(rx, ry, {0, 0}, name);
        const auto& s = rx.monitor(name).samples.at(0);
        double err = 0.0, raw = 0.0, scale = 0.0;
        for (int row = 0; row < 2; ++row) {
            for (int col = 0; col < 2; ++col) {
                const Point from = col == 0 ? src_x : src_y;
                const Point to = s.location[static_cast<std::size_t>(row)];
                const auto ref = reference(from, to, true)(row, col);
                const auto ana = reference(from, to, false)(row, col);
                scale = std::max(scale, std::abs(ref));
                err = std::max(err, std::abs(g.g(row, col) - ref));
                raw = std::max(raw, std::abs(g.g(row, col) - ana));
            }
        }
        worst = std::max(worst, err / scale);
        worst_raw = std::max(worst_raw, raw / scale);
    }
    o.check(worst <= 0.03, fmt("largest tensor deviation over 15 points at 1-5 wavelengths: %.2f%% (<= 3%%)", 100 * worst));
    o.info(fmt("same comparison with the continuum wavenumber: %.2f%%", 100 * worst_raw));
    o.check(sw.seconds() < 120.0, fmt("runtime %.1f s (< 2 min)", sw.seconds()));
    return o;
}

// Slab of each preset in vacuum, plane-wave pulse, t and r against the
// transfer-matrix result across the source band.
Outcome slab_equivalence() {
    Outcome o;
    Stopwatch sw;
    struct Case {
        const char* preset;
        double thickness;  // in ENZ wavelengths
    };
    for (const Case& cs : {Case{"sic", 0.1}, Case{"tin", 0.1}, Case{"enz", 0.25}}) {
        const auto m = materials::load_preset(cs.preset);
        const double wenz = *materials::primary_enz(m), lam = omega_to_wavelength(wenz), cell = lam / 100;
        const int n = std::max(1, static_cast<int>(std::lround(cs.thickness * lam / cell)));
        const double thick = n * cell;
        fdtd::PmlSpec pml;
        pml.cells = 20;
        pml.bottom = pml.top = false;
        auto raster = [&](bool with_slab) {
            geometry::Scene s;
            s.background = s.materials.add("vacuum", geometry::Vacuum{});
            const auto id = s.materials.add(m.name, m);
            s.bounds = {-3 * lam, -2 * cell, 3 * lam, 2 * cell};
            if (with_slab) s.shapes.push_back(geometry::Rect{0, -1, thick, 1, id});
            return geometry::rasterize(s, cell, pml.padding());
        };
        const double band = 0.2;  // fractional FWHM of the pulse
        const fdtd::GaussianPulse pulse{wenz, band};
        fdtd::RunControl ctl;
        for (int k = -5; k <= 5; ++k) ctl.frequencies.push_back(wenz * (1.0 + 0.5 * band * k / 5.0));
        ctl.max_steps = 5'000'000;
        ctl.decay_tolerance = 1e-10;
        const std::vector<fdtd::Monitor> mons{fdtd::PointMonitor{"front", {-2 * lam, 0}},
                                              fdtd::PointMonitor{"back", {thick + 2 * lam, 0}}};
        fdtd::EngineOptions opt;
        opt.pml = pml;
        auto go = [&](bool with_slab) {
            fdtd::Engine e(raster(with_slab), opt);
            e.add_source(fdtd::LineSource{-2.5 * lam, -1, 1, 1.0, pulse});
            return std::pair{fdtd::run(e, mons, ctl), e.dt()};
        };
        const auto [empty, dt] = go(false);
        const auto [slab, dt_slab] = go(true);
        (void)dt_slab;
        const double x_front = empty.monitor("front").samples[0].location[1].x;
        double worst = 0.0;
        for (std::size_t f = 0; f < ctl.frequencies.size(); ++f) {
            const double w = ctl.frequencies[f];
            const double k = oracle::yee_wavenumber(w, cell, dt);
            const auto e0f = empty.monitor("front").samples[0].get(Component::Ey, f);
            const auto e0b = empty.monitor("back").samples[0].get(Component::Ey, f);
            const auto e1f = slab.monitor("front").samples[0].get(Component::Ey, f);
            const auto e1b = slab.monitor("back").samples[0].get(Component::Ey, f);
            const cplx j(0.0, 1.0);
            const cplx t = e1b / e0b * std::exp(j * k * thick);
            const cplx r = (e1f - e0f) / e0f * std::exp(2.0 * j * k * x_front);
            const auto tm = oracle::transfer_matrix_slab(materials::permittivity(m, w), thick, w);
            worst = std::max({worst, std::abs(t - tm.t), std::abs(r - tm.r)});
        }
        o.check(empty.converged && slab.converged && worst <= 0.02,
                fmt("%s: slab %.3g m, 11 frequencies over +-%.0f%%, largest |t|,|r| deviation %.4f (<= 0.02)", cs.preset,
                    thick, 50 * band, worst));
    }
    o.check(sw.seconds() < 120.0, fmt("runtime %.1f s (< 2 min)", sw.seconds()));
    return o;
}

analysis::DecayCurve decay_of(const Run& r) {
    analysis::DecayOptions opt;
    opt.radius = r.ex.scene.cavity_radius;
    opt.source = source_of(r.ex);
    opt.exclusion = r.rc.analysis.decay ? r.rc.analysis.decay->exclusion : 0.0;
    opt.frequency = drive_index(r.ex);
    return analysis::decay_vs_distance(r.ex.result, r.ex.scene.cavity_centers, nearest_cavity(r.ex.scene, opt.source),
                                       opt);
}

void compare_decay(const analysis::DecayCurve& enz, const analysis::DecayCurve& air, double farthest_threshold,
                   Outcome& o) {
    bool dominates = true;
    double min_ratio = 1e300;
    for (const auto& p : enz.points) {
        const double a = air.at(p.cavity);
        dominates = dominates && p.value >= a;
        if (p.distance > 0.0) min_ratio = std::min(min_ratio, p.value / a);
    }
    o.check(dominates, "ENZ decay curve >= air curve at every cavity");
    const double far = enz.farthest().distance;
    double far_ratio = 1e300;
    for (const auto& p : enz.points) {
        if (std::abs(p.distance - far) > 1e-9 * far) continue;
        const double a = air.at(p.cavity);
        far_ratio = std::min(far_ratio, p.value / a);
        o.info(fmt("farthest cavity %zu at %.3g m: ENZ %.4g, air %.4g, ratio %.3g", p.cavity, p.distance, p.value, a,
                   p.value / a));
    }
    o.check(far_ratio >= farthest_threshold,
            fmt("ratio at the farthest cavities (smallest of the tied set) %.3g (>= %g)", far_ratio, farthest_threshold));
    o.info(fmt("smallest ENZ/air ratio over all cavities %.3g; every cavity >= 10x: %s", min_ratio,
               min_ratio >= 10.0 ? "holds" : "does not hold"));
}

Outcome fig4_decay(bool heavy) {
    Outcome o;
    const auto runs = run_config("fig4_pair", o);
    for (const auto& r : runs) o.check(r.ex.result.converged, r.rc.variant + " run converged");
    const auto enz = decay_of(runs.at(0)), air = decay_of(runs.at(1));
    for (const auto* c : {&enz, &air}) {
        bool bounded = true;
        for (const auto& p : c->points) bounded = bounded && (p.distance == 0.0 || p.value <= 1.0);
        o.info(fmt("%s curve: source cavity %.3g, values <= 1 elsewhere: %s", c == &enz ? "ENZ" : "air",
                   c->points.front().value, bounded ? "yes" : "no"));
    }
    compare_decay(enz, air, 10.0, o);
    if (heavy) {
        auto docs = config::load_runs(kConfigs / "fig4_pair.json");
        std::vector<Run> big;
        Stopwatch sw;
        for (auto rc : docs) {
            auto& g = std::get<geometry::GridNetworkSpec>(rc.scene);
            g.rows = g.cols = 15;
            rc.sources.front().cavity = 112;
            big.push_back({rc, config::execute(rc)});
            const auto& ex = big.back().ex;
            o.info(fmt("15x15 %s: %ld steps, converged %s, %.0f s", rc.variant.c_str(), ex.result.steps,
                       ex.result.converged ? "yes" : "no", ex.seconds));
        }
        const auto e = decay_of(big.at(0)), a = decay_of(big.at(1));
        const auto far = e.farthest();
        const double ratio = a.at(far.cavity) / far.value;
        o.check(ratio <= 1e-3, fmt("15x15 farthest cavity: air / ENZ = %.3g (<= 1e-3)", ratio));
        o.check(sw.seconds() <= 1800.0, fmt("15x15 runtime %.0f s (<= 30 min)", sw.seconds()));
    }
    return o;
}

Outcome fig2_coupling() {
    Outcome o;
    Stopwatch sw;
    const auto runs = run_config("two_cavity", o);
    const auto& fw = runs.at(0).ex.result;
    const auto& bw = runs.at(1).ex.result;
    o.check(fw.converged && bw.converged, "pulse runs decayed below tolerance");
    const analysis::Dipole dx{{1, 0}, 1.0};
    double worst = 0.0, peak = -1e300, peak_w = 0.0;
    for (std::size_t f = 0; f < fw.frequencies.size(); ++f) {
        analysis::GreensSample g1, g2;
        g1.r1 = source_of(runs[0].ex);
        g2.r1 = source_of(runs[1].ex);
        analysis::fill_green_column(g1, fw, "receiver", 0, f);
        analysis::fill_green_column(g2, bw, "receiver", 0, f);
        const auto a = analysis::coupled_decay(g1, dx, dx), b = analysis::coupled_decay(g2, dx, dx);
        worst = std::max(worst, std::abs(a.gamma21 - b.gamma21) / std::max(std::abs(a.gamma21), std::abs(b.gamma21)));
        if (a.gamma21_normalized > peak) {
            peak = a.gamma21_normalized;
            peak_w = fw.frequencies[f];
        }
    }
    o.check(worst <= 0.03, fmt("reciprocity: largest relative Gamma21 difference %.2e (<= 3%%)", worst));
    const auto m = materials::load_preset("enz");
    const auto lp = materials::loss_peak(m, *materials::primary_enz(m));
    o.check(peak_w >= lp.omega_low && peak_w <= lp.omega_high,
            fmt("Gamma21/Gamma0 peak %.4g at %.7g rad/s; loss FWHM band [%.7g, %.7g]", peak, peak_w, lp.omega_low,
                lp.omega_high));
    o.check(sw.seconds() < 600.0, fmt("runtime %.0f s (< 10 min)", sw.seconds()));
    return o;
}

Outcome phase_coherence() {
    Outcome o;
    Stopwatch sw;
    const auto runs = run_config("fig2_grid", o);
    const auto enz = analysis::phase_spread(runs.at(0).ex.result, 5, 5, drive_index(runs[0].ex));
    const auto air = analysis::phase_spread(runs.at(1).ex.result, 5, 5, drive_index(runs[1].ex));
    o.check(runs[0].ex.result.converged && runs[1].ex.result.converged, "both runs converged");
    o.check(enz.excluded.empty() && air.excluded.empty(), "no zero phasors");
    o.check(enz.spread < kPi / 8, fmt("ENZ spread %.4f rad (< pi/8 = %.4f)", enz.spread, kPi / 8));
    o.check(air.spread > kPi / 2, fmt("air spread %.4f rad (> pi/2 = %.4f)", air.spread, kPi / 2));
    o.check(sw.seconds() < 600.0, fmt("runtime %.0f s (< 10 min)", sw.seconds()));
    return o;
}

// Vacuum parallel-plate guide of width a turning through an ENZ L-channel
// into a second guide, against the same guide running straight.
struct Bend {
    double a = 100e-9, w = 20e-9, lh = 70e-9, lv = 60e-9, cell = 5e-9;
    double area() const { return lh * w + (lv - 0.5 * w) * w; }
};

double supercoupling_fdtd(const Bend& b, double omega, Outcome& o) {
    const double far = 3e-6, xc = b.lh - 0.5 * b.w;
    const std::string enz = "enz";
    auto guides = [&](bool bent) {
        geometry::Scene s;
        s.background = s.materials.add("pec", geometry::Pec{});
        const auto vac = s.materials.add("vacuum", geometry::Vacuum{});
        if (!bent) {
            s.shapes.push_back(geometry::Rect{-far, 0, far, b.a, vac});
            s.bounds = {-0.7e-6, -2 * b.cell, 0.7e-6, b.a + 2 * b.cell};
            return s;
        }
        const auto e = s.materials.add(enz, geometry::resolve_material(enz));
        s.shapes.push_back(geometry::Rect{-far, 0, 0, b.a, vac});
        s.shapes.push_back(geometry::Rect{0, 0.5 * (b.a - b.w), b.lh, 0.5 * (b.a + b.w), e});
        s.shapes.push_back(geometry::Rect{b.lh - b.w, 0.5 * (b.a - b.w), b.lh, 0.5 * b.a + b.lv, e});
        s.shapes.push_back(geometry::Rect{xc - 0.5 * b.a, 0.5 * b.a + b.lv, xc + 0.5 * b.a, far, vac});
        s.bounds = {-0.7e-6, -2 * b.cell, xc + 0.5 * b.a + 2 * b.cell, 0.5 * b.a + b.lv + 0.7e-6};
        return s;
    };
    fdtd::RunControl ctl;
    ctl.max_steps = 3'000'000;
    ctl.steady_tolerance = 1e-5;
    auto mean_hz = [](const fdtd::MonitorResult& m) {
        cplx s = 0.0;
        for (const auto& p : m.samples) s += p.get(Component::Hz);
        return std::abs(s) / static_cast<double>(m.samples.size());
    };
    auto go = [&](bool bent) {
        fdtd::PmlSpec pml;
        pml.cells = 20;
        pml.bottom = false;
        if (bent) pml.right = false;
        else pml.top = false;
        fdtd::EngineOptions opt;
        opt.pml = pml;
        opt.dt = fdtd::snapped_dt(b.cell, 0.5, omega);
        fdtd::Engine e(geometry::rasterize(guides(bent), b.cell, pml.padding()), opt);
        e.add_source(fdtd::LineSource{-0.55e-6, 0, b.a, 1.0, fdtd::RampedCW{omega, 10}});
        const double y = 0.5 * b.a + b.lv + 0.4e-6;
        const auto line = bent ? geometry::cut_line({xc - 0.5 * b.a + b.cell, y}, {xc + 0.5 * b.a - b.cell, y}, b.cell)
                               : geometry::cut_line({0.4e-6, b.cell}, {0.4e-6, b.a - b.cell}, b.cell);
        const auto r = fdtd::run(e, {fdtd::LineMonitor{"out", line}}, ctl);
        o.info(fmt("%s guide: %ld steps, converged %s", bent ? "bent" : "straight", r.steps, r.converged ? "yes" : "no"));
        if (!r.converged) o.check(false, "guide run converged");
        return mean_hz(r.monitor("out"));
    };
    return go(true) / go(false);
}

Outcome supercoupling() {
    Outcome o;
    Stopwatch sw;
    const auto m = materials::load_preset("enz");
    const double omega = *materials::primary_enz(m), k0 = omega / kC0;
    const Bend b;
    const double x = k0 * b.area();
    o.check(x <= 0.2 * b.a, fmt("k0 A_p = %.3g m <= 0.2 a = %.3g m", x, 0.2 * b.a));
    const double analytic = analysis::supercoupling_transmission({b.a, b.a, b.area(), 1.0, k0});
    const double sim = supercoupling_fdtd(b, omega, o);
    o.check(std::abs(sim - analytic) <= 0.1 * analytic,
            fmt("L-bend |T|: simulated %.4f, analytic %.4f (within 10%%)", sim, analytic));

    const auto runs = run_config("bend_pair", o);
    double ret[3] = {0, 0, 0};
    for (std::size_t v = 0; v < runs.size() && v < 3; ++v) {
        const auto& [rc, ex] = runs[v];
        const auto& c = ex.scene.cavity_centers;
        o.check(ex.result.converged, rc.variant + " bend run converged");
        ret[v] = analysis::amplitude_retention(ex.result.monitor(rc.analysis.retention->line), c[0], c[1],
                                               ex.scene.cavity_radius, source_of(ex), rc.analysis.retention->exclusion,
                                               drive_index(ex));
    }
    o.check(ret[0] > ret[1], fmt("retention ENZ %.4g > air %.4g", ret[0], ret[1]));
    o.info(fmt("ENZ retention >= 0.7: %s; merged cavities %.4g in [0.9, 1.0]: %s", ret[0] >= 0.7 ? "holds" : "does not hold",
               ret[2], ret[2] >= 0.9 && ret[2] <= 1.0 ? "holds" : "does not hold"));
    o.info(fmt("runtime %.0f s", sw.seconds()));
    return o;
}

geometry::SceneRaster vacuum_box(double w, double h, double cell, geometry::Padding pad) {
    geometry::Scene s;
    s.background = s.materials.add("vacuum", geometry::Vacuum{});
    s.bounds = {-w / 2, -h / 2, w / 2, h / 2};
    return geometry::rasterize(s, cell, pad);
}

Outcome engine_health() {
    Outcome o;
    const double lam = 1e-6, cell = lam / 20, w = wavelength_to_omega(lam);

    {  // pulse speed from the cross-correlation lag between two probes
        fdtd::PmlSpec pml;
        pml.bottom = pml.top = false;
        fdtd::EngineOptions opt;
        opt.pml = pml;
        fdtd::Engine e(vacuum_box(12e-6, 4 * cell, cell, pml.padding()), opt);
        const fdtd::GaussianPulse g{w, 0.5};
        e.add_source(fdtd::LineSource{-5e-6, -1, 1, 1.0, g});
        const auto [i1, j1] = e.nearest(Component::Ey, {-3e-6, 0});
        const auto [i2, j2] = e.nearest(Component::Ey, {4e-6, 0});
        const double x1 = e.position(Component::Ey, i1, j1).x, x2 = e.position(Component::Ey, i2, j2).x;
        std::vector<double> a, b;
        const long n = static_cast<long>((11e-6 / kC0 + 2 * fdtd::settle_time(g)) / e.dt());
        for (long k = 0; k < n; ++k) {
            e.step();
            a.push_back(e.ey(i1, j1));
            b.push_back(e.ey(i2, j2));
        }
        auto xc = [&](long lag) {
            double s = 0.0;
            for (std::size_t k = 0; k + lag < b.size(); ++k) s += a[k] * b[k + lag];
            return s;
        };
        long best = 1;
        double top = xc(1);
        for (long lag = 2; lag + 1 < n; ++lag)
            if (const double c = xc(lag); c > top) {
                top = c;
                best = lag;
            }
        const double ym = xc(best - 1), y0 = xc(best), yp = xc(best + 1);
        const double lag = best + 0.5 * (ym - yp) / (ym - 2.0 * y0 + yp);
        const double v = (x2 - x1) / (lag * e.dt());
        o.check(std::abs(v / kC0 - 1.0) <= 0.01, fmt("pulse speed %.5f c at 20 cells/wavelength (within 1%%)", v / kC0));
    }

    {  // PML: small domain against a domain large enough that nothing returns
        fdtd::PmlSpec pml;
        pml.cells = 10;
        fdtd::EngineOptions opt;
        opt.pml = pml;
        fdtd::Engine small(vacuum_box(2e-6, 2e-6, cell, pml.padding()), opt);
        fdtd::Engine big(vacuum_box(42e-6, 42e-6, cell, pml.padding()), opt);
        const fdtd::GaussianPulse g{w, 1.0};
        for (auto* e : {&small, &big}) e->add_source(fdtd::DipoleSource{{0, 0}, {1, 0}, 1.0, g});
        const Point probes[] = {{0, 0.9e-6}, {0.9e-6, 0}, {0.9e-6, 0.9e-6}, {0.3e-6, 0.2e-6}};
        double ref = 0.0, diff = 0.0;
        for (int n = 0; n < 1500; ++n) {
            small.step();
            big.step();
            for (const Point p : probes) {
                const auto [i, j] = small.nearest(Component::Ex, p);
                const auto [k, l] = big.nearest(Component::Ex, p);
                const auto [i2, j2] = small.nearest(Component::Ey, p);
                const auto [k2, l2] = big.nearest(Component::Ey, p);
                const double ax = small.ex(i, j), bx = big.ex(k, l), ay = small.ey(i2, j2), by = big.ey(k2, l2);
                ref = std::max(ref, std::hypot(bx, by));
                diff = std::max(diff, std::hypot(ax - bx, ay - by));
            }
        }
        const double db = 20.0 * std::log10(diff / ref);
        o.check(db < -40.0, fmt("PML reflection %.1f dB (< -40 dB)", db));
    }

    {  // closed PEC box, sources off
        fdtd::EngineOptions opt;
        opt.pml = fdtd::PmlSpec::none();
        opt.track_energy = true;
        fdtd::Engine e(vacuum_box(3e-6, 2e-6, cell, {}), opt);
        const fdtd::GaussianPulse g{w, 1.0};
        e.add_source(fdtd::DipoleSource{{0.3e-6, 0.1e-6}, {0.6, 0.8}, 1.0, g});
        const long settle = static_cast<long>(std::ceil(fdtd::settle_time(g) / e.dt()));
        for (long n = 0; n < settle; ++n) e.step();
        e.clear_sources();
        e.step();
        const double w0 = e.energy();
        double drift = 0.0;
        for (int n = 0; n < 10000; ++n) {
            e.step();
            drift = std::max(drift, std::abs(e.energy() - w0) / w0);
        }
        o.check(w0 > 0.0 && drift < 1e-3, fmt("energy drift %.2e over 1e4 steps (< 0.1%%)", drift));
    }

    {  // zero input on a dispersive, absorbing scene
        auto rc = config::load_runs(kConfigs / "fig4_pair.json").front();
        auto& g = std::get<geometry::GridNetworkSpec>(rc.scene);
        g.rows = g.cols = 2;
        rc.sources.front().cavity = 0;
        const auto scene = config::build_scene(rc);
        const auto raster = config::rasterize(rc, scene);
        fdtd::Engine e(raster, config::engine_options(rc, raster.cell_size));
        auto src = config::drive_sources(rc, config::resolve_sources(rc, scene), raster.cell_size);
        std::get<fdtd::DipoleSource>(src.front()).moment = 0.0;
        for (const auto& s : src) e.add_source(s);
        for (int n = 0; n < 2000; ++n) e.step();
        bool zero = true;
        for (const auto* f : {&e.ex_data(), &e.ey_data(), &e.hz_data()})
            for (double v : *f) zero = zero && v == 0.0;
        o.check(zero, "zero source moment leaves every field sample exactly 0 after 2000 steps");
    }
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"enzgrid acceptance criteria"};
    int only = 0;
    bool heavy = false;
    app.add_option("--criterion", only, "run one criterion (1-10)")->check(CLI::Range(1, 10));
    app.add_flag("--heavy", heavy, "include the 15x15 decay run");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"coherence chain", coherence_chain},
        {"node budget", node_budget},
        {"plasmonic comparison ratio", plasmonic_ratio},
        {"Green tensor vs analytic dyadic", green_equivalence},
        {"dispersive slab vs transfer matrix", slab_equivalence},
        {"decay curves, ENZ vs air", [heavy] { return fig4_decay(heavy); }},
        {"coupled decay reciprocity and peak", fig2_coupling},
        {"phase coherence", phase_coherence},
        {"supercoupling and retention", supercoupling},
        {"engine health", engine_health},
    };
    bool all = true;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        if (only && static_cast<int>(k) + 1 != only) continue;
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o.check(false, std::string("error: ") + e.what());
        }
        for (const auto& n : o.notes) std::cout << "    " << n << "\n";
        std::cout << "criterion " << k + 1 << " [" << criteria[k].first << "]: " << (o.pass ? "PASS" : "FAIL") << std::endl;
        all = all && o.pass;
    }
    return all ? 0 : 1;
}
