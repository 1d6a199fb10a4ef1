// analysis.hpp - post-processing of run phasors: Green tensors, coupled decay
// rates and Lamb shifts, decay-vs-distance curves, phase maps, the
// supercoupling transmission-line model and network budgets.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "constants.hpp"
#include "error.hpp"
#include "fdtd.hpp"
#include "geometry.hpp"
#include "oracle.hpp"

namespace enzgrid::analysis {

using cplx = std::complex<double>;
using fdtd::Component;
using geometry::Point;
using oracle::Tensor2;

/// Monitor name used for the cavity at row-major index k.
inline std::string cavity_monitor(std::size_t k) { return "cavity_" + std::to_string(k); }

// ---------------------------------------------------------------------------
// Green tensors. In 2D, E = w^2 mu0 G p for a line dipole p (C/m), which
// makes G dimensionless; run phasors are already per unit dipole moment.

struct GreensSample {
    Point r1;
    Point r2;
    double omega = 0.0;
    double k0 = 0.0;
    Tensor2 g;
    std::array<bool, 2> columns{false, false};  // which source orientations were supplied
};

inline void require_converged(const fdtd::RunResult& run) {
    if (!run.converged) throw Error(ErrorKind::NotConverged, "run did not reach steady state; refusing to extract");
}

/// One column of G from a run driven by a dipole along x (column 0) or y
/// (column 1). The two rows are read at the monitor's Ex and Ey samples.
inline void fill_green_column(GreensSample& s, const fdtd::RunResult& run, const std::string& monitor, int column,
                              std::size_t frequency = 0) {
    require_converged(run);
    const auto& sample = run.monitor(monitor).samples.at(0);
    const double w = run.frequencies.at(frequency);
    if (s.omega != 0.0 && std::abs(s.omega - w) > 1e-9 * w)
        throw Error(ErrorKind::Domain, "Green columns recorded at different frequencies");
    s.omega = w;
    s.k0 = w / kC0;
    s.r2 = sample.requested;
    const double scale = 1.0 / (w * w * kMu0);
    s.g(0, column) = sample.get(Component::Ex, frequency) * scale;
    s.g(1, column) = sample.get(Component::Ey, frequency) * scale;
    s.columns[static_cast<std::size_t>(column)] = true;
}

/// Full tensor from two runs with x- and y-oriented unit dipoles at r1.
inline GreensSample extract_green(const fdtd::RunResult& x_run, const fdtd::RunResult& y_run, Point r1,
                                  const std::string& monitor, std::size_t frequency = 0) {
    GreensSample s;
    s.r1 = r1;
    fill_green_column(s, x_run, monitor, 0, frequency);
    fill_green_column(s, y_run, monitor, 1, frequency);
    return s;
}

/// Largest absolute difference between two tensors relative to the larger
/// tensor's biggest component.
inline double tensor_mismatch(const Tensor2& a, const Tensor2& b) {
    double diff = 0.0, scale = 0.0;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            diff = std::max(diff, std::abs(a(r, c) - b(r, c)));
            scale = std::max({scale, std::abs(a(r, c)), std::abs(b(r, c))});
        }
    if (scale == 0.0) return 0.0;
    return diff / scale;
}

// ---------------------------------------------------------------------------
// Coupled decay and dipole-dipole shift:
//   Gamma21 = (2 k0^2 / (hbar eps0)) d2 . Im G . d1
//   dw21    = -(k0^2 / (hbar eps0)) d2 . Re G . d1
// normalized by Gamma0 = (2 k0^2 / (hbar eps0)) |d1| |d2| Im G_vac(r, r).

struct Dipole {
    Point orientation{1.0, 0.0};
    double moment = 1.0;  // C m (per unit length in 2D)
};

struct CouplingResult {
    double omega = 0.0;
    double gamma21 = 0.0;      // 2D per-unit-length units
    double lamb_shift = 0.0;
    double gamma0 = 0.0;
    double gamma21_normalized = 0.0;
    double lamb_shift_normalized = 0.0;
    Dipole d1, d2;
};

namespace detail {

inline std::array<double, 2> vec(const Dipole& d) {
    const double n = std::hypot(d.orientation.x, d.orientation.y);
    if (!(n > 0.0)) throw Error(ErrorKind::Domain, "dipole orientation must be non-zero");
    return {d.moment * d.orientation.x / n, d.moment * d.orientation.y / n};
}

inline cplx contract(const std::array<double, 2>& a, const Tensor2& g, const std::array<double, 2>& b) {
    cplx s = 0.0;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) s += a[static_cast<std::size_t>(r)] * g(r, c) * b[static_cast<std::size_t>(c)];
    return s;
}

}  // namespace detail

inline CouplingResult coupled_decay(const GreensSample& g, const Dipole& d1, const Dipole& d2,
                                    std::optional<double> omega = std::nullopt) {
    if (omega && std::abs(*omega - g.omega) > 1e-9 * g.omega)
        throw Error(ErrorKind::Domain, "coupled_decay: Green tensor was extracted at a different frequency");
    const auto v1 = detail::vec(d1), v2 = detail::vec(d2);
    for (std::size_t c = 0; c < 2; ++c)
        if (v1[c] != 0.0 && !g.columns[c])
            throw Error(ErrorKind::Domain, "coupled_decay: Green column for the first dipole's orientation is missing");
    const cplx proj = detail::contract(v2, g.g, v1);
    const double pref = g.k0 * g.k0 / (kHbar * kEps0);
    CouplingResult r;
    r.omega = g.omega;
    r.d1 = d1;
    r.d2 = d2;
    r.gamma21 = 2.0 * pref * proj.imag();
    r.lamb_shift = -pref * proj.real();
    r.gamma0 = 2.0 * pref * std::abs(d1.moment) * std::abs(d2.moment) * oracle::vacuum_green_2d_self_imag();
    r.gamma21_normalized = r.gamma21 / r.gamma0;
    r.lamb_shift_normalized = r.lamb_shift / r.gamma0;
    return r;
}

/// Vacuum self-term tensor: Im part (1/8) I, real part left at zero.
inline GreensSample vacuum_self_green(Point r, double omega) {
    GreensSample s;
    s.r1 = s.r2 = r;
    s.omega = omega;
    s.k0 = omega / kC0;
    s.g(0, 0) = s.g(1, 1) = cplx(0.0, oracle::vacuum_green_2d_self_imag());
    s.columns = {true, true};
    return s;
}

// ---------------------------------------------------------------------------
// Decay curves and phase maps over a cavity lattice.

struct DecayPoint {
    std::size_t cavity = 0;
    double distance = 0.0;  // m, from the source cavity center
    double value = 0.0;     // peak |E| normalized to the source cavity peak
};

struct DecayCurve {
    std::vector<DecayPoint> points;  // sorted by distance, ties by cavity index

    const DecayPoint& farthest() const { return points.back(); }
    double at(std::size_t cavity) const {
        for (const auto& p : points)
            if (p.cavity == cavity) return p.value;
        throw Error(ErrorKind::Domain, "cavity not in decay curve");
    }
};

inline double e_magnitude(const fdtd::PointPhasors& p, std::size_t f = 0) {
    return std::sqrt(std::norm(p.get(Component::Ex, f)) + std::norm(p.get(Component::Ey, f)));
}

inline const std::string kFieldEx = "field_ex";
inline const std::string kFieldEy = "field_ey";

/// Monitors a decay curve needs besides the cavity probes: full-grid Ex and Ey.
inline std::vector<fdtd::Monitor> decay_field_monitors() {
    return {fdtd::FieldMonitor{kFieldEx, Component::Ex}, fdtd::FieldMonitor{kFieldEy, Component::Ey}};
}

/// Peak |E| over the cells whose centers lie inside each disc. Ex and Ey are
/// averaged onto cell centers. Cells closer than `exclusion` to `source`
/// are skipped.
inline std::vector<double> cavity_peak_field(const fdtd::FieldSnapshot& ex, const fdtd::FieldSnapshot& ey,
                                             const std::vector<Point>& centers, double radius, Point source,
                                             double exclusion) {
    if (ex.component != Component::Ex || ey.component != Component::Ey)
        throw Error(ErrorKind::Domain, "cavity_peak_field needs an Ex and an Ey snapshot");
    const int nx = ex.nx, ny = ey.ny;
    const double cell = ex.cell;
    const double x0 = ex.origin.x, y0 = ey.origin.y;  // center of cell (0, 0)
    std::vector<double> peak(centers.size(), 0.0);
    for (std::size_t k = 0; k < centers.size(); ++k) {
        const Point c = centers[k];
        const int i0 = std::max(0, static_cast<int>(std::floor((c.x - radius - x0) / cell)));
        const int i1 = std::min(nx - 1, static_cast<int>(std::ceil((c.x + radius - x0) / cell)));
        const int j0 = std::max(0, static_cast<int>(std::floor((c.y - radius - y0) / cell)));
        const int j1 = std::min(ny - 1, static_cast<int>(std::ceil((c.y + radius - y0) / cell)));
        for (int j = j0; j <= j1; ++j) {
            for (int i = i0; i <= i1; ++i) {
                const Point p{x0 + i * cell, y0 + j * cell};
                if (geometry::distance(p, c) > radius || geometry::distance(p, source) < exclusion) continue;
                const std::size_t a = static_cast<std::size_t>(j) * static_cast<std::size_t>(ex.nx) + i;
                const std::size_t b = static_cast<std::size_t>(j) * static_cast<std::size_t>(ey.nx) + i;
                const cplx fx = 0.5 * (ex.data[a] + ex.data[a + static_cast<std::size_t>(ex.nx)]);
                const cplx fy = 0.5 * (ey.data[b] + ey.data[b + 1]);
                peak[k] = std::max(peak[k], std::sqrt(std::norm(fx) + std::norm(fy)));
            }
        }
    }
    return peak;
}

struct DecayOptions {
    double radius = 0.0;      // m, cavity radius
    Point source;             // dipole position
    double exclusion = 0.0;   // m, skipped around the dipole
    std::size_t frequency = 0;
};

/// Peak |E| in every cavity normalized to the source cavity peak, sorted by
/// center distance from the source cavity.
inline DecayCurve decay_vs_distance(const fdtd::RunResult& run, const std::vector<Point>& centers,
                                    std::size_t source_cavity, const DecayOptions& opt) {
    if (source_cavity >= centers.size()) throw Error(ErrorKind::Domain, "source cavity index out of range");
    if (!(opt.radius > 0.0)) throw Error(ErrorKind::Domain, "decay_vs_distance: cavity radius must be positive");
    const auto mag = cavity_peak_field(run.field(kFieldEx, opt.frequency), run.field(kFieldEy, opt.frequency),
                                       centers, opt.radius, opt.source, opt.exclusion);
    const double ref = mag[source_cavity];
    if (!(ref > 0.0)) throw Error(ErrorKind::Singular, "source cavity field is zero");
    DecayCurve c;
    for (std::size_t k = 0; k < centers.size(); ++k)
        c.points.push_back({k, geometry::distance(centers[k], centers[source_cavity]), mag[k] / ref});
    std::stable_sort(c.points.begin(), c.points.end(),
                     [](const DecayPoint& a, const DecayPoint& b) { return a.distance < b.distance; });
    return c;
}

/// Circular standard deviation sqrt(-2 ln R) of a set of angles, R the
/// mean resultant length; pi when R < exp(-pi^2 / 2).
inline double circular_spread(const std::vector<double>& phases) {
    if (phases.empty()) throw Error(ErrorKind::Domain, "circular_spread: no phases");
    double c = 0.0, s = 0.0;
    for (double p : phases) {
        c += std::cos(p);
        s += std::sin(p);
    }
    const double R = std::hypot(c, s) / static_cast<double>(phases.size());
    if (R < std::exp(-kPi * kPi / 2.0)) return kPi;
    return std::sqrt(std::max(0.0, -2.0 * std::log(std::min(1.0, R))));
}

struct CavityPhase {
    int row = 0;
    int col = 0;
    double phase = 0.0;  // rad, arg Hz
};

struct PhaseMap {
    std::vector<CavityPhase> cavities;
    std::vector<std::size_t> excluded;  // cavities whose phasor was exactly zero
    double spread = 0.0;
};

/// Phase of Hz at every cavity center of a rows x cols lattice.
inline PhaseMap phase_spread(const fdtd::RunResult& run, int rows, int cols, std::size_t frequency = 0) {
    PhaseMap map;
    std::vector<double> phases;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const std::size_t k = static_cast<std::size_t>(r * cols + c);
            const cplx h = run.monitor(cavity_monitor(k)).samples.at(0).get(Component::Hz, frequency);
            if (h == cplx(0.0)) {
                map.excluded.push_back(k);
                continue;
            }
            map.cavities.push_back({r, c, std::arg(h)});
            phases.push_back(std::arg(h));
        }
    }
    map.spread = phases.empty() ? kPi : circular_spread(phases);
    return map;
}

// ---------------------------------------------------------------------------
// Transmission-line model of ENZ tunneling between two guides of widths a1
// and a2 through an ENZ region of area A_p:
//   rho = [(a1 - a2) + i k0 mu A_p] / [(a1 + a2) - i k0 mu A_p]

struct SupercouplingQuery {
    double a1 = 0.0;         // m
    double a2 = 0.0;         // m
    double area = 0.0;       // m^2
    double mu_relative = 1.0;
    double k0 = 0.0;         // 1/m
};

inline cplx supercoupling_reflection(const SupercouplingQuery& q) {
    if (!(q.a1 > 0.0) || !(q.a2 > 0.0) || q.area < 0.0)
        throw Error(ErrorKind::Domain, "supercoupling: widths must be positive and the area non-negative");
    const cplx j(0.0, 1.0);
    const double x = q.k0 * q.mu_relative * q.area;
    return ((q.a1 - q.a2) + j * x) / ((q.a1 + q.a2) - j * x);
}

/// |T| = sqrt(1 - |rho|^2).
inline double supercoupling_transmission(const SupercouplingQuery& q) {
    return std::sqrt(std::max(0.0, 1.0 - std::norm(supercoupling_reflection(q))));
}

/// Ratio of the peak |E| inside the second cavity to the peak inside the
/// first along a sampled cut line. Samples closer than `exclusion` to
/// `source` are skipped (the dipole's own cell field is grid dependent).
inline double amplitude_retention(const fdtd::MonitorResult& line, Point first, Point second, double radius,
                                  Point source, double exclusion, std::size_t frequency = 0) {
    double p1 = 0.0, p2 = 0.0;
    for (const auto& s : line.samples) {
        const double v = e_magnitude(s, frequency);
        if (geometry::distance(s.requested, first) <= radius && geometry::distance(s.requested, source) >= exclusion)
            p1 = std::max(p1, v);
        if (geometry::distance(s.requested, second) <= radius) p2 = std::max(p2, v);
    }
    if (!(p1 > 0.0)) throw Error(ErrorKind::Singular, "no field samples inside the source cavity");
    return p2 / p1;
}

// ---------------------------------------------------------------------------
// Budgets.

/// floor(pi L_c^2 / a^2): lattice nodes that fit inside a disc of radius L_c.
inline std::uint64_t node_budget(double coherence_length, double pitch) {
    if (!(coherence_length > 0.0) || !(pitch > 0.0))
        throw Error(ErrorKind::Domain, "node_budget: lengths must be positive");
    return static_cast<std::uint64_t>(std::floor(kPi * coherence_length * coherence_length / (pitch * pitch)));
}

/// alpha |early> + beta e^{i phi} |late>.
struct TimeBinQubit {
    cplx alpha{1.0, 0.0};
    cplx beta{0.0, 0.0};
    double phi = 0.0;
    double separation = 0.0;  // s

    static TimeBinQubit normalized(cplx alpha, cplx beta, double phi, double separation) {
        const double n = std::sqrt(std::norm(alpha) + std::norm(beta));
        if (!(n > 0.0)) throw Error(ErrorKind::Domain, "time-bin qubit with zero amplitudes");
        return {alpha / n, beta / n, phi, separation};
    }
    void validate() const {
        if (std::abs(std::norm(alpha) + std::norm(beta) - 1.0) > 1e-12)
            throw Error(ErrorKind::InvalidSpec, "time-bin qubit amplitudes are not normalized");
    }
};

struct Feasibility {
    bool feasible = false;
    double margin = 0.0;  // L_c - L, m
};

/// A path is usable while it stays strictly shorter than the coherence length.
inline Feasibility transport_feasible(const TimeBinQubit& q, double path_length, double coherence_length) {
    q.validate();
    if (path_length < 0.0) throw Error(ErrorKind::Domain, "path length must be non-negative");
    return {path_length < coherence_length, coherence_length - path_length};
}

}  // namespace enzgrid::analysis
