// fdtd.hpp - 2D TM (Ex, Ey, Hz) finite-difference time-domain engine.
//
// Staggering on an nx x ny cell grid with spacing d:
//   Hz(i, j) at cell centers      ((i+1/2) d, (j+1/2) d),  nx x ny
//   Ex(i, j) on horizontal edges  ((i+1/2) d, j d),        nx x (ny+1)
//   Ey(i, j) on vertical edges    (i d, (j+1/2) d),        (nx+1) x ny
// E lives at integer time steps, Hz at half steps. The outer boundary is a
// perfect conductor; absorbing CPML layers occupy the outermost cells of
// the selected sides.
//
// Dispersive media use the polarization ADE
//   P'' + gamma P' + w0^2 P = eps0 S E
// per Lorentz/Drude pole (Drude: w0 = 0, S = wp^2), advanced with central
// differences. Each E edge sits on the face between two cells and carries
// the arithmetic mean of their permittivities (tangential-field average).

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "constants.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "materials.hpp"
#include "parallel.hpp"

namespace enzgrid::fdtd {

using cplx = std::complex<double>;
using geometry::Point;

struct YeeLayout {
    double cell = 0.0;
    int nx = 0;
    int ny = 0;
    double dt = 0.0;
};

/// dt = S * d / (c sqrt 2), the 2D Courant bound scaled by S in (0, 1].
inline double courant_dt(double cell, double courant) {
    if (!(cell > 0.0)) throw Error(ErrorKind::Domain, "courant_dt: cell size must be positive");
    if (!(courant > 0.0) || courant > 1.0) throw Error(ErrorKind::Domain, "courant_dt: need 0 < S <= 1");
    return courant * cell / (kC0 * std::sqrt(2.0));
}

/// Largest dt below the Courant bound for which one period of `omega` is a
/// whole number of steps.
inline double snapped_dt(double cell, double courant, double omega) {
    const double bound = courant_dt(cell, courant);
    const double period = 2.0 * kPi / omega;
    const double steps = std::ceil(period / bound - 1e-12);
    return period / steps;
}

/// Drive frequency at which the central-difference material update responds
/// as the continuous model does at `omega`.
inline double grid_matched_omega(double omega, double dt) {
    const double x = 0.5 * omega * dt;
    if (!(x > 0.0) || x >= 1.0) throw Error(ErrorKind::Domain, "grid_matched_omega: need 0 < omega dt < 2");
    return 2.0 / dt * std::asin(x);
}

struct CwDrive {
    double omega = 0.0;
    double dt = 0.0;
};

/// Snapped step and grid-matched drive for a CW run at physical `omega`.
inline CwDrive matched_cw_drive(double cell, double courant, double omega) {
    CwDrive d{omega, snapped_dt(cell, courant, omega)};
    for (int k = 0; k < 8; ++k) {
        d.omega = grid_matched_omega(omega, d.dt);
        const double next = snapped_dt(cell, courant, d.omega);
        if (next == d.dt) break;
        d.dt = next;
    }
    return d;
}

enum class Component { Ex, Ey, Hz };

inline const char* to_string(Component c) {
    switch (c) {
        case Component::Ex: return "Ex";
        case Component::Ey: return "Ey";
        case Component::Hz: return "Hz";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Waveforms. Each source carries a moment-like signal s(t); the injected
// current is proportional to ds/dt.

/// cos(w t) switched on with a raised-cosine envelope over `ramp_periods`.
struct RampedCW {
    double omega = 0.0;
    double ramp_periods = 10.0;
};

/// exp(-(t-t0)^2 / (2 sigma^2)) cos(w (t - t0)); `fractional_bandwidth` is
/// the spectral FWHM over w, t0 = delay_widths * sigma.
struct GaussianPulse {
    double omega = 0.0;
    double fractional_bandwidth = 0.5;
    double delay_widths = 6.0;

    double sigma_t() const {
        const double sigma_w = fractional_bandwidth * omega / (2.0 * std::sqrt(2.0 * std::log(2.0)));
        return 1.0 / sigma_w;
    }
};

using Waveform = std::variant<RampedCW, GaussianPulse>;

struct WaveSample {
    double value = 0.0;
    double derivative = 0.0;
};

inline WaveSample evaluate(const Waveform& w, double t) {
    if (t < 0.0) return {};
    return std::visit(
        [t](const auto& f) -> WaveSample {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, RampedCW>) {
                const double ramp_t = f.ramp_periods * 2.0 * kPi / f.omega;
                double env = 1.0, denv = 0.0;
                if (t < ramp_t) {
                    env = 0.5 * (1.0 - std::cos(kPi * t / ramp_t));
                    denv = 0.5 * kPi / ramp_t * std::sin(kPi * t / ramp_t);
                }
                const double c = std::cos(f.omega * t), s = std::sin(f.omega * t);
                return {env * c, denv * c - env * f.omega * s};
            } else {
                const double sig = f.sigma_t();
                const double tau = t - f.delay_widths * sig;
                const double env = std::exp(-0.5 * tau * tau / (sig * sig));
                const double c = std::cos(f.omega * tau), s = std::sin(f.omega * tau);
                return {env * c, env * (-tau / (sig * sig) * c - f.omega * s)};
            }
        },
        w);
}

/// Time after which the waveform is either steady (CW) or negligible (pulse).
inline double settle_time(const Waveform& w) {
    return std::visit(
        [](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, RampedCW>) {
                return f.ramp_periods * 2.0 * kPi / f.omega;
            } else {
                return 2.0 * f.delay_widths * f.sigma_t();
            }
        },
        w);
}

inline double carrier(const Waveform& w) {
    return std::visit([](const auto& f) { return f.omega; }, w);
}

/// Point dipole (per unit length, C) snapped to the nearest Ex and Ey edges.
struct DipoleSource {
    Point position;
    Point orientation{1.0, 0.0};
    double moment = 1.0;
    Waveform waveform;
};

/// Sheet of y-directed current on the Ey column nearest `x`, spanning
/// [ymin, ymax]. Its moment signal is a line-dipole density (C/m).
struct LineSource {
    double x = 0.0;
    double ymin = 0.0;
    double ymax = 0.0;
    double amplitude = 1.0;
    Waveform waveform;
};

using Source = std::variant<DipoleSource, LineSource>;

inline const Waveform& waveform_of(const Source& s) {
    return std::visit([](const auto& v) -> const Waveform& { return v.waveform; }, s);
}

// ---------------------------------------------------------------------------

struct PmlSpec {
    int cells = 10;
    bool left = true, right = true, bottom = true, top = true;
    double order = 3.0;
    double sigma_scale = 1.0;  // multiplies 0.8 (m+1) / (eta0 d)
    double alpha_max = 0.0;    // S/m, complex frequency shift

    static PmlSpec none() {
        PmlSpec p;
        p.left = p.right = p.bottom = p.top = false;
        return p;
    }
    geometry::Padding padding() const {
        return {left ? cells : 0, right ? cells : 0, bottom ? cells : 0, top ? cells : 0};
    }
};

struct EngineOptions {
    double courant = 0.5;
    double dt = 0.0;  // 0: use courant_dt
    PmlSpec pml;
    int workers = 1;
    bool track_energy = false;
};

/// Composite medium seen by one E edge.
struct EdgeMedium {
    double eps_inf = 1.0;
    struct Pole {
        double a, b, c;  // P+ = a P + b P- + c E
    };
    std::vector<Pole> poles;
    bool pec = false;
};

class Engine {
public:
    Engine(const geometry::SceneRaster& raster, EngineOptions options)
        : raster_(raster), opt_(options), pool_(options.workers) {
        layout_.cell = raster.cell_size;
        layout_.nx = raster.nx;
        layout_.ny = raster.ny;
        layout_.dt = opt_.dt > 0.0 ? opt_.dt : courant_dt(raster.cell_size, opt_.courant);
        if (layout_.dt > courant_dt(raster.cell_size, 1.0) * (1.0 + 1e-12))
            throw Error(ErrorKind::Domain, "time step exceeds the Courant bound");
        if (raster.nx < 2 || raster.ny < 1) throw Error(ErrorKind::InvalidSpec, "grid too small");
        const auto nx = static_cast<std::size_t>(layout_.nx), ny = static_cast<std::size_t>(layout_.ny);
        hz_.assign(nx * ny, 0.0);
        ex_.assign(nx * (ny + 1), 0.0);
        ey_.assign((nx + 1) * ny, 0.0);
        if (opt_.track_energy) hz_prev_.assign(nx * ny, 0.0);
        build_media();
        build_pml();
    }

    const YeeLayout& layout() const { return layout_; }
    double dt() const { return layout_.dt; }
    long step_index() const { return step_; }
    double time() const { return step_ * layout_.dt; }
    const geometry::SceneRaster& raster() const { return raster_; }
    int workers() const { return pool_.workers(); }

    void add_source(Source s) {
        std::visit([&](auto& v) { attach(v); }, s);
        sources_.push_back(std::move(s));
    }
    const std::vector<Source>& sources() const { return sources_; }

    // Field access (raw staggered arrays).
    double hz(int i, int j) const { return hz_[idx_hz(i, j)]; }
    double ex(int i, int j) const { return ex_[idx_ex(i, j)]; }
    double ey(int i, int j) const { return ey_[idx_ey(i, j)]; }
    const std::vector<double>& hz_data() const { return hz_; }
    const std::vector<double>& ex_data() const { return ex_; }
    const std::vector<double>& ey_data() const { return ey_; }

    /// Physical position of a staggered sample.
    Point position(Component c, int i, int j) const {
        const double d = layout_.cell;
        const Point o = raster_.origin;
        switch (c) {
            case Component::Ex: return {o.x + (i + 0.5) * d, o.y + j * d};
            case Component::Ey: return {o.x + i * d, o.y + (j + 0.5) * d};
            case Component::Hz: return {o.x + (i + 0.5) * d, o.y + (j + 0.5) * d};
        }
        return {};
    }

    /// Nearest staggered sample of component `c` to point p. Ties (points
    /// exactly between two samples) resolve towards +x / +y.
    std::pair<int, int> nearest(Component c, Point p) const {
        constexpr double tie = 1e-7;
        const double u = (p.x - raster_.origin.x) / layout_.cell + tie;
        const double v = (p.y - raster_.origin.y) / layout_.cell + tie;
        const auto cell_of = [](double t) { return static_cast<int>(std::floor(t)); };
        const auto node_of = [](double t) { return static_cast<int>(std::floor(t + 0.5)); };
        int i = 0, j = 0;
        switch (c) {
            case Component::Ex:
                i = std::clamp(cell_of(u), 0, layout_.nx - 1);
                j = std::clamp(node_of(v), 0, layout_.ny);
                break;
            case Component::Ey:
                i = std::clamp(node_of(u), 0, layout_.nx);
                j = std::clamp(cell_of(v), 0, layout_.ny - 1);
                break;
            case Component::Hz:
                i = std::clamp(cell_of(u), 0, layout_.nx - 1);
                j = std::clamp(cell_of(v), 0, layout_.ny - 1);
                break;
        }
        return {i, j};
    }

    double sample(Component c, int i, int j) const {
        switch (c) {
            case Component::Ex: return ex(i, j);
            case Component::Ey: return ey(i, j);
            case Component::Hz: return hz(i, j);
        }
        return 0.0;
    }

    bool is_pec_edge(Component c, int i, int j) const {
        if (c == Component::Ex) return media_[ex_medium_[idx_ex(i, j)]].pec;
        if (c == Component::Ey) return media_[ey_medium_[idx_ey(i, j)]].pec;
        return false;
    }

    /// Advances E from step n to n+1 and Hz from n-1/2 to n+1/2.
    void step() {
        update_h();
        if (opt_.track_energy) energy_ = compute_energy();
        update_e();
        ++step_;
        if ((step_ & 127) == 0) check_finite();
    }

    void check_finite() const {
        double s = 0.0;
        for (double v : hz_) s += v;
        for (double v : ex_) s += v;
        for (double v : ey_) s += v;
        if (!std::isfinite(s))
            throw InstabilityError(step_, "fields became non-finite at step " + std::to_string(step_));
    }

    /// Discrete electromagnetic energy per unit length (J/m) at the previous
    /// integer step n, 1/2 eps0 eps_inf |E^n|^2 + 1/2 mu0 Hz^{n-1/2} Hz^{n+1/2};
    /// exactly conserved by the lossless update. Needs `track_energy`.
    double energy() const {
        if (!opt_.track_energy) throw Error(ErrorKind::Domain, "energy tracking not enabled");
        return energy_;
    }

    /// Sum of squared field samples, a cheap activity measure.
    double activity() const {
        double s = 0.0;
        for (double v : ex_) s += v * v;
        for (double v : ey_) s += v * v;
        for (double v : hz_) s += kEta0 * kEta0 * v * v;
        return s;
    }

    /// Zeroes every source (used to let fields ring down).
    void clear_sources() {
        sources_.clear();
        injections_.clear();
    }

private:
    struct Injection {
        Component comp;
        std::size_t index;
        double weight;        // current density per unit ds/dt, A/m^2 per (unit/s)
        std::size_t source;   // index into sources_
    };

    // Edges of one field component sharing one dispersive medium. The
    // polarization state is stored pole-major: p[k * n + e].
    struct DispersiveBlock {
        std::uint16_t medium = 0;
        std::vector<std::uint32_t> index;
        std::vector<double> p, p_prev, dp;
    };

    std::size_t idx_hz(int i, int j) const { return static_cast<std::size_t>(j) * layout_.nx + i; }
    std::size_t idx_ex(int i, int j) const { return static_cast<std::size_t>(j) * layout_.nx + i; }
    std::size_t idx_ey(int i, int j) const { return static_cast<std::size_t>(j) * (layout_.nx + 1) + i; }

    void attach(const DipoleSource& d) {
        const double norm = std::hypot(d.orientation.x, d.orientation.y);
        if (std::abs(norm - 1.0) > 1e-9) throw Error(ErrorKind::InvalidSpec, "dipole orientation must be a unit vector");
        const double area = layout_.cell * layout_.cell;
        const std::size_t sidx = sources_.size();
        if (d.orientation.x != 0.0) {
            const auto [i, j] = nearest(Component::Ex, d.position);
            if (j == 0 || j == layout_.ny || media_[ex_medium_[idx_ex(i, j)]].pec)
                throw Error(ErrorKind::InvalidSpec, "dipole placed inside a perfect conductor");
            injections_.push_back({Component::Ex, idx_ex(i, j), d.moment * d.orientation.x / area, sidx});
        }
        if (d.orientation.y != 0.0) {
            const auto [i, j] = nearest(Component::Ey, d.position);
            if (i == 0 || i == layout_.nx || media_[ey_medium_[idx_ey(i, j)]].pec)
                throw Error(ErrorKind::InvalidSpec, "dipole placed inside a perfect conductor");
            injections_.push_back({Component::Ey, idx_ey(i, j), d.moment * d.orientation.y / area, sidx});
        }
    }

    void attach(const LineSource& l) {
        const std::size_t sidx = sources_.size();
        const auto [i0, j0] = nearest(Component::Ey, {l.x, l.ymin});
        const auto [i1, j1] = nearest(Component::Ey, {l.x, l.ymax});
        if (i0 <= 0 || i0 >= layout_.nx) throw Error(ErrorKind::InvalidSpec, "line source on the outer boundary");
        for (int j = j0; j <= j1; ++j) {
            const std::size_t k = idx_ey(i0, j);
            if (media_[ey_medium_[k]].pec) continue;
            injections_.push_back({Component::Ey, k, l.amplitude / layout_.cell, sidx});
        }
    }

    EdgeMedium::Pole make_pole(double strength, double w0, double gamma, double weight) const {
        const double dt = layout_.dt;
        const double den = 1.0 / (dt * dt) + 0.5 * gamma / dt;
        return {(2.0 / (dt * dt) - w0 * w0) / den, -(1.0 / (dt * dt) - 0.5 * gamma / dt) / den,
                kEps0 * weight * strength / den};
    }

    void add_material_poles(const geometry::MaterialSpec& spec, double weight, EdgeMedium& m) const {
        std::visit(
            [&](const auto& v) {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, geometry::Vacuum>) {
                    m.eps_inf += weight;
                } else if constexpr (std::is_same_v<T, geometry::Pec>) {
                    m.pec = true;
                } else if constexpr (std::is_same_v<T, geometry::Dielectric>) {
                    m.eps_inf += weight * v.eps;
                } else {
                    m.eps_inf += weight * v.eps_infinity;
                    if (v.has_drude())
                        m.poles.push_back(make_pole(v.drude_plasma_frequency * v.drude_plasma_frequency, 0.0,
                                                    v.drude_damping, weight));
                    for (const auto& t : v.lorentz_terms)
                        m.poles.push_back(make_pole(t.strength, t.resonance_frequency, t.damping, weight));
                }
            },
            spec);
    }

    std::uint16_t medium_for(geometry::MaterialId a, geometry::MaterialId b) {
        if (a > b) std::swap(a, b);
        const auto key = std::pair{a, b};
        if (auto it = medium_index_.find(key); it != medium_index_.end()) return it->second;
        EdgeMedium m;
        m.eps_inf = 0.0;
        if (a == b) {
            add_material_poles(raster_.materials[a].spec, 1.0, m);
        } else {
            add_material_poles(raster_.materials[a].spec, 0.5, m);
            add_material_poles(raster_.materials[b].spec, 0.5, m);
        }
        if (m.pec) {
            m.eps_inf = 1.0;
            m.poles.clear();
        }
        if (!m.pec && !(m.eps_inf > 0.0)) throw Error(ErrorKind::InvalidSpec, "edge medium with eps_inf <= 0");
        media_.push_back(m);
        const auto id = static_cast<std::uint16_t>(media_.size() - 1);
        medium_index_[key] = id;
        return id;
    }

    void build_media() {
        const int nx = layout_.nx, ny = layout_.ny;
        ex_medium_.assign(ex_.size(), 0);
        ey_medium_.assign(ey_.size(), 0);
        ce_ex_.assign(ex_.size(), 0.0);
        ce_ey_.assign(ey_.size(), 0.0);
        // Pseudo-medium 0 is the boundary PEC.
        media_.push_back(EdgeMedium{1.0, {}, true});
        for (int j = 0; j <= ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                const std::size_t k = idx_ex(i, j);
                if (j == 0 || j == ny) continue;
                ex_medium_[k] = medium_for(raster_.at(i, j - 1), raster_.at(i, j));
            }
        }
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i <= nx; ++i) {
                const std::size_t k = idx_ey(i, j);
                if (i == 0 || i == nx) continue;
                ey_medium_[k] = medium_for(raster_.at(i - 1, j), raster_.at(i, j));
            }
        }
        const double dt = layout_.dt;
        auto fill = [&](const std::vector<std::uint16_t>& med, std::vector<double>& ce,
                        std::vector<DispersiveBlock>& blocks) {
            std::map<std::uint16_t, std::size_t> block_of;
            for (std::size_t k = 0; k < med.size(); ++k) {
                const EdgeMedium& m = media_[med[k]];
                ce[k] = m.pec ? 0.0 : dt / (kEps0 * m.eps_inf);
                if (m.pec || m.poles.empty()) continue;
                auto [it, fresh] = block_of.try_emplace(med[k], blocks.size());
                if (fresh) blocks.push_back(DispersiveBlock{med[k], {}, {}, {}, {}});
                blocks[it->second].index.push_back(static_cast<std::uint32_t>(k));
            }
            for (auto& b : blocks) {
                const std::size_t n = b.index.size() * media_[b.medium].poles.size();
                b.p.assign(n, 0.0);
                b.p_prev.assign(n, 0.0);
                b.dp.assign(b.index.size(), 0.0);
            }
        };
        fill(ex_medium_, ce_ex_, disp_ex_);
        fill(ey_medium_, ce_ey_, disp_ey_);
    }

    struct PmlProfile {
        std::vector<double> b, c;  // per position index
        std::vector<int> active;   // indices with sigma > 0
    };

    // Profile along one axis of n cells; `half` selects cell-center samples.
    PmlProfile make_profile(int n, bool low, bool high, bool half) const {
        const PmlSpec& p = opt_.pml;
        const int count = half ? n : n + 1;
        PmlProfile prof;
        prof.b.assign(static_cast<std::size_t>(count), 1.0);
        prof.c.assign(static_cast<std::size_t>(count), 0.0);
        const double L = static_cast<double>(p.cells);
        const double sigma_max = p.sigma_scale * 0.8 * (p.order + 1.0) / (kEta0 * layout_.cell);
        for (int k = 0; k < count; ++k) {
            const double u = half ? k + 0.5 : static_cast<double>(k);
            double depth = 0.0;
            if (low && u < L) depth = (L - u) / L;
            if (high && u > n - L) depth = (u - (n - L)) / L;
            if (depth <= 0.0) continue;
            const double sigma = sigma_max * std::pow(depth, p.order);
            const double alpha = p.alpha_max * (1.0 - depth);
            const double b = std::exp(-(sigma + alpha) / kEps0 * layout_.dt);
            prof.b[static_cast<std::size_t>(k)] = b;
            prof.c[static_cast<std::size_t>(k)] = sigma > 0.0 ? sigma / (sigma + alpha) * (b - 1.0) : 0.0;
            prof.active.push_back(k);
        }
        return prof;
    }

    void build_pml() {
        const PmlSpec& p = opt_.pml;
        const bool any_x = p.left || p.right, any_y = p.bottom || p.top;
        if ((any_x && 2 * p.cells >= layout_.nx) || (any_y && 2 * p.cells >= layout_.ny))
            throw Error(ErrorKind::InvalidSpec, "absorbing layers overlap; enlarge the domain");
        px_h_ = make_profile(layout_.nx, p.left, p.right, true);
        px_e_ = make_profile(layout_.nx, p.left, p.right, false);
        py_h_ = make_profile(layout_.ny, p.bottom, p.top, true);
        py_e_ = make_profile(layout_.ny, p.bottom, p.top, false);
        if (any_x) {
            psi_hz_x_.assign(hz_.size(), 0.0);
            psi_ey_x_.assign(ey_.size(), 0.0);
        }
        if (any_y) {
            psi_hz_y_.assign(hz_.size(), 0.0);
            psi_ex_y_.assign(ex_.size(), 0.0);
        }
        in_py_h_.assign(static_cast<std::size_t>(layout_.ny), 0);
        for (int k : py_h_.active) in_py_h_[static_cast<std::size_t>(k)] = 1;
        in_py_e_.assign(static_cast<std::size_t>(layout_.ny + 1), 0);
        for (int k : py_e_.active) in_py_e_[static_cast<std::size_t>(k)] = 1;
    }

    double compute_energy() const {
        const double a = layout_.cell * layout_.cell;
        double we = 0.0, wh = 0.0;
        for (std::size_t k = 0; k < ex_.size(); ++k) we += media_[ex_medium_[k]].eps_inf * ex_[k] * ex_[k];
        for (std::size_t k = 0; k < ey_.size(); ++k) we += media_[ey_medium_[k]].eps_inf * ey_[k] * ey_[k];
        for (std::size_t k = 0; k < hz_.size(); ++k) wh += hz_[k] * hz_prev_[k];
        return 0.5 * a * (kEps0 * we + kMu0 * wh);
    }

    void update_h() {
        const int nx = layout_.nx;
        const double inv_d = 1.0 / layout_.cell;
        const double ch = layout_.dt / kMu0;
        if (opt_.track_energy) hz_prev_ = hz_;
        pool_.run(layout_.ny, [&](int j0, int j1) {
            for (int j = j0; j < j1; ++j) {
                double* h = hz_.data() + idx_hz(0, j);
                const double* exb = ex_.data() + idx_ex(0, j);
                const double* ext = ex_.data() + idx_ex(0, j + 1);
                const double* eyr = ey_.data() + idx_ey(0, j);
                for (int i = 0; i < nx; ++i)
                    h[i] += ch * inv_d * ((ext[i] - exb[i]) - (eyr[i + 1] - eyr[i]));
                if (!psi_hz_x_.empty()) {
                    for (int i : px_h_.active) {
                        const std::size_t k = idx_hz(i, j);
                        double& psi = psi_hz_x_[k];
                        psi = px_h_.b[static_cast<std::size_t>(i)] * psi +
                              px_h_.c[static_cast<std::size_t>(i)] * (eyr[i + 1] - eyr[i]) * inv_d;
                        h[i] -= ch * psi;
                    }
                }
                if (!psi_hz_y_.empty() && in_py_h_[static_cast<std::size_t>(j)]) {
                    const double b = py_h_.b[static_cast<std::size_t>(j)], c = py_h_.c[static_cast<std::size_t>(j)];
                    for (int i = 0; i < nx; ++i) {
                        double& psi = psi_hz_y_[idx_hz(i, j)];
                        psi = b * psi + c * (ext[i] - exb[i]) * inv_d;
                        h[i] += ch * psi;
                    }
                }
            }
        });
    }

    void advance_polarization(std::vector<DispersiveBlock>& blocks, const std::vector<double>& field) {
        for (auto& blk : blocks) {
            const auto& poles = media_[blk.medium].poles;
            const int n = static_cast<int>(blk.index.size());
            pool_.run(n, [&](int b, int e) {
                const std::uint32_t* idx = blk.index.data();
                double* dp = blk.dp.data();
                for (int k = b; k < e; ++k) dp[k] = 0.0;
                for (std::size_t q = 0; q < poles.size(); ++q) {
                    const double ca = poles[q].a, cb = poles[q].b, cc = poles[q].c;
                    double* p = blk.p.data() + q * static_cast<std::size_t>(n);
                    double* pp = blk.p_prev.data() + q * static_cast<std::size_t>(n);
                    for (int k = b; k < e; ++k) {
                        const double next = ca * p[k] + cb * pp[k] + cc * field[idx[k]];
                        dp[k] += next - p[k];
                        pp[k] = p[k];
                        p[k] = next;
                    }
                }
            });
        }
    }

    // E -= dP / (eps0 eps_inf)
    void apply_polarization(const std::vector<DispersiveBlock>& blocks, std::vector<double>& field) {
        for (const auto& blk : blocks) {
            const double scale = 1.0 / (kEps0 * media_[blk.medium].eps_inf);
            const std::size_t n = blk.index.size();
            for (std::size_t k = 0; k < n; ++k) field[blk.index[k]] -= scale * blk.dp[k];
        }
    }

    void update_e() {
        const int nx = layout_.nx, ny = layout_.ny;
        const double inv_d = 1.0 / layout_.cell;
        advance_polarization(disp_ex_, ex_);
        advance_polarization(disp_ey_, ey_);

        pool_.run(ny + 1, [&](int j0, int j1) {
            for (int j = std::max(1, j0); j < std::min(ny, j1); ++j) {
                double* e = ex_.data() + idx_ex(0, j);
                const double* ce = ce_ex_.data() + idx_ex(0, j);
                const double* ht = hz_.data() + idx_hz(0, j);
                const double* hb = hz_.data() + idx_hz(0, j - 1);
                for (int i = 0; i < nx; ++i) e[i] += ce[i] * (ht[i] - hb[i]) * inv_d;
                if (!psi_ex_y_.empty() && in_py_e_[static_cast<std::size_t>(j)]) {
                    const double b = py_e_.b[static_cast<std::size_t>(j)], c = py_e_.c[static_cast<std::size_t>(j)];
                    for (int i = 0; i < nx; ++i) {
                        double& psi = psi_ex_y_[idx_ex(i, j)];
                        psi = b * psi + c * (ht[i] - hb[i]) * inv_d;
                        e[i] += ce[i] * psi;
                    }
                }
            }
        });
        pool_.run(ny, [&](int j0, int j1) {
            for (int j = j0; j < j1; ++j) {
                double* e = ey_.data() + idx_ey(0, j);
                const double* ce = ce_ey_.data() + idx_ey(0, j);
                const double* h = hz_.data() + idx_hz(0, j);
                for (int i = 1; i < nx; ++i) e[i] -= ce[i] * (h[i] - h[i - 1]) * inv_d;
                if (!psi_ey_x_.empty()) {
                    for (int i : px_e_.active) {
                        if (i == 0 || i == nx) continue;
                        double& psi = psi_ey_x_[idx_ey(i, j)];
                        psi = px_e_.b[static_cast<std::size_t>(i)] * psi +
                              px_e_.c[static_cast<std::size_t>(i)] * (h[i] - h[i - 1]) * inv_d;
                        e[i] -= ce[i] * psi;
                    }
                }
            }
        });

        apply_polarization(disp_ex_, ex_);
        apply_polarization(disp_ey_, ey_);

        // Source currents at t = (n + 1/2) dt.
        if (!injections_.empty()) {
            const double t = (step_ + 0.5) * layout_.dt;
            std::vector<double> rate(sources_.size());
            for (std::size_t s = 0; s < sources_.size(); ++s) rate[s] = evaluate(waveform_of(sources_[s]), t).derivative;
            for (const Injection& inj : injections_) {
                const double j = inj.weight * rate[inj.source];
                if (inj.comp == Component::Ex) {
                    ex_[inj.index] -= ce_ex_[inj.index] * j;
                } else {
                    ey_[inj.index] -= ce_ey_[inj.index] * j;
                }
            }
        }
    }

    geometry::SceneRaster raster_;
    EngineOptions opt_;
    WorkerPool pool_;
    YeeLayout layout_;
    long step_ = 0;
    double energy_ = 0.0;

    std::vector<double> hz_, ex_, ey_, hz_prev_;
    std::vector<double> ce_ex_, ce_ey_;
    std::vector<std::uint16_t> ex_medium_, ey_medium_;
    std::vector<EdgeMedium> media_;
    std::map<std::pair<geometry::MaterialId, geometry::MaterialId>, std::uint16_t> medium_index_;
    std::vector<DispersiveBlock> disp_ex_, disp_ey_;

    PmlProfile px_h_, px_e_, py_h_, py_e_;
    std::vector<char> in_py_h_, in_py_e_;
    std::vector<double> psi_hz_x_, psi_hz_y_, psi_ex_y_, psi_ey_x_;

    std::vector<Source> sources_;
    std::vector<Injection> injections_;
};

// ---------------------------------------------------------------------------
// Monitors and the run driver.

struct PointMonitor {
    std::string name;
    Point position;
};

/// Samples along a polyline, e.g. a cut line between two cavities.
struct LineMonitor {
    std::string name;
    std::vector<Point> points;
};

/// Whole-grid DFT of one component.
struct FieldMonitor {
    std::string name;
    Component component = Component::Hz;
};

using Monitor = std::variant<PointMonitor, LineMonitor, FieldMonitor>;

/// Phasors of one sampling point; each component is taken at its own
/// nearest staggered location, recorded alongside.
struct PointPhasors {
    Point requested;
    std::array<Point, 3> location;  // Ex, Ey, Hz
    std::array<std::vector<cplx>, 3> value;  // [component][frequency]

    cplx get(Component c, std::size_t f = 0) const { return value[static_cast<std::size_t>(c)][f]; }
    cplx e_magnitude_sq(std::size_t f = 0) const {
        return std::norm(get(Component::Ex, f)) + std::norm(get(Component::Ey, f));
    }
};

struct MonitorResult {
    std::string name;
    std::string kind;  // "point" | "line"
    std::vector<PointPhasors> samples;
};

struct FieldSnapshot {
    std::string name;
    Component component = Component::Hz;
    double omega = 0.0;
    int nx = 0, ny = 0;
    double cell = 0.0;
    Point origin;  // position of sample (0, 0)
    std::vector<cplx> data;  // row-major
};

struct RunControl {
    long max_steps = 200000;
    double steady_tolerance = 1e-4;  // CW: relative change between periods
    int min_periods = 3;             // CW: periods after the ramp before testing
    double decay_tolerance = 1e-8;   // pulse: activity relative to its peak
    int check_interval = 200;        // pulse: steps between decay checks
    std::vector<double> frequencies; // pulse only; CW uses the carrier
};

struct RunResult {
    std::vector<double> frequencies;
    std::vector<MonitorResult> monitors;
    std::vector<FieldSnapshot> fields;
    std::vector<cplx> source_spectrum;  // reference moment spectrum per frequency
    bool converged = false;
    bool continuous_wave = false;
    long steps = 0;
    double dt = 0.0;
    double last_change = 0.0;  // CW: final relative change between periods

    const MonitorResult& monitor(const std::string& name) const {
        for (const auto& m : monitors)
            if (m.name == name) return m;
        throw Error(ErrorKind::MissingMonitor, "monitor '" + name + "' was not recorded");
    }
    bool has_monitor(const std::string& name) const {
        return std::any_of(monitors.begin(), monitors.end(), [&](const auto& m) { return m.name == name; });
    }
    const FieldSnapshot& field(const std::string& name, std::size_t frequency = 0) const {
        if (frequency < frequencies.size()) {
            for (const auto& f : fields)
                if (f.name == name && f.omega == frequencies[frequency]) return f;
        }
        throw Error(ErrorKind::MissingMonitor, "field monitor '" + name + "' was not recorded");
    }
    std::size_t frequency_index(double omega) const {
        for (std::size_t k = 0; k < frequencies.size(); ++k)
            if (std::abs(frequencies[k] - omega) <= 1e-9 * omega) return k;
        throw Error(ErrorKind::Domain, "frequency not recorded by this run");
    }
};

namespace detail {

struct Probe {
    Component comp;
    std::size_t monitor, sample;
    int i, j;
};

inline double moment_scale(const Source& s) {
    return std::visit(
        [](const auto& v) -> double {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, DipoleSource>) {
                return v.moment;
            } else {
                return v.amplitude;
            }
        },
        s);
}

// Running DFT sums over a set of probes and frequencies.
class DftAccumulator {
public:
    DftAccumulator(std::size_t probes, std::vector<double> freqs)
        : freqs_(std::move(freqs)), sums_(probes * freqs_.size(), 0.0), src_(freqs_.size(), 0.0) {}

    void reset() {
        std::fill(sums_.begin(), sums_.end(), cplx(0.0));
        std::fill(src_.begin(), src_.end(), cplx(0.0));
    }

    // E samples are at t_e, Hz at t_h, the source rate at t_h as well.
    void add(const Engine& eng, const std::vector<Probe>& probes, double t_e, double t_h, double src_rate) {
        const double dt = eng.dt();
        for (std::size_t f = 0; f < freqs_.size(); ++f) {
            const cplx pe = std::polar(dt, freqs_[f] * t_e);
            const cplx ph = std::polar(dt, freqs_[f] * t_h);
            for (std::size_t p = 0; p < probes.size(); ++p) {
                const double v = eng.sample(probes[p].comp, probes[p].i, probes[p].j);
                sums_[p * freqs_.size() + f] += v * (probes[p].comp == Component::Hz ? ph : pe);
            }
            src_[f] += src_rate * ph;
        }
    }

    cplx sum(std::size_t probe, std::size_t f) const { return sums_[probe * freqs_.size() + f]; }
    // Moment spectrum: DFT of ds/dt divided by -i w.
    cplx moment(std::size_t f) const { return src_[f] / cplx(0.0, -freqs_[f]); }
    const std::vector<double>& freqs() const { return freqs_; }

private:
    std::vector<double> freqs_;
    std::vector<cplx> sums_;
    std::vector<cplx> src_;
};

}  // namespace detail

/// Steps the engine until steady state (ramped CW) or ring-down (pulse) and
/// returns phasors normalized by the first source's moment spectrum, i.e.
/// fields per unit dipole moment. Throws InstabilityError on NaN; a run that
/// hits max_steps returns with `converged = false`.
inline RunResult run(Engine& eng, const std::vector<Monitor>& monitors, const RunControl& ctl) {
    if (eng.sources().empty()) throw Error(ErrorKind::InvalidSpec, "run: no sources");
    const Source& ref = eng.sources().front();
    const Waveform& wf = waveform_of(ref);
    const bool cw = std::holds_alternative<RampedCW>(wf);
    const double scale = detail::moment_scale(ref);

    RunResult out;
    out.continuous_wave = cw;
    out.dt = eng.dt();
    out.frequencies = cw ? std::vector<double>{carrier(wf)} : ctl.frequencies;
    if (out.frequencies.empty()) out.frequencies.push_back(carrier(wf));
    for (double w : out.frequencies)
        if (!(w > 0.0)) throw Error(ErrorKind::Domain, "run: monitor frequencies must be positive");

    std::vector<detail::Probe> probes;
    std::vector<const FieldMonitor*> field_monitors;
    for (const auto& m : monitors) {
        std::visit(
            [&](const auto& mon) {
                using T = std::decay_t<decltype(mon)>;
                if constexpr (std::is_same_v<T, FieldMonitor>) {
                    field_monitors.push_back(&mon);
                } else {
                    MonitorResult r;
                    r.name = mon.name;
                    std::vector<Point> pts;
                    if constexpr (std::is_same_v<T, PointMonitor>) {
                        r.kind = "point";
                        pts = {mon.position};
                    } else {
                        r.kind = "line";
                        pts = mon.points;
                    }
                    for (const Point& p : pts) {
                        PointPhasors s;
                        s.requested = p;
                        for (int c = 0; c < 3; ++c) {
                            const auto comp = static_cast<Component>(c);
                            const auto [i, j] = eng.nearest(comp, p);
                            s.location[static_cast<std::size_t>(c)] = eng.position(comp, i, j);
                            probes.push_back({comp, out.monitors.size(), r.samples.size(), i, j});
                        }
                        r.samples.push_back(std::move(s));
                    }
                    out.monitors.push_back(std::move(r));
                }
            },
            m);
    }

    auto store = [&](const detail::DftAccumulator& acc) {
        out.source_spectrum.assign(out.frequencies.size(), 0.0);
        for (std::size_t f = 0; f < out.frequencies.size(); ++f) out.source_spectrum[f] = scale * acc.moment(f);
        for (auto& m : out.monitors)
            for (auto& s : m.samples)
                for (auto& v : s.value) v.assign(out.frequencies.size(), 0.0);
        for (std::size_t p = 0; p < probes.size(); ++p) {
            auto& v = out.monitors[probes[p].monitor].samples[probes[p].sample].value[static_cast<std::size_t>(probes[p].comp)];
            for (std::size_t f = 0; f < out.frequencies.size(); ++f) v[f] = acc.sum(p, f) / out.source_spectrum[f];
        }
    };

    // Full-grid DFT of selected components; only run over the final window
    // for CW, over the whole run for pulses.
    struct FieldAcc {
        const FieldMonitor* mon;
        std::vector<std::vector<cplx>> sums;  // per frequency
    };
    std::vector<FieldAcc> facc;
    auto field_size = [&](Component c) -> std::pair<int, int> {
        const auto& L = eng.layout();
        if (c == Component::Ex) return {L.nx, L.ny + 1};
        if (c == Component::Ey) return {L.nx + 1, L.ny};
        return {L.nx, L.ny};
    };
    for (const FieldMonitor* fm : field_monitors) {
        const auto [fx, fy] = field_size(fm->component);
        facc.push_back({fm, std::vector<std::vector<cplx>>(out.frequencies.size(),
                                                           std::vector<cplx>(static_cast<std::size_t>(fx) * fy))});
    }
    auto accumulate_fields = [&](double t_e, double t_h) {
        for (auto& fa : facc) {
            const auto& data = fa.mon->component == Component::Ex   ? eng.ex_data()
                               : fa.mon->component == Component::Ey ? eng.ey_data()
                                                                    : eng.hz_data();
            const double t = fa.mon->component == Component::Hz ? t_h : t_e;
            for (std::size_t f = 0; f < out.frequencies.size(); ++f) {
                const cplx ph = std::polar(eng.dt(), out.frequencies[f] * t);
                auto& s = fa.sums[f];
                for (std::size_t k = 0; k < data.size(); ++k) s[k] += data[k] * ph;
            }
        }
    };
    auto finish_fields = [&](const detail::DftAccumulator& acc) {
        for (auto& fa : facc) {
            const auto [fx, fy] = field_size(fa.mon->component);
            for (std::size_t f = 0; f < out.frequencies.size(); ++f) {
                FieldSnapshot snap;
                snap.name = fa.mon->name;
                snap.component = fa.mon->component;
                snap.omega = out.frequencies[f];
                snap.nx = fx;
                snap.ny = fy;
                snap.cell = eng.layout().cell;
                snap.origin = eng.position(fa.mon->component, 0, 0);
                const cplx norm = scale * acc.moment(f);
                snap.data.resize(fa.sums[f].size());
                for (std::size_t k = 0; k < snap.data.size(); ++k) snap.data[k] = fa.sums[f][k] / norm;
                out.fields.push_back(std::move(snap));
            }
        }
    };

    detail::DftAccumulator acc(probes.size(), out.frequencies);
    auto advance = [&](detail::DftAccumulator& a, bool fields) {
        eng.step();
        const double t_e = eng.time();
        const double t_h = t_e - 0.5 * eng.dt();
        const double rate = evaluate(wf, t_h).derivative;
        a.add(eng, probes, t_e, t_h, rate);
        if (fields) accumulate_fields(t_e, t_h);
    };

    if (cw) {
        const double omega = out.frequencies.front();
        const double period = 2.0 * kPi / omega;
        const long per = std::lround(period / eng.dt());
        if (std::abs(per * eng.dt() - period) > 1e-9 * period)
            throw Error(ErrorKind::Domain, "CW runs need a time step that divides the period (use snapped_dt)");
        const long settle = static_cast<long>(std::ceil(settle_time(wf) / eng.dt()));
        std::vector<double> prev;
        bool have_prev = false;
        while (true) {
            acc.reset();
            for (long k = 0; k < per; ++k) advance(acc, false);
            out.steps = eng.step_index();
            std::vector<double> mags(probes.size());
            double biggest = 0.0;
            for (std::size_t p = 0; p < probes.size(); ++p) {
                mags[p] = std::abs(acc.sum(p, 0));
                biggest = std::max(biggest, mags[p] * (probes[p].comp == Component::Hz ? kEta0 : 1.0));
            }
            if (eng.step_index() >= settle + ctl.min_periods * per && have_prev) {
                double change = 0.0;
                for (std::size_t p = 0; p < probes.size(); ++p) {
                    const double w = probes[p].comp == Component::Hz ? kEta0 : 1.0;
                    const double floor = 1e-6 * biggest;
                    change = std::max(change, std::abs(mags[p] - prev[p]) * w / std::max(mags[p] * w, floor));
                }
                out.last_change = change;
                if (change < ctl.steady_tolerance) {
                    out.converged = true;
                    break;
                }
            }
            prev = std::move(mags);
            have_prev = true;
            if (eng.step_index() + per > ctl.max_steps) break;
        }
        if (!facc.empty()) {
            detail::DftAccumulator last(probes.size(), out.frequencies);
            for (long k = 0; k < per; ++k) advance(last, true);
            out.steps = eng.step_index();
            store(last);
            finish_fields(last);
        } else {
            store(acc);
        }
        return out;
    }

    const long settle = static_cast<long>(std::ceil(settle_time(wf) / eng.dt()));
    double peak = 0.0;
    while (eng.step_index() < ctl.max_steps) {
        advance(acc, !facc.empty());
        if (eng.step_index() % ctl.check_interval == 0) {
            const double a = eng.activity();
            peak = std::max(peak, a);
            if (eng.step_index() > settle && a <= ctl.decay_tolerance * peak) {
                out.converged = true;
                break;
            }
        }
    }
    out.steps = eng.step_index();
    store(acc);
    finish_fields(acc);
    return out;
}

// ---------------------------------------------------------------------------
// Field snapshot I/O: JSON header + little-endian float64 (re, im) pairs.

inline void write_snapshot(const FieldSnapshot& s, const std::filesystem::path& json_path,
                           const std::filesystem::path& bin_path) {
    nlohmann::json h = {{"nx", s.nx},
                        {"ny", s.ny},
                        {"cell_size_m", s.cell},
                        {"component", to_string(s.component)},
                        {"omega_rad_s", s.omega},
                        {"origin_m", {s.origin.x, s.origin.y}},
                        {"encoding", "float64 little-endian (re, im) pairs, row-major, row 0 at the bottom"},
                        {"data_file", bin_path.filename().string()}};
    std::ofstream hj(json_path);
    if (!hj) throw Error(ErrorKind::Io, "cannot write " + json_path.string());
    hj << h.dump(2) << "\n";
    std::ofstream out(bin_path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + bin_path.string());
    auto put = [&](double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        unsigned char b[8];
        for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
        out.write(reinterpret_cast<const char*>(b), 8);
    };
    for (const cplx& v : s.data) {
        put(v.real());
        put(v.imag());
    }
}

inline FieldSnapshot read_snapshot(const std::filesystem::path& json_path) {
    std::ifstream hj(json_path);
    if (!hj) throw Error(ErrorKind::Io, "cannot read " + json_path.string());
    nlohmann::json h;
    hj >> h;
    FieldSnapshot s;
    s.nx = h.at("nx");
    s.ny = h.at("ny");
    s.cell = h.at("cell_size_m");
    s.omega = h.at("omega_rad_s");
    const std::string comp = h.at("component");
    s.component = comp == "Ex" ? Component::Ex : comp == "Ey" ? Component::Ey : Component::Hz;
    s.origin = {h["origin_m"][0], h["origin_m"][1]};
    std::ifstream in(json_path.parent_path() / h.at("data_file").get<std::string>(), std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "missing snapshot data for " + json_path.string());
    s.data.resize(static_cast<std::size_t>(s.nx) * s.ny);
    auto get = [&]() {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    };
    for (auto& v : s.data) {
        const double re = get();
        const double im = get();
        v = {re, im};
    }
    if (!in) throw Error(ErrorKind::Io, "truncated snapshot data for " + json_path.string());
    return s;
}

}  // namespace enzgrid::fdtd
