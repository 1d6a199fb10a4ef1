// materials.hpp - dispersive permittivity models, ENZ crossings and the
// coherence time/length derived from the loss function Im(-1/eps).
//
// Sign convention throughout: time dependence exp(-i w t), so a lossy
// medium has Im eps > 0.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <concepts>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/fpclassify.hpp>
#include <boost/math/interpolators/pchip.hpp>
#include <json.hpp>

#include "constants.hpp"
#include "error.hpp"

namespace enzgrid::materials {

using cplx = std::complex<double>;

/// One Lorentz pole contributing strength / (w0^2 - w^2 - i*gamma*w).
/// `strength` carries units of rad^2/s^2 (delta_eps * w0^2 for a classic
/// Lorentz oscillator).
struct OscillatorTerm {
    double strength = 0.0;
    double resonance_frequency = 0.0;  // rad/s
    double damping = 0.0;              // rad/s
};

struct FrequencyRange {
    double lo = 0.0;  // rad/s
    double hi = std::numeric_limits<double>::infinity();

    bool contains(double omega) const { return omega >= lo && omega <= hi; }
};

/// eps(w) = eps_inf - wp^2 / (w^2 + i*gamma*w) + sum_k S_k / (w0_k^2 - w^2 - i*gamma_k*w)
struct DispersionModel {
    std::string name;
    double eps_infinity = 1.0;
    double drude_plasma_frequency = 0.0;  // rad/s, 0 if absent
    double drude_damping = 0.0;           // rad/s
    std::vector<OscillatorTerm> lorentz_terms;
    FrequencyRange validity;
    bool fitted = false;
    std::string notes;

    bool has_drude() const { return drude_plasma_frequency > 0.0; }
};

inline void validate(const DispersionModel& m) {
    if (!std::isfinite(m.eps_infinity)) throw Error(ErrorKind::InvalidSpec, m.name + ": eps_infinity not finite");
    if (m.drude_damping < 0.0 || m.drude_plasma_frequency < 0.0)
        throw Error(ErrorKind::InvalidSpec, m.name + ": negative Drude parameter");
    for (const auto& t : m.lorentz_terms) {
        if (t.damping < 0.0 || t.resonance_frequency < 0.0 || t.strength < 0.0)
            throw Error(ErrorKind::InvalidSpec, m.name + ": negative Lorentz parameter");
    }
    if (!(m.validity.lo < m.validity.hi) || m.validity.lo < 0.0)
        throw Error(ErrorKind::InvalidSpec, m.name + ": empty validity range");
}

inline cplx permittivity(const DispersionModel& m, double omega) {
    if (!(omega > 0.0)) throw Error(ErrorKind::Domain, "permittivity: omega must be positive");
    const cplx i(0.0, 1.0);
    cplx eps = m.eps_infinity;
    if (m.has_drude()) {
        const double wp2 = m.drude_plasma_frequency * m.drude_plasma_frequency;
        eps -= wp2 / (omega * omega + i * m.drude_damping * omega);
    }
    for (const auto& t : m.lorentz_terms) {
        const double w02 = t.resonance_frequency * t.resonance_frequency;
        eps += t.strength / (w02 - omega * omega - i * t.damping * omega);
    }
    return eps;
}

inline FrequencyRange validity(const DispersionModel& m) { return m.validity; }

/// Measured-style permittivity samples on a wavelength grid, interpolated
/// with a monotone (PCHIP) cubic in wavelength. No extrapolation.
class TabulatedPermittivity {
public:
    struct Sample {
        double wavelength;  // m
        double eps_real;
        double eps_imag;
    };

    TabulatedPermittivity() = default;

    TabulatedPermittivity(std::string name, std::vector<Sample> samples)
        : name_(std::move(name)), samples_(std::move(samples)) {
        if (samples_.size() < 4) throw Error(ErrorKind::InvalidSpec, "table needs at least 4 samples");
        for (std::size_t k = 0; k < samples_.size(); ++k) {
            if (k > 0 && !(samples_[k].wavelength > samples_[k - 1].wavelength))
                throw Error(ErrorKind::InvalidSpec, "table wavelengths must be strictly increasing");
            if (samples_[k].eps_imag < 0.0) throw Error(ErrorKind::InvalidSpec, "table has eps_imag < 0");
        }
        build();
    }

    const std::string& name() const { return name_; }
    const std::vector<Sample>& samples() const { return samples_; }
    double min_wavelength() const { return samples_.front().wavelength; }
    double max_wavelength() const { return samples_.back().wavelength; }

    cplx at_wavelength(double lambda) const {
        if (lambda < min_wavelength() || lambda > max_wavelength())
            throw Error(ErrorKind::Domain, "table '" + name_ + "': wavelength outside tabulated range");
        return {(*re_)(lambda), (*im_)(lambda)};
    }

private:
    using Pchip = boost::math::interpolators::pchip<std::vector<double>>;

    void build() {
        std::vector<double> x, yr, yi;
        for (const auto& s : samples_) {
            x.push_back(s.wavelength);
            yr.push_back(s.eps_real);
            yi.push_back(s.eps_imag);
        }
        std::vector<double> x2 = x;
        re_ = std::make_shared<Pchip>(std::move(x), std::move(yr));
        im_ = std::make_shared<Pchip>(std::move(x2), std::move(yi));
    }

    std::string name_;
    std::vector<Sample> samples_;
    // pchip is move-only; shared ownership keeps the table copyable.
    std::shared_ptr<const Pchip> re_;
    std::shared_ptr<const Pchip> im_;
};

inline cplx permittivity(const TabulatedPermittivity& t, double omega) {
    if (!(omega > 0.0)) throw Error(ErrorKind::Domain, "permittivity: omega must be positive");
    return t.at_wavelength(omega_to_wavelength(omega));
}

inline FrequencyRange validity(const TabulatedPermittivity& t) {
    return {wavelength_to_omega(t.max_wavelength()), wavelength_to_omega(t.min_wavelength())};
}

template <typename M>
concept PermittivitySource = requires(const M& m, double w) {
    { permittivity(m, w) } -> std::convertible_to<cplx>;
    { validity(m) } -> std::convertible_to<FrequencyRange>;
};

/// Im(-1/eps) = Im eps / |eps|^2.
inline double loss_function(cplx eps) {
    const double mag2 = std::norm(eps);
    if (mag2 == 0.0) throw Error(ErrorKind::Singular, "loss function undefined at eps = 0");
    return eps.imag() / mag2;
}

template <PermittivitySource M>
double loss_function(const M& m, double omega) {
    return loss_function(permittivity(m, omega));
}

/// All frequencies in [lo, hi] where Re eps changes sign, refined by
/// bisection to relative tolerance 1e-10. Crossings closer together than the
/// scan spacing may be missed.
template <PermittivitySource M>
std::vector<double> enz_crossing(const M& m, double lo, double hi, int scan_points = 20000) {
    if (!(lo > 0.0) || !(hi > lo)) throw Error(ErrorKind::Domain, "enz_crossing: need 0 < lo < hi");
    auto re = [&](double w) { return permittivity(m, w).real(); };
    std::vector<double> roots;
    double w_prev = lo;
    double f_prev = re(lo);
    if (f_prev == 0.0) roots.push_back(lo);
    for (int k = 1; k <= scan_points; ++k) {
        const double w = lo + (hi - lo) * static_cast<double>(k) / scan_points;
        const double f = re(w);
        if (f == 0.0) {
            roots.push_back(w);
        } else if (f_prev != 0.0 && std::signbit(f) != std::signbit(f_prev)) {
            double a = w_prev, b = w, fa = f_prev;
            while ((b - a) > 1e-10 * b) {
                const double mid = 0.5 * (a + b);
                const double fm = re(mid);
                if (fm == 0.0) {
                    a = b = mid;
                    break;
                }
                if (std::signbit(fm) == std::signbit(fa)) {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
            }
            roots.push_back(0.5 * (a + b));
        }
        w_prev = w;
        f_prev = f;
    }
    return roots;
}

template <PermittivitySource M>
std::vector<double> enz_crossing(const M& m) {
    const auto r = validity(m);
    return enz_crossing(m, r.lo, r.hi);
}

/// The crossing with the strongest loss-function response, i.e. the
/// longitudinal (ENZ) point rather than a transverse pole-side zero.
template <PermittivitySource M>
std::optional<double> primary_enz(const M& m) {
    const auto roots = enz_crossing(m);
    std::optional<double> best;
    double best_loss = -1.0;
    for (double w : roots) {
        const double l = loss_function(m, w);
        if (l > best_loss) {
            best_loss = l;
            best = w;
        }
    }
    return best;
}

struct LossPeak {
    double omega_peak = 0.0;
    double peak_value = 0.0;
    double omega_low = 0.0;   // lower half-maximum point
    double omega_high = 0.0;  // upper half-maximum point
    double fwhm() const { return omega_high - omega_low; }
};

/// Locates the loss-function peak nearest `near`, then brackets its two
/// half-maximum points. Golden-section for the peak, bisection for the
/// half-maxima, relative tolerance 1e-8.
template <PermittivitySource M>
LossPeak loss_peak(const M& m, double near, int scan_points = 20001) {
    const FrequencyRange valid = validity(m);
    if (!valid.contains(near)) throw Error(ErrorKind::Domain, "loss_peak: start frequency outside validity range");
    auto loss = [&](double w) { return loss_function(m, w); };
    constexpr double tol = 1e-8;

    for (double half_width = 0.05;; half_width *= 2.0) {
        const double lo = std::max(valid.lo, near * (1.0 - half_width));
        const double hi = std::min(valid.hi, near * (1.0 + half_width));
        const bool lo_is_edge = lo <= valid.lo;
        const bool hi_is_edge = hi >= valid.hi;
        const bool last = half_width >= 0.8 || (lo_is_edge && hi_is_edge);

        std::vector<double> w(scan_points), f(scan_points);
        for (int k = 0; k < scan_points; ++k) {
            w[k] = lo + (hi - lo) * k / (scan_points - 1.0);
            f[k] = loss(w[k]);
        }
        // Peak nearest to `near`: climb from the start sample.
        auto start = static_cast<int>(std::lround((near - lo) / (hi - lo) * (scan_points - 1)));
        start = std::clamp(start, 0, scan_points - 1);
        int ip = start;
        while (true) {
            if (ip + 1 < scan_points && f[ip + 1] > f[ip]) {
                ++ip;
            } else if (ip > 0 && f[ip - 1] > f[ip]) {
                --ip;
            } else {
                break;
            }
        }
        if (ip == 0 || ip == scan_points - 1) {
            if ((ip == 0 && lo_is_edge) || (ip == scan_points - 1 && hi_is_edge) || last)
                throw Error(ErrorKind::Inconclusive, "loss-function peak lies on the scan boundary");
            continue;
        }
        const double half = 0.5 * f[ip];
        int il = ip, ih = ip;
        while (il > 0 && f[il] > half) --il;
        while (ih < scan_points - 1 && f[ih] > half) ++ih;
        if (f[il] > half || f[ih] > half) {
            if ((f[il] > half && lo_is_edge) || (f[ih] > half && hi_is_edge) || last)
                throw Error(ErrorKind::Inconclusive, "half-maximum not bracketed inside the validity range");
            continue;
        }

        // Golden-section refinement of the peak.
        double a = w[ip - 1], b = w[ip + 1];
        const double g = 0.5 * (std::sqrt(5.0) - 1.0);
        double x1 = b - g * (b - a), x2 = a + g * (b - a);
        double f1 = loss(x1), f2 = loss(x2);
        while ((b - a) > tol * b) {
            if (f1 < f2) {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = loss(x2);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = loss(x1);
            }
        }
        LossPeak peak;
        peak.omega_peak = 0.5 * (a + b);
        peak.peak_value = loss(peak.omega_peak);
        const double h = 0.5 * peak.peak_value;

        auto bisect = [&](double below, double above) {
            // `below` has loss < h, `above` has loss > h
            while (std::abs(above - below) > tol * std::abs(above)) {
                const double mid = 0.5 * (below + above);
                if (loss(mid) > h) {
                    above = mid;
                } else {
                    below = mid;
                }
            }
            return 0.5 * (below + above);
        };
        int jl = ip;
        while (jl > il && f[jl] > h) --jl;
        int jh = ip;
        while (jh < ih && f[jh] > h) ++jh;
        peak.omega_low = bisect(w[jl], w[jl + 1]);
        peak.omega_high = bisect(w[jh], w[jh - 1]);
        return peak;
    }
}

/// Coherence time tau_c = 1 / FWHM of the loss-function peak near the given
/// crossing.
template <PermittivitySource M>
double coherence_time(const M& m, double near_crossing) {
    return 1.0 / loss_peak(m, near_crossing).fwhm();
}

struct CoherenceReport {
    std::string material;
    double omega = 0.0;           // evaluation frequency, rad/s
    double enz_omega = 0.0;       // crossing used for the loss peak, rad/s
    double enz_wavelength = 0.0;  // m
    cplx eps_at_enz;              // eps at the evaluation frequency
    double loss_peak_omega = 0.0;
    double loss_fwhm = 0.0;         // rad/s
    double coherence_time = 0.0;    // s
    cplx refractive_index;
    double phase_velocity = 0.0;    // m/s
    double coherence_length = 0.0;  // m
    bool at_crossing = true;
};

/// Principal square root of eps, v_p = c / Re(n), L_c = v_p * tau_c.
inline void fill_propagation(CoherenceReport& r, cplx eps, double tau_c) {
    r.eps_at_enz = eps;
    r.coherence_time = tau_c;
    r.refractive_index = std::sqrt(eps);
    if (r.refractive_index.real() <= 0.0)
        throw Error(ErrorKind::Singular, "Re(n) = 0: phase velocity is infinite, coherence length undefined");
    r.phase_velocity = kC0 / r.refractive_index.real();
    r.coherence_length = r.phase_velocity * r.coherence_time;
}

inline CoherenceReport coherence_length(cplx eps, double tau_c) {
    if (!(tau_c > 0.0)) throw Error(ErrorKind::Domain, "coherence_length: tau_c must be positive");
    CoherenceReport r;
    fill_propagation(r, eps, tau_c);
    return r;
}

/// Full coherence chain evaluated at `omega`. The loss peak is taken at the
/// primary ENZ crossing; when `omega` is not that crossing (relative distance
/// above 1e-6) the report is flagged `at_crossing = false`.
template <PermittivitySource M>
CoherenceReport coherence_length(const M& m, double omega) {
    const auto roots = enz_crossing(m);
    if (roots.empty()) throw Error(ErrorKind::Inconclusive, "no ENZ crossing inside the validity range");
    const auto primary = primary_enz(m);
    const double crossing = *primary;
    const LossPeak peak = loss_peak(m, crossing);

    CoherenceReport r;
    r.omega = omega;
    r.enz_omega = crossing;
    r.enz_wavelength = omega_to_wavelength(crossing);
    r.loss_peak_omega = peak.omega_peak;
    r.loss_fwhm = peak.fwhm();
    r.at_crossing = std::abs(omega - crossing) <= 1e-6 * crossing;
    fill_propagation(r, permittivity(m, omega), 1.0 / peak.fwhm());
    return r;
}

template <PermittivitySource M>
CoherenceReport coherence_report(const M& m) {
    const auto primary = primary_enz(m);
    if (!primary) throw Error(ErrorKind::Inconclusive, "no ENZ crossing inside the validity range");
    return coherence_length(m, *primary);
}

// ---------------------------------------------------------------------------
// Fitting helpers used to build presets from a target ENZ point.

/// Lossy Drude medium whose permittivity at `omega` equals `target`.
inline DispersionModel fit_drude(double eps_infinity, double omega, cplx target) {
    const double a = eps_infinity - target.real();
    if (!(a > 0.0) || !(target.imag() > 0.0))
        throw Error(ErrorKind::Domain, "fit_drude: need eps_inf > Re(target) and Im(target) > 0");
    DispersionModel m;
    m.eps_infinity = eps_infinity;
    m.drude_damping = target.imag() * omega / a;
    m.drude_plasma_frequency = std::sqrt(a * (omega * omega + m.drude_damping * m.drude_damping));
    m.fitted = true;
    return m;
}

/// Lorentz pole at resonance `w0` whose addition makes eps(omega) = i*target_imag.
/// Closed form: with base eps b and a = w0^2 - omega^2,
/// gamma = -a (t - b'') / (b' omega) and S = -b' D / a, D = a^2 + gamma^2 omega^2.
inline OscillatorTerm fit_lorentz(const DispersionModel& base, double omega, double w0, double target_imag) {
    const cplx b = permittivity(base, omega);
    const double a = w0 * w0 - omega * omega;
    if (a == 0.0 || b.real() == 0.0) throw Error(ErrorKind::Domain, "fit_lorentz: degenerate configuration");
    OscillatorTerm t;
    t.resonance_frequency = w0;
    t.damping = -a * (target_imag - b.imag()) / (b.real() * omega);
    const double d = a * a + t.damping * t.damping * omega * omega;
    t.strength = -b.real() * d / a;
    if (!(t.damping > 0.0) || !(t.strength > 0.0))
        throw Error(ErrorKind::Domain, "fit_lorentz: no passive oscillator reaches the target");
    return t;
}

// ---------------------------------------------------------------------------
// Preset and table I/O.

namespace detail {

inline double json_quantity(const nlohmann::json& j, Quantity q) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) return parse_quantity(j.get<std::string>(), q);
    throw Error(ErrorKind::Schema, "expected a number or a quantity string");
}

// validity_range may be given in wavelength (lengths) or frequency.
inline FrequencyRange json_range(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 2) throw Error(ErrorKind::Schema, "validity_range must be [lo, hi]");
    auto is_length = [](const nlohmann::json& v) {
        if (!v.is_string()) return false;
        const auto s = v.get<std::string>();
        return s.ends_with("m") && !s.ends_with("rad/s");
    };
    if (is_length(j[0]) != is_length(j[1])) throw Error(ErrorKind::Schema, "validity_range mixes units");
    if (is_length(j[0])) {
        const double l0 = json_quantity(j[0], Quantity::Length);
        const double l1 = json_quantity(j[1], Quantity::Length);
        return {wavelength_to_omega(std::max(l0, l1)), wavelength_to_omega(std::min(l0, l1))};
    }
    return {json_quantity(j[0], Quantity::Frequency), json_quantity(j[1], Quantity::Frequency)};
}

}  // namespace detail

inline DispersionModel model_from_json(const nlohmann::json& j) {
    try {
        DispersionModel m;
        m.name = j.value("name", std::string("unnamed"));
        m.eps_infinity = j.at("eps_infinity").get<double>();
        if (j.contains("drude")) {
            m.drude_plasma_frequency = detail::json_quantity(j["drude"].at("wp"), Quantity::Frequency);
            m.drude_damping = detail::json_quantity(j["drude"].at("gamma"), Quantity::Frequency);
        }
        for (const auto& t : j.value("lorentz", nlohmann::json::array())) {
            OscillatorTerm o;
            o.strength = t.at("strength").get<double>();
            o.resonance_frequency = detail::json_quantity(t.at("w0"), Quantity::Frequency);
            o.damping = detail::json_quantity(t.at("gamma"), Quantity::Frequency);
            m.lorentz_terms.push_back(o);
        }
        if (j.contains("validity_range")) {
            m.validity = detail::json_range(j["validity_range"]);
        } else {
            m.validity = {1e9, 1e18};
        }
        m.fitted = j.value("fitted", false);
        m.notes = j.value("notes", std::string());
        validate(m);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("material preset: ") + e.what());
    }
}

inline nlohmann::json model_to_json(const DispersionModel& m) {
    nlohmann::json j;
    j["name"] = m.name;
    j["eps_infinity"] = m.eps_infinity;
    if (m.has_drude()) j["drude"] = {{"wp", m.drude_plasma_frequency}, {"gamma", m.drude_damping}};
    j["lorentz"] = nlohmann::json::array();
    for (const auto& t : m.lorentz_terms)
        j["lorentz"].push_back({{"strength", t.strength}, {"w0", t.resonance_frequency}, {"gamma", t.damping}});
    j["validity_range"] = {m.validity.lo, m.validity.hi};
    j["fitted"] = m.fitted;
    if (!m.notes.empty()) j["notes"] = m.notes;
    return j;
}

inline DispersionModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open material preset " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Schema, path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

/// CSV with header `wavelength_m,eps_re,eps_im`.
inline TabulatedPermittivity load_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open permittivity table " + path.string());
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "wavelength_m,eps_re,eps_im")
        throw Error(ErrorKind::Schema, path.string() + ": expected header wavelength_m,eps_re,eps_im");
    std::vector<TabulatedPermittivity::Sample> samples;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        TabulatedPermittivity::Sample s{};
        if (!(ss >> s.wavelength >> s.eps_real >> s.eps_imag))
            throw Error(ErrorKind::Schema, path.string() + ":" + std::to_string(lineno) + ": malformed row");
        samples.push_back(s);
    }
    return TabulatedPermittivity(path.stem().string(), std::move(samples));
}

/// Directory holding the bundled presets; ENZGRID_PRESET_DIR overrides it.
inline std::filesystem::path preset_directory() {
    if (const char* env = std::getenv("ENZGRID_PRESET_DIR"); env && *env) return env;
#ifdef ENZGRID_DEFAULT_PRESET_DIR
    return ENZGRID_DEFAULT_PRESET_DIR;
#else
    return "data/presets";
#endif
}

inline DispersionModel load_preset(const std::string& name) {
    return load_model(preset_directory() / (name + ".json"));
}

}  // namespace enzgrid::materials
