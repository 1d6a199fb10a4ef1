// config.hpp - run configuration documents (JSON with unit strings)

#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "constants.hpp"
#include "error.hpp"
#include "fdtd.hpp"
#include "geometry.hpp"
#include "materials.hpp"

namespace enzgrid::config {

using nlohmann::json;
using geometry::Point;

using SceneSpec = std::variant<geometry::GridNetworkSpec, geometry::BentChannelSpec>;

struct DecayAnalysis {
    double exclusion = 75e-9;  // m around the dipole
};

struct CouplingAnalysis {
    int from = 0;  // source cavity
    int to = 1;    // receiving cavity
    Point d1{1.0, 0.0};
    Point d2{1.0, 0.0};
};

struct RetentionAnalysis {
    std::string line = "cut";
    double exclusion = 75e-9;
};

struct AnalysisConfig {
    std::optional<DecayAnalysis> decay;
    bool phase = false;
    std::optional<CouplingAnalysis> coupling;
    std::optional<RetentionAnalysis> retention;
};

struct LineMonitorConfig {
    std::string name;
    int from = 0;
    int to = 1;
};

struct MonitorConfig {
    bool cavities = true;
    bool decay_fields = false;  // full-grid Ex and Ey for peak-field decay curves
    std::vector<fdtd::Component> fields;
    std::vector<fdtd::PointMonitor> points;
    std::vector<LineMonitorConfig> lines;
};

struct SourceConfig {
    fdtd::Source source;
    std::optional<int> cavity;  // position given relative to this cavity center
};

/// One fully resolved run (a config document with one variant applied).
struct RunConfig {
    std::string name;
    std::string variant;
    SceneSpec scene;
    double resolution = 0.0;  // m; 0: derived from the scene and the carrier
    double courant = 0.5;
    int padding_cells = 0;
    fdtd::PmlSpec pml = fdtd::PmlSpec::none();
    std::vector<SourceConfig> sources;
    MonitorConfig monitors;
    fdtd::RunControl stop;
    int workers = 1;
    bool grid_matched_drive = false;  // CW drive shifted so the discrete material response matches the model
    AnalysisConfig analysis;
    json document;  // the merged document this run was parsed from
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw Error(ErrorKind::Schema, where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
            throw Error(ErrorKind::Schema, "unknown key '" + it.key() + "' in " + where);
    }
}

inline const json& require(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw Error(ErrorKind::Schema, where + " is missing '" + key + "'");
    return j.at(key);
}

inline double quantity(const json& v, Quantity q, const std::string& where) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) return parse_quantity(v.get<std::string>(), q);
    throw Error(ErrorKind::Schema, where + " must be a number or a unit string");
}

inline double quantity_or(const json& j, const char* key, Quantity q, double fallback, const std::string& where) {
    return j.contains(key) ? quantity(j.at(key), q, where + "." + key) : fallback;
}

inline double number(const json& v, const std::string& where) {
    if (!v.is_number()) throw Error(ErrorKind::Schema, where + " must be a number");
    return v.get<double>();
}

inline int integer(const json& v, const std::string& where) {
    if (!v.is_number_integer()) throw Error(ErrorKind::Schema, where + " must be an integer");
    return v.get<int>();
}

inline std::string text(const json& v, const std::string& where) {
    if (!v.is_string()) throw Error(ErrorKind::Schema, where + " must be a string");
    return v.get<std::string>();
}

inline bool flag(const json& v, const std::string& where) {
    if (!v.is_boolean()) throw Error(ErrorKind::Schema, where + " must be true or false");
    return v.get<bool>();
}

inline Point point(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 2) throw Error(ErrorKind::Schema, where + " must be a two-element array");
    return {quantity(v[0], Quantity::Length, where), quantity(v[1], Quantity::Length, where)};
}

inline Point direction(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 2) throw Error(ErrorKind::Schema, where + " must be a two-element array");
    const Point p{number(v[0], where), number(v[1], where)};
    if (std::hypot(p.x, p.y) == 0.0) throw Error(ErrorKind::Schema, where + " must be non-zero");
    return p;
}

/// Angular frequency from either a "wavelength" or a "frequency" key.
inline double omega_of(const json& j, const std::string& where) {
    if (j.contains("wavelength") == j.contains("frequency"))
        throw Error(ErrorKind::Schema, where + " needs exactly one of 'wavelength' or 'frequency'");
    if (j.contains("wavelength")) {
        const double lam = quantity(j.at("wavelength"), Quantity::Length, where + ".wavelength");
        if (!(lam > 0.0)) throw Error(ErrorKind::Schema, where + ".wavelength must be positive");
        return wavelength_to_omega(lam);
    }
    const double w = quantity(j.at("frequency"), Quantity::Frequency, where + ".frequency");
    if (!(w > 0.0)) throw Error(ErrorKind::Schema, where + ".frequency must be positive");
    return w;
}

/// A frequency entry: "780nm" is read as a wavelength, anything else as a
/// frequency.
inline double omega_entry(const json& v, const std::string& where) {
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        try {
            return wavelength_to_omega(parse_quantity(s, Quantity::Length));
        } catch (const Error&) {
            return parse_quantity(s, Quantity::Frequency);
        }
    }
    return number(v, where);
}

inline fdtd::Waveform waveform(const json& j, const std::string& where) {
    const std::string type = text(require(j, "type", where), where + ".type");
    if (type == "cw") {
        check_keys(j, {"type", "wavelength", "frequency", "ramp_periods"}, where);
        fdtd::RampedCW w;
        w.omega = omega_of(j, where);
        if (j.contains("ramp_periods")) w.ramp_periods = number(j.at("ramp_periods"), where + ".ramp_periods");
        if (!(w.ramp_periods > 0.0)) throw Error(ErrorKind::Schema, where + ".ramp_periods must be positive");
        return w;
    }
    if (type == "pulse") {
        check_keys(j, {"type", "wavelength", "frequency", "bandwidth", "delay_widths"}, where);
        fdtd::GaussianPulse w;
        w.omega = omega_of(j, where);
        if (j.contains("bandwidth")) w.fractional_bandwidth = number(j.at("bandwidth"), where + ".bandwidth");
        if (j.contains("delay_widths")) w.delay_widths = number(j.at("delay_widths"), where + ".delay_widths");
        if (!(w.fractional_bandwidth > 0.0) || !(w.delay_widths > 0.0))
            throw Error(ErrorKind::Schema, where + ": bandwidth and delay_widths must be positive");
        return w;
    }
    throw Error(ErrorKind::Schema, where + ".type must be 'cw' or 'pulse'");
}

inline geometry::GridNetworkSpec grid_scene(const json& j) {
    const std::string w = "scene";
    check_keys(j, {"type", "rows", "cols", "pitch", "cavity_radius", "channel_width", "cladding_thickness",
                   "cavity_material", "channel_material", "cladding_material", "exterior_material", "inclusions"},
               w);
    geometry::GridNetworkSpec s;
    s.rows = integer(require(j, "rows", w), w + ".rows");
    s.cols = integer(require(j, "cols", w), w + ".cols");
    s.pitch = quantity_or(j, "pitch", Quantity::Length, s.pitch, w);
    s.cavity_radius = quantity_or(j, "cavity_radius", Quantity::Length, s.cavity_radius, w);
    s.channel_width = quantity_or(j, "channel_width", Quantity::Length, s.channel_width, w);
    s.cladding_thickness = quantity_or(j, "cladding_thickness", Quantity::Length, s.cladding_thickness, w);
    if (j.contains("cavity_material")) s.cavity_material = text(j.at("cavity_material"), w + ".cavity_material");
    if (j.contains("channel_material")) s.channel_material = text(j.at("channel_material"), w + ".channel_material");
    if (j.contains("cladding_material"))
        s.cladding_material = text(j.at("cladding_material"), w + ".cladding_material");
    if (j.contains("exterior_material"))
        s.exterior_material = text(j.at("exterior_material"), w + ".exterior_material");
    if (j.contains("inclusions")) {
        if (!j.at("inclusions").is_array()) throw Error(ErrorKind::Schema, "scene.inclusions must be an array");
        for (const auto& inc : j.at("inclusions")) {
            const std::string iw = "scene.inclusions[]";
            check_keys(inc, {"cavity", "radius", "offset", "material"}, iw);
            geometry::Inclusion g;
            g.cavity = integer(require(inc, "cavity", iw), iw + ".cavity");
            g.radius = quantity(require(inc, "radius", iw), Quantity::Length, iw + ".radius");
            if (inc.contains("offset")) g.offset = point(inc.at("offset"), iw + ".offset");
            g.material = text(require(inc, "material", iw), iw + ".material");
            s.inclusions.push_back(g);
        }
    }
    return s;
}

inline geometry::BentChannelSpec bent_scene(const json& j) {
    const std::string w = "scene";
    check_keys(j, {"type", "first", "second", "cavity_radius", "channel_width", "cladding_thickness", "bend",
                   "cavity_material", "channel_material", "cladding_material", "exterior_material"},
               w);
    geometry::BentChannelSpec s;
    s.first = point(require(j, "first", w), w + ".first");
    s.second = point(require(j, "second", w), w + ".second");
    s.cavity_radius = quantity_or(j, "cavity_radius", Quantity::Length, s.cavity_radius, w);
    s.channel_width = quantity_or(j, "channel_width", Quantity::Length, s.channel_width, w);
    s.cladding_thickness = quantity_or(j, "cladding_thickness", Quantity::Length, s.cladding_thickness, w);
    if (j.contains("bend")) {
        const std::string b = text(j.at("bend"), w + ".bend");
        if (b == "L") s.bend = geometry::Bend::LShape;
        else if (b == "straight") s.bend = geometry::Bend::Straight;
        else throw Error(ErrorKind::Schema, "scene.bend must be 'L' or 'straight'");
    }
    if (j.contains("cavity_material")) s.cavity_material = text(j.at("cavity_material"), w + ".cavity_material");
    if (j.contains("channel_material")) s.channel_material = text(j.at("channel_material"), w + ".channel_material");
    if (j.contains("cladding_material"))
        s.cladding_material = text(j.at("cladding_material"), w + ".cladding_material");
    if (j.contains("exterior_material"))
        s.exterior_material = text(j.at("exterior_material"), w + ".exterior_material");
    return s;
}

inline SceneSpec scene(const json& j) {
    if (!j.is_object() || j.empty()) throw Error(ErrorKind::Schema, "scene is empty");
    const std::string type = text(require(j, "type", "scene"), "scene.type");
    if (type == "grid") return grid_scene(j);
    if (type == "bent") return bent_scene(j);
    throw Error(ErrorKind::Schema, "scene.type must be 'grid' or 'bent'");
}

inline SourceConfig source(const json& j, std::size_t index) {
    const std::string w = "sources[" + std::to_string(index) + "]";
    const std::string type = text(require(j, "type", w), w + ".type");
    SourceConfig out;
    if (type == "dipole") {
        check_keys(j, {"type", "cavity", "position", "orientation", "moment", "waveform"}, w);
        fdtd::DipoleSource d;
        if (j.contains("cavity")) out.cavity = integer(j.at("cavity"), w + ".cavity");
        if (j.contains("position")) d.position = point(j.at("position"), w + ".position");
        if (j.contains("orientation")) d.orientation = direction(j.at("orientation"), w + ".orientation");
        const double n = std::hypot(d.orientation.x, d.orientation.y);
        d.orientation = {d.orientation.x / n, d.orientation.y / n};
        if (j.contains("moment")) d.moment = number(j.at("moment"), w + ".moment");
        d.waveform = waveform(require(j, "waveform", w), w + ".waveform");
        out.source = d;
        return out;
    }
    if (type == "line") {
        check_keys(j, {"type", "x", "ymin", "ymax", "amplitude", "waveform"}, w);
        fdtd::LineSource l;
        l.x = quantity(require(j, "x", w), Quantity::Length, w + ".x");
        l.ymin = quantity(require(j, "ymin", w), Quantity::Length, w + ".ymin");
        l.ymax = quantity(require(j, "ymax", w), Quantity::Length, w + ".ymax");
        if (j.contains("amplitude")) l.amplitude = number(j.at("amplitude"), w + ".amplitude");
        l.waveform = waveform(require(j, "waveform", w), w + ".waveform");
        out.source = l;
        return out;
    }
    throw Error(ErrorKind::Schema, w + ".type must be 'dipole' or 'line'");
}

inline fdtd::Component component(const json& v, const std::string& where) {
    const std::string s = text(v, where);
    if (s == "Ex") return fdtd::Component::Ex;
    if (s == "Ey") return fdtd::Component::Ey;
    if (s == "Hz") return fdtd::Component::Hz;
    throw Error(ErrorKind::Schema, where + " must be Ex, Ey or Hz");
}

inline MonitorConfig monitors(const json& j) {
    const std::string w = "monitors";
    check_keys(j, {"cavities", "decay_fields", "fields", "points", "lines"}, w);
    MonitorConfig m;
    if (j.contains("cavities")) m.cavities = flag(j.at("cavities"), "monitors.cavities");
    if (j.contains("decay_fields")) m.decay_fields = flag(j.at("decay_fields"), "monitors.decay_fields");
    if (j.contains("fields"))
        for (const auto& f : j.at("fields")) m.fields.push_back(component(f, w + ".fields[]"));
    if (j.contains("points")) {
        for (const auto& p : j.at("points")) {
            check_keys(p, {"name", "position"}, w + ".points[]");
            m.points.push_back({text(require(p, "name", w), w + ".points[].name"),
                                point(require(p, "position", w), w + ".points[].position")});
        }
    }
    if (j.contains("lines")) {
        for (const auto& l : j.at("lines")) {
            check_keys(l, {"name", "from", "to"}, w + ".lines[]");
            m.lines.push_back({text(require(l, "name", w), w + ".lines[].name"),
                               integer(require(l, "from", w), w + ".lines[].from"),
                               integer(require(l, "to", w), w + ".lines[].to")});
        }
    }
    return m;
}

inline fdtd::RunControl stop(const json& j) {
    const std::string w = "stop";
    check_keys(j, {"max_steps", "steady_tolerance", "min_periods", "decay_tolerance", "check_interval"}, w);
    fdtd::RunControl c;
    if (j.contains("max_steps")) c.max_steps = j.at("max_steps").get<long>();
    if (j.contains("steady_tolerance")) c.steady_tolerance = number(j.at("steady_tolerance"), w + ".steady_tolerance");
    if (j.contains("min_periods")) c.min_periods = integer(j.at("min_periods"), w + ".min_periods");
    if (j.contains("decay_tolerance")) c.decay_tolerance = number(j.at("decay_tolerance"), w + ".decay_tolerance");
    if (j.contains("check_interval")) c.check_interval = integer(j.at("check_interval"), w + ".check_interval");
    if (c.max_steps <= 0 || !(c.steady_tolerance > 0.0) || !(c.decay_tolerance > 0.0) || c.min_periods < 0 ||
        c.check_interval <= 0)
        throw Error(ErrorKind::Schema, "stop criteria must be positive");
    return c;
}

inline std::vector<double> frequencies(const json& j) {
    std::vector<double> out;
    if (j.is_array()) {
        for (const auto& v : j) out.push_back(omega_entry(v, "frequencies[]"));
    } else if (j.is_object()) {
        check_keys(j, {"center", "relative_step", "count"}, "frequencies");
        const double c = omega_entry(require(j, "center", "frequencies"), "frequencies.center");
        const double step = number(require(j, "relative_step", "frequencies"), "frequencies.relative_step");
        const int n = integer(require(j, "count", "frequencies"), "frequencies.count");
        if (n < 1) throw Error(ErrorKind::Schema, "frequencies.count must be at least 1");
        for (int k = 0; k < n; ++k) out.push_back(c * (1.0 + step * (k - 0.5 * (n - 1))));
    } else {
        throw Error(ErrorKind::Schema, "frequencies must be a list or a {center, relative_step, count} object");
    }
    for (double w : out)
        if (!(w > 0.0)) throw Error(ErrorKind::Schema, "frequencies must be positive");
    return out;
}

inline fdtd::PmlSpec pml(const json& j) {
    if (j.is_boolean()) return j.get<bool>() ? fdtd::PmlSpec{} : fdtd::PmlSpec::none();
    const std::string w = "pml";
    check_keys(j, {"cells", "sides", "order", "sigma_scale", "alpha_max"}, w);
    fdtd::PmlSpec p;
    if (j.contains("cells")) p.cells = integer(j.at("cells"), w + ".cells");
    if (j.contains("sides")) {
        p.left = p.right = p.bottom = p.top = false;
        for (const auto& s : j.at("sides")) {
            const std::string side = text(s, w + ".sides[]");
            if (side == "left") p.left = true;
            else if (side == "right") p.right = true;
            else if (side == "bottom") p.bottom = true;
            else if (side == "top") p.top = true;
            else throw Error(ErrorKind::Schema, "pml.sides entries must be left, right, bottom or top");
        }
    }
    if (j.contains("order")) p.order = number(j.at("order"), w + ".order");
    if (j.contains("sigma_scale")) p.sigma_scale = number(j.at("sigma_scale"), w + ".sigma_scale");
    if (j.contains("alpha_max")) p.alpha_max = number(j.at("alpha_max"), w + ".alpha_max");
    if (p.cells < 1) throw Error(ErrorKind::Schema, "pml.cells must be at least 1");
    return p;
}

inline Point vector2(const json& v, const std::string& where) { return direction(v, where); }

inline AnalysisConfig analysis(const json& j) {
    const std::string w = "analysis";
    check_keys(j, {"decay", "phase", "coupling", "retention"}, w);
    AnalysisConfig a;
    if (j.contains("decay")) {
        check_keys(j.at("decay"), {"exclusion"}, w + ".decay");
        DecayAnalysis d;
        d.exclusion = quantity_or(j.at("decay"), "exclusion", Quantity::Length, d.exclusion, w + ".decay");
        a.decay = d;
    }
    if (j.contains("phase")) a.phase = flag(j.at("phase"), "analysis.phase");
    if (j.contains("coupling")) {
        const auto& c = j.at("coupling");
        check_keys(c, {"from", "to", "d1", "d2"}, w + ".coupling");
        CouplingAnalysis k;
        if (c.contains("from")) k.from = integer(c.at("from"), w + ".coupling.from");
        if (c.contains("to")) k.to = integer(c.at("to"), w + ".coupling.to");
        if (c.contains("d1")) k.d1 = vector2(c.at("d1"), w + ".coupling.d1");
        if (c.contains("d2")) k.d2 = vector2(c.at("d2"), w + ".coupling.d2");
        a.coupling = k;
    }
    if (j.contains("retention")) {
        const auto& r = j.at("retention");
        check_keys(r, {"line", "exclusion"}, w + ".retention");
        RetentionAnalysis k;
        if (r.contains("line")) k.line = text(r.at("line"), w + ".retention.line");
        k.exclusion = quantity_or(r, "exclusion", Quantity::Length, k.exclusion, w + ".retention");
        a.retention = k;
    }
    return a;
}

}  // namespace detail

/// Parses one merged document (no variants left in it).
inline RunConfig parse_run(const json& doc, const std::filesystem::path& base = {}) {
    using namespace detail;
    check_keys(doc, {"name", "variant", "scene", "resolution", "courant", "padding_cells", "pml", "sources", "monitors",
                     "frequencies", "stop", "workers", "analysis", "grid_matched_drive"},
               "config");
    RunConfig rc;
    rc.document = doc;
    rc.name = doc.contains("name") ? text(doc.at("name"), "name") : "run";
    if (doc.contains("variant")) rc.variant = text(doc.at("variant"), "variant");
    const json& sj = require(doc, "scene", "config");
    if (sj.is_string()) {
        const auto path = base / sj.get<std::string>();
        std::ifstream in(path);
        if (!in) throw Error(ErrorKind::Io, "cannot read scene file " + path.string());
        json loaded;
        try {
            loaded = json::parse(in);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Schema, "scene file " + path.string() + ": " + e.what());
        }
        rc.scene = scene(loaded);
        rc.document["scene"] = loaded;
    } else {
        rc.scene = scene(sj);
    }
    if (doc.contains("resolution")) {
        rc.resolution = quantity(doc.at("resolution"), Quantity::Length, "resolution");
        if (!(rc.resolution > 0.0)) throw Error(ErrorKind::Schema, "resolution must be positive");
    }
    if (doc.contains("courant")) rc.courant = number(doc.at("courant"), "courant");
    if (!(rc.courant > 0.0) || rc.courant > 1.0) throw Error(ErrorKind::Schema, "courant must lie in (0, 1]");
    if (doc.contains("padding_cells")) rc.padding_cells = integer(doc.at("padding_cells"), "padding_cells");
    if (rc.padding_cells < 0) throw Error(ErrorKind::Schema, "padding_cells must be non-negative");
    if (doc.contains("pml")) rc.pml = pml(doc.at("pml"));
    const json& src = require(doc, "sources", "config");
    if (!src.is_array() || src.empty()) throw Error(ErrorKind::Schema, "sources must be a non-empty array");
    for (std::size_t k = 0; k < src.size(); ++k) rc.sources.push_back(source(src[k], k));
    if (doc.contains("monitors")) rc.monitors = monitors(doc.at("monitors"));
    if (doc.contains("stop")) rc.stop = stop(doc.at("stop"));
    if (doc.contains("frequencies")) rc.stop.frequencies = frequencies(doc.at("frequencies"));
    if (doc.contains("workers")) rc.workers = integer(doc.at("workers"), "workers");
    if (rc.workers < 1) throw Error(ErrorKind::Schema, "workers must be at least 1");
    if (doc.contains("analysis")) rc.analysis = analysis(doc.at("analysis"));
    const bool cw = std::holds_alternative<fdtd::RampedCW>(fdtd::waveform_of(rc.sources.front().source));
    if (doc.contains("grid_matched_drive")) rc.grid_matched_drive = flag(doc.at("grid_matched_drive"), "grid_matched_drive");
    if (rc.grid_matched_drive && !cw) throw Error(ErrorKind::Schema, "grid_matched_drive applies to CW runs only");
    if (cw && !rc.stop.frequencies.empty())
        throw Error(ErrorKind::Schema, "CW runs record the carrier only; drop 'frequencies'");
    return rc;
}

/// Loads a config document. A top-level "variants" array of
/// {"name", "patch"} objects expands into one run per variant, each patch
/// applied to the base document as a JSON merge patch.
inline std::vector<RunConfig> load_runs(const json& doc, const std::filesystem::path& base = {}) {
    if (!doc.is_object()) throw Error(ErrorKind::Schema, "config must be an object");
    std::vector<RunConfig> runs;
    if (!doc.contains("variants")) {
        runs.push_back(parse_run(doc, base));
        return runs;
    }
    json stem = doc;
    stem.erase("variants");
    const json& vs = doc.at("variants");
    if (!vs.is_array() || vs.empty()) throw Error(ErrorKind::Schema, "variants must be a non-empty array");
    for (const auto& v : vs) {
        detail::check_keys(v, {"name", "patch"}, "variants[]");
        json merged = stem;
        if (v.contains("patch")) merged.merge_patch(v.at("patch"));
        merged["variant"] = detail::text(detail::require(v, "name", "variants[]"), "variants[].name");
        runs.push_back(parse_run(merged, base));
    }
    return runs;
}

inline std::vector<RunConfig> load_runs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot read config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Schema, "config " + path.string() + ": " + e.what());
    }
    return load_runs(doc, path.parent_path());
}

// ---------------------------------------------------------------------------
// From a config to an engine.

inline geometry::Scene build_scene(const RunConfig& rc) {
    return std::visit(
        [](const auto& s) -> geometry::Scene {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, geometry::GridNetworkSpec>) return geometry::build_grid_scene(s);
            else return geometry::build_bent_scene(s);
        },
        rc.scene);
}

/// Real part of the refractive index, floored at 1, of every non-PEC
/// material at `omega`.
inline double densest_index(const geometry::Scene& scene, double omega) {
    double n = 1.0;
    for (std::size_t k = 0; k < scene.materials.size(); ++k) {
        std::visit(
            [&](const auto& m) {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, geometry::Dielectric>) {
                    n = std::max(n, std::sqrt(m.eps));
                } else if constexpr (std::is_same_v<T, materials::DispersionModel>) {
                    n = std::max(n, std::sqrt(materials::permittivity(m, omega)).real());
                }
            },
            scene.materials[static_cast<geometry::MaterialId>(k)].spec);
    }
    return n;
}

/// 20 cells per wavelength in the densest material and 4 across the
/// narrowest feature, whichever is finer.
inline double default_resolution(const geometry::Scene& scene, double omega) {
    double d = omega_to_wavelength(omega) / (20.0 * densest_index(scene, omega));
    if (scene.narrowest_feature > 0.0) d = std::min(d, scene.narrowest_feature / 4.0);
    return d;
}

inline double carrier_omega(const RunConfig& rc) { return fdtd::carrier(fdtd::waveform_of(rc.sources.front().source)); }

inline double resolution(const RunConfig& rc, const geometry::Scene& scene) {
    return rc.resolution > 0.0 ? rc.resolution : default_resolution(scene, carrier_omega(rc));
}

inline geometry::SceneRaster rasterize(const RunConfig& rc, const geometry::Scene& scene) {
    const int pad = rc.padding_cells;
    const auto p = rc.pml.padding();
    return geometry::rasterize(scene, resolution(rc, scene),
                               {pad + p.left, pad + p.right, pad + p.bottom, pad + p.top});
}

/// Sources with cavity-relative positions resolved to absolute ones.
inline std::vector<fdtd::Source> resolve_sources(const RunConfig& rc, const geometry::Scene& scene) {
    std::vector<fdtd::Source> out;
    for (const auto& sc : rc.sources) {
        fdtd::Source s = sc.source;
        if (sc.cavity) {
            if (*sc.cavity < 0 || static_cast<std::size_t>(*sc.cavity) >= scene.cavity_centers.size())
                throw Error(ErrorKind::Schema, "source cavity index out of range");
            auto& d = std::get<fdtd::DipoleSource>(s);
            const Point c = scene.cavity_centers[static_cast<std::size_t>(*sc.cavity)];
            d.position = {c.x + d.position.x, c.y + d.position.y};
        }
        out.push_back(s);
    }
    return out;
}

inline std::string field_monitor_name(fdtd::Component c) {
    std::string n = fdtd::to_string(c);
    for (auto& ch : n) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return "field_" + n;
}

inline std::vector<fdtd::Monitor> build_monitors(const RunConfig& rc, const geometry::Scene& scene, double cell) {
    std::vector<fdtd::Monitor> out;
    if (rc.monitors.cavities)
        for (std::size_t k = 0; k < scene.cavity_centers.size(); ++k)
            out.push_back(fdtd::PointMonitor{"cavity_" + std::to_string(k), scene.cavity_centers[k]});
    for (const auto& p : rc.monitors.points) out.push_back(p);
    for (const auto& l : rc.monitors.lines) {
        const auto n = scene.cavity_centers.size();
        if (l.from < 0 || l.to < 0 || static_cast<std::size_t>(l.from) >= n || static_cast<std::size_t>(l.to) >= n)
            throw Error(ErrorKind::Schema, "line monitor '" + l.name + "' references a missing cavity");
        const auto a = scene.cavity_centers[static_cast<std::size_t>(l.from)];
        const auto b = scene.cavity_centers[static_cast<std::size_t>(l.to)];
        out.push_back(fdtd::LineMonitor{l.name, geometry::cut_line(a, b, cell)});
    }
    for (auto c : rc.monitors.fields) out.push_back(fdtd::FieldMonitor{field_monitor_name(c), c});
    if (rc.monitors.decay_fields || rc.analysis.decay) {
        for (auto c : {fdtd::Component::Ex, fdtd::Component::Ey}) {
            if (std::find(rc.monitors.fields.begin(), rc.monitors.fields.end(), c) == rc.monitors.fields.end())
                out.push_back(fdtd::FieldMonitor{field_monitor_name(c), c});
        }
    }
    return out;
}

/// Time step: snapped to the carrier period for CW runs.
inline fdtd::EngineOptions engine_options(const RunConfig& rc, double cell) {
    fdtd::EngineOptions o;
    o.courant = rc.courant;
    o.pml = rc.pml;
    o.workers = rc.workers;
    const auto& wf = fdtd::waveform_of(rc.sources.front().source);
    if (std::holds_alternative<fdtd::RampedCW>(wf))
        o.dt = rc.grid_matched_drive ? fdtd::matched_cw_drive(cell, rc.courant, fdtd::carrier(wf)).dt
                                     : fdtd::snapped_dt(cell, rc.courant, fdtd::carrier(wf));
    return o;
}

/// Sources with the CW drive moved to the grid-matched frequency when requested.
inline std::vector<fdtd::Source> drive_sources(const RunConfig& rc, std::vector<fdtd::Source> sources, double cell) {
    if (!rc.grid_matched_drive) return sources;
    const double w = fdtd::matched_cw_drive(cell, rc.courant, carrier_omega(rc)).omega;
    for (auto& s : sources) {
        auto& wf = std::visit([](auto& v) -> fdtd::Waveform& { return v.waveform; }, s);
        if (auto* cw = std::get_if<fdtd::RampedCW>(&wf)) cw->omega = w;
    }
    return sources;
}

struct Execution {
    geometry::Scene scene;
    geometry::SceneRaster raster;
    std::vector<fdtd::Source> sources;
    fdtd::RunResult result;
    double seconds = 0.0;
};

/// Scene, raster, engine and run for one resolved config.
inline Execution execute(const RunConfig& rc) {
    Execution ex;
    ex.scene = build_scene(rc);
    ex.raster = rasterize(rc, ex.scene);
    fdtd::Engine engine(ex.raster, engine_options(rc, ex.raster.cell_size));
    ex.sources = drive_sources(rc, resolve_sources(rc, ex.scene), ex.raster.cell_size);
    for (const auto& s : ex.sources) engine.add_source(s);
    const auto monitors = build_monitors(rc, ex.scene, ex.raster.cell_size);
    const auto t0 = std::chrono::steady_clock::now();
    ex.result = fdtd::run(engine, monitors, rc.stop);
    ex.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return ex;
}

}  // namespace enzgrid::config
