// io.hpp - CSV and JSON outputs, content digests and run manifests

#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "analysis.hpp"
#include "error.hpp"
#include "fdtd.hpp"

namespace enzgrid::io {

using nlohmann::json;

inline constexpr const char* kToolVersion = "enzgrid 1.0.0";

// ---------------------------------------------------------------------------
// FNV-1a, 64 bit.

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string digest(std::string_view bytes) { return hex64(fnv1a(bytes)); }

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string file_digest(const std::filesystem::path& p) { return digest(read_file(p)); }

/// Digest of a JSON value in its canonical (sorted-key, compact) form.
inline std::string json_digest(const json& j) { return digest(j.dump()); }

// ---------------------------------------------------------------------------
// CSV (RFC 4180: CRLF line ends, fields quoted when they contain a comma,
// quote, CR or LF; quotes doubled).

inline std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string csv_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(std::vector<std::string> row) {
        if (row.size() != header_.size()) throw Error(ErrorKind::Domain, "CSV row width does not match the header");
        rows_.push_back(std::move(row));
    }
    const std::vector<std::vector<std::string>>& rows() const { return rows_; }

    std::string str() const {
        std::string out;
        auto line = [&](const std::vector<std::string>& r) {
            for (std::size_t k = 0; k < r.size(); ++k) {
                if (k) out += ',';
                out += csv_field(r[k]);
            }
            out += "\r\n";
        };
        line(header_);
        for (const auto& r : rows_) line(r);
        return out;
    }

    void write(const std::filesystem::path& p) const {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + p.string());
        const std::string s = str();
        out.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

/// Splits RFC 4180 text into records.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t k = 0; k < text.size(); ++k) {
        const char c = text[k];
        if (quoted) {
            if (c == '"') {
                if (k + 1 < text.size() && text[k + 1] == '"') {
                    field += '"';
                    ++k;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && k + 1 < text.size() && text[k + 1] == '\n') ++k;
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) throw Error(ErrorKind::Schema, "unterminated quoted CSV field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline CsvTable decay_csv(const analysis::DecayCurve& c) {
    CsvTable t({"distance_m", "normalized_E"});
    for (const auto& p : c.points) t.add({csv_number(p.distance), csv_number(p.value)});
    return t;
}

inline CsvTable phase_csv(const analysis::PhaseMap& m) {
    CsvTable t({"cavity_i", "cavity_j", "phase_rad"});
    for (const auto& c : m.cavities) t.add({std::to_string(c.row), std::to_string(c.col), csv_number(c.phase)});
    return t;
}

inline CsvTable coupling_csv(const std::vector<analysis::CouplingResult>& scan) {
    CsvTable t({"omega_rad_s", "gamma21_norm", "lamb_norm"});
    for (const auto& r : scan)
        t.add({csv_number(r.omega), csv_number(r.gamma21_normalized), csv_number(r.lamb_shift_normalized)});
    return t;
}

// ---------------------------------------------------------------------------
// Monitor phasors as JSON.

inline json complex_list(const std::vector<std::complex<double>>& v) {
    json a = json::array();
    for (const auto& z : v) a.push_back({z.real(), z.imag()});
    return a;
}

inline std::vector<std::complex<double>> complex_list(const json& a) {
    std::vector<std::complex<double>> out;
    for (const auto& z : a) out.emplace_back(z.at(0).get<double>(), z.at(1).get<double>());
    return out;
}

inline json phasors_to_json(const fdtd::RunResult& r) {
    json mons = json::array();
    for (const auto& m : r.monitors) {
        json samples = json::array();
        for (const auto& s : m.samples) {
            json loc = json::array();
            for (const auto& p : s.location) loc.push_back({p.x, p.y});
            samples.push_back({{"requested_m", {s.requested.x, s.requested.y}},
                               {"location_m", loc},
                               {"Ex", complex_list(s.value[0])},
                               {"Ey", complex_list(s.value[1])},
                               {"Hz", complex_list(s.value[2])}});
        }
        mons.push_back({{"name", m.name}, {"kind", m.kind}, {"samples", samples}});
    }
    return {{"frequencies_rad_s", r.frequencies},
            {"source_spectrum", complex_list(r.source_spectrum)},
            {"converged", r.converged},
            {"continuous_wave", r.continuous_wave},
            {"steps", r.steps},
            {"dt_s", r.dt},
            {"last_change", r.last_change},
            {"monitors", mons}};
}

inline fdtd::RunResult phasors_from_json(const json& j) {
    fdtd::RunResult r;
    try {
        r.frequencies = j.at("frequencies_rad_s").get<std::vector<double>>();
        r.source_spectrum = complex_list(j.at("source_spectrum"));
        r.converged = j.at("converged").get<bool>();
        r.continuous_wave = j.at("continuous_wave").get<bool>();
        r.steps = j.at("steps").get<long>();
        r.dt = j.at("dt_s").get<double>();
        r.last_change = j.at("last_change").get<double>();
        for (const auto& m : j.at("monitors")) {
            fdtd::MonitorResult mr;
            mr.name = m.at("name").get<std::string>();
            mr.kind = m.at("kind").get<std::string>();
            for (const auto& s : m.at("samples")) {
                fdtd::PointPhasors p;
                p.requested = {s.at("requested_m").at(0).get<double>(), s.at("requested_m").at(1).get<double>()};
                for (std::size_t c = 0; c < 3; ++c)
                    p.location[c] = {s.at("location_m").at(c).at(0).get<double>(),
                                     s.at("location_m").at(c).at(1).get<double>()};
                p.value[0] = complex_list(s.at("Ex"));
                p.value[1] = complex_list(s.at("Ey"));
                p.value[2] = complex_list(s.at("Hz"));
                mr.samples.push_back(std::move(p));
            }
            r.monitors.push_back(std::move(mr));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("malformed phasor file: ") + e.what());
    }
    return r;
}

/// Writes `text` and returns its digest.
inline std::string write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + p.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    return digest(text);
}

inline std::string write_json(const std::filesystem::path& p, const json& j) { return write_text(p, j.dump(2) + "\n"); }

inline json read_json(const std::filesystem::path& p) {
    const std::string text = read_file(p);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Schema, p.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct FileEntry {
    std::string path;  // relative to the manifest directory
    std::string digest;
};

/// Record of one command invocation: what went in, what came out.
struct RunManifest {
    std::string command;
    std::string config_digest;
    std::string tool_version = kToolVersion;
    std::string started;
    std::string finished;
    std::vector<FileEntry> inputs;
    std::vector<FileEntry> outputs;
    json details = json::object();

    json to_json() const {
        auto files = [](const std::vector<FileEntry>& v) {
            json a = json::array();
            for (const auto& f : v) a.push_back({{"path", f.path}, {"digest", f.digest}});
            return a;
        };
        return {{"command", command},       {"config_digest", config_digest}, {"tool_version", tool_version},
                {"started", started},       {"finished", finished},           {"inputs", files(inputs)},
                {"outputs", files(outputs)}, {"details", details}};
    }

    static RunManifest from_json(const json& j) {
        RunManifest m;
        try {
            m.command = j.at("command");
            m.config_digest = j.at("config_digest");
            m.tool_version = j.at("tool_version");
            m.started = j.at("started");
            m.finished = j.at("finished");
            for (const auto& f : j.at("inputs")) m.inputs.push_back({f.at("path"), f.at("digest")});
            for (const auto& f : j.at("outputs")) m.outputs.push_back({f.at("path"), f.at("digest")});
            m.details = j.value("details", json::object());
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Schema, std::string("malformed manifest: ") + e.what());
        }
        return m;
    }

    bool has_output(const std::string& path) const {
        for (const auto& f : outputs)
            if (f.path == path) return true;
        return false;
    }
};

}  // namespace enzgrid::io
