// enzgrid - command-line front end.
//
//   enzgrid material --preset sic [--at 9um] [--json report.json]
//   enzgrid build   <config> -o <dir>
//   enzgrid run     <config> -o <dir> [--workers N]
//   enzgrid analyze <manifest> [--decay] [--phase] [--coupling --d1 x --d2 x]
//                   [--budget --lc 1.4mm --pitch 2.089um] [-o <dir>]
//   enzgrid budget  --lc 1.4mm --pitch 2.089um
//
// Human-readable tables go to stdout, machine outputs to files, errors to
// stderr as one JSON object. Exit codes: 2 schema, 3 instability,
// 4 not converged, 5 missing monitor, 1 anything else.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "enzgrid/analysis.hpp"
#include "enzgrid/config.hpp"
#include "enzgrid/io.hpp"
#include "enzgrid/materials.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace enzgrid;

namespace {

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::Schema:
        case ErrorKind::InvalidSpec:
        case ErrorKind::Resolution: return 2;
        case ErrorKind::Instability: return 3;
        case ErrorKind::NotConverged: return 4;
        case ErrorKind::MissingMonitor: return 5;
        default: return 1;
    }
}

void report_error(ErrorKind k, const std::string& message) {
    std::cerr << json{{"error", to_string(k)}, {"message", message}, {"exit_code", exit_code(k)}}.dump() << "\n";
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---------------------------------------------------------------------------
// material

struct MaterialArgs {
    std::string preset;
    std::string table;
    std::string at;
    std::string json_out;
};

template <typename M>
materials::CoherenceReport material_report(const M& m, const std::string& at) {
    if (at.empty()) return materials::coherence_report(m);
    json v = at;
    return materials::coherence_length(m, config::detail::omega_entry(v, "--at"));
}

json report_json(const materials::CoherenceReport& r) {
    return {{"material", r.material},
            {"omega_rad_s", r.omega},
            {"enz_omega_rad_s", r.enz_omega},
            {"enz_wavelength_m", r.enz_wavelength},
            {"eps", {r.eps_at_enz.real(), r.eps_at_enz.imag()}},
            {"loss_peak_omega_rad_s", r.loss_peak_omega},
            {"loss_fwhm_rad_s", r.loss_fwhm},
            {"coherence_time_s", r.coherence_time},
            {"refractive_index", {r.refractive_index.real(), r.refractive_index.imag()}},
            {"phase_velocity_m_s", r.phase_velocity},
            {"coherence_length_m", r.coherence_length},
            {"at_crossing", r.at_crossing}};
}

int cmd_material(const MaterialArgs& a) {
    if (a.preset.empty() == a.table.empty()) throw Error(ErrorKind::Schema, "give exactly one of --preset or --table");
    materials::CoherenceReport r;
    if (!a.preset.empty()) {
        r = material_report(materials::load_preset(a.preset), a.at);
        r.material = a.preset;
    } else {
        r = material_report(materials::load_table(a.table), a.at);
        r.material = fs::path(a.table).filename().string();
    }
    std::printf("material            %s\n", r.material.c_str());
    std::printf("ENZ wavelength      %s nm\n", fmt("%.2f", r.enz_wavelength * 1e9).c_str());
    std::printf("evaluated at        %s nm%s\n", fmt("%.2f", omega_to_wavelength(r.omega) * 1e9).c_str(),
                r.at_crossing ? "" : "  (not at the ENZ crossing)");
    std::printf("eps                 %s %+.4g i\n", fmt("%.4g", r.eps_at_enz.real()).c_str(), r.eps_at_enz.imag());
    std::printf("loss FWHM           %s rad/s\n", fmt("%.4e", r.loss_fwhm).c_str());
    std::printf("coherence time      %s s\n", fmt("%.4e", r.coherence_time).c_str());
    std::printf("phase velocity      %s m/s\n", fmt("%.4e", r.phase_velocity).c_str());
    std::printf("coherence length    %s m\n", fmt("%.4e", r.coherence_length).c_str());
    if (!a.json_out.empty()) io::write_json(a.json_out, report_json(r));
    return 0;
}

// ---------------------------------------------------------------------------
// build

int cmd_build(const std::string& cfg, const std::string& out_dir) {
    const auto runs = config::load_runs(fs::path(cfg));
    fs::create_directories(out_dir);
    std::printf("%-12s %8s %8s %12s %10s\n", "variant", "nx", "ny", "cell_nm", "materials");
    for (const auto& rc : runs) {
        const auto scene = config::build_scene(rc);
        const auto raster = config::rasterize(rc, scene);
        const std::string stem = rc.variant.empty() ? rc.name : rc.name + "_" + rc.variant;
        const fs::path dir(out_dir);
        geometry::write_raster(raster, dir / (stem + "_raster.json"), dir / (stem + "_raster.bin"));
        geometry::write_pgm(raster, dir / (stem + ".pgm"));
        std::printf("%-12s %8d %8d %12.3f %10zu\n", (rc.variant.empty() ? "-" : rc.variant.c_str()), raster.nx,
                    raster.ny, raster.cell_size * 1e9, raster.materials.size());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// shared helpers for run/analyze

std::size_t carrier_index(const fdtd::RunResult& r, double omega) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < r.frequencies.size(); ++k)
        if (std::abs(r.frequencies[k] - omega) < std::abs(r.frequencies[best] - omega)) best = k;
    return best;
}

std::size_t nearest_cavity(const geometry::Scene& scene, geometry::Point p) {
    if (scene.cavity_centers.empty()) throw Error(ErrorKind::Schema, "scene has no cavities");
    std::size_t best = 0;
    for (std::size_t k = 1; k < scene.cavity_centers.size(); ++k)
        if (geometry::distance(scene.cavity_centers[k], p) < geometry::distance(scene.cavity_centers[best], p))
            best = k;
    return best;
}

geometry::Point source_position(const fdtd::Source& s) {
    if (const auto* d = std::get_if<fdtd::DipoleSource>(&s)) return d->position;
    const auto& l = std::get<fdtd::LineSource>(s);
    return {l.x, 0.5 * (l.ymin + l.ymax)};
}

std::pair<int, int> lattice_shape(const config::RunConfig& rc) {
    if (const auto* g = std::get_if<geometry::GridNetworkSpec>(&rc.scene)) return {g->rows, g->cols};
    return {1, 2};
}

std::string field_file(const std::string& name, std::size_t f) { return name + "_f" + std::to_string(f); }

struct VariantOutputs {
    config::RunConfig rc;
    geometry::Scene scene;
    std::vector<fdtd::Source> sources;
    fdtd::RunResult result;
};

/// Analyses requested by the config itself; returns written files.
std::vector<io::FileEntry> config_analyses(const VariantOutputs& v, const fs::path& root, const std::string& sub) {
    std::vector<io::FileEntry> out;
    const auto f = carrier_index(v.result, config::carrier_omega(v.rc));
    const auto src = source_position(v.sources.front());
    if (v.rc.analysis.decay) {
        analysis::DecayOptions o;
        o.radius = v.scene.cavity_radius;
        o.source = src;
        o.exclusion = v.rc.analysis.decay->exclusion;
        o.frequency = f;
        const auto curve = analysis::decay_vs_distance(v.result, v.scene.cavity_centers, nearest_cavity(v.scene, src), o);
        const std::string rel = sub + "/decay.csv";
        out.push_back({rel, io::write_text(root / rel, io::decay_csv(curve).str())});
    }
    if (v.rc.analysis.phase) {
        const auto [rows, cols] = lattice_shape(v.rc);
        const auto map = analysis::phase_spread(v.result, rows, cols, f);
        const std::string rel = sub + "/phase.csv";
        out.push_back({rel, io::write_text(root / rel, io::phase_csv(map).str())});
        json excluded = map.excluded;
        const std::string rj = sub + "/phase.json";
        out.push_back({rj, io::write_json(root / rj, {{"spread_rad", map.spread}, {"excluded", excluded}})});
    }
    if (v.rc.analysis.retention) {
        const auto& r = *v.rc.analysis.retention;
        const auto& c = v.scene.cavity_centers;
        if (c.size() < 2) throw Error(ErrorKind::Schema, "retention needs two cavities");
        const double value = analysis::amplitude_retention(v.result.monitor(r.line), c[0], c[1], v.scene.cavity_radius,
                                                           src, r.exclusion, f);
        const std::string rel = sub + "/retention.json";
        out.push_back({rel, io::write_json(root / rel, {{"retention", value}, {"line", r.line}})});
    }
    return out;
}

// ---------------------------------------------------------------------------
// run

int cmd_run(const std::string& cfg, const std::string& out_dir, int workers) {
    io::RunManifest manifest;
    manifest.command = "run";
    manifest.started = io::utc_timestamp();
    const fs::path cfg_path(cfg);
    const std::string cfg_text = io::read_file(cfg_path);
    manifest.config_digest = io::digest(cfg_text);
    manifest.inputs.push_back({fs::absolute(cfg_path).string(), manifest.config_digest});
    auto runs = config::load_runs(cfg_path);
    const fs::path root(out_dir);
    fs::create_directories(root);

    bool all_converged = true;
    json variants = json::array();
    std::printf("%-10s %10s %10s %10s %12s %9s\n", "variant", "nx x ny", "steps", "converged", "last_change", "seconds");
    for (auto& rc : runs) {
        if (workers > 0) rc.workers = workers;
        const std::string sub = rc.variant.empty() ? "run" : rc.variant;
        fs::create_directories(root / sub);
        auto ex = config::execute(rc);
        VariantOutputs v{rc, ex.scene, ex.sources, std::move(ex.result)};

        const std::string prel = sub + "/phasors.json";
        manifest.outputs.push_back({prel, io::write_json(root / prel, io::phasors_to_json(v.result))});
        for (const auto& snap : v.result.fields) {
            const std::size_t f = v.result.frequency_index(snap.omega);
            const std::string base = sub + "/" + field_file(snap.name, f);
            fdtd::write_snapshot(snap, root / (base + ".json"), root / (base + ".bin"));
            manifest.outputs.push_back({base + ".json", io::file_digest(root / (base + ".json"))});
            manifest.outputs.push_back({base + ".bin", io::file_digest(root / (base + ".bin"))});
        }
        for (auto& e : config_analyses(v, root, sub)) manifest.outputs.push_back(std::move(e));

        all_converged = all_converged && v.result.converged;
        variants.push_back({{"variant", rc.variant},
                            {"directory", sub},
                            {"document", rc.document},
                            {"nx", ex.raster.nx},
                            {"ny", ex.raster.ny},
                            {"cell_size_m", ex.raster.cell_size},
                            {"steps", v.result.steps},
                            {"dt_s", v.result.dt},
                            {"converged", v.result.converged},
                            {"last_change", v.result.last_change},
                            {"workers", rc.workers}});
        char dims[32];
        std::snprintf(dims, sizeof dims, "%dx%d", ex.raster.nx, ex.raster.ny);
        std::printf("%-10s %10s %10ld %10s %12.3e %9.1f\n", (rc.variant.empty() ? "-" : rc.variant.c_str()), dims,
                    v.result.steps, v.result.converged ? "yes" : "no", v.result.last_change, ex.seconds);
    }
    manifest.details = {{"variants", variants}};
    manifest.finished = io::utc_timestamp();
    io::write_json(root / "manifest.json", manifest.to_json());
    if (!all_converged) throw Error(ErrorKind::NotConverged, "steady state not reached; partial outputs kept in " + out_dir);
    return 0;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
    std::string manifest;
    std::string out_dir;
    bool decay = false;
    bool phase = false;
    bool coupling = false;
    std::string d1 = "x", d2 = "x";
    bool budget = false;
    std::string lc, pitch;
};

geometry::Point axis(const std::string& s) {
    if (s == "x") return {1.0, 0.0};
    if (s == "y") return {0.0, 1.0};
    throw Error(ErrorKind::Schema, "dipole orientation must be x or y");
}

struct LoadedVariant {
    config::RunConfig rc;
    geometry::Scene scene;
    std::vector<fdtd::Source> sources;
    fdtd::RunResult result;
    std::string dir;
};

std::vector<LoadedVariant> load_variants(const io::RunManifest& m, const fs::path& root) {
    std::vector<LoadedVariant> out;
    if (!m.details.contains("variants")) throw Error(ErrorKind::Schema, "manifest has no run variants");
    for (const auto& v : m.details.at("variants")) {
        LoadedVariant lv;
        lv.rc = config::parse_run(v.at("document"));
        lv.scene = config::build_scene(lv.rc);
        lv.sources = config::resolve_sources(lv.rc, lv.scene);
        lv.dir = v.at("directory").get<std::string>();
        const std::string prel = lv.dir + "/phasors.json";
        if (!m.has_output(prel)) throw Error(ErrorKind::MissingMonitor, "manifest lists no phasors for " + lv.dir);
        lv.result = io::phasors_from_json(io::read_json(root / prel));
        out.push_back(std::move(lv));
    }
    return out;
}

/// Adds the Ex/Ey snapshots of one frequency to a loaded run.
void attach_fields(LoadedVariant& v, const io::RunManifest& m, const fs::path& root, std::size_t f) {
    for (const char* name : {"field_ex", "field_ey"}) {
        const std::string rel = v.dir + "/" + field_file(name, f) + ".json";
        if (!m.has_output(rel)) throw Error(ErrorKind::MissingMonitor, std::string("monitor '") + name + "' was not recorded");
        auto snap = fdtd::read_snapshot(root / rel);
        snap.name = name;
        v.result.fields.push_back(std::move(snap));
    }
}

int cmd_analyze(const AnalyzeArgs& a) {
    if (!a.decay && !a.phase && !a.coupling && !a.budget)
        throw Error(ErrorKind::Schema, "choose at least one of --decay, --phase, --coupling, --budget");
    io::RunManifest out;
    out.command = "analyze";
    out.started = io::utc_timestamp();
    const fs::path out_dir = a.out_dir.empty() ? fs::path(".") : fs::path(a.out_dir);
    fs::create_directories(out_dir);
    json report = json::object();

    if (a.budget) {
        if (a.lc.empty() || a.pitch.empty()) throw Error(ErrorKind::Schema, "--budget needs --lc and --pitch");
        const double lc = parse_quantity(a.lc, Quantity::Length), pitch = parse_quantity(a.pitch, Quantity::Length);
        const auto n = analysis::node_budget(lc, pitch);
        std::printf("node budget  %llu  (L_c %.4g m, pitch %.4g m)\n", static_cast<unsigned long long>(n), lc, pitch);
        report["budget"] = {{"coherence_length_m", lc}, {"pitch_m", pitch}, {"nodes", n}};
    }

    if (a.decay || a.phase || a.coupling) {
        if (a.manifest.empty()) throw Error(ErrorKind::Schema, "analysis of runs needs a manifest");
        const fs::path mpath(a.manifest);
        const auto m = io::RunManifest::from_json(io::read_json(mpath));
        out.inputs.push_back({fs::absolute(mpath).string(), io::file_digest(mpath)});
        out.config_digest = m.config_digest;
        const fs::path root = mpath.parent_path();
        auto variants = load_variants(m, root);

        if (a.decay) {
            json curves = json::array();
            std::vector<analysis::DecayCurve> all;
            std::printf("%-10s %10s %14s\n", "variant", "cavities", "farthest");
            for (auto& v : variants) {
                const std::size_t f = carrier_index(v.result, config::carrier_omega(v.rc));
                attach_fields(v, m, root, f);
                analysis::DecayOptions o;
                o.radius = v.scene.cavity_radius;
                o.source = source_position(v.sources.front());
                o.exclusion = v.rc.analysis.decay ? v.rc.analysis.decay->exclusion : config::DecayAnalysis{}.exclusion;
                o.frequency = f;
                const auto c = analysis::decay_vs_distance(v.result, v.scene.cavity_centers,
                                                           nearest_cavity(v.scene, o.source), o);
                const std::string name = (v.rc.variant.empty() ? "run" : v.rc.variant) + "_decay.csv";
                out.outputs.push_back({name, io::write_text(out_dir / name, io::decay_csv(c).str())});
                std::printf("%-10s %10zu %14.4e\n", v.dir.c_str(), c.points.size(), c.farthest().value);
                curves.push_back({{"variant", v.rc.variant}, {"farthest", c.farthest().value}});
                all.push_back(c);
            }
            json d = {{"curves", curves}};
            if (all.size() == 2 && all[0].points.size() == all[1].points.size()) {
                double min_ratio = 1e300;
                const double far_d = all[0].farthest().distance;
                double far_ratio = 1e300;
                for (const auto& p : all[0].points) {
                    const double r = p.value / all[1].at(p.cavity);
                    min_ratio = std::min(min_ratio, r);
                    if (std::abs(p.distance - far_d) <= 1e-9 * far_d) far_ratio = std::min(far_ratio, r);
                }
                d["pair"] = {{"first", variants[0].rc.variant},
                             {"second", variants[1].rc.variant},
                             {"min_ratio", min_ratio},
                             {"farthest_ratio", far_ratio},
                             {"dominates", min_ratio > 1.0}};
                std::printf("pair %s/%s: farthest ratio %.3f, minimum ratio %.3f\n", variants[0].rc.variant.c_str(),
                            variants[1].rc.variant.c_str(), far_ratio, min_ratio);
            }
            report["decay"] = d;
        }

        if (a.phase) {
            json maps = json::array();
            for (const auto& v : variants) {
                const auto [rows, cols] = lattice_shape(v.rc);
                const auto map = analysis::phase_spread(v.result, rows, cols,
                                                        carrier_index(v.result, config::carrier_omega(v.rc)));
                const std::string name = (v.rc.variant.empty() ? "run" : v.rc.variant) + "_phase.csv";
                out.outputs.push_back({name, io::write_text(out_dir / name, io::phase_csv(map).str())});
                std::printf("%-10s phase spread %.4f rad\n", v.dir.c_str(), map.spread);
                maps.push_back({{"variant", v.rc.variant}, {"spread_rad", map.spread}});
            }
            report["phase"] = maps;
        }

        if (a.coupling) {
            const analysis::Dipole d1{axis(a.d1), 1.0}, d2{axis(a.d2), 1.0};
            json scans = json::array();
            std::vector<std::vector<analysis::CouplingResult>> all;
            for (const auto& v : variants) {
                const auto* dip = std::get_if<fdtd::DipoleSource>(&v.sources.front());
                if (!dip) throw Error(ErrorKind::Schema, "coupling needs a dipole source");
                const int column = std::abs(dip->orientation.x) >= std::abs(dip->orientation.y) ? 0 : 1;
                std::vector<analysis::CouplingResult> scan;
                for (std::size_t f = 0; f < v.result.frequencies.size(); ++f) {
                    analysis::GreensSample g;
                    g.r1 = dip->position;
                    analysis::fill_green_column(g, v.result, "receiver", column, f);
                    scan.push_back(analysis::coupled_decay(g, d1, d2));
                }
                const std::string name = (v.rc.variant.empty() ? "run" : v.rc.variant) + "_coupling.csv";
                out.outputs.push_back({name, io::write_text(out_dir / name, io::coupling_csv(scan).str())});
                const auto best = std::max_element(scan.begin(), scan.end(), [](const auto& x, const auto& y) {
                    return x.gamma21_normalized < y.gamma21_normalized;
                });
                std::printf("%-10s peak gamma21/gamma0 %.4e at %.6e rad/s\n", v.dir.c_str(), best->gamma21_normalized,
                            best->omega);
                scans.push_back({{"variant", v.rc.variant},
                                 {"peak_omega_rad_s", best->omega},
                                 {"peak_gamma21_norm", best->gamma21_normalized}});
                all.push_back(std::move(scan));
            }
            json c = {{"scans", scans}};
            if (all.size() == 2 && all[0].size() == all[1].size()) {
                double worst = 0.0;
                for (std::size_t k = 0; k < all[0].size(); ++k) {
                    const double a0 = all[0][k].gamma21, a1 = all[1][k].gamma21;
                    worst = std::max(worst, std::abs(a0 - a1) / std::max(std::abs(a0), std::abs(a1)));
                }
                c["reciprocity_max_relative_difference"] = worst;
                std::printf("reciprocity: max relative difference %.3e\n", worst);
            }
            report["coupling"] = c;
        }
    }
    out.outputs.push_back({"report.json", io::write_json(out_dir / "report.json", report)});
    out.finished = io::utc_timestamp();
    io::write_json(out_dir / "analysis_manifest.json", out.to_json());
    return 0;
}

int cmd_budget(const std::string& lc_text, const std::string& pitch_text) {
    const double lc = parse_quantity(lc_text, Quantity::Length), pitch = parse_quantity(pitch_text, Quantity::Length);
    const auto n = analysis::node_budget(lc, pitch);
    std::printf("coherence length  %.4e m\npitch             %.4e m\nnodes             %llu\n", lc, pitch,
                static_cast<unsigned long long>(n));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ENZ cavity-network simulator"};
    app.require_subcommand(1);

    MaterialArgs mat;
    auto* material = app.add_subcommand("material", "coherence report for a preset or a permittivity table");
    material->add_option("--preset", mat.preset, "preset name (sic, tin, enz, gold)");
    material->add_option("--table", mat.table, "CSV with wavelength_m,eps_re,eps_im");
    material->add_option("--at", mat.at, "evaluation wavelength or frequency, e.g. 9um");
    material->add_option("--json", mat.json_out, "write the report as JSON");

    std::string build_cfg, build_out = ".";
    auto* build = app.add_subcommand("build", "rasterize the scenes of a config");
    build->add_option("config", build_cfg, "run config")->required();
    build->add_option("-o,--output", build_out, "output directory");

    std::string run_cfg, run_out = ".";
    int workers = 0;
    auto* run = app.add_subcommand("run", "simulate a config");
    run->add_option("config", run_cfg, "run config")->required();
    run->add_option("-o,--output", run_out, "output directory");
    run->add_option("--workers", workers, "engine worker threads (overrides the config)")->check(CLI::Range(1, 256));

    AnalyzeArgs an;
    auto* analyze = app.add_subcommand("analyze", "post-process a run manifest");
    analyze->add_option("manifest", an.manifest, "manifest.json written by run");
    analyze->add_option("-o,--output", an.out_dir, "output directory");
    analyze->add_flag("--decay", an.decay, "decay curves (and pair comparison)");
    analyze->add_flag("--phase", an.phase, "phase maps");
    analyze->add_flag("--coupling", an.coupling, "coupled decay rate scan");
    analyze->add_option("--d1", an.d1, "first dipole orientation (x or y)");
    analyze->add_option("--d2", an.d2, "second dipole orientation (x or y)");
    analyze->add_flag("--budget", an.budget, "node budget");
    analyze->add_option("--lc", an.lc, "coherence length, e.g. 1.4mm");
    analyze->add_option("--pitch", an.pitch, "lattice pitch, e.g. 2.089um");

    std::string lc, pitch;
    auto* budget = app.add_subcommand("budget", "nodes inside a coherence disc");
    budget->add_option("--lc", lc, "coherence length")->required();
    budget->add_option("--pitch", pitch, "lattice pitch")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        report_error(ErrorKind::Schema, e.what());
        return 2;
    }

    try {
        if (*material) return cmd_material(mat);
        if (*build) return cmd_build(build_cfg, build_out);
        if (*run) return cmd_run(run_cfg, run_out, workers);
        if (*analyze) return cmd_analyze(an);
        if (*budget) return cmd_budget(lc, pitch);
    } catch (const Error& e) {
        report_error(e.kind(), e.what());
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        report_error(ErrorKind::Io, e.what());
        return 1;
    }
    return 1;
}
