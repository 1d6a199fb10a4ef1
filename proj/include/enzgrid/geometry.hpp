// geometry.hpp - analytic cavity/channel scenes and their rasterization onto
// the Yee grid as material-id maps.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <queue>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "constants.hpp"
#include "error.hpp"
#include "materials.hpp"

namespace enzgrid::geometry {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct Vacuum {};
struct Pec {};
struct Dielectric {
    double eps = 1.0;
};
using MaterialSpec = std::variant<Vacuum, Pec, Dielectric, materials::DispersionModel>;

struct MaterialEntry {
    std::string name;
    MaterialSpec spec;
};

using MaterialId = std::uint8_t;

/// Id -> material. Ids are dense indices into `entries`.
class MaterialTable {
public:
    MaterialId add(std::string name, MaterialSpec spec) {
        for (std::size_t k = 0; k < entries_.size(); ++k)
            if (entries_[k].name == name) return static_cast<MaterialId>(k);
        if (entries_.size() >= 255) throw Error(ErrorKind::InvalidSpec, "too many materials");
        entries_.push_back({std::move(name), std::move(spec)});
        return static_cast<MaterialId>(entries_.size() - 1);
    }
    std::optional<MaterialId> find(const std::string& name) const {
        for (std::size_t k = 0; k < entries_.size(); ++k)
            if (entries_[k].name == name) return static_cast<MaterialId>(k);
        return std::nullopt;
    }
    const MaterialEntry& operator[](MaterialId id) const { return entries_.at(id); }
    std::size_t size() const { return entries_.size(); }
    const std::vector<MaterialEntry>& entries() const { return entries_; }

private:
    std::vector<MaterialEntry> entries_;
};

struct Disc {
    Point center;
    double radius = 0.0;
    MaterialId material = 0;
};

struct Rect {
    double xmin = 0.0, ymin = 0.0, xmax = 0.0, ymax = 0.0;
    MaterialId material = 0;
};

using Shape = std::variant<Disc, Rect>;

inline bool contains(const Disc& d, Point p) {
    const double dx = p.x - d.center.x, dy = p.y - d.center.y;
    return dx * dx + dy * dy <= d.radius * d.radius;
}
inline bool contains(const Rect& r, Point p) {
    return p.x >= r.xmin && p.x <= r.xmax && p.y >= r.ymin && p.y <= r.ymax;
}
inline MaterialId material_of(const Shape& s) {
    return std::visit([](const auto& v) { return v.material; }, s);
}

struct Box {
    double xmin = 0.0, ymin = 0.0, xmax = 0.0, ymax = 0.0;
    double width() const { return xmax - xmin; }
    double height() const { return ymax - ymin; }
};

/// Background material plus an ordered shape list; later shapes override
/// earlier ones.
struct Scene {
    MaterialTable materials;
    MaterialId background = 0;
    std::vector<Shape> shapes;
    Box bounds;
    double narrowest_feature = 0.0;  // m, drives the resolution check
    std::vector<Point> cavity_centers;
    double cavity_radius = 0.0;
};

// ---------------------------------------------------------------------------

struct Inclusion {
    int cavity = 0;        // row-major cavity index
    double radius = 0.0;   // m
    std::string material;  // name in the material table
    Point offset;          // from the cavity center
};

struct GridNetworkSpec {
    int rows = 1;
    int cols = 1;
    double pitch = 2.089e-6;
    double cavity_radius = 310e-9;
    double channel_width = 100e-9;
    double cladding_thickness = 100e-9;
    std::string cavity_material = "vacuum";
    std::string channel_material = "enz";
    std::string cladding_material = "pec";
    std::string exterior_material;  // outside the cladding box; empty: same as the cladding
    std::vector<Inclusion> inclusions;
};

inline void validate(const GridNetworkSpec& s) {
    if (s.rows < 1 || s.cols < 1) throw Error(ErrorKind::InvalidSpec, "grid needs rows, cols >= 1");
    if (!(s.pitch > 0.0) || !(s.cavity_radius > 0.0) || !(s.channel_width > 0.0))
        throw Error(ErrorKind::InvalidSpec, "grid dimensions must be positive");
    if (!(2.0 * s.cavity_radius < s.pitch))
        throw Error(ErrorKind::InvalidSpec, "overlapping cavities: 2 * cavity_radius must be below the pitch");
    if (!(s.channel_width < 2.0 * s.cavity_radius))
        throw Error(ErrorKind::InvalidSpec, "channel_width must be below the cavity diameter");
    if (s.cladding_thickness < 0.0) throw Error(ErrorKind::InvalidSpec, "negative cladding thickness");
    for (const auto& inc : s.inclusions) {
        if (inc.cavity < 0 || inc.cavity >= s.rows * s.cols)
            throw Error(ErrorKind::InvalidSpec, "inclusion cavity index out of range");
        if (!(inc.radius > 0.0) ||
            std::hypot(inc.offset.x, inc.offset.y) + inc.radius > s.cavity_radius)
            throw Error(ErrorKind::InvalidSpec, "inclusion does not fit inside its cavity");
    }
}

/// Cavity centers of a rows x cols lattice centered on the origin,
/// row-major (row 0 at the bottom).
inline std::vector<Point> cavity_centers(const GridNetworkSpec& s) {
    std::vector<Point> out;
    out.reserve(static_cast<std::size_t>(s.rows * s.cols));
    for (int r = 0; r < s.rows; ++r)
        for (int c = 0; c < s.cols; ++c)
            out.push_back({(c - 0.5 * (s.cols - 1)) * s.pitch, (r - 0.5 * (s.rows - 1)) * s.pitch});
    return out;
}

/// Unit-cell tiling footprint, cols*pitch x rows*pitch.
inline Box footprint(const GridNetworkSpec& s) {
    return {-0.5 * s.cols * s.pitch, -0.5 * s.rows * s.pitch, 0.5 * s.cols * s.pitch, 0.5 * s.rows * s.pitch};
}

inline int channel_count(const GridNetworkSpec& s) { return s.rows * (s.cols - 1) + s.cols * (s.rows - 1); }

/// Resolves a material name against the presets shipped with the library:
/// "vacuum", "pec", "dielectric:<eps>" or a preset file name.
inline MaterialSpec resolve_material(const std::string& name) {
    if (name == "vacuum" || name == "air") return Vacuum{};
    if (name == "pec") return Pec{};
    if (name.starts_with("dielectric:")) return Dielectric{std::stod(name.substr(11))};
    return materials::load_preset(name);
}

using MaterialResolver = std::function<MaterialSpec(const std::string&)>;

inline Scene build_grid_scene(const GridNetworkSpec& spec, const MaterialResolver& resolve = resolve_material) {
    validate(spec);
    Scene scene;
    const MaterialId cladding = scene.materials.add(spec.cladding_material, resolve(spec.cladding_material));
    scene.background = cladding;
    if (!spec.exterior_material.empty() && spec.exterior_material != spec.cladding_material)
        scene.background = scene.materials.add(spec.exterior_material, resolve(spec.exterior_material));
    const MaterialId channel = scene.materials.add(spec.channel_material, resolve(spec.channel_material));
    const MaterialId cavity = scene.materials.add(spec.cavity_material, resolve(spec.cavity_material));

    const auto centers = cavity_centers(spec);
    const double hw = 0.5 * spec.channel_width;
    for (int r = 0; r < spec.rows; ++r) {
        for (int c = 0; c < spec.cols; ++c) {
            const Point p = centers[static_cast<std::size_t>(r * spec.cols + c)];
            if (c + 1 < spec.cols) scene.shapes.push_back(Rect{p.x, p.y - hw, p.x + spec.pitch, p.y + hw, channel});
            if (r + 1 < spec.rows) scene.shapes.push_back(Rect{p.x - hw, p.y, p.x + hw, p.y + spec.pitch, channel});
        }
    }
    for (const Point& p : centers) scene.shapes.push_back(Disc{p, spec.cavity_radius, cavity});
    for (const auto& inc : spec.inclusions) {
        const MaterialId m = scene.materials.add(inc.material, resolve(inc.material));
        const Point p = centers[static_cast<std::size_t>(inc.cavity)];
        scene.shapes.push_back(Disc{{p.x + inc.offset.x, p.y + inc.offset.y}, inc.radius, m});
    }
    const double half_x = 0.5 * (spec.cols - 1) * spec.pitch + spec.cavity_radius + spec.cladding_thickness;
    const double half_y = 0.5 * (spec.rows - 1) * spec.pitch + spec.cavity_radius + spec.cladding_thickness;
    scene.bounds = {-half_x, -half_y, half_x, half_y};
    if (scene.background != cladding) scene.shapes.insert(scene.shapes.begin(), Rect{-half_x, -half_y, half_x, half_y, cladding});
    scene.narrowest_feature = spec.channel_width;
    scene.cavity_centers = centers;
    scene.cavity_radius = spec.cavity_radius;
    return scene;
}

// ---------------------------------------------------------------------------

enum class Bend { Straight, LShape };

/// Two cavities joined by one channel. The L path runs horizontally from the
/// first cavity, then vertically into the second.
struct BentChannelSpec {
    Point first;
    Point second;
    double cavity_radius = 310e-9;
    double channel_width = 100e-9;
    double cladding_thickness = 100e-9;
    Bend bend = Bend::LShape;
    std::string cavity_material = "vacuum";
    std::string channel_material = "enz";
    std::string cladding_material = "pec";
    std::string exterior_material;  // outside the cladding box; empty: same as the cladding
};

inline Scene build_bent_scene(const BentChannelSpec& spec, const MaterialResolver& resolve = resolve_material) {
    if (!(spec.cavity_radius > 0.0) || !(spec.channel_width > 0.0) ||
        !(spec.channel_width < 2.0 * spec.cavity_radius))
        throw Error(ErrorKind::InvalidSpec, "bent channel: invalid widths");
    Scene scene;
    const MaterialId cladding = scene.materials.add(spec.cladding_material, resolve(spec.cladding_material));
    scene.background = cladding;
    if (!spec.exterior_material.empty() && spec.exterior_material != spec.cladding_material)
        scene.background = scene.materials.add(spec.exterior_material, resolve(spec.exterior_material));
    const MaterialId channel = scene.materials.add(spec.channel_material, resolve(spec.channel_material));
    const MaterialId cavity = scene.materials.add(spec.cavity_material, resolve(spec.cavity_material));
    const double hw = 0.5 * spec.channel_width;
    const Point a = spec.first, b = spec.second;
    if (spec.bend == Bend::Straight) {
        if (a.y == b.y) {
            scene.shapes.push_back(Rect{std::min(a.x, b.x), a.y - hw, std::max(a.x, b.x), a.y + hw, channel});
        } else if (a.x == b.x) {
            scene.shapes.push_back(Rect{a.x - hw, std::min(a.y, b.y), a.x + hw, std::max(a.y, b.y), channel});
        } else {
            throw Error(ErrorKind::InvalidSpec, "straight channel needs axis-aligned cavities");
        }
    } else {
        scene.shapes.push_back(Rect{std::min(a.x, b.x) - hw, a.y - hw, std::max(a.x, b.x) + hw, a.y + hw, channel});
        scene.shapes.push_back(Rect{b.x - hw, std::min(a.y, b.y) - hw, b.x + hw, std::max(a.y, b.y) + hw, channel});
    }
    scene.shapes.push_back(Disc{a, spec.cavity_radius, cavity});
    scene.shapes.push_back(Disc{b, spec.cavity_radius, cavity});
    const double m = spec.cavity_radius + spec.cladding_thickness;
    scene.bounds = {std::min(a.x, b.x) - m, std::min(a.y, b.y) - m, std::max(a.x, b.x) + m, std::max(a.y, b.y) + m};
    if (scene.background != cladding)
        scene.shapes.insert(scene.shapes.begin(),
                            Rect{scene.bounds.xmin, scene.bounds.ymin, scene.bounds.xmax, scene.bounds.ymax, cladding});
    scene.narrowest_feature = spec.channel_width;
    scene.cavity_centers = {a, b};
    scene.cavity_radius = spec.cavity_radius;
    return scene;
}

/// Straight polyline between two cavity centers sampled every `step`.
inline std::vector<Point> cut_line(Point from, Point to, double step) {
    if (!(step > 0.0)) throw Error(ErrorKind::Domain, "cut_line: step must be positive");
    const double len = distance(from, to);
    const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
    std::vector<Point> out;
    out.reserve(static_cast<std::size_t>(n + 1));
    for (int k = 0; k <= n; ++k) {
        const double t = static_cast<double>(k) / n;
        out.push_back({from.x + t * (to.x - from.x), from.y + t * (to.y - from.y)});
    }
    return out;
}

inline std::vector<Point> cut_line(const GridNetworkSpec& spec, int from, int to, double step) {
    const int n = spec.rows * spec.cols;
    if (from < 0 || from >= n || to < 0 || to >= n) throw Error(ErrorKind::Domain, "cut_line: cavity index out of range");
    const auto c = cavity_centers(spec);
    return cut_line(c[static_cast<std::size_t>(from)], c[static_cast<std::size_t>(to)], step);
}

// ---------------------------------------------------------------------------

/// Material id per cell on a uniform grid. Cell (i, j) covers
/// [x0 + i*cell, x0 + (i+1)*cell] x [y0 + j*cell, y0 + (j+1)*cell].
struct SceneRaster {
    double cell_size = 0.0;
    int nx = 0;
    int ny = 0;
    Point origin;  // lower-left corner of cell (0, 0)
    std::vector<MaterialId> ids;  // row-major, index j*nx + i
    MaterialTable materials;

    MaterialId at(int i, int j) const { return ids[static_cast<std::size_t>(j) * nx + i]; }
    MaterialId& at(int i, int j) { return ids[static_cast<std::size_t>(j) * nx + i]; }
    Point cell_center(int i, int j) const {
        return {origin.x + (i + 0.5) * cell_size, origin.y + (j + 0.5) * cell_size};
    }
    bool operator==(const SceneRaster& o) const {
        return cell_size == o.cell_size && nx == o.nx && ny == o.ny && ids == o.ids;
    }
};

/// Extra cells added around the scene bounds (for absorbing layers).
struct Padding {
    int left = 0, right = 0, bottom = 0, top = 0;
};

/// Samples the scene at every cell center. The grid is laid out so that the
/// scene bounds are centered on whole cells; `cell_size` must resolve the
/// narrowest feature with at least 4 cells.
inline SceneRaster rasterize(const Scene& scene, double cell_size, Padding pad = {}) {
    if (!(cell_size > 0.0)) throw Error(ErrorKind::Domain, "rasterize: cell size must be positive");
    if (scene.narrowest_feature > 0.0 && cell_size > scene.narrowest_feature / 4.0 * (1.0 + 1e-9))
        throw Error(ErrorKind::Resolution, "cell size " + std::to_string(cell_size) +
                                               " m does not give 4 cells across the narrowest feature");
    const int core_x = static_cast<int>(std::ceil(scene.bounds.width() / cell_size - 1e-9));
    const int core_y = static_cast<int>(std::ceil(scene.bounds.height() / cell_size - 1e-9));
    SceneRaster r;
    r.cell_size = cell_size;
    r.nx = std::max(1, core_x) + pad.left + pad.right;
    r.ny = std::max(1, core_y) + pad.bottom + pad.top;
    const double cx = 0.5 * (scene.bounds.xmin + scene.bounds.xmax);
    const double cy = 0.5 * (scene.bounds.ymin + scene.bounds.ymax);
    r.origin = {cx - (0.5 * std::max(1, core_x) + pad.left) * cell_size,
                cy - (0.5 * std::max(1, core_y) + pad.bottom) * cell_size};
    r.materials = scene.materials;
    r.ids.assign(static_cast<std::size_t>(r.nx) * r.ny, scene.background);
    for (int j = 0; j < r.ny; ++j) {
        for (int i = 0; i < r.nx; ++i) {
            const Point p = r.cell_center(i, j);
            MaterialId id = scene.background;
            for (const auto& s : scene.shapes) {
                if (std::visit([&](const auto& v) { return contains(v, p); }, s)) id = material_of(s);
            }
            r.at(i, j) = id;
        }
    }
    return r;
}

inline std::size_t count_cells(const SceneRaster& r, MaterialId id) {
    return static_cast<std::size_t>(std::count(r.ids.begin(), r.ids.end(), id));
}

inline SceneRaster mirror_x(const SceneRaster& r) {
    SceneRaster m = r;
    for (int j = 0; j < r.ny; ++j)
        for (int i = 0; i < r.nx; ++i) m.at(i, j) = r.at(r.nx - 1 - i, j);
    return m;
}

inline SceneRaster mirror_y(const SceneRaster& r) {
    SceneRaster m = r;
    for (int j = 0; j < r.ny; ++j)
        for (int i = 0; i < r.nx; ++i) m.at(i, j) = r.at(i, r.ny - 1 - j);
    return m;
}

inline bool is_pec(const SceneRaster& r, MaterialId id) {
    return std::holds_alternative<Pec>(r.materials[id].spec);
}

/// Cell indices (i, j) containing point p, or nullopt if outside.
inline std::optional<std::pair<int, int>> locate(const SceneRaster& r, Point p) {
    const int i = static_cast<int>(std::floor((p.x - r.origin.x) / r.cell_size));
    const int j = static_cast<int>(std::floor((p.y - r.origin.y) / r.cell_size));
    if (i < 0 || j < 0 || i >= r.nx || j >= r.ny) return std::nullopt;
    return std::pair{i, j};
}

/// 4-connected flood fill over cells whose material is not `wall`; returns
/// true when every point in `targets` lies in the component of the first one.
inline bool connected(const SceneRaster& r, MaterialId wall, const std::vector<Point>& targets) {
    if (targets.empty()) return true;
    const auto start = locate(r, targets.front());
    if (!start || r.at(start->first, start->second) == wall) return false;
    std::vector<char> seen(r.ids.size(), 0);
    std::queue<std::pair<int, int>> q;
    q.push(*start);
    seen[static_cast<std::size_t>(start->second) * r.nx + start->first] = 1;
    while (!q.empty()) {
        const auto [i, j] = q.front();
        q.pop();
        const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
            const int a = i + di[k], b = j + dj[k];
            if (a < 0 || b < 0 || a >= r.nx || b >= r.ny) continue;
            const std::size_t idx = static_cast<std::size_t>(b) * r.nx + a;
            if (seen[idx] || r.ids[idx] == wall) continue;
            seen[idx] = 1;
            q.push({a, b});
        }
    }
    for (const Point& t : targets) {
        const auto c = locate(r, t);
        if (!c || !seen[static_cast<std::size_t>(c->second) * r.nx + c->first]) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Raster export: JSON header + row-major byte grid, and a PGM preview.

inline nlohmann::json material_summary(const MaterialEntry& e) {
    return std::visit(
        [&](const auto& m) -> nlohmann::json {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Vacuum>) {
                return {{"name", e.name}, {"kind", "vacuum"}};
            } else if constexpr (std::is_same_v<T, Pec>) {
                return {{"name", e.name}, {"kind", "pec"}};
            } else if constexpr (std::is_same_v<T, Dielectric>) {
                return {{"name", e.name}, {"kind", "dielectric"}, {"eps", m.eps}};
            } else {
                auto j = materials::model_to_json(m);
                j["kind"] = "dispersive";
                j["name"] = e.name;
                return j;
            }
        },
        e.spec);
}

inline nlohmann::json raster_header(const SceneRaster& r) {
    nlohmann::json table = nlohmann::json::array();
    for (std::size_t k = 0; k < r.materials.size(); ++k) {
        auto m = material_summary(r.materials[static_cast<MaterialId>(k)]);
        m["id"] = k;
        table.push_back(m);
    }
    return {{"nx", r.nx},
            {"ny", r.ny},
            {"cell_size_m", r.cell_size},
            {"origin_m", {r.origin.x, r.origin.y}},
            {"layout", "row-major, row 0 at the bottom, one byte per cell"},
            {"material_table", table}};
}

inline void write_raster(const SceneRaster& r, const std::filesystem::path& json_path,
                         const std::filesystem::path& bin_path) {
    std::ofstream hj(json_path);
    if (!hj) throw Error(ErrorKind::Io, "cannot write " + json_path.string());
    auto header = raster_header(r);
    header["data_file"] = bin_path.filename().string();
    hj << header.dump(2) << "\n";
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw Error(ErrorKind::Io, "cannot write " + bin_path.string());
    bin.write(reinterpret_cast<const char*>(r.ids.data()), static_cast<std::streamsize>(r.ids.size()));
}

/// Binary PGM with one grey level per material id; top row of the image is
/// the top of the scene.
inline void write_pgm(const SceneRaster& r, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << "P5\n" << r.nx << " " << r.ny << "\n255\n";
    const int levels = std::max<int>(1, static_cast<int>(r.materials.size()) - 1);
    std::vector<unsigned char> row(static_cast<std::size_t>(r.nx));
    for (int j = r.ny - 1; j >= 0; --j) {
        for (int i = 0; i < r.nx; ++i) row[static_cast<std::size_t>(i)] =
            static_cast<unsigned char>(255 - (255 * r.at(i, j)) / levels);
        out.write(reinterpret_cast<const char*>(row.data()), r.nx);
    }
}

}  // namespace enzgrid::geometry
