#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "enzgrid/fdtd.hpp"
#include "enzgrid/oracle.hpp"

using namespace enzgrid;
using namespace enzgrid::fdtd;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

geometry::SceneRaster vacuum_box(double w, double h, double cell, geometry::Padding pad = {}) {
    geometry::Scene s;
    s.background = s.materials.add("vacuum", geometry::Vacuum{});
    s.bounds = {-w / 2, -h / 2, w / 2, h / 2};
    return geometry::rasterize(s, cell, pad);
}

}  // namespace

TEST_CASE("Courant time step") {
    CHECK_THAT(courant_dt(10e-9, 0.5), WithinRel(1.179e-17, 1e-3));
    CHECK_THAT(courant_dt(10e-9, 0.5), WithinRel(0.5 * 10e-9 / (kC0 * std::sqrt(2.0)), 1e-15));
    CHECK_THAT(courant_dt(kC0 * std::sqrt(2.0), 1.0), WithinRel(1.0, 1e-15));
    CHECK_THROWS_AS(courant_dt(10e-9, 0.0), Error);
    CHECK_THROWS_AS(courant_dt(10e-9, 1.5), Error);
}

TEST_CASE("snapped step divides the period and respects the bound") {
    const double w = wavelength_to_omega(780e-9), cell = 25e-9;
    const double dt = snapped_dt(cell, 0.5, w);
    CHECK(dt <= courant_dt(cell, 0.5));
    const double steps = 2.0 * kPi / w / dt;
    CHECK_THAT(steps, WithinAbs(std::round(steps), 1e-9));
}

TEST_CASE("grid-matched drive undoes the central-difference frequency warp") {
    const double w = wavelength_to_omega(780.39e-9), cell = 25e-9;
    const auto d = matched_cw_drive(cell, 0.5, w);
    const double warped = 2.0 / d.dt * std::sin(0.5 * d.omega * d.dt);
    CHECK_THAT(warped, WithinRel(w, 1e-13));
    CHECK(d.omega > w);
    const double steps = 2.0 * kPi / d.omega / d.dt;
    CHECK_THAT(steps, WithinAbs(std::round(steps), 1e-9));
    CHECK_THAT(grid_matched_omega(w, 1e-30), WithinRel(w, 1e-12));
}

TEST_CASE("no sources and zero fields stay exactly zero") {
    Engine e(vacuum_box(1e-6, 1e-6, 50e-9, {10, 10, 10, 10}), {});
    for (int n = 0; n < 300; ++n) e.step();
    for (double v : e.hz_data()) REQUIRE(v == 0.0);
    for (double v : e.ex_data()) REQUIRE(v == 0.0);
    for (double v : e.ey_data()) REQUIRE(v == 0.0);
    CHECK_THROWS_AS(run(e, {}, RunControl{}), Error);
}

TEST_CASE("a step above the Courant bound is rejected") {
    EngineOptions o;
    o.dt = 1.5 * courant_dt(50e-9, 1.0);
    CHECK_THROWS_AS(Engine(vacuum_box(1e-6, 1e-6, 50e-9), o), Error);
}

TEST_CASE("monitor on the source edge records a nonzero phasor") {
    const double w = wavelength_to_omega(1e-6), cell = 50e-9;
    PmlSpec p;
    EngineOptions o;
    o.pml = p;
    Engine e(vacuum_box(2e-6, 2e-6, cell, p.padding()), o);
    e.add_source(DipoleSource{{0, 0}, {1, 0}, 1.0, GaussianPulse{w, 0.5}});
    RunControl c;
    c.frequencies = {w};
    const auto r = run(e, {PointMonitor{"here", {0, 0}}}, c);
    CHECK(r.converged);
    CHECK(std::abs(r.monitor("here").samples[0].get(Component::Ex)) > 0.0);
    CHECK_THROWS_AS(r.monitor("elsewhere"), Error);
}

TEST_CASE("mirror-symmetric monitors see equal magnitudes") {
    const double w = wavelength_to_omega(1e-6), cell = 50e-9;
    PmlSpec p;
    EngineOptions o;
    o.pml = p;
    // Even cell count along x puts an Ey edge on x = 0; odd along y puts it at y = 0.
    Engine e(vacuum_box(40 * cell, 41 * cell, cell, p.padding()), o);
    e.add_source(DipoleSource{{0, 0}, {0, 1}, 1.0, GaussianPulse{w, 0.5}});
    RunControl c;
    c.frequencies = {0.9 * w, w, 1.1 * w};
    const auto r = run(e, {PointMonitor{"left", {-6 * cell, 0}}, PointMonitor{"right", {6 * cell, 0}}}, c);
    for (std::size_t f = 0; f < 3; ++f) {
        const double a = std::abs(r.monitor("left").samples[0].get(Component::Ey, f));
        const double b = std::abs(r.monitor("right").samples[0].get(Component::Ey, f));
        CHECK_THAT(a, WithinRel(b, 1e-12));
    }
}

TEST_CASE("vacuum pulse travels at c within 1% at 20 cells per wavelength") {
    const double lam = 1e-6, w = wavelength_to_omega(lam), cell = lam / 20;
    PmlSpec p;
    p.bottom = p.top = false;
    EngineOptions o;
    o.pml = p;
    Engine e(vacuum_box(12e-6, 4 * cell, cell, p.padding()), o);
    const GaussianPulse g{w, 0.5};
    e.add_source(LineSource{-5e-6, -1, 1, 1.0, g});
    const auto [i1, j1] = e.nearest(Component::Ey, {-3e-6, 0});
    const auto [i2, j2] = e.nearest(Component::Ey, {4e-6, 0});
    const double x1 = e.position(Component::Ey, i1, j1).x, x2 = e.position(Component::Ey, i2, j2).x;
    std::vector<double> a, b;
    const long n = static_cast<long>((11e-6 / kC0 + 2 * settle_time(g)) / e.dt());
    for (long k = 0; k < n; ++k) {
        e.step();
        a.push_back(e.ey(i1, j1));
        b.push_back(e.ey(i2, j2));
    }
    // Arrival delay from the cross-correlation peak, refined by a parabola.
    auto xc = [&](long lag) {
        double acc = 0.0;
        for (std::size_t k = 0; k + lag < b.size(); ++k) acc += a[k] * b[k + lag];
        return acc;
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
    CHECK_THAT(v, WithinRel(kC0, 0.01));
}

TEST_CASE("closed vacuum cavity conserves the discrete energy") {
    const double w = wavelength_to_omega(1e-6);
    EngineOptions o;
    o.pml = PmlSpec::none();
    o.track_energy = true;
    Engine e(vacuum_box(2e-6, 1.5e-6, 50e-9), o);
    const GaussianPulse g{w, 1.0};
    e.add_source(DipoleSource{{0.2e-6, 0.1e-6}, {0.6, 0.8}, 1.0, g});
    const long settle = static_cast<long>(std::ceil(settle_time(g) / e.dt()));
    for (long n = 0; n < settle; ++n) e.step();
    e.clear_sources();
    e.step();
    const double w0 = e.energy();
    REQUIRE(w0 > 0.0);
    double drift = 0.0;
    for (int n = 0; n < 2000; ++n) {
        e.step();
        drift = std::max(drift, std::abs(e.energy() - w0) / w0);
    }
    CHECK(drift < 1e-3);
}

TEST_CASE("field snapshot round trip") {
    FieldSnapshot s;
    s.name = "field_hz";
    s.component = Component::Hz;
    s.omega = 2.0e15;
    s.nx = 3;
    s.ny = 2;
    s.cell = 1e-8;
    s.origin = {-1e-8, 2e-8};
    for (int k = 0; k < 6; ++k) s.data.emplace_back(k * 0.5, -k * 0.25);
    const auto dir = std::filesystem::temp_directory_path() / "enzgrid_fdtd_test";
    std::filesystem::create_directories(dir);
    write_snapshot(s, dir / "s.json", dir / "s.bin");
    const auto back = read_snapshot(dir / "s.json");
    CHECK(back.component == Component::Hz);
    CHECK(back.nx == 3);
    CHECK(back.ny == 2);
    CHECK(back.omega == s.omega);
    CHECK(back.data == s.data);
}
