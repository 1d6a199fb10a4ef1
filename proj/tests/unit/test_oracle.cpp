#include <catch_amalgamated.hpp>

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/hankel.hpp>
#include <cmath>

#include "enzgrid/oracle.hpp"

using namespace enzgrid;
using namespace enzgrid::oracle;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("Hankel functions agree with Boost on both sides of the crossover") {
    for (double x : {0.05, 0.7, 2.404825557695773, 5.0, 11.9, 12.1, 25.0, 80.0}) {
        for (int n = 0; n <= 2; ++n) {
            const cplx ref = boost::math::cyl_hankel_1(n, x);
            CHECK(std::abs(hankel1(n, x) - ref) <= 1e-10 * std::abs(ref));
        }
    }
}

TEST_CASE("vacuum Green tensor against a Boost-built dyadic") {
    const double w = wavelength_to_omega(1e-6), k = w / kC0;
    const Vec2 a{0.1e-6, -0.2e-6}, b{1.7e-6, 0.9e-6};
    const auto g = vacuum_green_2d(a, b, w);
    const double dx = b.x - a.x, dy = b.y - a.y, rho = std::hypot(dx, dy);
    const cplx h0 = boost::math::cyl_hankel_1(0, k * rho), h2 = boost::math::cyl_hankel_1(2, k * rho);
    const double u[2] = {dx / rho, dy / rho};
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            const cplx ref = cplx(0, 0.125) * ((r == c ? h0 - h2 : cplx(0)) + 2.0 * h2 * u[r] * u[c]);
            CHECK(std::abs(g(r, c) - ref) <= 1e-10 * std::abs(h0));
        }
}

TEST_CASE("far-field magnitude decays with exponent -1/2") {
    const double w = wavelength_to_omega(1e-6), k = w / kC0;
    // Least-squares slope of log|G_zz-like transverse component| against log(k r) over a decade.
    std::vector<double> xs, ys;
    for (int n = 0; n <= 40; ++n) {
        const double kr = 50.0 * std::pow(10.0, n / 40.0);
        const auto g = vacuum_green_2d({0, 0}, {0, kr / k}, w);
        xs.push_back(std::log(kr));
        ys.push_back(std::log(std::abs(g(0, 0))));
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= xs.size();
    my /= ys.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    CHECK_THAT(sxy / sxx, WithinAbs(-0.5, 0.02));
}

TEST_CASE("rotating both points and the frame leaves the tensor invariant") {
    const double w = wavelength_to_omega(1e-6), th = 0.37;
    const Vec2 a{0.2e-6, 0.1e-6}, b{1.1e-6, -0.6e-6};
    auto rot = [&](Vec2 p) { return Vec2{std::cos(th) * p.x - std::sin(th) * p.y, std::sin(th) * p.x + std::cos(th) * p.y}; };
    const auto g = vacuum_green_2d(a, b, w);
    const auto gr = vacuum_green_2d(rot(a), rot(b), w);
    const double R[2][2] = {{std::cos(th), -std::sin(th)}, {std::sin(th), std::cos(th)}};
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            cplx back = 0;  // R^T gr R
            for (int p = 0; p < 2; ++p)
                for (int q = 0; q < 2; ++q) back += R[p][r] * gr(p, q) * R[q][c];
            CHECK(std::abs(back - g(r, c)) <= 1e-12 * std::abs(g(0, 0)) + 1e-15);
        }
}

TEST_CASE("Green tensor reciprocity") {
    const double w = wavelength_to_omega(1e-6);
    const auto g12 = vacuum_green_2d({0, 0}, {0.8e-6, 0.3e-6}, w);
    const auto g21 = vacuum_green_2d({0.8e-6, 0.3e-6}, {0, 0}, w).transpose();
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) CHECK(std::abs(g12(r, c) - g21(r, c)) <= 1e-14 * std::abs(g12(0, 0)));
    CHECK_THROWS_AS(vacuum_green_2d({0, 0}, {0, 0}, w), Error);
}

TEST_CASE("transfer matrix: vacuum slab is a pure delay") {
    const double w = wavelength_to_omega(1e-6), L = 0.37e-6;
    const auto s = transfer_matrix_slab(cplx(1.0, 0.0), L, w);
    CHECK(std::abs(s.r) < 1e-15);
    CHECK(std::abs(s.t - std::exp(cplx(0, w * L / kC0))) < 1e-14);
}

TEST_CASE("transfer matrix: quarter-wave slab of index 2") {
    const double lam = 1e-6, w = wavelength_to_omega(lam);
    const auto s = transfer_matrix_slab(cplx(4.0, 0.0), lam / 8.0, w);
    // Quarter-wave layer of index n between vacuum: r = (1 - n^2) / (1 + n^2).
    CHECK_THAT(std::abs(s.r), WithinAbs(3.0 / 5.0, 1e-12));
}

TEST_CASE("transfer matrix conserves flux for a lossless slab") {
    const double w = wavelength_to_omega(1e-6);
    for (double eps : {2.25, 7.0, 0.3}) {
        const auto s = transfer_matrix_slab(cplx(eps, 0.0), 0.41e-6, w);
        CHECK_THAT(std::norm(s.r) + std::norm(s.t), WithinAbs(1.0, 1e-12));
    }
}

TEST_CASE("Drude loss width limit") {
    CHECK(drude_fwhm_limit(1, 0.01, 1) == 0.01);
    CHECK_THROWS_AS(drude_fwhm_limit(1, 0.5, 1), Error);
}

TEST_CASE("Yee dispersion tends to the continuum") {
    const double w = wavelength_to_omega(1e-6);
    const double d = 1e-6 / 200, dt = 0.5 * d / (kC0 * std::sqrt(2.0));
    CHECK_THAT(yee_wavenumber(w, d, dt), WithinRel(w / kC0, 1e-4));
    CHECK_THAT(yee_group_velocity(w, d, dt), WithinRel(kC0, 1e-3));
    // Coarse grid: waves run slow along the axes.
    const double dc = 1e-6 / 10, dtc = 0.5 * dc / (kC0 * std::sqrt(2.0));
    CHECK(yee_wavenumber(w, dc, dtc) > w / kC0);
}
