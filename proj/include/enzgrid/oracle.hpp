// oracle.hpp - closed-form references that never touch the FDTD engine:
// Hankel functions and the 2D dyadic vacuum Green function, the 1D slab
// transfer matrix, the Drude loss-width limit and the Yee-grid dispersion
// relation.

#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>

#include "constants.hpp"
#include "error.hpp"

namespace enzgrid::oracle {

using cplx = std::complex<double>;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

/// 2x2 complex tensor, t[row][col].
struct Tensor2 {
    std::array<std::array<cplx, 2>, 2> t{};

    cplx& operator()(int r, int c) { return t[r][c]; }
    const cplx& operator()(int r, int c) const { return t[r][c]; }

    Tensor2 transpose() const {
        Tensor2 out;
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) out(r, c) = t[c][r];
        return out;
    }
};

// ---------------------------------------------------------------------------
// Hankel functions of the first kind, orders 0..2, positive real argument.
// Power series below x = 12, Hankel asymptotic expansion (truncated at its
// smallest term) above. Both sides stay under ~1e-11 relative error away
// from Bessel zeros.

inline constexpr double kHankelCrossover = 12.0;

namespace detail {

// J_n and Y_n from their ascending series, n = 0, 1.
inline void bessel_series(double x, double& j0, double& j1, double& j2, double& y0, double& y1) {
    constexpr double euler_gamma = 0.57721566490153286061;
    const double h = 0.5 * x;
    const double q = -h * h;
    // J_n = sum (-1)^k (x/2)^(2k+n) / (k! (k+n)!)
    double t0 = 1.0, t1 = h, t2 = 0.5 * h * h;
    j0 = t0;
    j1 = t1;
    j2 = t2;
    // Y0 = (2/pi)(ln(x/2)+gamma) J0 - (2/pi) sum_{k>=1} (-1)^k H_k (x^2/4)^k/(k!)^2
    // Y1 = -2/(pi x) + (2/pi) ln(x/2) J1
    //      - (1/pi) sum_{k>=0} (psi(k+1)+psi(k+2)) (-1)^k (x/2)^(2k+1)/(k!(k+1)!)
    double harmonic = 0.0;
    double s0 = 0.0;
    double s1 = (-euler_gamma + (1.0 - euler_gamma)) * t1;
    for (int k = 1; k < 80; ++k) {
        t0 *= q / (static_cast<double>(k) * k);
        t1 *= q / (static_cast<double>(k) * (k + 1));
        t2 *= q / (static_cast<double>(k) * (k + 2));
        harmonic += 1.0 / k;
        j0 += t0;
        j1 += t1;
        j2 += t2;
        s0 += harmonic * t0;
        const double psi_k1 = -euler_gamma + harmonic;
        const double psi_k2 = psi_k1 + 1.0 / (k + 1);
        s1 += (psi_k1 + psi_k2) * t1;
        if (std::abs(t0) < 1e-18 * std::abs(j0) && std::abs(t1) < 1e-18 * std::abs(j1) && k > 4) break;
    }
    const double lg = std::log(h);
    y0 = (2.0 / std::numbers::pi) * ((lg + euler_gamma) * j0 - s0);
    y1 = -2.0 / (std::numbers::pi * x) + (2.0 / std::numbers::pi) * lg * j1 - s1 / std::numbers::pi;
}

// H_nu(x) ~ sqrt(2/(pi x)) exp(i(x - nu pi/2 - pi/4)) sum_k i^k a_k(nu) / x^k
inline cplx hankel_asymptotic(int nu, double x) {
    const double mu = 4.0 * nu * nu;
    cplx sum = 1.0;
    cplx ik = 1.0;
    double a = 1.0;
    double last = 1.0;
    for (int k = 1; k < 60; ++k) {
        const double next = a * (mu - (2.0 * k - 1.0) * (2.0 * k - 1.0)) / (k * 8.0 * x);
        if (std::abs(next) >= last) break;  // smallest term reached
        a = next;
        last = std::abs(a);
        ik *= cplx(0.0, 1.0);
        sum += ik * a;
        if (last < 1e-17) break;
    }
    const double phase = x - nu * std::numbers::pi / 2.0 - std::numbers::pi / 4.0;
    return std::sqrt(2.0 / (std::numbers::pi * x)) * std::exp(cplx(0.0, phase)) * sum;
}

}  // namespace detail

struct Hankel012 {
    cplx h0, h1, h2;
};

inline Hankel012 hankel1_012(double x) {
    if (!(x > 0.0)) throw Error(ErrorKind::Domain, "hankel: argument must be positive");
    if (x < kHankelCrossover) {
        double j0, j1, j2, y0, y1;
        detail::bessel_series(x, j0, j1, j2, y0, y1);
        const double y2 = 2.0 / x * y1 - y0;
        return {{j0, y0}, {j1, y1}, {j2, y2}};
    }
    return {detail::hankel_asymptotic(0, x), detail::hankel_asymptotic(1, x), detail::hankel_asymptotic(2, x)};
}

inline cplx hankel1(int order, double x) {
    const auto h = hankel1_012(x);
    switch (order) {
        case 0: return h.h0;
        case 1: return h.h1;
        case 2: return h.h2;
        default: throw Error(ErrorKind::Domain, "hankel1: only orders 0..2 are provided");
    }
}

/// Dyadic Green function of the 2D vacuum Helmholtz operator,
/// (curl curl - k^2) G = I delta(r - r'), for in-plane fields:
///   G = (i/8) [ (H0 - H2) I + 2 H2 rhat rhat ],  argument k|r2 - r1|.
/// Dimensionless in 2D. The field of a line dipole p (C per unit length) is
/// E = w^2 mu0 G p.
inline Tensor2 vacuum_green_2d(Vec2 r1, Vec2 r2, double omega) {
    const double dx = r2.x - r1.x, dy = r2.y - r1.y;
    const double rho = std::hypot(dx, dy);
    if (rho == 0.0) throw Error(ErrorKind::Singular, "vacuum_green_2d: coincident points");
    if (!(omega > 0.0)) throw Error(ErrorKind::Domain, "vacuum_green_2d: omega must be positive");
    const double k = omega / kC0;
    const auto h = hankel1_012(k * rho);
    const double u[2] = {dx / rho, dy / rho};
    const cplx pre(0.0, 1.0 / 8.0);
    Tensor2 g;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            g(a, b) = pre * ((a == b ? h.h0 - h.h2 : cplx(0.0)) + 2.0 * h.h2 * u[a] * u[b]);
    return g;
}

/// Im G_vac(r, r) in 2D: (1/8) I. The real part is singular.
inline double vacuum_green_2d_self_imag() { return 1.0 / 8.0; }

// ---------------------------------------------------------------------------

struct SlabCoefficients {
    cplx r;  // reflected / incident E, referenced to the front face
    cplx t;  // transmitted / incident E, front face to back face
};

/// Normal-incidence three-layer transfer matrix: vacuum | eps, thickness | vacuum.
inline SlabCoefficients transfer_matrix_slab(cplx eps, double thickness, double omega) {
    if (!(thickness > 0.0)) throw Error(ErrorKind::Domain, "transfer_matrix_slab: thickness must be positive");
    const cplx n = std::sqrt(eps);
    const cplx i(0.0, 1.0);
    const double k0 = omega / kC0;
    const cplx r01 = (1.0 - n) / (1.0 + n);
    const cplx r12 = (n - 1.0) / (n + 1.0);
    const cplx t01 = 2.0 / (1.0 + n);
    const cplx t12 = 2.0 * n / (n + 1.0);
    const cplx phase = std::exp(i * n * k0 * thickness);
    const cplx denom = 1.0 + r01 * r12 * phase * phase;
    return {(r01 + r12 * phase * phase) / denom, t01 * t12 * phase / denom};
}

/// Leading-order FWHM of Im(-1/eps) for a Drude medium with gamma << wp.
inline double drude_fwhm_limit(double plasma_frequency, double damping, double eps_infinity) {
    if (!(damping < plasma_frequency / 10.0) || !(eps_infinity > 0.0))
        throw Error(ErrorKind::Domain, "drude_fwhm_limit: requires gamma < wp/10");
    return damping;
}

// ---------------------------------------------------------------------------
// Yee-grid numerical dispersion:
//   (sin(w dt/2) / (c dt))^2 = (sin(kx d/2) / d)^2 + (sin(ky d/2) / d)^2

/// Numerical wavenumber of a plane wave travelling at angle `theta` on a
/// square 2D Yee grid with cell `cell` and step `dt`.
inline double yee_wavenumber(double omega, double cell, double dt, double theta = 0.0) {
    const double lhs = std::sin(0.5 * omega * dt) / (kC0 * dt);
    const double target = lhs * lhs * cell * cell;
    auto f = [&](double k) {
        const double sx = std::sin(0.5 * k * std::cos(theta) * cell);
        const double sy = std::sin(0.5 * k * std::sin(theta) * cell);
        return sx * sx + sy * sy - target;
    };
    double lo = 0.0, hi = omega / kC0;
    while (f(hi) < 0.0) hi *= 1.1;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Numerical group velocity dw/dk along `theta`.
inline double yee_group_velocity(double omega, double cell, double dt, double theta = 0.0) {
    const double h = 1e-6 * omega;
    const double k1 = yee_wavenumber(omega - h, cell, dt, theta);
    const double k2 = yee_wavenumber(omega + h, cell, dt, theta);
    return 2.0 * h / (k2 - k1);
}

}  // namespace enzgrid::oracle
