#pragma once

// Time-harmonic solutions (convention e^{-i omega t}): spectral, causal and anti-causal
// eigenfunctions, plane waves with momentum and stress, the half-line scattering
// problem, a Fourier-Laplace check of trajectories and a periodicity check of modes
// embedded in the extended dynamics.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "coupling.hpp"
#include "error.hpp"
#include "extended_dynamics.hpp"
#include "grid.hpp"
#include "susceptibility.hpp"
#include "tdd_dynamics.hpp"

namespace tdd {

// ---------------------------------------------------------------------------
// Hidden-string kernels

/// K(s) = int sin(omega |s' - s|) sigma(s') ds' and K'(s) at the coupling nodes
/// s_j, j in [lo, hi]. With a truncation J > 0 only |j| < J contributes, matching
/// the weights of a HiddenLattice of half-width J ds.
struct HiddenKernel {
    double omega = 0.0;
    double ds = 1.0;
    long lo = 0, hi = -1;
    double sigma_hat = 0.0; // c0 + ds sum reg_j cos(omega s_j) over the same nodes
    std::vector<double> k, dk;

    double s(long j) const { return double(j) * ds; }
    double at(long j) const { return k[std::size_t(j - lo)]; }
    double slope(long j) const { return dk[std::size_t(j - lo)]; }
};

inline HiddenKernel hidden_kernel(const CouplingFunction& c, double omega, long J = 0) {
    HiddenKernel hk;
    hk.omega = omega;
    hk.ds = c.ds();
    long rlo = -c.center(), rhi = c.half();
    if (J > 0) {
        rlo = std::max(rlo, -(J - 1));
        rhi = std::min(rhi, J - 1);
        hk.lo = -J;
        hk.hi = J;
    } else {
        hk.lo = rlo;
        hk.hi = rhi;
    }
    const std::size_t n = std::size_t(hk.hi - hk.lo + 1);
    // prefix sums of reg cos and reg sin over nodes strictly below / above j
    std::vector<double> A(n, 0.0), B(n, 0.0), Sn(n), Cn(n);
    double sig = 0.0;
    for (long j = hk.lo; j <= hk.hi; ++j) {
        const std::size_t i = std::size_t(j - hk.lo);
        Sn[i] = std::sin(omega * hk.s(j));
        Cn[i] = std::cos(omega * hk.s(j));
        if (j >= rlo && j <= rhi) {
            A[i] = c.regular(j) * Cn[i];
            B[i] = c.regular(j) * Sn[i];
            sig += A[i];
        }
    }
    hk.sigma_hat = c.delta_weight() + c.ds() * sig;
    double totA = 0.0, totB = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        totA += A[i];
        totB += B[i];
    }
    hk.k.resize(n);
    hk.dk.resize(n);
    const double c0 = c.delta_weight();
    double belowA = 0.0, belowB = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double aboveA = totA - belowA - A[i], aboveB = totB - belowB - B[i];
        const double dA = belowA - aboveA, dB = belowB - aboveB;
        const double s = hk.s(hk.lo + long(i));
        const double sg = s > 0.0 ? 1.0 : (s < 0.0 ? -1.0 : 0.0);
        hk.k[i] = c0 * std::sin(omega * std::abs(s)) + c.ds() * (Sn[i] * dA - Cn[i] * dB);
        hk.dk[i] = c0 * omega * std::cos(omega * s) * sg + c.ds() * omega * (Cn[i] * dA + Sn[i] * dB);
        belowA += A[i];
        belowB += B[i];
    }
    return hk;
}

/// chi_hat(omega) implied by a coupling (optionally truncated to |j| < J):
///   Im = sigma_hat^2 / (2 omega),  Re = -(1 / (2 omega)) int int sigma sigma' sin(omega |s - s'|).
inline cplx coupling_chi_hat(const CouplingFunction& c, double omega, long J = 0) {
    if (omega == 0.0) throw DomainError("coupling_chi_hat: omega = 0");
    const HiddenKernel hk = hidden_kernel(c, omega, J);
    double dbl = c.delta_weight() * hk.at(0);
    const long rlo = J > 0 ? -(J - 1) : -c.center(), rhi = J > 0 ? J - 1 : c.half();
    double sum = 0.0;
    for (long j = std::max(rlo, hk.lo); j <= std::min(rhi, hk.hi); ++j) sum += c.regular(j) * hk.at(j);
    dbl += c.ds() * sum;
    return {-dbl / (2.0 * omega), hk.sigma_hat * hk.sigma_hat / (2.0 * omega)};
}

/// Spectral form psi = (i phi / 2) K(s) + (g / 2) cos(omega s) sigma_hat; causal g = phi,
/// anti-causal g = -phi.
inline cplx hidden_profile(const HiddenKernel& hk, cplx phi, cplx g, long j) {
    return cplx(0.0, 0.5) * phi * hk.at(j) + 0.5 * g * std::cos(hk.omega * hk.s(j)) * hk.sigma_hat;
}
inline cplx hidden_profile_slope(const HiddenKernel& hk, cplx phi, cplx g, long j) {
    return cplx(0.0, 0.5) * phi * hk.slope(j) - 0.5 * g * hk.omega * std::sin(hk.omega * hk.s(j)) * hk.sigma_hat;
}

/// Single value at an arbitrary s by direct quadrature.
inline cplx hidden_profile(const CouplingFunction& c, double omega, cplx phi, cplx g, double s) {
    double k = c.delta_weight() * std::sin(omega * std::abs(s));
    double sh = c.delta_weight();
    double ksum = 0.0, hsum = 0.0;
    for (long j = -c.center(); j <= c.half(); ++j) {
        ksum += c.regular(j) * std::sin(omega * std::abs(s - c.s(j)));
        hsum += c.regular(j) * std::cos(omega * c.s(j));
    }
    k += c.ds() * ksum;
    sh += c.ds() * hsum;
    return cplx(0.0, 0.5) * phi * k + 0.5 * g * std::cos(omega * s) * sh;
}

// ---------------------------------------------------------------------------
// Spectral eigenmodes

enum class ModeKind { Spectral, Causal, AntiCausal };

inline std::string mode_kind_name(ModeKind k) {
    switch (k) {
    case ModeKind::Spectral: return "spectral";
    case ModeKind::Causal: return "causal";
    case ModeKind::AntiCausal: return "anti-causal";
    }
    return "?";
}

/// Source function g of the spectral equation: tied to phi (causal / anti-causal) or
/// given on the grid.
struct GSpec {
    ModeKind kind = ModeKind::Causal;
    std::vector<cplx> values;

    static GSpec causal() { return {ModeKind::Causal, {}}; }
    static GSpec anti_causal() { return {ModeKind::AntiCausal, {}}; }
    static GSpec given(std::vector<cplx> g) { return {ModeKind::Spectral, std::move(g)}; }
    static GSpec given(const Grid1D& grid, const std::function<cplx(double)>& g) {
        std::vector<cplx> v(grid.n);
        for (std::size_t i = 0; i < grid.n; ++i) v[i] = g(grid.x(i));
        return given(std::move(v));
    }
};

struct DirichletData {
    cplx left, right;
};
/// Value and slope at x_min, marched to the right.
struct CauchyData {
    cplx value, slope;
};
using ModeBoundary = std::variant<DirichletData, CauchyData>;

struct SpectralEigenmode {
    ModeKind kind = ModeKind::Spectral;
    double omega = 0.0;
    double gamma = 1.0;
    Grid1D grid;
    std::vector<cplx> chi; // chi_hat(x, omega)
    std::vector<cplx> phi, g;
    std::vector<cplx> a; // sigma_hat g / 2; b = 0

    /// max |gamma D2 phi + omega^2 (1 + Re chi) phi + i omega^2 Im chi g| over interior nodes.
    double residual() const {
        double r = 0.0;
        const double h2 = grid.dx() * grid.dx();
        for (std::size_t i = 1; i + 1 < grid.n; ++i) {
            const cplx d2 = (phi[i + 1] - 2.0 * phi[i] + phi[i - 1]) / h2;
            const cplx e = gamma * d2 + omega * omega * (1.0 + chi[i].real()) * phi[i] +
                           cplx(0.0, omega * omega * chi[i].imag()) * g[i];
            r = std::max(r, std::abs(e));
        }
        return r;
    }
};

namespace detail {

inline std::vector<cplx> chi_nodes(const MaterialProfile& mat, const Grid1D& grid, cplx z) {
    std::vector<cplx> out(grid.n);
    for (std::size_t i = 0; i < grid.n; ++i) {
        const auto& m = mat.at(grid.x(i));
        out[i] = is_zero(m) ? cplx(0.0) : chi_hat(m, z);
    }
    return out;
}

inline double sigma_hat_of(cplx chi, double omega) {
    const double d = omega * chi.imag();
    return d > 0.0 ? std::sqrt(2.0 * d) : 0.0;
}

// Solve a_i u_{i-1} + b_i u_i + c_i u_{i+1} = d_i (Thomas).
inline std::vector<cplx> tridiagonal(std::vector<cplx> a, std::vector<cplx> b, std::vector<cplx> c,
                                     std::vector<cplx> d) {
    const std::size_t n = b.size();
    for (std::size_t i = 1; i < n; ++i) {
        if (b[i - 1] == cplx(0.0)) throw PreconditionError("spectral_mode: singular system (resonant grid)");
        const cplx m = a[i] / b[i - 1];
        b[i] -= m * c[i - 1];
        d[i] -= m * d[i - 1];
    }
    if (b[n - 1] == cplx(0.0)) throw PreconditionError("spectral_mode: singular system (resonant grid)");
    std::vector<cplx> u(n);
    u[n - 1] = d[n - 1] / b[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) u[i] = (d[i] - c[i] * u[i + 1]) / b[i];
    return u;
}

} // namespace detail

/// Second-order finite-difference solution of
///   gamma phi'' + omega^2 (1 + Re chi) phi + i omega^2 Im chi g = 0.
inline SpectralEigenmode spectral_mode(double omega, const std::vector<cplx>& chi, double gamma, const Grid1D& grid,
                                       const GSpec& gs, const ModeBoundary& bc) {
    grid.validate();
    if (grid.periodic()) throw PreconditionError("spectral_mode: periodic grids are not supported");
    if (chi.size() != grid.n) throw PreconditionError("spectral_mode: chi samples do not match the grid");
    if (!(gamma > 0.0)) throw DomainError("spectral_mode: gamma must be positive");
    if (gs.kind == ModeKind::Spectral && gs.values.size() != grid.n)
        throw PreconditionError("spectral_mode: g samples do not match the grid");
    const std::size_t n = grid.n;
    const double h2 = grid.dx() * grid.dx();
    const double w2 = omega * omega;
    const double sign = gs.kind == ModeKind::Causal ? 1.0 : -1.0;

    // Diagonal coefficient q_i and explicit source s_i: gamma D2 phi + q phi + s = 0.
    std::vector<cplx> q(n), src(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (gs.kind == ModeKind::Spectral) {
            q[i] = w2 * (1.0 + chi[i].real());
            src[i] = cplx(0.0, w2 * chi[i].imag()) * gs.values[i];
        } else {
            q[i] = w2 * (1.0 + chi[i].real()) + cplx(0.0, sign * w2 * chi[i].imag());
        }
    }

    SpectralEigenmode m;
    m.kind = gs.kind;
    m.omega = omega;
    m.gamma = gamma;
    m.grid = grid;
    m.chi = chi;
    m.phi.assign(n, 0.0);
    if (auto* d = std::get_if<DirichletData>(&bc)) {
        const std::size_t k = n - 2;
        std::vector<cplx> a(k, gamma / h2), b(k), c(k, gamma / h2), rhs(k);
        for (std::size_t i = 0; i < k; ++i) {
            b[i] = -2.0 * gamma / h2 + q[i + 1];
            rhs[i] = -src[i + 1];
        }
        rhs[0] -= gamma / h2 * d->left;
        rhs[k - 1] -= gamma / h2 * d->right;
        const auto u = detail::tridiagonal(a, b, c, rhs);
        m.phi[0] = d->left;
        m.phi[n - 1] = d->right;
        for (std::size_t i = 0; i < k; ++i) m.phi[i + 1] = u[i];
    } else {
        const auto& cd = std::get<CauchyData>(bc);
        const double h = grid.dx();
        m.phi[0] = cd.value;
        const cplx d2 = -(q[0] * cd.value + src[0]) / gamma;
        m.phi[1] = cd.value + h * cd.slope + 0.5 * h2 * d2;
        for (std::size_t i = 1; i + 1 < n; ++i)
            m.phi[i + 1] = 2.0 * m.phi[i] - m.phi[i - 1] - h2 / gamma * (q[i] * m.phi[i] + src[i]);
    }
    m.g.resize(n);
    m.a.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        m.g[i] = gs.kind == ModeKind::Spectral ? gs.values[i] : sign * m.phi[i];
        m.a[i] = 0.5 * detail::sigma_hat_of(chi[i], omega) * m.g[i];
    }
    return m;
}

inline SpectralEigenmode spectral_mode(double omega, const MaterialProfile& mat, double gamma, const Grid1D& grid,
                                       const GSpec& gs, const ModeBoundary& bc) {
    return spectral_mode(omega, detail::chi_nodes(mat, grid, omega), gamma, grid, gs, bc);
}

/// Hidden amplitude a(x) that makes phi1 + phi2 an eigenfunction, phi1 solving the
/// undispersed equation gamma phi'' + omega^2 (1 + Re chi) phi = 0:
///   a = i (gamma phi2'' + omega^2 (1 + Re chi) phi2) / (omega sigma_hat).
/// phi2 and its stencil must stay inside {Im chi != 0}.
inline std::vector<cplx> realize_absorbing(double omega, const std::vector<cplx>& chi, double gamma,
                                           const Grid1D& grid, const std::vector<cplx>& phi2) {
    if (chi.size() != grid.n || phi2.size() != grid.n)
        throw PreconditionError("realize_absorbing: samples do not match the grid");
    const std::size_t n = grid.n;
    if (phi2.front() != cplx(0.0) || phi2.back() != cplx(0.0))
        throw PreconditionError("realize_absorbing: phi2 must vanish at the grid ends");
    const double h2 = grid.dx() * grid.dx();
    std::vector<cplx> a(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const cplx lhs = gamma * (phi2[i + 1] - 2.0 * phi2[i] + phi2[i - 1]) / h2 +
                         omega * omega * (1.0 + chi[i].real()) * phi2[i];
        const bool touched = phi2[i - 1] != cplx(0.0) || phi2[i] != cplx(0.0) || phi2[i + 1] != cplx(0.0);
        if (!touched) continue;
        const double sh = detail::sigma_hat_of(chi[i], omega);
        if (sh == 0.0)
            throw PreconditionError("realize_absorbing: phi2 support leaves the absorbing set at x = " +
                                    std::to_string(grid.x(i)));
        a[i] = cplx(0.0, 1.0) * lhs / (omega * sh);
    }
    return a;
}

struct ModeFlux {
    std::vector<double> J;
    std::vector<double> dissipation;         // omega^3 Im chi Re(conj(phi) g)
    std::vector<double> dissipation_numeric; // -D0 J
};

/// J = gamma omega Im(conj(phi) phi') by centered differences (one-sided at the ends).
inline ModeFlux mode_flux_and_dissipation(const SpectralEigenmode& m) {
    const std::size_t n = m.grid.n;
    const double h = m.grid.dx();
    ModeFlux f;
    f.J.resize(n);
    f.dissipation.resize(n);
    f.dissipation_numeric.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        cplx d;
        if (i == 0) d = (m.phi[1] - m.phi[0]) / h;
        else if (i == n - 1) d = (m.phi[n - 1] - m.phi[n - 2]) / h;
        else d = (m.phi[i + 1] - m.phi[i - 1]) / (2.0 * h);
        f.J[i] = m.gamma * m.omega * (std::conj(m.phi[i]) * d).imag();
        f.dissipation[i] = std::pow(m.omega, 3) * m.chi[i].imag() * (std::conj(m.phi[i]) * m.g[i]).real();
    }
    for (std::size_t i = 1; i + 1 < n; ++i) f.dissipation_numeric[i] = -(f.J[i + 1] - f.J[i - 1]) / (2.0 * h);
    return f;
}

// ---------------------------------------------------------------------------
// Plane waves

struct PlaneWave {
    double omega = 1.0;
    double k = 0.0;
    double alpha_mix = 0.0;
    double gamma = 1.0;
    cplx chi;
    cplx phi0 = 1.0;

    cplx g0() const { return cplx(0.0, alpha_mix) * phi0; }
    /// Delta_0 = int sigma psi_0 ds = i omega phi0 (alpha_mix Im chi - Re chi).
    cplx delta0() const { return cplx(0.0, omega) * phi0 * (alpha_mix * chi.imag() - chi.real()); }
    double amp2() const { return std::norm(phi0); }

    double flux() const { return gamma * omega * k * amp2(); }
    /// 1/2 (omega^2 + gamma k^2) |phi0|^2, the general density.
    double energy_density() const { return 0.5 * (omega * omega + gamma * k * k) * amp2(); }
    /// Same without the factor 1/2.
    double energy_density_unhalved() const { return (omega * omega + gamma * k * k) * amp2(); }
    double momentum_density() const { return gamma * k * k * k * amp2() / omega; }
    /// omega k |phi0|^2 + k Im(conj(Delta0) phi0).
    double momentum_density_from_delta() const {
        return omega * k * amp2() + k * (std::conj(delta0()) * phi0).imag();
    }
    double stress() const { return gamma * k * k * amp2(); }
    /// E_0 + omega Im(conj(Delta0) phi0).
    double stress_physical() const { return energy_density() + omega * (std::conj(delta0()) * phi0).imag(); }
    /// -1/2 omega Im(conj(Delta0) phi0).
    double stress_hidden() const { return -0.5 * omega * (std::conj(delta0()) * phi0).imag(); }
    /// gamma k^2 - omega^2 (1 + Re chi - alpha_mix Im chi).
    double dispersion_residual() const {
        return gamma * k * k - omega * omega * (1.0 + chi.real() - alpha_mix * chi.imag());
    }
};

/// Plane wave with prescribed wavenumber; alpha_mix follows from the dispersion relation.
inline PlaneWave plane_wave_k(double omega, cplx chi, double gamma, double k, cplx phi0 = 1.0) {
    if (omega == 0.0) throw DomainError("plane_wave: omega = 0");
    if (!(gamma > 0.0)) throw DomainError("plane_wave: gamma must be positive");
    PlaneWave pw{omega, k, 0.0, gamma, chi, phi0};
    const double lhs = gamma * k * k, rhs = omega * omega * (1.0 + chi.real());
    if (chi.imag() == 0.0) {
        if (std::abs(lhs - rhs) > 1e-12 * std::max({1.0, std::abs(lhs), std::abs(rhs)}))
            throw PreconditionError("plane_wave: Im chi = 0 and k is off the dispersion relation");
        return pw;
    }
    pw.alpha_mix = (1.0 + chi.real()) / chi.imag() - lhs / (omega * omega * chi.imag());
    return pw;
}

/// Plane wave with prescribed alpha_mix; k >= 0 from gamma k^2 = omega^2 (1 + Re chi - alpha_mix Im chi).
inline PlaneWave plane_wave_alpha(double omega, cplx chi, double gamma, double alpha_mix, cplx phi0 = 1.0) {
    if (omega == 0.0) throw DomainError("plane_wave: omega = 0");
    if (!(gamma > 0.0)) throw DomainError("plane_wave: gamma must be positive");
    const double rhs = 1.0 + chi.real() - alpha_mix * chi.imag();
    if (rhs < 0.0) throw PreconditionError("plane_wave: evanescent (1 + Re chi - alpha_mix Im chi < 0)");
    return {omega, std::abs(omega) * std::sqrt(rhs / gamma), alpha_mix, gamma, chi, phi0};
}

inline PlaneWave plane_wave_k(double omega, const SusceptibilityModel& m, double gamma, double k, cplx phi0 = 1.0) {
    return plane_wave_k(omega, chi_hat(m, omega), gamma, k, phi0);
}
inline PlaneWave plane_wave_alpha(double omega, const SusceptibilityModel& m, double gamma, double alpha_mix,
                                  cplx phi0 = 1.0) {
    return plane_wave_alpha(omega, chi_hat(m, omega), gamma, alpha_mix, phi0);
}

/// Both roots of gamma k^2 = omega^2 (1 + chi).
inline std::pair<cplx, cplx> causal_plane_wave_roots(double omega, cplx chi, double gamma) {
    const cplx k = std::sqrt(omega * omega * (1.0 + chi) / gamma);
    return {k, -k};
}

struct StressExtrapolation {
    std::vector<double> deltas;
    std::vector<double> values;   // T_hs(delta)
    std::vector<double> limits;   // extrapolations using the first m values
    double limit = 0.0;
    double closed_form = 0.0;     // -1/2 omega Im(conj(Delta0) phi0)
    double change = 0.0;          // |last two extrapolations|
    bool converged = false;
};

/// T_hs(delta) = 1/2 int e^{-delta |s|} (omega^2 |psi|^2 - |psi'|^2) ds on the coupling
/// grid, extrapolated to delta -> 0 by polynomial (Neville) extrapolation.
inline StressExtrapolation plane_wave_stress_regularized(const PlaneWave& pw, const CouplingFunction& c,
                                                         std::vector<double> deltas = {0.2, 0.1, 0.05, 0.025},
                                                         double tol = 1e-3) {
    if (deltas.size() < 2) throw PreconditionError("stress: need at least two delta values");
    for (double d : deltas)
        if (!(d > 0.0)) throw DomainError("stress: delta must be positive");
    StressExtrapolation out;
    out.deltas = deltas;
    out.closed_form = pw.stress_hidden();
    if (c.is_zero()) {
        out.values.assign(deltas.size(), 0.0);
        out.limits.assign(deltas.size(), 0.0);
        out.converged = true;
        return out;
    }
    const double dmin = *std::min_element(deltas.begin(), deltas.end());
    if (std::exp(-dmin * c.half_width()) > 1e-8)
        throw PreconditionError("stress: coupling grid too short for delta = " + std::to_string(dmin));
    const HiddenKernel hk = hidden_kernel(c, pw.omega);
    const cplx g0 = pw.g0();
    const double w2 = pw.omega * pw.omega;
    for (double d : deltas) {
        double sum = 0.0;
        for (long j = hk.lo; j <= hk.hi; ++j) {
            const cplx psi = hidden_profile(hk, pw.phi0, g0, j);
            const cplx dpsi = hidden_profile_slope(hk, pw.phi0, g0, j);
            // psi' jumps by i phi0 c0 omega across s = 0: average the one-sided squares
            double slope2 = std::norm(dpsi);
            if (j == 0) {
                const cplx half_jump = cplx(0.0, 0.5) * pw.phi0 * c.delta_weight() * pw.omega;
                slope2 = 0.5 * (std::norm(dpsi + half_jump) + std::norm(dpsi - half_jump));
            }
            const double w = (j == hk.lo || j == hk.hi) ? 0.5 : 1.0;
            sum += w * std::exp(-d * std::abs(hk.s(j))) * (w2 * std::norm(psi) - slope2);
        }
        out.values.push_back(0.5 * c.ds() * sum);
    }
    // Neville tableau at delta = 0 using the first m points.
    for (std::size_t m = 1; m <= deltas.size(); ++m) {
        std::vector<double> p(out.values.begin(), out.values.begin() + long(m));
        for (std::size_t lev = 1; lev < m; ++lev)
            for (std::size_t i = 0; i + lev < m; ++i)
                p[i] = (deltas[i + lev] * p[i] - deltas[i] * p[i + 1]) / (deltas[i + lev] - deltas[i]);
        out.limits.push_back(p[0]);
    }
    out.limit = out.limits.back();
    out.change = std::abs(out.limits.back() - out.limits[out.limits.size() - 2]);
    out.converged = out.change <= tol;
    return out;
}

// ---------------------------------------------------------------------------
// Half-line scattering

struct ScatteringSolution {
    double omega = 0.0;
    double gamma = 1.0;
    cplx chi;
    double k_lt = 0.0; // omega / sqrt(gamma)
    cplx k_gt;         // rho k_lt, Im >= 0
    cplx rho;
    cplx r, v;

    cplx phi(double x) const {
        const cplx i(0.0, 1.0);
        return x < 0.0 ? std::exp(i * k_lt * x) + r * std::exp(-i * k_lt * x) : v * std::exp(i * k_gt * x);
    }
    cplx dphi(double x) const {
        const cplx i(0.0, 1.0);
        return x < 0.0 ? i * k_lt * (std::exp(i * k_lt * x) - r * std::exp(-i * k_lt * x))
                       : i * k_gt * v * std::exp(i * k_gt * x);
    }
    double flux_left() const { return std::sqrt(gamma) * omega * omega * (1.0 - std::norm(r)); }
    double flux_right_at_zero() const { return std::sqrt(gamma) * omega * omega * std::norm(v) * rho.real(); }
    double flux(double x) const {
        return x < 0.0 ? flux_left() : flux_right_at_zero() * std::exp(-2.0 * k_gt.imag() * x);
    }
    /// -dJ/dx.
    double dissipation(double x) const { return x < 0.0 ? 0.0 : 2.0 * k_gt.imag() * flux(x); }
    double total_dissipation() const { return flux_left(); }

    /// 1 - |r|^2 - |v|^2 Re rho.
    double identity_flux() const { return 1.0 - std::norm(r) - std::norm(v) * rho.real(); }
    /// 1 + |r|^2 - 1/2 (1 + |1 + chi|) |v|^2.
    double identity_sum() const { return 1.0 + std::norm(r) - 0.5 * (1.0 + std::abs(1.0 + chi)) * std::norm(v); }
};

inline ScatteringSolution scatter_half_line(double omega, cplx chi, double gamma) {
    if (omega == 0.0) throw DomainError("scatter_half_line: omega = 0");
    if (!(gamma > 0.0)) throw DomainError("scatter_half_line: gamma must be positive");
    const cplx z = 1.0 + chi;
    if (std::abs(z) == 0.0) throw PreconditionError("scatter_half_line: degenerate medium, 1 + chi_hat = 0");
    ScatteringSolution s;
    s.omega = omega;
    s.gamma = gamma;
    s.chi = chi;
    s.k_lt = omega / std::sqrt(gamma);
    cplx rho = std::sqrt(z);
    // principal root; on the negative real axis pick the branch with Im k_gt >= 0
    if (z.imag() == 0.0 && z.real() < 0.0) rho = cplx(0.0, std::sqrt(-z.real()) * (omega > 0.0 ? 1.0 : -1.0));
    s.rho = rho;
    s.k_gt = rho * s.k_lt;
    s.r = (1.0 - rho) / (1.0 + rho);
    s.v = 2.0 / (1.0 + rho);
    return s;
}

inline ScatteringSolution scatter_half_line(double omega, const SusceptibilityModel& m, double gamma) {
    return scatter_half_line(omega, is_zero(m) ? cplx(0.0) : chi_hat(m, omega), gamma);
}

// ---------------------------------------------------------------------------
// Fourier-Laplace check

struct FourierLaplaceReport {
    cplx zeta;
    double residual = 0.0;  // max |gamma D2 phi~ + zeta^2 (1 + chi_hat) phi~ + f~|
    double relative = 0.0;  // residual / max |f~|
    double tail = 0.0;      // bound on the truncated transform, relative to max |phi~|
    std::vector<cplx> phi_t, f_t;
};

/// phi~(x, zeta) = int e^{i zeta t} phi dt by the trapezoid rule over the snapshots
/// (which must be equally spaced and should be every step), f~ likewise.
inline FourierLaplaceReport verify_fourier_laplace(const Trajectory& tr, const MaterialProfile& mat, double gamma,
                                                   const DrivingForce& f, cplx zeta, double tol = 1e-6) {
    if (!(zeta.imag() > 0.0)) throw DomainError("verify_fourier_laplace: Im zeta must be positive");
    const std::size_t K = tr.times.size();
    if (K < 3) throw PreconditionError("verify_fourier_laplace: need at least 3 snapshots");
    const double h = tr.times[1] - tr.times[0];
    for (std::size_t k = 2; k < K; ++k)
        if (std::abs(tr.times[k] - tr.times[k - 1] - h) > 1e-9 * h)
            throw PreconditionError("verify_fourier_laplace: snapshots must be equally spaced");
    const Grid1D& g = tr.grid;
    FourierLaplaceReport rep;
    rep.zeta = zeta;
    rep.phi_t.assign(g.n, 0.0);
    rep.f_t.assign(g.n, 0.0);
    const cplx i(0.0, 1.0);
    for (std::size_t k = 0; k < K; ++k) {
        const double w = (k == 0 || k == K - 1) ? 0.5 * h : h;
        const cplx e = w * std::exp(i * zeta * tr.times[k]);
        const auto fs = f.sample(g, tr.times[k]);
        for (std::size_t j = 0; j < g.n; ++j) {
            rep.phi_t[j] += e * tr.phi[k][j];
            rep.f_t[j] += e * fs[j];
        }
    }
    double phimax = 0.0, fmax = 0.0, last = 0.0;
    for (std::size_t j = 0; j < g.n; ++j) {
        phimax = std::max(phimax, std::abs(rep.phi_t[j]));
        fmax = std::max(fmax, std::abs(rep.f_t[j]));
        last = std::max(last, std::abs(tr.phi.back()[j]));
    }
    const Support sp = f.support();
    if (!f.is_zero() && tr.times.back() < sp.t1)
        throw PreconditionError("verify_fourier_laplace: trajectory ends while the force is on");
    rep.tail = std::exp(-zeta.imag() * tr.times.back()) * last / zeta.imag() / std::max(phimax, 1e-300);
    if (phimax > 0.0 && rep.tail > tol)
        throw PreconditionError("verify_fourier_laplace: trajectory too short for Im zeta = " +
                                std::to_string(zeta.imag()) + " (tail " + std::to_string(rep.tail) + ")");
    const auto chi = detail::chi_nodes(mat, g, zeta);
    const std::size_t lo = g.periodic() ? 0 : 1, hi = g.periodic() ? g.n : g.n - 1;
    for (std::size_t j = lo; j < hi; ++j) {
        if (g.in_sponge(j)) continue;
        const cplx d2 = (rep.phi_t[(j + 1) % g.n] - 2.0 * rep.phi_t[j] + rep.phi_t[(j + g.n - 1) % g.n]) /
                        (g.dx() * g.dx());
        const cplx r = gamma * d2 + zeta * zeta * (1.0 + chi[j]) * rep.phi_t[j] + rep.f_t[j];
        rep.residual = std::max(rep.residual, std::abs(r));
    }
    rep.relative = fmax > 0.0 ? rep.residual / fmax : rep.residual;
    return rep;
}

// ---------------------------------------------------------------------------
// Modes in the extended dynamics

/// Complex phase point on a HiddenLattice, layout as ExtendedState.
struct ComplexLatticeState {
    double omega = 0.0;
    std::vector<cplx> phi, pi, psi, theta;
};

/// Fill pi = -i omega phi + Delta and theta = -i omega psi from phi and psi.
inline ComplexLatticeState lattice_mode(const Grid1D& g, const HiddenLattice& lat, double omega,
                                        std::vector<cplx> phi,
                                        const std::function<std::vector<cplx>(std::size_t col)>& psi_column) {
    if (phi.size() != g.n) throw PreconditionError("lattice_mode: phi does not match the grid");
    ComplexLatticeState z;
    z.omega = omega;
    z.phi = std::move(phi);
    z.pi.resize(g.n);
    const cplx mi(0.0, -omega);
    for (std::size_t i = 0; i < g.n; ++i) z.pi[i] = mi * z.phi[i];
    const std::size_t M = lat.M();
    z.psi.assign(lat.columns() * M, 0.0);
    z.theta.assign(lat.columns() * M, 0.0);
    for (std::size_t c = 0; c < lat.columns(); ++c) {
        auto col = psi_column(c);
        if (col.size() != M) throw PreconditionError("lattice_mode: hidden column has the wrong length");
        const auto& w = lat.weights(c);
        cplx read = 0.0;
        for (std::size_t j = 0; j < M; ++j) {
            z.psi[c * M + j] = col[j];
            z.theta[c * M + j] = mi * col[j];
            read += w[j] * col[j];
        }
        z.pi[lat.node_of(c)] += lat.ds() * read;
    }
    return z;
}

/// Plane wave phi0 e^{i k x} with hidden columns built from the lattice coupling. The
/// wave should be constructed with coupling_chi_hat(c, omega, J) for consistency.
inline ComplexLatticeState plane_wave_on_lattice(const PlaneWave& pw, const Grid1D& g, const HiddenLattice& lat) {
    if (!lat.homogeneous(g)) throw PreconditionError("plane wave: lattice coupling is not homogeneous");
    std::vector<cplx> phi(g.n);
    const cplx i(0.0, 1.0);
    for (std::size_t n = 0; n < g.n; ++n) phi[n] = pw.phi0 * std::exp(i * pw.k * g.x(n));
    std::vector<cplx> col0;
    if (lat.columns() > 0) {
        const HiddenKernel hk = hidden_kernel(lat.coupling_of(0), pw.omega, lat.J());
        for (long j = -lat.J(); j <= lat.J(); ++j) col0.push_back(hidden_profile(hk, 1.0, pw.g0() / pw.phi0, j));
    }
    return lattice_mode(g, lat, pw.omega, phi, [&](std::size_t c) {
        std::vector<cplx> col(col0);
        const cplx f = phi[lat.node_of(c)];
        for (auto& v : col) v *= f;
        return col;
    });
}

/// Causal scattering mode (incident amplitude 1) with hidden columns from the lattice
/// couplings. Use the lattice chi_hat for the solution.
inline ComplexLatticeState scattering_on_lattice(const ScatteringSolution& sc, const Grid1D& g,
                                                 const HiddenLattice& lat) {
    std::vector<cplx> phi(g.n);
    for (std::size_t n = 0; n < g.n; ++n) phi[n] = sc.phi(g.x(n));
    std::vector<HiddenKernel> kernels;
    for (const auto& c : lat.couplings()) kernels.push_back(hidden_kernel(c, sc.omega, lat.J()));
    return lattice_mode(g, lat, sc.omega, phi, [&](std::size_t c) {
        const HiddenKernel& hk = kernels[lat.coupling_index(c)];
        const cplx f = phi[lat.node_of(c)];
        std::vector<cplx> col;
        for (long j = -lat.J(); j <= lat.J(); ++j) col.push_back(hidden_profile(hk, f, f, j));
        return col;
    });
}

struct PeriodicityReport {
    double deviation = 0.0; // max |Z(t) e^{i omega t} - Z(0)| / max |Z(0)| over the window
    double reference = 0.0; // max |Z(0)| over the window
    double x_lo = 0.0, x_hi = 0.0;
    std::size_t samples = 0;
};

/// Evolve the real and imaginary parts of z0 for time T (zero force) with the hidden
/// string ends, and for non-periodic grids the physical ends, prescribed as the mode's
/// values times e^{-i omega t}. The deviation is measured on phi and psi for nodes
/// farther than v T from a physical end.
inline PeriodicityReport mode_in_dynamics(const Grid1D& g, const HiddenLattice& lat, double gamma,
                                          const ComplexLatticeState& z0, double T, double dt,
                                          std::size_t sample_stride = 1) {
    const std::size_t M = lat.M();
    if (z0.phi.size() != g.n || z0.psi.size() != lat.columns() * M)
        throw PreconditionError("mode_in_dynamics: state does not match the lattice");
    const double v = 1.0 / std::sqrt(gamma);
    PeriodicityReport rep;
    rep.x_lo = g.periodic() ? g.x_min : g.x_min + v * T;
    rep.x_hi = g.periodic() ? g.x_max : g.x_max - v * T;
    std::vector<std::size_t> window;
    for (std::size_t i = 0; i < g.n; ++i)
        if (g.periodic() || (g.x(i) >= rep.x_lo && g.x(i) <= rep.x_hi)) window.push_back(i);
    if (window.empty()) throw PreconditionError("mode_in_dynamics: observation window is empty");

    const double omega = z0.omega;
    std::vector<ExtendedEngine> parts;
    for (int part = 0; part < 2; ++part) {
        auto pick = [part](const std::vector<cplx>& u) {
            std::vector<double> r(u.size());
            for (std::size_t i = 0; i < u.size(); ++i) r[i] = part == 0 ? u[i].real() : u[i].imag();
            return r;
        };
        ExtendedEngine e(g, lat, gamma, DrivingForce{}, dt, 0.0);
        auto& st = e.state();
        st.phi = pick(z0.phi);
        st.pi = pick(z0.pi);
        st.psi = pick(z0.psi);
        st.theta = pick(z0.theta);
        e.hidden_boundary = [&z0, &lat, omega, part, M](double t, ExtendedState& s) {
            const cplx ph = std::exp(cplx(0.0, -omega * t));
            for (std::size_t c = 0; c < lat.columns(); ++c)
                for (std::size_t j : {std::size_t(0), M - 1}) {
                    const cplx z = z0.psi[c * M + j] * ph;
                    s.psi[c * M + j] = part == 0 ? z.real() : z.imag();
                }
        };
        if (!g.periodic())
            e.physical_boundary = [&z0, &g, omega, part](double t, ExtendedState& s) {
                const cplx ph = std::exp(cplx(0.0, -omega * t));
                for (std::size_t i : {std::size_t(0), g.n - 1}) {
                    const cplx z = z0.phi[i] * ph;
                    s.phi[i] = part == 0 ? z.real() : z.imag();
                }
            };
        parts.push_back(std::move(e));
    }

    // Columns under the window.
    std::vector<std::size_t> cols;
    for (std::size_t i : window)
        if (lat.column_of(i) >= 0) cols.push_back(std::size_t(lat.column_of(i)));
    for (std::size_t i : window) rep.reference = std::max(rep.reference, std::abs(z0.phi[i]));
    for (std::size_t c : cols)
        for (std::size_t j = 0; j < M; ++j) rep.reference = std::max(rep.reference, std::abs(z0.psi[c * M + j]));
    if (rep.reference == 0.0) return rep;

    const std::size_t steps = step_count(0.0, T, dt);
    const std::size_t stride = std::max<std::size_t>(sample_stride, 1);
    double worst = 0.0;
    for (std::size_t n = 1; n <= steps; ++n) {
        for (auto& e : parts) e.step();
        if (n % stride != 0 && n != steps) continue;
        ++rep.samples;
        const double t = parts[0].t();
        const cplx ph = std::exp(cplx(0.0, omega * t));
        const auto& X = parts[0].state();
        const auto& Y = parts[1].state();
        for (std::size_t i : window)
            worst = std::max(worst, std::abs(cplx(X.phi[i], Y.phi[i]) * ph - z0.phi[i]));
        for (std::size_t c : cols)
            for (std::size_t j = 0; j < M; ++j) {
                const std::size_t q = c * M + j;
                worst = std::max(worst, std::abs(cplx(X.psi[q], Y.psi[q]) * ph - z0.psi[q]));
            }
    }
    rep.deviation = worst / rep.reference;
    return rep;
}

} // namespace tdd
