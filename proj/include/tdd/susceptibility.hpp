#pragma once

// Susceptibility (memory kernel) models chi(x, tau), their half-line Fourier-Laplace
// transforms, the friction spectrum D(omega) = omega Im chi_hat(omega), and the two
// spectral consistency checks: power dissipation and Kramers-Kronig.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "error.hpp"

namespace tdd {

using cplx = std::complex<double>;
inline constexpr double pi = std::numbers::pi;
inline constexpr double infinity = std::numeric_limits<double>::infinity();

struct ZeroKernel {};

/// chi(tau) = alpha: the ordinary viscously damped string.
struct ConstantKernel {
    double alpha = 0.0;
};

/// chi(tau) = alpha exp(-nu tau).
struct DebyeKernel {
    double alpha = 0.0;
    double nu = 0.0;
};

/// Piecewise-linear kernel on a tau grid starting at 0. Beyond the last node the kernel
/// is taken as zero; the declared bound |chi(tau)| <= tail_c exp(-tail_mu tau) quantifies
/// what that truncation discards.
struct TabulatedKernel {
    std::vector<double> tau;
    std::vector<double> chi;
    double tail_c = 0.0;
    double tail_mu = 0.0;
};

using SusceptibilityModel = std::variant<ZeroKernel, ConstantKernel, DebyeKernel, TabulatedKernel>;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline std::string kind_name(const SusceptibilityModel& m) {
    return std::visit(overloaded{[](const ZeroKernel&) { return std::string("zero"); },
                                 [](const ConstantKernel&) { return std::string("constant"); },
                                 [](const DebyeKernel&) { return std::string("debye"); },
                                 [](const TabulatedKernel&) { return std::string("tabulated"); }},
                      m);
}

inline bool is_zero(const SusceptibilityModel& m) {
    return std::visit(overloaded{[](const ZeroKernel&) { return true; },
                                 [](const ConstantKernel& k) { return k.alpha == 0.0; },
                                 [](const DebyeKernel& k) { return k.alpha == 0.0; },
                                 [](const TabulatedKernel& k) {
                                     return std::all_of(k.chi.begin(), k.chi.end(),
                                                        [](double v) { return v == 0.0; });
                                 }},
                      m);
}

/// Throws DomainError when the model parameters violate their invariants.
inline void validate(const SusceptibilityModel& m) {
    std::visit(overloaded{[](const ZeroKernel&) {},
                          [](const ConstantKernel& k) {
                              if (!(k.alpha >= 0.0)) throw DomainError("constant kernel: alpha must be >= 0");
                          },
                          [](const DebyeKernel& k) {
                              if (!(k.alpha >= 0.0)) throw DomainError("debye kernel: alpha must be >= 0");
                              if (!(k.nu >= 0.0)) throw DomainError("debye kernel: nu must be >= 0");
                          },
                          [](const TabulatedKernel& k) {
                              if (k.tau.size() < 2 || k.tau.size() != k.chi.size())
                                  throw DomainError("tabulated kernel: need >= 2 (tau, chi) pairs");
                              if (k.tau.front() != 0.0)
                                  throw DomainError("tabulated kernel: tau grid must start at 0");
                              for (std::size_t i = 1; i < k.tau.size(); ++i)
                                  if (!(k.tau[i] > k.tau[i - 1]))
                                      throw DomainError("tabulated kernel: tau grid must be strictly increasing");
                              for (double v : k.chi)
                                  if (!std::isfinite(v)) throw DomainError("tabulated kernel: non-finite sample");
                              if (!(k.tail_c >= 0.0) || !(k.tail_mu >= 0.0))
                                  throw DomainError("tabulated kernel: tail bound must be non-negative");
                          }},
               m);
}

// ---------------------------------------------------------------------------
// Time domain

inline double chi_time(const SusceptibilityModel& m, double tau) {
    if (tau < 0.0) throw DomainError("chi_time: negative lag");
    return std::visit(overloaded{[](const ZeroKernel&) { return 0.0; },
                                 [](const ConstantKernel& k) { return k.alpha; },
                                 [&](const DebyeKernel& k) { return k.alpha * std::exp(-k.nu * tau); },
                                 [&](const TabulatedKernel& k) {
                                     if (tau > k.tau.back()) return 0.0;
                                     auto it = std::upper_bound(k.tau.begin(), k.tau.end(), tau);
                                     if (it == k.tau.end()) return k.chi.back();
                                     std::size_t i = static_cast<std::size_t>(it - k.tau.begin());
                                     double w = (tau - k.tau[i - 1]) / (k.tau[i] - k.tau[i - 1]);
                                     return (1.0 - w) * k.chi[i - 1] + w * k.chi[i];
                                 }},
                      m);
}

/// d chi / d tau for tau > 0 (one-sided at table nodes).
inline double chi_time_derivative(const SusceptibilityModel& m, double tau) {
    if (tau < 0.0) throw DomainError("chi_time_derivative: negative lag");
    return std::visit(overloaded{[](const ZeroKernel&) { return 0.0; },
                                 [](const ConstantKernel&) { return 0.0; },
                                 [&](const DebyeKernel& k) { return -k.alpha * k.nu * std::exp(-k.nu * tau); },
                                 [&](const TabulatedKernel& k) {
                                     if (tau >= k.tau.back()) return 0.0;
                                     auto it = std::upper_bound(k.tau.begin(), k.tau.end(), tau);
                                     std::size_t i = static_cast<std::size_t>(it - k.tau.begin());
                                     return (k.chi[i] - k.chi[i - 1]) / (k.tau[i] - k.tau[i - 1]);
                                 }},
                      m);
}

/// Lag beyond which |chi| stays below rel_tol times its scale. Infinite for the
/// constant kernel and for nu = 0.
inline double memory_extent(const SusceptibilityModel& m, double rel_tol = 1e-10) {
    return std::visit(overloaded{[](const ZeroKernel&) { return 0.0; },
                                 [](const ConstantKernel& k) { return k.alpha == 0.0 ? 0.0 : infinity; },
                                 [&](const DebyeKernel& k) {
                                     if (k.alpha == 0.0) return 0.0;
                                     return k.nu > 0.0 ? std::log(1.0 / rel_tol) / k.nu : infinity;
                                 },
                                 [](const TabulatedKernel& k) { return k.tau.back(); }},
                      m);
}

// ---------------------------------------------------------------------------
// Frequency domain

namespace detail {

// integral_0^1 exp(z t) dt and integral_0^1 t exp(z t) dt, series near z = 0.
inline std::pair<cplx, cplx> exp_moments(cplx z) {
    if (std::abs(z) < 0.25) {
        cplx e1 = 0.0, e2 = 0.0, term = 1.0; // term = z^n / n!
        for (int n = 0; n < 20; ++n) {
            e1 += term / double(n + 1);
            e2 += term / double(n + 2);
            term *= z / double(n + 1);
        }
        return {e1, e2};
    }
    cplx ez = std::exp(z);
    return {(ez - 1.0) / z, (ez * (z - 1.0) + 1.0) / (z * z)};
}

inline cplx tabulated_transform(const TabulatedKernel& k, cplx zeta) {
    const std::size_t n = k.tau.size();
    const double step = (k.tau.back() - k.tau.front()) / double(n - 1);
    bool uniform = true;
    for (std::size_t i = 0; i + 1 < n && uniform; ++i)
        uniform = std::abs(k.tau[i + 1] - k.tau[i] - step) <= 1e-12 * step;
    if (uniform) {
        // phase by recurrence, moments once
        const cplx iz = cplx(0.0, 1.0) * zeta;
        auto [e1, e2] = exp_moments(iz * step);
        const cplx rot = std::exp(iz * step);
        cplx ph = std::exp(iz * k.tau.front()), sum = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (i % 256 == 0) ph = std::exp(iz * (k.tau.front() + double(i) * step));
            sum += ph * (k.chi[i] * (e1 - e2) + k.chi[i + 1] * e2);
            ph *= rot;
        }
        return step * sum;
    }
    cplx sum = 0.0;
    for (std::size_t i = 0; i + 1 < k.tau.size(); ++i) {
        double a = k.tau[i], h = k.tau[i + 1] - a;
        auto [e1, e2] = exp_moments(cplx(0.0, 1.0) * zeta * h);
        sum += std::exp(cplx(0.0, 1.0) * zeta * a) * h * (k.chi[i] * (e1 - e2) + k.chi[i + 1] * e2);
    }
    return sum;
}

} // namespace detail

/// chi_hat(zeta) = int_0^inf exp(i zeta tau) chi(tau) dtau for Im zeta >= 0.
/// Real zeta is the boundary value from the upper half plane.
inline cplx chi_hat(const SusceptibilityModel& m, cplx zeta) {
    if (zeta.imag() < 0.0) throw DomainError("chi_hat: Im zeta < 0");
    return std::visit(overloaded{[](const ZeroKernel&) { return cplx(0.0); },
                                 [&](const ConstantKernel& k) {
                                     if (k.alpha == 0.0) return cplx(0.0);
                                     if (zeta == cplx(0.0)) throw PoleError("chi_hat: constant kernel at zeta = 0");
                                     return cplx(0.0, k.alpha) / zeta;
                                 },
                                 [&](const DebyeKernel& k) {
                                     if (k.alpha == 0.0) return cplx(0.0);
                                     cplx den = k.nu - cplx(0.0, 1.0) * zeta;
                                     if (den == cplx(0.0)) throw PoleError("chi_hat: debye kernel pole");
                                     return k.alpha / den;
                                 },
                                 [&](const TabulatedKernel& k) { return detail::tabulated_transform(k, zeta); }},
                      m);
}

inline cplx chi_hat(const SusceptibilityModel& m, double omega) { return chi_hat(m, cplx(omega, 0.0)); }

/// Upper bound on |chi_hat| error caused by truncating a tabulated kernel at its last node.
inline double laplace_tail_bound(const SusceptibilityModel& m, cplx zeta) {
    if (auto* k = std::get_if<TabulatedKernel>(&m)) {
        double rate = k->tail_mu + zeta.imag();
        if (k->tail_c == 0.0) return 0.0;
        if (rate <= 0.0) return infinity;
        return k->tail_c * std::exp(-rate * k->tau.back()) / rate;
    }
    return 0.0;
}

/// Numerical Laplace transform of chi_time by adaptive Gauss-Kronrod panels. Independent
/// of the closed forms used by chi_hat; the two routes cross-check each other.
inline cplx chi_hat_quadrature(const SusceptibilityModel& m, cplx zeta, double tol = 1e-14) {
    if (zeta.imag() < 0.0) throw DomainError("chi_hat_quadrature: Im zeta < 0");
    double end = memory_extent(m, tol);
    if (zeta.imag() > 0.0) end = std::min(end, std::log(1.0 / tol) / zeta.imag());
    if (!std::isfinite(end)) throw DomainError("chi_hat_quadrature: kernel does not decay and Im zeta = 0");
    if (end == 0.0) return 0.0;

    using boost::math::quadrature::gauss_kronrod;
    double panel = std::max(0.25, std::min(2.0, pi / std::max(std::abs(zeta.real()), 1e-300)));
    std::vector<double> breaks{0.0};
    if (auto* k = std::get_if<TabulatedKernel>(&m)) breaks = k->tau;
    else
        for (double a = panel; a < end; a += panel) breaks.push_back(a);
    if (breaks.back() < end) breaks.push_back(end);

    cplx total = 0.0;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        double a = breaks[i], b = breaks[i + 1];
        auto re = [&](double t) { return (std::exp(cplx(0.0, 1.0) * zeta * t)).real() * chi_time(m, t); };
        auto im = [&](double t) { return (std::exp(cplx(0.0, 1.0) * zeta * t)).imag() * chi_time(m, t); };
        total += cplx(gauss_kronrod<double, 61>::integrate(re, a, b, 6, 1e-13),
                      gauss_kronrod<double, 61>::integrate(im, a, b, 6, 1e-13));
    }
    return total;
}

/// D(omega) = omega Im chi_hat(omega), the Fourier transform of the friction function.
/// The constant kernel is the eta -> 0 limit: D = alpha for omega != 0.
inline double friction_spectrum(const SusceptibilityModel& m, double omega) {
    if (omega == 0.0) return 0.0;
    return omega * chi_hat(m, omega).imag();
}

struct SpectralSample {
    double omega;
    cplx chi_hat;
    double friction;
};

inline SpectralSample spectral_sample(const SusceptibilityModel& m, double omega) {
    cplx c = omega == 0.0 && std::holds_alternative<ConstantKernel>(m) ? cplx(0.0) : chi_hat(m, omega);
    return {omega, c, omega == 0.0 ? 0.0 : omega * c.imag()};
}

// ---------------------------------------------------------------------------
// Checks

struct PdcReport {
    double min_value = 0.0;
    double worst_omega = 0.0;
    double max_abs = 0.0;
    double tolerance = 0.0;
    bool pass = true;
};

/// Power dissipation condition on a frequency grid: pass iff
/// min D(omega) >= -rel_tol * max |D(omega)|.
inline PdcReport check_pdc(const SusceptibilityModel& m, std::span<const double> omegas,
                           double rel_tol = 1e-12) {
    if (omegas.empty()) throw PreconditionError("check_pdc: empty frequency grid");
    PdcReport r;
    r.min_value = infinity;
    for (double w : omegas) {
        double d = friction_spectrum(m, w);
        r.max_abs = std::max(r.max_abs, std::abs(d));
        if (d < r.min_value) {
            r.min_value = d;
            r.worst_omega = w;
        }
    }
    r.tolerance = rel_tol * std::max(r.max_abs, std::numeric_limits<double>::min());
    r.pass = r.min_value >= -r.tolerance;
    return r;
}

inline std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i)
        g[i] = n == 1 ? lo : lo + (hi - lo) * double(i) / double(n - 1);
    return g;
}

namespace detail {

// (1/pi) * integral over |sigma| > cutoff of D(sigma) / (sigma - omega), symmetric at infinity.
inline double kk_tail(const SusceptibilityModel& m, double omega, double cutoff) {
    double log_ratio = std::log((cutoff + omega) / (cutoff - omega));
    return std::visit(overloaded{[](const ZeroKernel&) { return 0.0; },
                                 [&](const ConstantKernel& k) { return k.alpha * log_ratio / pi; },
                                 [&](const DebyeKernel& k) {
                                     double w2 = omega * omega, n2 = k.nu * k.nu;
                                     if (w2 + n2 == 0.0) return 0.0;
                                     double a = w2 / (w2 + n2), b = n2 / (w2 + n2);
                                     double arc = k.nu > 0.0 ? 2.0 * b * omega / k.nu * std::atan(k.nu / cutoff) : 0.0;
                                     return k.alpha * (a * log_ratio + arc) / pi;
                                 },
                                 [&](const TabulatedKernel&) {
                                     return friction_spectrum(m, cutoff) * log_ratio / pi;
                                 }},
                      m);
}

} // namespace detail

struct KramersKronigReport {
    double residual = 0.0;
    double worst_omega = 0.0;
    std::size_t evaluated = 0;
};

/// max over interior grid points of
///   | omega Re chi_hat(omega) - (1/pi) PV int_{-cutoff}^{cutoff} D(sigma)/(sigma - omega) dsigma - tail |.
/// The grid must be uniform and symmetric about 0; its spacing is the quadrature step.
/// The principal value uses singularity subtraction on nodes symmetric about omega,
/// with the removed cell filled by the centered derivative of D.
inline KramersKronigReport kramers_kronig_report(const SusceptibilityModel& m, std::span<const double> omegas,
                                                 double cutoff) {
    const std::size_t n = omegas.size();
    if (n < 3) throw PreconditionError("kramers_kronig_residual: need >= 3 grid points");
    const double h = (omegas.back() - omegas.front()) / double(n - 1);
    if (!(h > 0.0)) throw PreconditionError("kramers_kronig_residual: grid must be increasing");
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(omegas[i] + omegas[n - 1 - i]) > 1e-9 * (1.0 + std::abs(omegas[i])))
            throw PreconditionError("kramers_kronig_residual: grid must be symmetric about 0");
        if (std::abs(omegas[i] - (omegas.front() + h * double(i))) > 1e-9 * h)
            throw PreconditionError("kramers_kronig_residual: grid must be uniform");
    }
    if (!(cutoff > omegas.back() + h)) throw PreconditionError("kramers_kronig_residual: cutoff inside the grid");
    KramersKronigReport rep;
    if (is_zero(m)) {
        rep.evaluated = n - 2;
        return rep;
    }

    // Global lattice sigma_j = offset + j h shared by all grid points.
    const double offset = omegas.front() - h * std::floor(omegas.front() / h);
    const long j_lo = static_cast<long>(std::ceil((-cutoff - offset) / h));
    const long j_hi = static_cast<long>(std::floor((cutoff - offset) / h));
    std::vector<double> d(static_cast<std::size_t>(j_hi - j_lo + 1));
    // Continuous extension at 0 (the constant kernel has D = alpha on both sides).
    auto dcont = [&](double s) {
        if (s == 0.0)
            if (auto* c = std::get_if<ConstantKernel>(&m)) return c->alpha;
        return friction_spectrum(m, s);
    };
    for (long j = j_lo; j <= j_hi; ++j) d[static_cast<std::size_t>(j - j_lo)] = dcont(offset + h * double(j));
    const double d_lo = friction_spectrum(m, -cutoff), d_hi = friction_spectrum(m, cutoff);
    const double s_lo = offset + h * double(j_lo), s_hi = offset + h * double(j_hi);

    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double w = omegas[i];
        const long jw = std::lround((w - offset) / h);
        const double dw = d[static_cast<std::size_t>(jw - j_lo)];
        auto g = [&](long j) {
            if (j == jw)
                return (d[static_cast<std::size_t>(j + 1 - j_lo)] - d[static_cast<std::size_t>(j - 1 - j_lo)]) / (2.0 * h);
            double s = offset + h * double(j);
            return (d[static_cast<std::size_t>(j - j_lo)] - dw) / (s - w);
        };
        double integral = 0.0;
        for (long j = j_lo; j < j_hi; ++j) integral += 0.5 * h * (g(j) + g(j + 1));
        // Partial cells out to +-cutoff.
        integral += 0.5 * (s_lo + cutoff) * (g(j_lo) + (d_lo - dw) / (-cutoff - w));
        integral += 0.5 * (cutoff - s_hi) * (g(j_hi) + (d_hi - dw) / (cutoff - w));
        const double pv = integral + dw * std::log((cutoff - w) / (cutoff + w));
        const double rhs = pv / pi + detail::kk_tail(m, w, cutoff);
        const double lhs = w == 0.0 ? 0.0 : w * chi_hat(m, w).real();
        const double res = std::abs(lhs - rhs);
        if (res > rep.residual) {
            rep.residual = res;
            rep.worst_omega = w;
        }
        ++rep.evaluated;
    }
    return rep;
}

inline double kramers_kronig_residual(const SusceptibilityModel& m, std::span<const double> omegas, double cutoff) {
    return kramers_kronig_report(m, omegas, cutoff).residual;
}

// ---------------------------------------------------------------------------
// Spatial profile

/// Piecewise-constant map x -> model. Regions are half-open [x_min, x_max); the first
/// matching region wins, otherwise the background model applies.
class MaterialProfile {
public:
    struct Region {
        double x_min;
        double x_max;
        std::size_t model;
    };

    MaterialProfile() : models_{ZeroKernel{}} {}
    explicit MaterialProfile(SusceptibilityModel background) : models_{std::move(background)} {
        validate(models_.front());
    }

    MaterialProfile& add_region(double x_min, double x_max, SusceptibilityModel m) {
        if (!(x_max > x_min)) throw DomainError("material region: x_max must exceed x_min");
        validate(m);
        models_.push_back(std::move(m));
        regions_.push_back({x_min, x_max, models_.size() - 1});
        return *this;
    }

    std::size_t model_index(double x) const {
        for (const auto& r : regions_)
            if (x >= r.x_min && x < r.x_max) return r.model;
        return 0;
    }
    const SusceptibilityModel& at(double x) const { return models_[model_index(x)]; }
    const std::vector<SusceptibilityModel>& models() const { return models_; }
    const std::vector<Region>& regions() const { return regions_; }

    bool homogeneous() const {
        return std::all_of(regions_.begin(), regions_.end(), [&](const Region& r) {
            return r.x_min == -infinity && r.x_max == infinity;
        }) || regions_.empty();
    }

private:
    std::vector<SusceptibilityModel> models_;
    std::vector<Region> regions_;
};

inline double chi_time(const MaterialProfile& p, double x, double tau) { return chi_time(p.at(x), tau); }
inline cplx chi_hat(const MaterialProfile& p, double x, cplx zeta) { return chi_hat(p.at(x), zeta); }
inline double friction_spectrum(const MaterialProfile& p, double x, double omega) {
    return friction_spectrum(p.at(x), omega);
}

} // namespace tdd
