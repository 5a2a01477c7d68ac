#pragma once

// Spatial grid and external driving forces.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "error.hpp"
#include "susceptibility.hpp"

namespace tdd {

enum class Boundary { Dirichlet, Sponge, Periodic };

inline std::string boundary_name(Boundary b) {
    switch (b) {
    case Boundary::Dirichlet: return "dirichlet";
    case Boundary::Sponge: return "sponge";
    case Boundary::Periodic: return "periodic";
    }
    return "?";
}

/// Uniform x-grid. For Dirichlet and sponge grids the end nodes sit on x_min and x_max
/// and hold phi = 0. A periodic grid has n nodes of spacing (x_max - x_min) / n.
struct Grid1D {
    double x_min = -1.0;
    double x_max = 1.0;
    std::size_t n = 3;
    Boundary boundary = Boundary::Dirichlet;
    double sponge_width = 0.0;    // length of each absorbing layer (sponge only)
    double sponge_strength = 0.0; // peak damping rate at the outer edge, 1/time

    void validate() const {
        if (n < 3) throw PreconditionError("grid: n_x must be >= 3");
        if (!(x_max > x_min)) throw PreconditionError("grid: x_max must exceed x_min");
        if (boundary == Boundary::Sponge) {
            if (!(sponge_width > 0.0) || !(sponge_strength >= 0.0))
                throw PreconditionError("grid: sponge needs width > 0 and strength >= 0");
            if (2.0 * sponge_width >= x_max - x_min) throw PreconditionError("grid: sponge layers overlap");
        }
    }

    bool periodic() const { return boundary == Boundary::Periodic; }
    double dx() const { return periodic() ? (x_max - x_min) / double(n) : (x_max - x_min) / double(n - 1); }
    double x(std::size_t i) const { return x_min + double(i) * dx(); }

    /// Nodes advanced by the integrators (all nodes when periodic, interior otherwise).
    std::size_t first_active() const { return periodic() ? 0 : 1; }
    std::size_t last_active() const { return periodic() ? n - 1 : n - 2; }

    /// Quadratic damping ramp, zero outside the layers.
    double sponge(std::size_t i) const {
        if (boundary != Boundary::Sponge) return 0.0;
        const double xi = x(i);
        double d = std::max(x_min + sponge_width - xi, xi - (x_max - sponge_width));
        if (d <= 0.0) return 0.0;
        d /= sponge_width;
        return sponge_strength * d * d;
    }
    bool in_sponge(std::size_t i) const {
        if (boundary != Boundary::Sponge) return false;
        const double xi = x(i);
        return xi < x_min + sponge_width || xi > x_max - sponge_width;
    }

    std::vector<double> nodes() const {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = x(i);
        return v;
    }
};

// ---------------------------------------------------------------------------
// Force shapes

/// exp(-(u - center)^2 / (2 width^2)), hard-truncated at |u - center| > cut * width.
struct GaussianShape {
    double center = 0.0;
    double width = 1.0;
    double cut = 6.0;

    double lo() const { return center - cut * width; }
    double hi() const { return center + cut * width; }
    double value(double u) const {
        if (u < lo() || u > hi()) return 0.0;
        const double z = (u - center) / width;
        return std::exp(-0.5 * z * z);
    }
    /// Integral over [a, b] of the truncated shape.
    double integral(double a, double b) const {
        a = std::max(a, lo());
        b = std::min(b, hi());
        if (b <= a) return 0.0;
        const double k = width * std::sqrt(pi / 2.0);
        const double r = 1.0 / (width * std::sqrt(2.0));
        return k * (std::erf((b - center) * r) - std::erf((a - center) * r));
    }
};

/// Indicator of [lo, hi].
struct BoxShape {
    double a = 0.0;
    double b = 1.0;

    double lo() const { return a; }
    double hi() const { return b; }
    double value(double u) const { return (u >= a && u <= b) ? 1.0 : 0.0; }
    double integral(double p, double q) const { return std::max(0.0, std::min(q, b) - std::max(p, a)); }
};

/// sin(omega (t - t_on)) switched on at t_on with a raised-cosine ramp of length ramp.
struct HarmonicShape {
    double omega = 1.0;
    double t_on = 0.0;
    double ramp = 0.0;

    double lo() const { return t_on; }
    double hi() const { return infinity; }
    double envelope(double t) const {
        if (t < t_on) return 0.0;
        if (ramp <= 0.0 || t >= t_on + ramp) return 1.0;
        return 0.5 * (1.0 - std::cos(pi * (t - t_on) / ramp));
    }
    double value(double t) const { return envelope(t) * std::sin(omega * (t - t_on)); }
};

using SpaceShape = std::variant<GaussianShape, BoxShape>;
using TimeShape = std::variant<GaussianShape, BoxShape, HarmonicShape>;

/// f(x, t) = amplitude X(x) T(t).
struct SeparableForce {
    double amplitude = 1.0;
    SpaceShape space = GaussianShape{};
    TimeShape time = GaussianShape{};
};

/// Samples f(t_k, x_j) on a rectangular table (row-major in t), bilinear in between,
/// zero outside the table.
struct TabulatedForce {
    std::vector<double> t;
    std::vector<double> x;
    std::vector<double> f;
};

struct Support {
    double t0, t1, x_a, x_b;
};

class DrivingForce {
public:
    DrivingForce() = default;
    DrivingForce(SeparableForce f) : f_(std::move(f)) {}
    DrivingForce(TabulatedForce f) : f_(std::move(f)) {
        const auto& tf = std::get<TabulatedForce>(f_);
        if (tf.t.size() < 2 || tf.x.size() < 2 || tf.f.size() != tf.t.size() * tf.x.size())
            throw DomainError("tabulated force: table shape mismatch");
        if (!std::is_sorted(tf.t.begin(), tf.t.end()) || !std::is_sorted(tf.x.begin(), tf.x.end()))
            throw DomainError("tabulated force: axes must be increasing");
    }

    static DrivingForce gaussian_pulse(double amplitude, double x_center, double x_width, double t_center,
                                       double t_width, double cut = 6.0) {
        return SeparableForce{amplitude, GaussianShape{x_center, x_width, cut}, GaussianShape{t_center, t_width, cut}};
    }
    static DrivingForce box(double amplitude, double x_a, double x_b, double t0, double t1) {
        return SeparableForce{amplitude, BoxShape{x_a, x_b}, BoxShape{t0, t1}};
    }

    bool is_zero() const {
        if (std::holds_alternative<std::monostate>(f_)) return true;
        if (auto* s = std::get_if<SeparableForce>(&f_)) return s->amplitude == 0.0;
        const auto& tf = std::get<TabulatedForce>(f_);
        return std::all_of(tf.f.begin(), tf.f.end(), [](double v) { return v == 0.0; });
    }

    const SeparableForce* separable() const { return std::get_if<SeparableForce>(&f_); }
    const TabulatedForce* tabulated() const { return std::get_if<TabulatedForce>(&f_); }

    double operator()(double x, double t) const {
        if (auto* s = separable())
            return s->amplitude * std::visit([&](const auto& sh) { return sh.value(x); }, s->space) *
                   std::visit([&](const auto& sh) { return sh.value(t); }, s->time);
        if (auto* tf = tabulated()) return table_value(*tf, x, t);
        return 0.0;
    }

    /// Spatial factor and temporal factor of a separable force (amplitude in the time part).
    double space_factor(double x) const {
        return std::visit([&](const auto& sh) { return sh.value(x); }, separable()->space);
    }
    double time_factor(double t) const {
        auto* s = separable();
        return s->amplitude * std::visit([&](const auto& sh) { return sh.value(t); }, s->time);
    }

    /// Declared compact support; t1 may be infinite for a harmonic source.
    Support support() const {
        if (auto* s = separable()) {
            auto [xa, xb] = std::visit([](const auto& sh) { return std::pair{sh.lo(), sh.hi()}; }, s->space);
            auto [t0, t1] = std::visit([](const auto& sh) { return std::pair{sh.lo(), sh.hi()}; }, s->time);
            return {t0, t1, xa, xb};
        }
        if (auto* tf = tabulated()) return {tf->t.front(), tf->t.back(), tf->x.front(), tf->x.back()};
        return {0.0, 0.0, 0.0, 0.0};
    }

    std::vector<double> sample(const Grid1D& g, double t) const {
        std::vector<double> v(g.n, 0.0);
        if (is_zero()) return v;
        const Support sp = support();
        if (t < sp.t0 || t > sp.t1) return v;
        for (std::size_t i = 0; i < g.n; ++i) v[i] = (*this)(g.x(i), t);
        return v;
    }

private:
    static double table_value(const TabulatedForce& tf, double x, double t) {
        if (t < tf.t.front() || t > tf.t.back() || x < tf.x.front() || x > tf.x.back()) return 0.0;
        auto locate = [](const std::vector<double>& ax, double u) {
            std::size_t i = std::size_t(std::upper_bound(ax.begin(), ax.end(), u) - ax.begin());
            i = std::clamp<std::size_t>(i, 1, ax.size() - 1);
            double w = (u - ax[i - 1]) / (ax[i] - ax[i - 1]);
            return std::pair{i - 1, w};
        };
        auto [it, wt] = locate(tf.t, t);
        auto [ix, wx] = locate(tf.x, x);
        const std::size_t nx = tf.x.size();
        auto at = [&](std::size_t a, std::size_t b) { return tf.f[a * nx + b]; };
        return (1 - wt) * ((1 - wx) * at(it, ix) + wx * at(it, ix + 1)) +
               wt * ((1 - wx) * at(it + 1, ix) + wx * at(it + 1, ix + 1));
    }

    std::variant<std::monostate, SeparableForce, TabulatedForce> f_;
};

} // namespace tdd
