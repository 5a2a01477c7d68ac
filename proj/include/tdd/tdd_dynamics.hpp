#pragma once

// Memory-kernel wave equation
//   d/dt (phi_t + int_0^inf chi(tau) phi_t(t - tau) dtau) = gamma phi_xx + f
// integrated as phi_t = f_pi, pi_t = gamma phi_xx + f with the material relation
// f_pi + chi * f_pi = pi solved for f_pi at every half step. Also the d'Alembert
// solution of the undamped driven string and the shared trajectory recorder.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "error.hpp"
#include "grid.hpp"
#include "susceptibility.hpp"

namespace tdd {

// ---------------------------------------------------------------------------
// d'Alembert oracle

namespace detail {

template <class F>
double gk_integrate(F&& f, double a, double b, double tol) {
    if (!(b > a)) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 8, tol);
}

// Integrate over [a, b] split at the given breakpoints (those inside the interval).
template <class F>
double gk_piecewise(F&& f, double a, double b, std::vector<double> cuts, double tol) {
    cuts.push_back(a);
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    double sum = 0.0;
    double prev = a;
    for (double c : cuts) {
        if (c <= prev || c > b) continue;
        sum += gk_integrate(f, prev, c, tol);
        prev = c;
    }
    return sum;
}

} // namespace detail

/// phi(x, t) = 1/(2v) int_{-inf}^t int_{x - v(t-t')}^{x + v(t-t')} f(y, t') dy dt', v = 1/sqrt(gamma).
/// Exactly zero when the backward cone misses the force support.
inline double dalembert(const DrivingForce& f, double gamma, double x, double t, double tol = 1e-12) {
    if (!(gamma > 0.0)) throw DomainError("dalembert: gamma must be positive");
    if (f.is_zero()) return 0.0;
    const double v = 1.0 / std::sqrt(gamma);
    const Support sp = f.support();
    const double dist = x < sp.x_a ? sp.x_a - x : (x > sp.x_b ? x - sp.x_b : 0.0);
    const double t_lo = sp.t0;
    const double t_hi = std::min({t, sp.t1, t - dist / v});
    if (!(t_hi > t_lo)) return 0.0;

    std::vector<double> cuts{t - std::abs(x - sp.x_a) / v, t - std::abs(x - sp.x_b) / v};

    if (const SeparableForce* s = f.separable()) {
        if (auto* h = std::get_if<HarmonicShape>(&s->time)) {
            cuts.push_back(h->t_on + h->ramp);
            const double period = 2.0 * pi / std::abs(h->omega);
            for (double c = t_lo + period; c < t_hi; c += period) cuts.push_back(c);
        }
        auto inner = [&](double a, double b) {
            return std::visit([&](const auto& sh) { return sh.integral(a, b); }, s->space);
        };
        auto integrand = [&](double tp) {
            const double half = v * (t - tp);
            return f.time_factor(tp) * inner(x - half, x + half);
        };
        return detail::gk_piecewise(integrand, t_lo, t_hi, cuts, tol) / (2.0 * v);
    }

    const TabulatedForce& tf = *f.tabulated();
    for (double c : tf.t) cuts.push_back(c);
    auto integrand = [&](double tp) {
        const double half = v * (t - tp);
        const double a = std::max(x - half, sp.x_a), b = std::min(x + half, sp.x_b);
        std::vector<double> xc;
        for (double c : tf.x)
            if (c > a && c < b) xc.push_back(c);
        return detail::gk_piecewise([&](double y) { return f(y, tp); }, a, b, xc, tol);
    };
    return detail::gk_piecewise(integrand, t_lo, t_hi, cuts, tol) / (2.0 * v);
}

// ---------------------------------------------------------------------------
// Run configuration shared by both engines

struct RunOptions {
    double t_end = 1.0;
    double dt = 0.01;
    std::size_t snapshot_stride = 1;
    std::size_t energy_stride = 1;
    bool record_velocity = false; // keep the half-step velocity field of every step
    double memory_window = 0.0;   // 0: derived from the kernel tail
};

/// Causal start: two steps before the force switches on.
inline double start_time(const DrivingForce& f, double dt) {
    if (f.is_zero()) return 0.0;
    return f.support().t0 - 2.0 * dt;
}

inline std::size_t step_count(double t_start, double t_end, double dt) {
    if (t_end <= t_start) return 0;
    return std::size_t(std::ceil((t_end - t_start) / dt - 1e-9));
}

/// Snapshots of a run. fpi is the velocity d phi / dt at the snapshot time; the optional
/// half-step record holds the velocity used in each drift, at t_start + (m + 1/2) dt.
struct Trajectory {
    Grid1D grid;
    double dt = 0.0;
    double t_start = 0.0;
    std::vector<double> times;
    std::vector<std::vector<double>> phi;
    std::vector<std::vector<double>> fpi;

    struct EnergySample {
        double t;
        double physical;  // H_0 or E_0 total
        double hidden;    // H_hs, zero for the memory engine
        double work;      // cumulative int int f dphi/dt
    };
    std::vector<EnergySample> energy;

    std::vector<std::vector<double>> half_velocity;

    double half_time(std::size_t m) const { return t_start + (double(m) + 0.5) * dt; }

    /// Half-step velocity history at node i, oldest first.
    std::vector<double> velocity_history(std::size_t i) const {
        std::vector<double> h(half_velocity.size());
        for (std::size_t m = 0; m < h.size(); ++m) h[m] = half_velocity[m][i];
        return h;
    }
};

using TddTrajectory = Trajectory;

/// Drive an engine to opts.t_end and record snapshots. The engine must expose
/// t(), phi(), velocity_now(), last_velocity(), step(), physical_energy(),
/// hidden_energy() and force_at(t). on_snapshot sees the engine at every recorded snapshot.
template <class Engine>
Trajectory record(Engine& e, const RunOptions& opts, const std::function<void(const Engine&)>& on_snapshot = {}) {
    Trajectory tr;
    tr.grid = e.grid();
    tr.dt = e.dt();
    tr.t_start = e.t();
    const std::size_t steps = step_count(e.t(), opts.t_end, e.dt());
    const std::size_t stride = std::max<std::size_t>(opts.snapshot_stride, 1);
    const std::size_t estride = std::max<std::size_t>(opts.energy_stride, 1);
    const Grid1D& g = e.grid();
    double work = 0.0;
    std::vector<double> f_prev = e.force_at(e.t());

    auto snap = [&](std::size_t n) {
        if (n % stride == 0 || n == steps) {
            tr.times.push_back(e.t());
            tr.phi.push_back(e.phi());
            tr.fpi.push_back(e.velocity_now());
            if (on_snapshot) on_snapshot(e);
        }
        if (n % estride == 0 || n == steps)
            tr.energy.push_back({e.t(), e.physical_energy(), e.hidden_energy(), work});
    };
    snap(0);
    for (std::size_t n = 1; n <= steps; ++n) {
        e.step();
        std::vector<double> f_next = e.force_at(e.t());
        const auto& v = e.last_velocity();
        double p = 0.0;
        for (std::size_t i = 0; i < g.n; ++i) {
            double w = (!g.periodic() && (i == 0 || i == g.n - 1)) ? 0.5 : 1.0;
            p += w * 0.5 * (f_prev[i] + f_next[i]) * v[i];
        }
        work += e.dt() * g.dx() * p;
        f_prev = std::move(f_next);
        if (opts.record_velocity) tr.half_velocity.push_back(v);
        snap(n);
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Memory-kernel engine

namespace detail {

inline double second_difference(const std::vector<double>& u, const Grid1D& g, std::size_t i) {
    const std::size_t n = g.n;
    const std::size_t l = i == 0 ? n - 1 : i - 1;
    const std::size_t r = i == n - 1 ? 0 : i + 1;
    return (u[r] - 2.0 * u[i] + u[l]) / (g.dx() * g.dx());
}

// Trapezoid integral over the grid of a nodal field.
inline double grid_sum(const Grid1D& g, const std::vector<double>& u) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) s += ((!g.periodic() && (i == 0 || i == g.n - 1)) ? 0.5 : 1.0) * u[i];
    return s * g.dx();
}

// gamma/2 int (phi_x)^2 with forward differences on cells.
inline double gradient_energy(const Grid1D& g, const std::vector<double>& phi, double gamma) {
    const std::size_t cells = g.periodic() ? g.n : g.n - 1;
    double s = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
        double d = phi[(i + 1) % g.n] - phi[i];
        s += d * d;
    }
    return 0.5 * gamma * s / g.dx();
}

inline void check_cfl(const Grid1D& g, double gamma, double dt, double extra_limit = infinity) {
    if (!(dt > 0.0)) throw PreconditionError("time step must be positive");
    if (!(gamma > 0.0)) throw PreconditionError("tension gamma must be positive");
    const double limit = std::min(0.5 * g.dx() / std::sqrt(gamma), extra_limit);
    if (dt > limit * (1.0 + 1e-12))
        throw PreconditionError("CFL violated: dt = " + std::to_string(dt) + " exceeds " + std::to_string(limit));
}

} // namespace detail

/// Per-node convolution history for one kernel.
struct MemoryRule {
    enum Kind { None, Exponential, Window } kind = None;
    double chi0 = 0.0;
    double alpha = 0.0; // Exponential: history = alpha * sum_k q^k v_{m-k}
    double q = 1.0;
    std::vector<double> weights; // Window: chi(k dt), k = 1..W

    static MemoryRule make(const SusceptibilityModel& m, double dt, double user_window) {
        validate(m);
        MemoryRule r;
        if (is_zero(m)) return r;
        const double need = memory_extent(m);
        if (user_window > 0.0 && user_window < need)
            throw PreconditionError("memory window " + std::to_string(user_window) +
                                    " shorter than kernel support " + std::to_string(need) + " (" + kind_name(m) + ")");
        r.chi0 = chi_time(m, 0.0);
        if (auto* d = std::get_if<DebyeKernel>(&m)) {
            r.kind = Exponential;
            r.alpha = d->alpha;
            r.q = std::exp(-d->nu * dt);
        } else if (auto* c = std::get_if<ConstantKernel>(&m)) {
            r.kind = Exponential;
            r.alpha = c->alpha;
            r.q = 1.0;
        } else {
            r.kind = Window;
            const double span = std::max(need, user_window);
            const std::size_t w = std::size_t(std::ceil(span / dt));
            r.weights.resize(w);
            for (std::size_t k = 1; k <= w; ++k) r.weights[k - 1] = chi_time(m, double(k) * dt);
        }
        return r;
    }
};

/// Leapfrog (kick-drift-kick) integrator of the memory-kernel string. The velocity used
/// in each drift solves the trapezoid-discretized material relation at the half step:
///   (1 + dt chi(0)/2) v_{m} = pi_{m} - dt sum_{k>=1} chi(k dt) v_{m-k}.
class TddEngine {
public:
    TddEngine(Grid1D grid, MaterialProfile material, double gamma, DrivingForce force, double dt, double t_start,
              double memory_window = 0.0)
        : g_(std::move(grid)), mat_(std::move(material)), gamma_(gamma), f_(std::move(force)), dt_(dt), t_(t_start) {
        g_.validate();
        detail::check_cfl(g_, gamma_, dt_);
        for (const auto& m : mat_.models()) rules_.push_back(MemoryRule::make(m, dt_, memory_window));
        node_rule_.resize(g_.n);
        hist_.assign(g_.n, 0.0);
        ring_.resize(g_.n);
        for (std::size_t i = 0; i < g_.n; ++i) {
            node_rule_[i] = mat_.model_index(g_.x(i));
            const auto& r = rules_[node_rule_[i]];
            if (r.kind == MemoryRule::Window) ring_[i].assign(r.weights.size(), 0.0);
        }
        phi_.assign(g_.n, 0.0);
        pi_.assign(g_.n, 0.0);
        v_.assign(g_.n, 0.0);
        damp_.resize(g_.n);
        for (std::size_t i = 0; i < g_.n; ++i) damp_[i] = std::exp(-0.5 * g_.sponge(i) * dt_);
    }

    const Grid1D& grid() const { return g_; }
    double dt() const { return dt_; }
    double t() const { return t_; }
    double gamma() const { return gamma_; }
    const std::vector<double>& phi() const { return phi_; }
    const std::vector<double>& pi() const { return pi_; }
    std::vector<double>& phi() { return phi_; }
    std::vector<double>& pi() { return pi_; }
    /// Velocity used in the most recent drift (at t - dt/2).
    const std::vector<double>& last_velocity() const { return v_; }
    std::vector<double> force_at(double t) const { return f_.sample(g_, t); }

    void step() {
        kick(f_.sample(g_, t_));
        solve_velocity(pi_, v_);
        commit(v_);
        for (std::size_t i = g_.first_active(); i <= g_.last_active(); ++i) phi_[i] += dt_ * v_[i];
        t_ += dt_;
        kick(f_.sample(g_, t_));
    }

    /// Velocity at the current integer time: mean of the last drift velocity and the one
    /// the next step would use.
    std::vector<double> velocity_now() const {
        std::vector<double> p = pi_;
        const auto f = f_.sample(g_, t_);
        for (std::size_t i = g_.first_active(); i <= g_.last_active(); ++i)
            p[i] = damp_[i] * (p[i] + 0.5 * dt_ * (gamma_ * detail::second_difference(phi_, g_, i) + f[i]));
        std::vector<double> next(g_.n, 0.0);
        solve_velocity(p, next);
        for (std::size_t i = 0; i < g_.n; ++i) next[i] = 0.5 * (next[i] + v_[i]);
        return next;
    }

    double physical_energy() const {
        const auto v = velocity_now();
        std::vector<double> k(g_.n);
        for (std::size_t i = 0; i < g_.n; ++i) k[i] = 0.5 * v[i] * v[i];
        return detail::grid_sum(g_, k) + detail::gradient_energy(g_, phi_, gamma_);
    }
    double hidden_energy() const { return 0.0; }

private:
    void kick(const std::vector<double>& f) {
        for (std::size_t i = g_.first_active(); i <= g_.last_active(); ++i)
            pi_[i] = damp_[i] * (pi_[i] + 0.5 * dt_ * (gamma_ * detail::second_difference(phi_, g_, i) + f[i]));
    }

    double history(std::size_t i) const {
        const MemoryRule& r = rules_[node_rule_[i]];
        if (r.kind == MemoryRule::Exponential) return r.alpha * hist_[i];
        double h = 0.0;
        if (r.kind == MemoryRule::Window) {
            const auto& buf = ring_[i];
            const std::size_t w = buf.size();
            for (std::size_t k = 1; k <= w; ++k) h += r.weights[k - 1] * buf[(head_ + w - k) % w];
        }
        return h;
    }

    void solve_velocity(const std::vector<double>& p, std::vector<double>& v) const {
        for (std::size_t i = g_.first_active(); i <= g_.last_active(); ++i)
            v[i] = (p[i] - dt_ * history(i)) / (1.0 + 0.5 * dt_ * rules_[node_rule_[i]].chi0);
    }

    void commit(const std::vector<double>& v) {
        for (std::size_t i = g_.first_active(); i <= g_.last_active(); ++i) {
            const MemoryRule& r = rules_[node_rule_[i]];
            if (r.kind == MemoryRule::Exponential) hist_[i] = r.q * (v[i] + hist_[i]);
            else if (r.kind == MemoryRule::Window) ring_[i][head_ % ring_[i].size()] = v[i];
        }
        ++head_;
    }

    Grid1D g_;
    MaterialProfile mat_;
    double gamma_;
    DrivingForce f_;
    double dt_;
    double t_;
    std::vector<MemoryRule> rules_;
    std::vector<std::size_t> node_rule_;
    std::vector<double> hist_;
    std::vector<std::vector<double>> ring_;
    std::size_t head_ = 0;
    std::vector<double> phi_, pi_, v_, damp_;
};

/// Run the memory-kernel engine from rest to opts.t_end.
inline Trajectory run_tdd(const Grid1D& grid, const MaterialProfile& material, double gamma,
                          const DrivingForce& force, const RunOptions& opts) {
    TddEngine e(grid, material, gamma, force, opts.dt, start_time(force, opts.dt), opts.memory_window);
    return record(e, opts);
}

/// Relative space-time L2 difference sum (a - b)^2 / sum b^2 over all snapshots.
inline double relative_l2(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    if (a.size() != b.size()) throw PreconditionError("relative_l2: snapshot count mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k].size() != b[k].size()) throw PreconditionError("relative_l2: field size mismatch");
        for (std::size_t i = 0; i < a[k].size(); ++i) {
            num += (a[k][i] - b[k][i]) * (a[k][i] - b[k][i]);
            den += b[k][i] * b[k][i];
        }
    }
    if (den == 0.0) return num == 0.0 ? 0.0 : infinity;
    return std::sqrt(num / den);
}

/// d'Alembert field at every snapshot of a trajectory.
inline std::vector<std::vector<double>> dalembert_field(const DrivingForce& f, double gamma, const Trajectory& tr) {
    std::vector<std::vector<double>> out(tr.times.size(), std::vector<double>(tr.grid.n));
    for (std::size_t k = 0; k < tr.times.size(); ++k)
        for (std::size_t i = 0; i < tr.grid.n; ++i) out[k][i] = dalembert(f, gamma, tr.grid.x(i), tr.times[k]);
    return out;
}

} // namespace tdd
