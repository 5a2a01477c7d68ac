#pragma once

// Conservative extension: the physical string (phi, pi) plus one hidden string
// (psi(s), theta(s)) per physical node,
//   phi_t = f_pi,  pi_t = gamma phi_xx + f,  psi_t = theta,  theta_t = psi_ss + sigma(s) f_pi,
//   f_pi = pi - int sigma(s) psi(s) ds,
// integrated with a Strang splitting of the separable Hamiltonian
//   H = [1/2 f_pi(pi, psi)^2 + 1/2 psi_s^2] + [gamma/2 phi_x^2 + 1/2 theta^2 - f phi].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "coupling.hpp"
#include "error.hpp"
#include "grid.hpp"
#include "susceptibility.hpp"
#include "tdd_dynamics.hpp"

namespace tdd {

/// Truncated hidden-string axis s in [-half_width, half_width] with spacing ds.
/// n_sigma is the frequency sample count used to build couplings on this grid.
struct HiddenGrid {
    double half_width = 20.0;
    double ds = 0.05;
    std::size_t n_sigma = 1u << 14;

    long nodes_per_side() const { return long(std::llround(half_width / ds)); }
};

/// Couplings and their placement on the x-grid. Every active node whose coupling is
/// non-zero owns one hidden column of 2J+1 nodes s_j = j ds; the two end nodes are
/// held fixed (zero unless a boundary hook prescribes them).
class HiddenLattice {
public:
    HiddenLattice() = default;

    /// node_coupling[i] indexes couplings, or is -1 for a node without hidden string.
    HiddenLattice(const Grid1D& grid, HiddenGrid hg, std::vector<CouplingFunction> couplings,
                  std::vector<int> node_coupling)
        : hg_(hg), couplings_(std::move(couplings)) {
        if (!(hg.ds > 0.0) || !(hg.half_width >= 2.0 * hg.ds))
            throw PreconditionError("hidden grid: need ds > 0 and half_width >= 2 ds");
        if (node_coupling.size() != grid.n) throw PreconditionError("hidden lattice: node map size mismatch");
        J_ = hg.nodes_per_side();
        weights_.resize(couplings_.size());
        for (std::size_t c = 0; c < couplings_.size(); ++c) {
            const CouplingFunction& cf = couplings_[c];
            if (cf.is_zero()) continue;
            if (std::abs(cf.ds() - hg.ds) > 1e-9 * hg.ds)
                throw PreconditionError("coupling s-grid spacing " + std::to_string(cf.ds()) +
                                        " does not match hidden grid ds " + std::to_string(hg.ds));
            if (cf.half() < J_ - 1)
                throw PreconditionError("coupling s-grid narrower than the hidden strings");
            auto& w = weights_[c];
            w.assign(std::size_t(2 * J_ + 1), 0.0);
            for (long j = -J_ + 1; j <= J_ - 1; ++j) w[std::size_t(j + J_)] = cf.regular(j);
            w[std::size_t(J_)] += cf.delta_weight() / hg.ds;
        }
        column_.assign(grid.n, -1);
        for (std::size_t i = grid.first_active(); i <= grid.last_active(); ++i) {
            int c = node_coupling[i];
            if (c < 0) continue;
            if (std::size_t(c) >= couplings_.size()) throw PreconditionError("hidden lattice: bad coupling index");
            if (couplings_[std::size_t(c)].is_zero()) continue;
            column_[i] = int(node_.size());
            node_.push_back(i);
            col_coupling_.push_back(std::size_t(c));
        }
    }

    /// One coupling per distinct non-zero model of the profile.
    static HiddenLattice from_profile(const Grid1D& grid, const MaterialProfile& mat, HiddenGrid hg,
                                      CouplingOptions opt = {}) {
        std::vector<CouplingFunction> cs;
        std::vector<int> model_slot(mat.models().size(), -1);
        const SigmaGrid sg = SigmaGrid::for_spacing(hg.ds, hg.n_sigma);
        for (std::size_t m = 0; m < mat.models().size(); ++m) {
            if (is_zero(mat.models()[m])) continue;
            model_slot[m] = int(cs.size());
            cs.push_back(build_coupling(mat.models()[m], sg, opt));
        }
        std::vector<int> map(grid.n);
        for (std::size_t i = 0; i < grid.n; ++i) map[i] = model_slot[mat.model_index(grid.x(i))];
        return HiddenLattice(grid, hg, std::move(cs), std::move(map));
    }

    long J() const { return J_; }
    std::size_t M() const { return std::size_t(2 * J_ + 1); }
    double ds() const { return hg_.ds; }
    double half_width() const { return double(J_) * hg_.ds; }
    const HiddenGrid& hidden_grid() const { return hg_; }
    std::size_t columns() const { return node_.size(); }
    int column_of(std::size_t node) const { return column_[node]; }
    std::size_t node_of(std::size_t col) const { return node_[col]; }
    const CouplingFunction& coupling_of(std::size_t col) const { return couplings_[col_coupling_[col]]; }
    std::size_t coupling_index(std::size_t col) const { return col_coupling_[col]; }
    const std::vector<CouplingFunction>& couplings() const { return couplings_; }
    /// Lattice weights w_j = reg(s_j) + (c0 / ds) [j = 0], zero at the fixed end nodes.
    const std::vector<double>& weights(std::size_t col) const { return weights_[col_coupling_[col]]; }

    /// Radius beyond which |reg| stays below rel of its peak, over all couplings.
    double coupling_radius(double rel = 1e-2) const {
        double r = 0.0;
        for (const auto& c : couplings_) {
            double mx = 0.0;
            for (double v : c.regular_samples()) mx = std::max(mx, std::abs(v));
            if (mx == 0.0) continue;
            for (long j = c.half(); j >= 0; --j)
                if (std::abs(c.regular(j)) > rel * mx) {
                    r = std::max(r, c.s(j));
                    break;
                }
        }
        return r;
    }

    bool homogeneous(const Grid1D& g) const {
        if (node_.empty()) return true;
        for (std::size_t i = g.first_active(); i <= g.last_active(); ++i)
            if (column_[i] < 0 || col_coupling_[std::size_t(column_[i])] != col_coupling_.front()) return false;
        return true;
    }

private:
    HiddenGrid hg_{};
    long J_ = 0;
    std::vector<CouplingFunction> couplings_;
    std::vector<std::vector<double>> weights_;
    std::vector<int> column_;
    std::vector<std::size_t> node_;
    std::vector<std::size_t> col_coupling_;
};

/// Phase point of the extended system. psi and theta are stored column-major:
/// entry (col, j) at col * M + j + J.
struct ExtendedState {
    double t = 0.0;
    std::vector<double> phi, pi, psi, theta;

    static ExtendedState rest(const Grid1D& g, const HiddenLattice& lat, double t = 0.0) {
        ExtendedState s;
        s.t = t;
        s.phi.assign(g.n, 0.0);
        s.pi.assign(g.n, 0.0);
        s.psi.assign(lat.columns() * lat.M(), 0.0);
        s.theta.assign(lat.columns() * lat.M(), 0.0);
        return s;
    }
};

namespace detail {

inline double column_read(const HiddenLattice& lat, const ExtendedState& st, std::size_t col) {
    const double* p = st.psi.data() + col * lat.M();
    const auto& w = lat.weights(col);
    double sum = 0.0;
    for (std::size_t j = 1; j + 1 < lat.M(); ++j) sum += w[j] * p[j];
    return lat.ds() * sum;
}

inline void check_shapes(const Grid1D& g, const HiddenLattice& lat, const ExtendedState& st) {
    if (st.phi.size() != g.n || st.pi.size() != g.n)
        throw PreconditionError("extended state: physical fields do not match the x-grid");
    if (st.psi.size() != lat.columns() * lat.M() || st.theta.size() != st.psi.size())
        throw PreconditionError("extended state: hidden fields do not match the lattice");
}

} // namespace detail

/// f_pi(x) = pi(x) - [c0 psi(x, 0) + ds sum_j reg(s_j) psi(x, s_j)].
inline std::vector<double> f_pi(const ExtendedState& st, const HiddenLattice& lat, const Grid1D& g) {
    detail::check_shapes(g, lat, st);
    std::vector<double> out = st.pi;
    for (std::size_t c = 0; c < lat.columns(); ++c) out[lat.node_of(c)] -= detail::column_read(lat, st, c);
    return out;
}

/// Called with the time the prescribed values refer to.
using BoundaryHook = std::function<void(double t, ExtendedState&)>;

class ExtendedEngine {
public:
    ExtendedEngine(Grid1D grid, HiddenLattice lattice, double gamma, DrivingForce force, double dt, double t_start)
        : g_(std::move(grid)), lat_(std::move(lattice)), gamma_(gamma), f_(std::move(force)), dt_(dt) {
        g_.validate();
        detail::check_cfl(g_, gamma_, dt_, lat_.columns() > 0 ? 0.5 * lat_.ds() : infinity);
        st_ = ExtendedState::rest(g_, lat_, t_start);
        v_.assign(g_.n, 0.0);
        damp_.resize(g_.n);
        for (std::size_t i = 0; i < g_.n; ++i) damp_[i] = std::exp(-0.5 * g_.sponge(i) * dt_);
    }

    static ExtendedEngine from_profile(const Grid1D& grid, const MaterialProfile& mat, double gamma,
                                       const DrivingForce& force, double dt, double t_start, HiddenGrid hg) {
        return ExtendedEngine(grid, HiddenLattice::from_profile(grid, mat, hg), gamma, force, dt, t_start);
    }

    const Grid1D& grid() const { return g_; }
    const HiddenLattice& lattice() const { return lat_; }
    double dt() const { return dt_; }
    double t() const { return st_.t; }
    double gamma() const { return gamma_; }
    const DrivingForce& force() const { return f_; }
    const ExtendedState& state() const { return st_; }
    ExtendedState& state() { return st_; }
    const std::vector<double>& phi() const { return st_.phi; }
    /// f_pi used in the most recent drift (at t - dt/2).
    const std::vector<double>& last_velocity() const { return v_; }
    std::vector<double> velocity_now() const { return f_pi(st_, lat_, g_); }
    std::vector<double> force_at(double t) const { return f_.sample(g_, t); }

    /// Prescribe hidden-string end values (called after each psi update) and physical
    /// values (called after each phi update).
    BoundaryHook hidden_boundary;
    BoundaryHook physical_boundary;

    void step() {
        const double t0 = st_.t;
        const double h = 0.5 * dt_;
        kick_physical(f_.sample(g_, t0));
        // psi half drift fused with the coupling read; end weights are zero so the
        // hook cannot change the read.
        const std::size_t M = lat_.M();
        v_ = st_.pi;
        for (std::size_t c = 0; c < lat_.columns(); ++c) {
            double* p = st_.psi.data() + c * M;
            const double* q = st_.theta.data() + c * M;
            const double* w = lat_.weights(c).data();
            double read = 0.0;
            for (std::size_t j = 1; j + 1 < M; ++j) {
                p[j] += h * q[j];
                read += w[j] * p[j];
            }
            v_[lat_.node_of(c)] -= lat_.ds() * read;
        }
        if (hidden_boundary) hidden_boundary(t0 + h, st_);

        for (std::size_t i = g_.first_active(); i <= g_.last_active(); ++i) st_.phi[i] += dt_ * v_[i];
        const double inv_ds2 = 1.0 / (lat_.ds() * lat_.ds());
        for (std::size_t c = 0; c < lat_.columns(); ++c) {
            const double* p = st_.psi.data() + c * M;
            double* q = st_.theta.data() + c * M;
            const double* w = lat_.weights(c).data();
            const double fp = v_[lat_.node_of(c)];
            for (std::size_t j = 1; j + 1 < M; ++j)
                q[j] += dt_ * ((p[j + 1] - 2.0 * p[j] + p[j - 1]) * inv_ds2 + w[j] * fp);
        }
        st_.t = t0 + dt_;
        if (physical_boundary) physical_boundary(st_.t, st_);

        kick_physical(f_.sample(g_, st_.t));
        for (std::size_t c = 0; c < lat_.columns(); ++c) {
            double* p = st_.psi.data() + c * M;
            const double* q = st_.theta.data() + c * M;
            for (std::size_t j = 1; j + 1 < M; ++j) p[j] += h * q[j];
        }
        if (hidden_boundary) hidden_boundary(st_.t, st_);
    }

    double physical_energy() const;
    double hidden_energy() const;

private:
    void kick_physical(const std::vector<double>& f) {
        for (std::size_t i = g_.first_active(); i <= g_.last_active(); ++i)
            st_.pi[i] = damp_[i] * (st_.pi[i] + 0.5 * dt_ * (gamma_ * detail::second_difference(st_.phi, g_, i) + f[i]));
    }

    Grid1D g_;
    HiddenLattice lat_;
    double gamma_;
    DrivingForce f_;
    double dt_;
    ExtendedState st_;
    std::vector<double> v_, damp_;
};

// ---------------------------------------------------------------------------
// Observables

struct HamiltonianValue {
    double physical = 0.0; // H_0
    double hidden = 0.0;   // H_hs
    double internal = 0.0; // H_0 + H_hs
    double forced = 0.0;   // internal - int f phi
};

namespace detail {

// 1/2 ds [sum theta^2 + sum_cells (psi_{j+1} - psi_j)^2 / ds^2] for one column.
inline double column_energy(const HiddenLattice& lat, const ExtendedState& st, std::size_t c) {
    const std::size_t M = lat.M();
    const double* p = st.psi.data() + c * M;
    const double* q = st.theta.data() + c * M;
    double kin = 0.0, pot = 0.0;
    for (std::size_t j = 1; j + 1 < M; ++j) kin += q[j] * q[j];
    for (std::size_t j = 0; j + 1 < M; ++j) pot += (p[j + 1] - p[j]) * (p[j + 1] - p[j]);
    return 0.5 * (lat.ds() * kin + pot / lat.ds());
}

inline double node_weight(const Grid1D& g, std::size_t i) {
    return (!g.periodic() && (i == 0 || i == g.n - 1)) ? 0.5 : 1.0;
}

// Centered x-derivative, one-sided at non-periodic ends.
inline double centered_dx(const std::vector<double>& u, const Grid1D& g, std::size_t i) {
    const std::size_t n = g.n;
    if (g.periodic()) return (u[(i + 1) % n] - u[(i + n - 1) % n]) / (2.0 * g.dx());
    if (i == 0) return (u[1] - u[0]) / g.dx();
    if (i == n - 1) return (u[n - 1] - u[n - 2]) / g.dx();
    return (u[i + 1] - u[i - 1]) / (2.0 * g.dx());
}

} // namespace detail

/// Discrete Hamiltonian: trapezoid in x and s, forward differences for the gradients.
inline HamiltonianValue hamiltonian(const ExtendedState& st, const HiddenLattice& lat, const Grid1D& g, double gamma,
                                    const DrivingForce& f = {}) {
    detail::check_shapes(g, lat, st);
    const auto fp = f_pi(st, lat, g);
    HamiltonianValue h;
    std::vector<double> k(g.n);
    for (std::size_t i = 0; i < g.n; ++i) k[i] = 0.5 * fp[i] * fp[i];
    h.physical = detail::grid_sum(g, k) + detail::gradient_energy(g, st.phi, gamma);
    for (std::size_t c = 0; c < lat.columns(); ++c)
        h.hidden += detail::node_weight(g, lat.node_of(c)) * g.dx() * detail::column_energy(lat, st, c);
    h.internal = h.physical + h.hidden;
    std::vector<double> fphi(g.n);
    const auto fs = f.sample(g, st.t);
    for (std::size_t i = 0; i < g.n; ++i) fphi[i] = fs[i] * st.phi[i];
    h.forced = h.internal - detail::grid_sum(g, fphi);
    return h;
}

inline double ExtendedEngine::physical_energy() const { return hamiltonian(st_, lat_, g_, gamma_).physical; }
inline double ExtendedEngine::hidden_energy() const { return hamiltonian(st_, lat_, g_, gamma_).hidden; }

struct EnergyReport {
    double t = 0.0;
    std::vector<double> fpi;    // velocity
    std::vector<double> E0;     // 1/2 (f_pi^2 + gamma phi_x^2)
    std::vector<double> E_hs;   // 1/2 int (theta^2 + psi_s^2) ds
    std::vector<double> J;      // -gamma f_pi phi_x
    std::vector<double> force;  // f at t
    double H0 = 0.0, H_hs = 0.0, H = 0.0;
    double work_rate = 0.0;     // int f f_pi dx

    std::vector<double> density() const {
        std::vector<double> e(E0.size());
        for (std::size_t i = 0; i < e.size(); ++i) e[i] = E0[i] + E_hs[i];
        return e;
    }
};

/// Local densities (centered x-derivatives) and the totals of hamiltonian().
inline EnergyReport energy_report(const ExtendedState& st, const HiddenLattice& lat, const Grid1D& g, double gamma,
                                  const DrivingForce& f = {}) {
    EnergyReport r;
    r.t = st.t;
    r.fpi = f_pi(st, lat, g);
    r.E0.resize(g.n);
    r.E_hs.assign(g.n, 0.0);
    r.J.resize(g.n);
    r.force = f.sample(g, st.t);
    for (std::size_t i = 0; i < g.n; ++i) {
        const double dphi = detail::centered_dx(st.phi, g, i);
        r.E0[i] = 0.5 * (r.fpi[i] * r.fpi[i] + gamma * dphi * dphi);
        r.J[i] = -gamma * r.fpi[i] * dphi;
    }
    for (std::size_t c = 0; c < lat.columns(); ++c) r.E_hs[lat.node_of(c)] = detail::column_energy(lat, st, c);
    const auto h = hamiltonian(st, lat, g, gamma);
    r.H0 = h.physical;
    r.H_hs = h.hidden;
    r.H = h.internal;
    std::vector<double> p(g.n);
    for (std::size_t i = 0; i < g.n; ++i) p[i] = r.force[i] * r.fpi[i];
    r.work_rate = detail::grid_sum(g, p);
    return r;
}

struct LocalResidual {
    double max_abs = 0.0;
    std::vector<double> field; // residual at the last interior snapshot
};

/// r = d/dt (E_0 + E_hs) + dJ/dx - f f_pi by centered differences at every interior
/// snapshot of an equally spaced sequence. End nodes, their neighbours and sponge nodes
/// are excluded.
inline LocalResidual local_energy_residual(const std::vector<EnergyReport>& snaps, const Grid1D& g) {
    if (snaps.size() < 3) throw PreconditionError("local_energy_residual: need at least 3 snapshots");
    const double dt = snaps[1].t - snaps[0].t;
    for (std::size_t k = 2; k < snaps.size(); ++k)
        if (std::abs((snaps[k].t - snaps[k - 1].t) - dt) > 1e-9 * std::abs(dt))
            throw PreconditionError("local_energy_residual: snapshots must be equally spaced");
    LocalResidual out;
    const std::size_t lo = g.periodic() ? 0 : 2, hi = g.periodic() ? g.n : g.n - 2;
    for (std::size_t k = 1; k + 1 < snaps.size(); ++k) {
        const auto ep = snaps[k + 1].density(), em = snaps[k - 1].density();
        out.field.assign(g.n, 0.0);
        for (std::size_t i = lo; i < hi; ++i) {
            if (g.in_sponge(i)) continue;
            const double r = (ep[i] - em[i]) / (2.0 * dt) + detail::centered_dx(snaps[k].J, g, i) -
                             snaps[k].force[i] * snaps[k].fpi[i];
            out.field[i] = r;
            out.max_abs = std::max(out.max_abs, std::abs(r));
        }
    }
    return out;
}

struct MomentumReport {
    std::vector<double> p0, p_hs, T0, T_hs, Delta;
    double P0 = 0.0, P_hs = 0.0, P = 0.0;
};

/// Wave momentum and stress; needs a translation-invariant (homogeneous) lattice.
inline MomentumReport momentum_report(const ExtendedState& st, const HiddenLattice& lat, const Grid1D& g,
                                      double gamma) {
    detail::check_shapes(g, lat, st);
    if (!lat.homogeneous(g))
        throw PreconditionError("momentum_report: coupling is not spatially homogeneous");
    MomentumReport m;
    const auto fp = f_pi(st, lat, g);
    const std::size_t n = g.n, M = lat.M();
    m.p0.resize(n);
    m.p_hs.assign(n, 0.0);
    m.T0.resize(n);
    m.T_hs.assign(n, 0.0);
    m.Delta.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double dphi = detail::centered_dx(st.phi, g, i);
        m.Delta[i] = st.pi[i] - fp[i];
        m.p0[i] = -st.pi[i] * dphi;
        m.T0[i] = 0.5 * (fp[i] * fp[i] + gamma * dphi * dphi) + m.Delta[i] * fp[i];
    }
    if (lat.columns() > 0) {
        for (std::size_t i = g.first_active(); i <= g.last_active(); ++i) {
            const std::size_t c = std::size_t(lat.column_of(i));
            const bool has_l = g.periodic() || i > g.first_active();
            const bool has_r = g.periodic() || i < g.last_active();
            const std::size_t il = (i + n - 1) % n, ir = (i + 1) % n;
            const double* q = st.theta.data() + c * M;
            const double* pl = has_l ? st.psi.data() + std::size_t(lat.column_of(il)) * M : nullptr;
            const double* pr = has_r ? st.psi.data() + std::size_t(lat.column_of(ir)) * M : nullptr;
            const double* pc = st.psi.data() + c * M;
            double ph = 0.0, kin = 0.0, pot = 0.0;
            for (std::size_t j = 1; j + 1 < M; ++j) {
                const double right = pr ? pr[j] : pc[j], left = pl ? pl[j] : pc[j];
                const double span = (pr && pl ? 2.0 : 1.0) * g.dx();
                ph += q[j] * (right - left) / span;
                kin += q[j] * q[j];
            }
            for (std::size_t j = 0; j + 1 < M; ++j) pot += (pc[j + 1] - pc[j]) * (pc[j + 1] - pc[j]);
            m.p_hs[i] = -lat.ds() * ph;
            m.T_hs[i] = 0.5 * (lat.ds() * kin - pot / lat.ds());
        }
    }
    m.P0 = detail::grid_sum(g, m.p0);
    m.P_hs = detail::grid_sum(g, m.p_hs);
    m.P = m.P0 + m.P_hs;
    return m;
}

// ---------------------------------------------------------------------------
// Closed-form hidden response and dissipated energy

/// Uniform samples values[m] = h(t0 + m dt); optionally h = 0 for t < t0.
struct SampledHistory {
    double t0 = 0.0;
    double dt = 1.0;
    std::vector<double> values;
    bool at_rest_before = true;

    double t_last() const { return t0 + double(values.size() - 1) * dt; }
    double operator()(double t) const {
        if (values.empty() || t < t0) return 0.0;
        const double u = (t - t0) / dt;
        const std::size_t i = std::min(std::size_t(u), values.size() - 1);
        if (i + 1 >= values.size()) return values.back();
        const double w = u - double(i);
        return (1.0 - w) * values[i] + w * values[i + 1];
    }
};

namespace detail {

inline void check_history(const SampledHistory& h, double t, double needed) {
    if (h.values.size() < 2) throw PreconditionError("history: need at least two samples");
    if (t > h.t_last() + 1e-9 * h.dt) throw PreconditionError("history ends before the evaluation time");
    if (!h.at_rest_before && t - h.t0 < needed)
        throw PreconditionError("history shorter than the memory window " + std::to_string(needed));
}

} // namespace detail

/// psi(s, t) = 1/2 int_0^inf [int_{s-tau}^{s+tau} sigma(r) dr] f_pi(t - tau) dtau,
/// delta sector exact for the piecewise-linear history, regular sector by Simpson per cell.
inline double hidden_response_oracle(const CouplingFunction& c, const SampledHistory& h, double s, double t) {
    detail::check_history(h, t, std::abs(s) + c.support_radius());
    const auto prim = detail::regular_primitive(c);
    const double u_lo = h.t0, u_hi = t;
    if (!(u_hi > u_lo)) return 0.0;

    // Delta part: c0/2 int_{u_lo}^{t - |s|} f(u) du.
    double delta = 0.0;
    const double u_cut = t - std::abs(s);
    auto integrate_linear = [&](double a, double b) {
        double sum = 0.0;
        double u = a;
        while (u < b) {
            const double cell_end = std::min(b, h.t0 + (std::floor((u - h.t0) / h.dt + 1e-12) + 1.0) * h.dt);
            sum += 0.5 * (cell_end - u) * (h(u) + h(cell_end));
            u = cell_end;
        }
        return sum;
    };
    if (u_cut > u_lo && c.delta_weight() != 0.0) delta = 0.5 * c.delta_weight() * integrate_linear(u_lo, u_cut);

    // Regular part.
    auto G = [&](double u) {
        const double tau = t - u;
        return 0.5 * (detail::primitive_at(c, prim, s + tau) - detail::primitive_at(c, prim, s - tau)) * h(u);
    };
    double reg = 0.0;
    double u = u_lo;
    while (u < u_hi) {
        const double e = std::min(u_hi, h.t0 + (std::floor((u - h.t0) / h.dt + 1e-12) + 1.0) * h.dt);
        reg += (e - u) / 6.0 * (G(u) + 4.0 * G(0.5 * (u + e)) + G(e));
        u = e;
    }
    return delta + reg;
}

/// Energy absorbed up to t:
///   int v(t') [chi(0) v(t') + int_0^inf chi'(tau) v(t' - tau) dtau] dt'
/// by the trapezoid rule on the samples (the double integral of the friction function).
inline double dissipated_energy(const SampledHistory& v, const SusceptibilityModel& m, double t) {
    detail::check_history(v, t, memory_extent(m));
    const double chi0 = chi_time(m, 0.0);
    const double dt = v.dt;
    const std::size_t K = std::min(v.values.size() - 1, std::size_t(std::floor((t - v.t0) / dt + 1e-9)));
    std::vector<double> dchi(K + 1);
    for (std::size_t k = 0; k <= K; ++k) dchi[k] = chi_time_derivative(m, double(k) * dt);
    double total = 0.0;
    for (std::size_t n = 0; n <= K; ++n) {
        double inner = 0.0;
        for (std::size_t k = 0; k <= n; ++k) {
            const double w = (k == 0 || k == n) ? 0.5 : 1.0;
            inner += w * dchi[k] * v.values[n - k];
        }
        const double rate = v.values[n] * (chi0 * v.values[n] + dt * inner);
        total += ((n == 0 || n == K) ? 0.5 : 1.0) * rate;
    }
    return dt * total;
}

// ---------------------------------------------------------------------------
// Runs

/// Hidden strings must outlast the run: a wave leaving the coupling region (|reg| above
/// 1e-2 of its peak) must not return from +-S before t_run ends, S >= t_run + radius.
inline void check_no_reentry(const HiddenLattice& lat, double t_run) {
    if (lat.columns() == 0) return;
    const double r = lat.coupling_radius(1e-2);
    if (lat.half_width() < r + t_run)
        throw PreconditionError("hidden half-width " + std::to_string(lat.half_width()) +
                                " < run time + coupling radius = " + std::to_string(r + t_run));
}

inline Trajectory run_extended(const Grid1D& grid, const MaterialProfile& material, double gamma,
                               const DrivingForce& force, const RunOptions& opts, HiddenGrid hg) {
    const double t0 = start_time(force, opts.dt);
    ExtendedEngine e = ExtendedEngine::from_profile(grid, material, gamma, force, opts.dt, t0, hg);
    check_no_reentry(e.lattice(), opts.t_end - t0);
    return record(e, opts);
}

} // namespace tdd
