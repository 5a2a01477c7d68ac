#pragma once

// Hidden-string coupling sigma(s) built from the friction spectrum through
// sigma_hat = sqrt(2 D). The coupling is stored as an explicit delta weight c0 plus a
// regular part sampled on a uniform s-grid, so that sigma(s) = c0 delta(s) + reg(s).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <fftw3.h>

#include "error.hpp"
#include "susceptibility.hpp"

namespace tdd {

/// Frequency sampling used to construct a coupling. Nodes sit at (k + 1/2) * 2 cutoff / n,
/// k = -n/2 .. n/2 - 1, so sigma = 0 is never sampled. The resulting s-grid has spacing
/// pi / cutoff and n points.
struct SigmaGrid {
    std::size_t n = 1u << 14;
    double cutoff = 20.0 * pi;

    double dsigma() const { return 2.0 * cutoff / double(n); }
    double ds() const { return pi / cutoff; }
    double node(long k) const { return (double(k) + 0.5) * dsigma(); }

    /// Grid whose s-spacing equals ds.
    static SigmaGrid for_spacing(double ds, std::size_t n = 1u << 14) { return {n, pi / ds}; }
};

class CouplingFunction {
public:
    CouplingFunction() = default;
    CouplingFunction(double delta_weight, double ds, std::vector<double> regular, SigmaGrid grid = {})
        : c0_(delta_weight), ds_(ds), reg_(std::move(regular)), grid_(grid) {
        if (reg_.empty() || reg_.size() % 2 != 0)
            throw DomainError("coupling: regular part needs an even, non-zero number of samples");
        if (!(ds_ > 0.0)) throw DomainError("coupling: ds must be positive");
        if (c0_ < 0.0) throw DomainError("coupling: delta weight must be >= 0");
        update_radius();
    }

    double delta_weight() const { return c0_; }
    double ds() const { return ds_; }
    const SigmaGrid& sigma_grid() const { return grid_; }
    std::size_t size() const { return reg_.size(); }
    /// Index of s = 0.
    long center() const { return long(reg_.size() / 2); }
    /// Largest j with s_j = j ds on the grid (the grid spans -(half+1)..half).
    long half() const { return center() - 1; }
    double s(long j) const { return double(j) * ds_; }
    double half_width() const { return double(half()) * ds_; }

    /// Regular part at s = j ds, zero off the grid.
    double regular(long j) const {
        long i = j + center();
        if (i < 0 || i >= long(reg_.size())) return 0.0;
        return reg_[std::size_t(i)];
    }
    const std::vector<double>& regular_samples() const { return reg_; }

    /// Radius beyond which |reg| stays below 1e-4 of its maximum.
    double support_radius() const { return radius_; }

    bool is_zero() const {
        return c0_ == 0.0 && std::all_of(reg_.begin(), reg_.end(), [](double v) { return v == 0.0; });
    }

    /// Largest deviation from reg(s) = reg(-s) on the grid.
    double asymmetry() const {
        double worst = 0.0;
        for (long j = 1; j <= half(); ++j) worst = std::max(worst, std::abs(regular(j) - regular(-j)));
        return worst;
    }

    /// Gap between the delta weight and sqrt(2 lim D) recorded at construction.
    double limit_gap() const { return limit_gap_; }
    void set_limit_gap(double g) { limit_gap_ = g; }

private:
    void update_radius() {
        double mx = 0.0;
        for (double v : reg_) mx = std::max(mx, std::abs(v));
        radius_ = 0.0;
        if (mx == 0.0) return;
        for (long j = half(); j >= 0; --j)
            if (std::abs(regular(j)) > 1e-4 * mx || std::abs(regular(-j)) > 1e-4 * mx) {
                radius_ = s(j);
                break;
            }
    }

    double c0_ = 0.0;
    double ds_ = 1.0;
    std::vector<double> reg_;
    SigmaGrid grid_{};
    double radius_ = 0.0;
    double limit_gap_ = 0.0;
};

namespace detail {

struct FftwPlanDeleter {
    void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
struct FftwFree {
    void operator()(fftw_complex* p) const { fftw_free(p); }
};

} // namespace detail

struct CouplingOptions {
    double pdc_tol = 1e-12;      // relative to max D on the grid
    double tail_tol = 1e-3;      // relative gap of sqrt(2 D(cutoff)) to sqrt(2 lim D)
};

/// Build the canonical (even, positive-transform) coupling for a kernel.
/// Throws PreconditionError when the kernel fails the power dissipation check on the
/// sigma grid or when sqrt(2 D) has not reached its high-frequency limit at the cutoff.
inline CouplingFunction build_coupling(const SusceptibilityModel& m, SigmaGrid grid = {},
                                       CouplingOptions opt = {}) {
    const std::size_t n = grid.n;
    if (n < 4 || (n & (n - 1)) != 0) throw PreconditionError("build_coupling: n must be a power of two >= 4");
    if (!(grid.cutoff > 0.0)) throw PreconditionError("build_coupling: cutoff must be positive");
    validate(m);

    const long half_n = long(n / 2);
    std::vector<double> dhat(n);
    double dmax = 0.0;
    for (long k = -half_n; k < half_n; ++k) {
        double d = friction_spectrum(m, grid.node(k));
        dhat[std::size_t(k + half_n)] = d;
        dmax = std::max(dmax, std::abs(d));
    }
    const double tol = opt.pdc_tol * std::max(dmax, std::numeric_limits<double>::min());
    for (std::size_t i = 0; i < n; ++i) {
        if (dhat[i] < -tol) {
            std::ostringstream msg;
            msg << "build_coupling: power dissipation violated, D(" << grid.node(long(i) - half_n)
                << ") = " << dhat[i];
            throw PreconditionError(msg.str());
        }
        dhat[i] = std::max(dhat[i], 0.0);
    }

    const double c0 = std::sqrt(2.0 * std::max(friction_spectrum(m, grid.cutoff), 0.0));
    const double c_lim = std::sqrt(2.0 * std::max(chi_time(m, 0.0), 0.0));
    const double gap = std::abs(c0 - c_lim);
    if (gap > opt.tail_tol * std::max(c_lim, 1.0)) {
        std::ostringstream msg;
        msg << "build_coupling: sqrt(2 D) not converged at cutoff " << grid.cutoff << ", tail gap " << gap;
        throw PreconditionError(msg.str());
    }

    // reg(s_j) = (dsigma / 2 pi) sum_k g_k exp(-i sigma_k s_j), sigma_k = (k + 1/2) dsigma.
    std::unique_ptr<fftw_complex, detail::FftwFree> buf(
        static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n)));
    for (long k = -half_n; k < half_n; ++k) {
        std::size_t slot = std::size_t((k + long(n)) % long(n));
        buf.get()[slot][0] = std::sqrt(2.0 * dhat[std::size_t(k + half_n)]) - c0;
        buf.get()[slot][1] = 0.0;
    }
    std::unique_ptr<fftw_plan_s, detail::FftwPlanDeleter> plan(
        fftw_plan_dft_1d(int(n), buf.get(), buf.get(), FFTW_FORWARD, FFTW_ESTIMATE));
    fftw_execute(plan.get());

    const double scale = grid.dsigma() / (2.0 * pi);
    const double ds = grid.ds();
    std::vector<double> reg(n);
    for (long j = -half_n; j < half_n; ++j) {
        std::size_t slot = std::size_t((j + long(n)) % long(n));
        cplx v(buf.get()[slot][0], buf.get()[slot][1]);
        v *= std::exp(cplx(0.0, -0.5 * grid.dsigma() * double(j) * ds));
        reg[std::size_t(j + half_n)] = scale * v.real();
    }
    for (long j = 1; j < half_n; ++j) {
        double& a = reg[std::size_t(half_n + j)];
        double& b = reg[std::size_t(half_n - j)];
        a = b = 0.5 * (a + b);
    }
    // transform roundoff
    const double flush = 1e-12 * std::sqrt(2.0 * dmax) / ds;
    for (double& r : reg)
        if (std::abs(r) <= flush) r = 0.0;
    CouplingFunction c(c0, ds, std::move(reg), grid);
    c.set_limit_gap(gap);
    return c;
}

inline CouplingFunction build_coupling(const MaterialProfile& p, double x, SigmaGrid grid = {},
                                       CouplingOptions opt = {}) {
    return build_coupling(p.at(x), grid, opt);
}

/// sigma_hat(sigma) = c0 + ds * sum_j reg_j cos(sigma s_j).
inline double coupling_hat(const CouplingFunction& c, double sigma) {
    double sum = 0.0;
    for (long j = -c.center(); j <= c.half(); ++j) sum += c.regular(j) * std::cos(sigma * c.s(j));
    return c.delta_weight() + c.ds() * sum;
}

namespace detail {

// R(s) = int_0^s reg, trapezoid on the grid; returned by index j + center.
inline std::vector<double> regular_primitive(const CouplingFunction& c) {
    std::vector<double> r(c.size(), 0.0);
    const long o = c.center();
    for (long j = 1; j <= c.half(); ++j)
        r[std::size_t(o + j)] = r[std::size_t(o + j - 1)] + 0.5 * c.ds() * (c.regular(j - 1) + c.regular(j));
    for (long j = 1; j <= o; ++j)
        r[std::size_t(o - j)] = r[std::size_t(o - j + 1)] - 0.5 * c.ds() * (c.regular(-j + 1) + c.regular(-j));
    return r;
}

// Linear interpolation of the primitive, clamped at the grid ends.
inline double primitive_at(const CouplingFunction& c, const std::vector<double>& r, double s) {
    const double u = s / c.ds() + double(c.center());
    if (u <= 0.0) return r.front();
    if (u >= double(r.size() - 1)) return r.back();
    const std::size_t i = std::size_t(u);
    const double w = u - double(i);
    return (1.0 - w) * r[i] + w * r[i + 1];
}

} // namespace detail

/// chi(tau) = 1/2 int sigma(s) int_{s-tau}^{s+tau} sigma(r) dr ds with the delta sector
/// expanded analytically.
inline std::vector<double> reconstruct_chi(const CouplingFunction& c, std::span<const double> taus) {
    double tmax = 0.0;
    for (double t : taus) {
        if (t < 0.0) throw DomainError("reconstruct_chi: negative lag");
        tmax = std::max(tmax, t);
    }
    if (c.half_width() < tmax + c.support_radius())
        throw PreconditionError("reconstruct_chi: s-grid half-width " + std::to_string(c.half_width()) +
                                " < max tau + support radius " + std::to_string(tmax + c.support_radius()));

    const auto prim = detail::regular_primitive(c);
    const double c0 = c.delta_weight();
    std::vector<double> out;
    out.reserve(taus.size());
    for (double t : taus) {
        double v = t > 0.0 ? 0.5 * c0 * c0 : 0.0;
        v += c0 * (detail::primitive_at(c, prim, t) - detail::primitive_at(c, prim, -t));
        double rr = 0.0;
        for (long j = -c.center(); j <= c.half(); ++j) {
            const double rj = c.regular(j);
            if (rj == 0.0) continue;
            const double w = (j == -c.center() || j == c.half()) ? 0.5 : 1.0;
            rr += w * rj * (detail::primitive_at(c, prim, c.s(j) + t) - detail::primitive_at(c, prim, c.s(j) - t));
        }
        v += 0.5 * c.ds() * rr;
        out.push_back(v);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV

inline void write_coupling_csv(std::ostream& os, const CouplingFunction& c) {
    os << std::setprecision(17) << std::scientific;
    os << "# delta_weight=" << c.delta_weight() << "\n";
    os << "# ds=" << c.ds() << "\n";
    os << "# n=" << c.size() << "\n";
    os << "# sigma_cutoff=" << c.sigma_grid().cutoff << "\n";
    os << "# n_sigma=" << c.sigma_grid().n << "\n";
    os << "s,regular\n";
    for (long j = -c.center(); j <= c.half(); ++j) os << c.s(j) << "," << c.regular(j) << "\n";
}

inline CouplingFunction read_coupling_csv(std::istream& is) {
    double c0 = 0.0, ds = 0.0, cutoff = 0.0;
    std::size_t n_sigma = 0;
    std::vector<double> reg;
    std::string line;
    int lineno = -1;
    bool header_seen = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string key = line.substr(1, eq - 1);
            key.erase(0, key.find_first_not_of(' '));
            double val = std::stod(line.substr(eq + 1));
            if (key == "delta_weight") c0 = val;
            else if (key == "ds") ds = val;
            else if (key == "sigma_cutoff") cutoff = val;
            else if (key == "n_sigma") n_sigma = std::size_t(val);
            continue;
        }
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        auto comma = line.find(',');
        if (comma == std::string::npos) throw ConfigError("coupling csv: expected 's,regular'", lineno);
        reg.push_back(std::stod(line.substr(comma + 1)));
    }
    if (!(ds > 0.0)) throw ConfigError("coupling csv: missing or invalid '# ds=' header");
    return CouplingFunction(c0, ds, std::move(reg), SigmaGrid{n_sigma, cutoff});
}

} // namespace tdd
