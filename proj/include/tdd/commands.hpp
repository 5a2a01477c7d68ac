#pragma once

// Command-level drivers behind the CLI: scenario simulation, scattering sweeps, model
// checks, coupling tables and mode profiles. Output goes through io.hpp.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coupling.hpp"
#include "eigenmodes.hpp"
#include "extended_dynamics.hpp"
#include "io.hpp"
#include "scenario.hpp"
#include "susceptibility.hpp"
#include "tdd_dynamics.hpp"

namespace tdd {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// simulate

struct ExtendedSnapshot {
    double t = 0.0;
    std::vector<double> phi, pi, E0, E_hs, J;
    std::vector<double> psi; // column-major copy, only when dumping
};

struct SimulationResult {
    std::optional<Trajectory> tdd, extended;
    std::vector<ExtendedSnapshot> snapshots;
    std::vector<std::size_t> hidden_nodes; // x-index of each hidden column
    long J = 0;
    double ds = 0.0;
    std::vector<double> diff_abs, diff_rel; // per snapshot, engine=both
    double diff_total = 0.0;                // relative space-time L2
};

inline SimulationResult simulate(const ScenarioConfig& c) {
    SimulationResult res;
    const double t0 = start_time(c.force, c.run.dt);
    if (c.engine != EngineChoice::Extended) {
        TddEngine e(c.grid, c.material, c.gamma, c.force, c.run.dt, t0, c.run.memory_window);
        res.tdd = record(e, c.run);
    }
    if (c.engine != EngineChoice::Tdd) {
        ExtendedEngine e = ExtendedEngine::from_profile(c.grid, c.material, c.gamma, c.force, c.run.dt, t0, c.hidden);
        check_no_reentry(e.lattice(), c.run.t_end - t0);
        const auto& lat = e.lattice();
        for (std::size_t col = 0; col < lat.columns(); ++col) res.hidden_nodes.push_back(lat.node_of(col));
        res.J = lat.J();
        res.ds = lat.ds();
        const bool dump = c.output.dump_hidden;
        res.extended = record<ExtendedEngine>(e, c.run, [&](const ExtendedEngine& en) {
            const auto rep = energy_report(en.state(), en.lattice(), en.grid(), en.gamma(), en.force());
            ExtendedSnapshot s{rep.t, en.state().phi, en.state().pi, rep.E0, rep.E_hs, rep.J, {}};
            if (dump) s.psi = en.state().psi;
            res.snapshots.push_back(std::move(s));
        });
    }
    if (res.tdd && res.extended) {
        const auto& a = res.extended->phi;
        const auto& b = res.tdd->phi;
        const double dx = c.grid.dx();
        for (std::size_t k = 0; k < b.size(); ++k) {
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < b[k].size(); ++i) {
                num += (a[k][i] - b[k][i]) * (a[k][i] - b[k][i]);
                den += b[k][i] * b[k][i];
            }
            res.diff_abs.push_back(std::sqrt(num * dx));
            res.diff_rel.push_back(den > 0.0 ? std::sqrt(num / den) : (num > 0.0 ? infinity : 0.0));
        }
        res.diff_total = relative_l2(a, b);
    }
    return res;
}

inline json energy_json(const Trajectory& tr) {
    json arr = json::array();
    for (const auto& e : tr.energy)
        arr.push_back({{"t", e.t}, {"physical", e.physical}, {"hidden", e.hidden}, {"work", e.work}});
    return arr;
}

inline json simulation_summary(const ScenarioConfig& c, const SimulationResult& r) {
    json j;
    j["engine"] = engine_name(c.engine);
    j["grid"] = {{"x_min", c.grid.x_min}, {"x_max", c.grid.x_max}, {"n_x", c.grid.n},
                 {"dx", c.grid.dx()}, {"boundary", boundary_name(c.grid.boundary)}};
    j["run"] = {{"t_start", start_time(c.force, c.run.dt)}, {"t_end", c.run.t_end}, {"dt", c.run.dt},
                {"snapshot_stride", c.run.snapshot_stride}, {"energy_stride", c.run.energy_stride}};
    j["gamma"] = c.gamma;
    if (c.uses_extended())
        j["hidden"] = {{"half_width", c.hidden.half_width}, {"ds", c.hidden.ds}, {"n_sigma", c.hidden.n_sigma},
                       {"columns", r.hidden_nodes.size()}};
    if (r.tdd) j["tdd"] = {{"snapshots", r.tdd->times.size()}, {"energy", energy_json(*r.tdd)}};
    if (r.extended) j["extended"] = {{"snapshots", r.extended->times.size()}, {"energy", energy_json(*r.extended)}};
    if (r.tdd && r.extended) {
        json per = json::array();
        for (std::size_t k = 0; k < r.diff_abs.size(); ++k)
            per.push_back({{"t", r.tdd->times[k]}, {"l2", r.diff_abs[k]}, {"relative", r.diff_rel[k]}});
        j["difference"] = {{"relative_l2", r.diff_total}, {"per_snapshot", per}};
    }
    return j;
}

/// Writes snapshot tables and summary.json into c.output.directory; returns the paths.
inline std::vector<std::string> write_simulation(const ScenarioConfig& c, const SimulationResult& r) {
    const std::filesystem::path dir(c.output.directory);
    std::filesystem::create_directories(dir);
    std::vector<std::string> files;
    const bool csv = c.output.format == "csv";
    const auto& g = c.grid;
    if (r.tdd) {
        Table t({"t", "x", "phi", "f_pi"});
        for (std::size_t k = 0; k < r.tdd->times.size(); ++k)
            for (std::size_t i = 0; i < g.n; ++i) t.add({r.tdd->times[k], g.x(i), r.tdd->phi[k][i], r.tdd->fpi[k][i]});
        files.push_back(t.save(dir / (csv ? "tdd_snapshots.csv" : "tdd_snapshots.json")));
    }
    if (r.extended) {
        Table t({"t", "x", "phi", "pi", "E0", "E_hs", "J"});
        for (const auto& s : r.snapshots)
            for (std::size_t i = 0; i < g.n; ++i) t.add({s.t, g.x(i), s.phi[i], s.pi[i], s.E0[i], s.E_hs[i], s.J[i]});
        files.push_back(t.save(dir / (csv ? "extended_snapshots.csv" : "extended_snapshots.json")));
        if (c.output.dump_hidden) {
            Table h({"t", "x", "s", "psi"});
            const std::size_t M = std::size_t(2 * r.J + 1);
            for (const auto& s : r.snapshots)
                for (std::size_t col = 0; col < r.hidden_nodes.size(); ++col)
                    for (std::size_t j = 0; j < M; ++j)
                        h.add({s.t, g.x(r.hidden_nodes[col]), (double(j) - double(r.J)) * r.ds, s.psi[col * M + j]});
            files.push_back(h.save(dir / (csv ? "extended_psi.csv" : "extended_psi.json")));
        }
    }
    files.push_back(save_json(dir / "summary.json", simulation_summary(c, r)));
    return files;
}

// ---------------------------------------------------------------------------
// scatter

struct ScatterCheck {
    double worst_flux = 0.0, worst_sum = 0.0, max_r = 0.0, min_re_rho = infinity;
    bool pass(double tol = 1e-12) const { return worst_flux <= tol && worst_sum <= tol && max_r <= 1.0 + tol && min_re_rho >= 0.0; }
};

inline Table scatter_table(const SusceptibilityModel& m, double gamma, const std::vector<double>& omegas,
                           ScatterCheck* check = nullptr) {
    Table t({"omega", "re_chi", "im_chi", "re_rho", "im_rho", "re_r", "im_r", "re_v", "im_v", "one_minus_r2",
             "identity_flux", "identity_sum"});
    ScatterCheck ck;
    for (double w : omegas) {
        const auto s = scatter_half_line(w, m, gamma);
        t.add({w, s.chi.real(), s.chi.imag(), s.rho.real(), s.rho.imag(), s.r.real(), s.r.imag(), s.v.real(),
               s.v.imag(), 1.0 - std::norm(s.r), s.identity_flux(), s.identity_sum()});
        ck.worst_flux = std::max(ck.worst_flux, std::abs(s.identity_flux()));
        ck.worst_sum = std::max(ck.worst_sum, std::abs(s.identity_sum()));
        ck.max_r = std::max(ck.max_r, std::abs(s.r));
        ck.min_re_rho = std::min(ck.min_re_rho, s.rho.real());
    }
    if (check) *check = ck;
    return t;
}

// ---------------------------------------------------------------------------
// check

struct CheckOptions {
    double pdc_half_range = 10.0;
    std::size_t pdc_points = 2001;
    double kk_half_range = 10.0;
    std::size_t kk_points = 1001;
    double kk_cutoff = 1000.0;
    double kk_tol = 1e-3;
    std::size_t n_sigma = 1u << 14;
    double round_trip_tau = 5.0;
    double round_trip_tol = 1e-2;
};

/// Lags for the round trip; tau = 0 is taken as the right limit.
inline std::vector<double> round_trip_lags(double tau_max, std::size_t n = 101) {
    auto taus = uniform_grid(0.0, tau_max, n);
    taus.front() = 1e-12;
    return taus;
}

inline double round_trip_error(const SusceptibilityModel& m, const CouplingFunction& c, const std::vector<double>& taus) {
    const auto rec = reconstruct_chi(c, taus);
    double worst = 0.0;
    for (std::size_t i = 0; i < taus.size(); ++i) worst = std::max(worst, std::abs(rec[i] - chi_time(m, taus[i])));
    return worst;
}

/// PDC, Kramers-Kronig and coupling round trip. "pass" is the conjunction.
inline json check_model(const SusceptibilityModel& m, const CheckOptions& o = {}) {
    json j;
    j["model"] = kind_name(m);
    bool all = true;

    const auto wp = uniform_grid(-o.pdc_half_range, o.pdc_half_range, o.pdc_points);
    const auto pdc = check_pdc(m, wp);
    j["pdc"] = {{"pass", pdc.pass}, {"min_value", pdc.min_value}, {"worst_omega", pdc.worst_omega},
                {"tolerance", pdc.tolerance}};
    all = all && pdc.pass;

    try {
        const auto fine = kramers_kronig_report(m, uniform_grid(-o.kk_half_range, o.kk_half_range, o.kk_points),
                                                o.kk_cutoff);
        const auto coarse = kramers_kronig_report(
            m, uniform_grid(-o.kk_half_range, o.kk_half_range, (o.kk_points + 1) / 2), 0.5 * o.kk_cutoff);
        const bool ok = fine.residual <= o.kk_tol && (fine.residual <= coarse.residual || fine.residual < 1e-12);
        j["kramers_kronig"] = {{"pass", ok},
                               {"residual", fine.residual},
                               {"residual_coarse", coarse.residual},
                               {"worst_omega", fine.worst_omega},
                               {"tolerance", o.kk_tol}};
        all = all && ok;
    } catch (const Error& e) {
        j["kramers_kronig"] = {{"pass", false}, {"error", e.what()}};
        all = false;
    }

    try {
        const auto taus = round_trip_lags(o.round_trip_tau);
        double scale = 0.0;
        for (double t : taus) scale = std::max(scale, std::abs(chi_time(m, t)));
        const auto c = build_coupling(m, SigmaGrid{o.n_sigma});
        const double err = round_trip_error(m, c, taus);
        const double tol = o.round_trip_tol * std::max(scale, 1.0);
        j["coupling_round_trip"] = {{"pass", err <= tol},     {"max_error", err},
                                    {"tolerance", tol},        {"n_sigma", o.n_sigma},
                                    {"delta_weight", c.delta_weight()}, {"ds", c.ds()}};
        all = all && err <= tol;
    } catch (const Error& e) {
        j["coupling_round_trip"] = {{"pass", false}, {"error", e.what()}};
        all = false;
    }
    j["pass"] = all;
    return j;
}

// ---------------------------------------------------------------------------
// coupling

inline Table coupling_table(const CouplingFunction& c, double s_max) {
    Table t({"s", "regular"});
    const long jm = std::min(c.half(), long(std::floor(s_max / c.ds())));
    for (long j = -jm; j <= jm; ++j) t.add({c.s(j), c.regular(j)});
    return t;
}

// ---------------------------------------------------------------------------
// eigen

struct EigenSpec {
    std::string kind = "plane"; // plane | causal | anti-causal | scattering
    double omega = 1.0;
    std::optional<double> k, alpha_mix;
    double x_min = -10.0, x_max = 10.0;
    std::size_t n_x = 401;
    bool stress = false;        // plane: delta-regularized hidden stress
    double ds = 0.05;
    std::size_t n_sigma = 1u << 15;
};

inline EigenSpec parse_eigen(const YAML::Node& n) {
    const std::string what = "eigen";
    detail::require_map(n, what);
    detail::allow_keys(n, what, {"kind", "omega", "k", "alpha_mix", "x_min", "x_max", "n_x", "stress", "ds", "n_sigma"});
    EigenSpec e;
    e.kind = detail::get_or<std::string>(n, "kind", what, e.kind);
    if (e.kind != "plane" && e.kind != "causal" && e.kind != "anti-causal" && e.kind != "scattering")
        throw ConfigError("eigen.kind must be plane, causal, anti-causal or scattering", detail::line_of(n["kind"]));
    e.omega = detail::get_or<double>(n, "omega", what, e.omega);
    if (e.omega == 0.0) throw ConfigError("eigen.omega must be non-zero", detail::line_of(n["omega"]));
    if (n["k"]) e.k = detail::get<double>(n, "k", what);
    if (n["alpha_mix"]) e.alpha_mix = detail::get<double>(n, "alpha_mix", what);
    if (e.k && e.alpha_mix) throw ConfigError("eigen: give k or alpha_mix, not both", detail::line_of(n));
    e.x_min = detail::get_or<double>(n, "x_min", what, e.x_min);
    e.x_max = detail::get_or<double>(n, "x_max", what, e.x_max);
    const long nx = detail::get_or<long>(n, "n_x", what, long(e.n_x));
    if (nx < 3 || !(e.x_max > e.x_min)) throw ConfigError("eigen: need n_x >= 3 and x_max > x_min", detail::line_of(n));
    e.n_x = std::size_t(nx);
    e.stress = detail::get_or<bool>(n, "stress", what, false);
    e.ds = detail::get_or<double>(n, "ds", what, e.ds);
    e.n_sigma = std::size_t(detail::get_or<long>(n, "n_sigma", what, long(e.n_sigma)));
    return e;
}

struct EigenResult {
    Table profile{{"x", "re_phi", "im_phi", "J", "minus_dx_J"}};
    json summary;
};

/// plane: homogeneous medium m. causal / anti-causal: medium m on x >= 0, vacuum on x < 0,
/// Dirichlet data from the half-line scattering solution. scattering: analytic profile.
inline EigenResult eigen_mode(const SusceptibilityModel& m, double gamma, const EigenSpec& e) {
    EigenResult out;
    Grid1D g{e.x_min, e.x_max, e.n_x, Boundary::Dirichlet};
    json& s = out.summary;
    s["kind"] = e.kind;
    s["omega"] = e.omega;
    s["gamma"] = gamma;
    s["model"] = kind_name(m);
    if (e.kind == "plane") {
        const cplx chi = is_zero(m) ? cplx(0.0) : chi_hat(m, e.omega);
        PlaneWave pw = e.k ? plane_wave_k(e.omega, chi, gamma, *e.k)
                           : plane_wave_alpha(e.omega, chi, gamma, e.alpha_mix.value_or(0.0));
        for (std::size_t i = 0; i < g.n; ++i) {
            const cplx p = pw.phi0 * std::exp(cplx(0.0, pw.k * g.x(i)));
            out.profile.add({g.x(i), p.real(), p.imag(), pw.flux(), 0.0});
        }
        s["k"] = pw.k;
        s["alpha_mix"] = pw.alpha_mix;
        s["chi"] = {chi.real(), chi.imag()};
        s["flux"] = pw.flux();
        s["energy_density"] = pw.energy_density();
        s["momentum_density"] = pw.momentum_density();
        s["momentum_density_from_delta"] = pw.momentum_density_from_delta();
        s["stress"] = pw.stress();
        s["stress_physical"] = pw.stress_physical();
        s["stress_hidden_closed_form"] = pw.stress_hidden();
        s["dispersion_residual"] = pw.dispersion_residual();
        if (e.stress && !is_zero(m)) {
            const auto c = build_coupling(m, SigmaGrid::for_spacing(e.ds, e.n_sigma));
            const auto st = plane_wave_stress_regularized(pw, c);
            s["stress_hidden_regularized"] = {{"deltas", st.deltas}, {"values", st.values}, {"limit", st.limit},
                                              {"change", st.change}, {"converged", st.converged}};
        }
        return out;
    }
    const auto sc = scatter_half_line(e.omega, m, gamma);
    s["r"] = {sc.r.real(), sc.r.imag()};
    s["v"] = {sc.v.real(), sc.v.imag()};
    s["rho"] = {sc.rho.real(), sc.rho.imag()};
    if (e.kind == "scattering") {
        for (std::size_t i = 0; i < g.n; ++i) {
            const double x = g.x(i);
            const cplx p = sc.phi(x);
            out.profile.add({x, p.real(), p.imag(), sc.flux(x), sc.dissipation(x)});
        }
        s["identity_flux"] = sc.identity_flux();
        s["identity_sum"] = sc.identity_sum();
        return out;
    }
    MaterialProfile mat;
    mat.add_region(0.0, infinity, m);
    const GSpec gs = e.kind == "causal" ? GSpec::causal() : GSpec::anti_causal();
    const auto mode = spectral_mode(e.omega, mat, gamma, g, gs, DirichletData{sc.phi(g.x_min), sc.phi(g.x_max)});
    const auto fl = mode_flux_and_dissipation(mode);
    double min_diss = infinity;
    for (std::size_t i = 0; i < g.n; ++i) {
        out.profile.add({g.x(i), mode.phi[i].real(), mode.phi[i].imag(), fl.J[i], fl.dissipation[i]});
        min_diss = std::min(min_diss, fl.dissipation[i]);
    }
    s["residual"] = mode.residual();
    s["min_dissipation"] = min_diss;
    return out;
}

} // namespace tdd
