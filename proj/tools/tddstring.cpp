// tddstring: scenario runs, scattering sweeps, mode profiles, couplings and model checks.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <tdd/commands.hpp>

namespace fs = std::filesystem;
using namespace tdd;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::string engine;
    std::string format;
};

struct ModelArgs {
    std::string model;
    std::optional<double> gamma;
};

// Model and gamma from --model/--gamma, falling back to the config's material section.
struct Analysis {
    SusceptibilityModel model = ZeroKernel{};
    double gamma = 1.0;
    YAML::Node root;
};

Analysis load_analysis(const Common& c, const ModelArgs& m) {
    Analysis a;
    if (!c.config.empty()) {
        a.root = load_yaml_file(c.config);
        if (!a.root.IsMap()) throw ConfigError("config: top level must be a mapping", a.root.Mark().line);
        if (const auto mat = a.root["material"]) {
            const fs::path base = fs::path(c.config).parent_path();
            a.model = analysis_model(parse_material(mat, a.gamma, base.empty() ? "." : base));
        }
    } else if (m.model.empty()) {
        throw ConfigError("give --model or --config");
    }
    if (!m.model.empty()) a.model = parse_model_spec(m.model);
    if (m.gamma) {
        if (!(*m.gamma > 0.0)) throw ConfigError("--gamma must be > 0");
        a.gamma = *m.gamma;
    }
    return a;
}

fs::path out_dir(const Common& c, const std::string& fallback) {
    fs::path d(c.out.empty() ? fallback : c.out);
    fs::create_directories(d);
    return d;
}

std::string ext(const Common& c) { return c.format == "json" ? ".json" : ".csv"; }

void announce(const std::string& path) { std::cout << path << '\n'; }

int cmd_simulate(const Common& c) {
    if (c.config.empty()) throw ConfigError("simulate needs --config");
    const fs::path p(c.config);
    ScenarioConfig cfg = parse_scenario(load_yaml_file(p), p.parent_path().empty() ? "." : p.parent_path());
    if (!c.engine.empty()) cfg.engine = parse_engine(c.engine);
    if (!c.format.empty()) cfg.output.format = c.format;
    if (!c.out.empty()) cfg.output.directory = c.out;
    if (cfg.uses_extended() && cfg.line_hidden < 0) throw ConfigError("section 'hidden' missing (needed by the extended engine)");
    validate_scenario(cfg);
    const auto res = simulate(cfg);
    for (const auto& f : write_simulation(cfg, res)) announce(f);
    if (res.tdd && res.extended) std::cerr << "relative L2 difference (extended vs tdd): " << format_double(res.diff_total) << '\n';
    return 0;
}

std::vector<double> sweep_omegas(const Analysis& a, const std::vector<double>& listed, std::optional<double> lo,
                                 std::optional<double> hi, std::size_t count, bool symmetric) {
    std::vector<double> w = listed;
    if (w.empty() && !lo && a.root && a.root["sweep"]) {
        const YAML::Node s = a.root["sweep"];
        detail::require_map(s, "sweep");
        detail::allow_keys(s, "sweep", {"omegas", "omega_min", "omega_max", "count", "symmetric"});
        if (s["omegas"]) w = detail::number_list(s, "omegas", "sweep");
        else {
            lo = detail::get<double>(s, "omega_min", "sweep");
            hi = detail::get<double>(s, "omega_max", "sweep");
            count = std::size_t(detail::get_or<long>(s, "count", "sweep", long(count)));
        }
        symmetric = symmetric || detail::get_or<bool>(s, "symmetric", "sweep", false);
    }
    if (w.empty()) {
        if (!lo || !hi) throw ConfigError("give --omega, --omega-min/--omega-max or a sweep section");
        if (count < 1) throw ConfigError("--omega-count must be >= 1");
        w = uniform_grid(*lo, *hi, count);
    }
    for (double x : w)
        if (x == 0.0) throw ConfigError("omega = 0 is excluded");
    if (symmetric) {
        const std::size_t n = w.size();
        for (std::size_t i = 0; i < n; ++i) w.push_back(-w[i]);
    }
    return w;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time-dispersive dissipative string: simulation and analysis"};
    app.require_subcommand(1);
    Common c;
    auto add_common = [&](CLI::App* s) {
        s->add_option("--config", c.config, "YAML scenario or analysis file")->check(CLI::ExistingFile);
        s->add_option("--out", c.out, "output directory");
        s->add_option("--format", c.format, "table format")->check(CLI::IsMember({"csv", "json"}));
    };

    auto* sim = app.add_subcommand("simulate", "run a scenario with one or both engines");
    add_common(sim);
    sim->add_option("--engine", c.engine, "engine override")->check(CLI::IsMember({"tdd", "extended", "both"}));

    ModelArgs ma;
    std::vector<double> omegas;
    std::optional<double> wlo, whi;
    std::size_t wcount = 100;
    bool symmetric = false;
    auto* sca = app.add_subcommand("scatter", "half-line reflection and transmission sweep");
    add_common(sca);
    sca->add_option("--model", ma.model, "zero | constant:A | debye:A,NU | tabulated:FILE");
    sca->add_option("--gamma", ma.gamma, "string tension");
    sca->add_option("--omega", omegas, "frequencies");
    sca->add_option("--omega-min", wlo, "sweep start");
    sca->add_option("--omega-max", whi, "sweep end");
    sca->add_option("--omega-count", wcount, "sweep points");
    sca->add_flag("--symmetric", symmetric, "append the -omega rows");

    auto* eig = app.add_subcommand("eigen", "plane-wave, causal, anti-causal or scattering mode profiles");
    add_common(eig);
    eig->add_option("--model", ma.model, "model spec");
    eig->add_option("--gamma", ma.gamma, "string tension");
    std::string kind;
    std::optional<double> eomega, ek, emix;
    bool stress = false;
    eig->add_option("--kind", kind, "mode kind")->check(CLI::IsMember({"plane", "causal", "anti-causal", "scattering"}));
    eig->add_option("--omega", eomega, "frequency");
    eig->add_option("--k", ek, "plane-wave wavenumber");
    eig->add_option("--alpha-mix", emix, "plane-wave mixing parameter");
    eig->add_flag("--stress", stress, "regularized hidden stress for plane waves");

    auto* cpl = app.add_subcommand("coupling", "coupling function table and round-trip error");
    add_common(cpl);
    cpl->add_option("--model", ma.model, "model spec");
    double cds = 0.05, s_max = 20.0;
    std::size_t n_sigma = 1u << 14;
    cpl->add_option("--ds", cds, "s spacing")->check(CLI::PositiveNumber);
    cpl->add_option("--n-sigma", n_sigma, "frequency samples (power of two)");
    cpl->add_option("--s-max", s_max, "largest |s| written")->check(CLI::PositiveNumber);

    auto* chk = app.add_subcommand("check", "PDC, Kramers-Kronig and coupling round trip report");
    add_common(chk);
    chk->add_option("--model", ma.model, "model spec");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed()) return cmd_simulate(c);

        const Analysis a = load_analysis(c, ma);
        if (sca->parsed()) {
            const auto w = sweep_omegas(a, omegas, wlo, whi, wcount, symmetric);
            ScatterCheck ck;
            const Table t = scatter_table(a.model, a.gamma, w, &ck);
            announce(t.save(out_dir(c, "out") / ("scatter" + ext(c))));
            if (!ck.pass(1e-10)) {
                std::cerr << "scattering identities violated: flux " << ck.worst_flux << ", sum " << ck.worst_sum
                          << ", max |r| " << ck.max_r << ", min Re rho " << ck.min_re_rho << '\n';
                return 1;
            }
            return 0;
        }
        if (eig->parsed()) {
            EigenSpec e;
            if (a.root && a.root["eigen"]) e = parse_eigen(a.root["eigen"]);
            if (!kind.empty()) e.kind = kind;
            if (eomega) e.omega = *eomega;
            if (ek) e.k = ek, e.alpha_mix.reset();
            if (emix) e.alpha_mix = emix, e.k.reset();
            e.stress = e.stress || stress;
            if (e.omega == 0.0) throw ConfigError("--omega must be non-zero");
            const auto r = eigen_mode(a.model, a.gamma, e);
            const fs::path d = out_dir(c, "out");
            announce(r.profile.save(d / ("mode_profile" + ext(c))));
            announce(save_json(d / "mode_summary.json", r.summary));
            if (r.summary.contains("min_dissipation") && r.summary["min_dissipation"].get<double>() < -1e-12 &&
                e.kind == "causal") {
                std::cerr << "causal mode with negative dissipation\n";
                return 1;
            }
            return 0;
        }
        if (cpl->parsed()) {
            if (a.root && a.root["coupling"]) {
                const YAML::Node n = a.root["coupling"];
                detail::require_map(n, "coupling");
                detail::allow_keys(n, "coupling", {"ds", "n_sigma", "s_max"});
                cds = detail::get_or<double>(n, "ds", "coupling", cds);
                n_sigma = std::size_t(detail::get_or<long>(n, "n_sigma", "coupling", long(n_sigma)));
                s_max = detail::get_or<double>(n, "s_max", "coupling", s_max);
            }
            const auto cf = build_coupling(a.model, SigmaGrid::for_spacing(cds, n_sigma));
            const fs::path d = out_dir(c, "out");
            announce(coupling_table(cf, s_max).save(d / ("coupling" + ext(c))));
            const double err = round_trip_error(a.model, cf, round_trip_lags(5.0));
            json j = {{"model", kind_name(a.model)}, {"delta_weight", cf.delta_weight()}, {"ds", cf.ds()},
                      {"n_sigma", n_sigma},           {"support_radius", cf.support_radius()},
                      {"asymmetry", cf.asymmetry()},  {"limit_gap", cf.limit_gap()},
                      {"round_trip_max_error", err}};
            announce(save_json(d / "coupling_summary.json", j));
            return 0;
        }
        if (chk->parsed()) {
            const json rep = check_model(a.model);
            std::cout << rep.dump(2) << '\n';
            if (!c.out.empty()) save_json(out_dir(c, c.out) / "check.json", rep);
            return rep["pass"].get<bool>() ? 0 : 1;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
