#pragma once

// Scenario files (YAML) and the model / force / grid sections they share with the
// analysis commands. Every error carries the line of the offending node.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "error.hpp"
#include "extended_dynamics.hpp"
#include "grid.hpp"
#include "susceptibility.hpp"
#include "tdd_dynamics.hpp"

namespace tdd {

enum class EngineChoice { Tdd, Extended, Both };

inline std::string engine_name(EngineChoice e) {
    switch (e) {
    case EngineChoice::Tdd: return "tdd";
    case EngineChoice::Extended: return "extended";
    case EngineChoice::Both: return "both";
    }
    return "?";
}

inline EngineChoice parse_engine(const std::string& s, int line = -1) {
    if (s == "tdd") return EngineChoice::Tdd;
    if (s == "extended") return EngineChoice::Extended;
    if (s == "both") return EngineChoice::Both;
    throw ConfigError("engine must be tdd, extended or both, got '" + s + "'", line);
}

struct OutputSpec {
    std::string directory = "out";
    std::string format = "csv"; // csv | json
    bool dump_hidden = false;
};

struct ScenarioConfig {
    Grid1D grid;
    HiddenGrid hidden;
    double gamma = 1.0;
    MaterialProfile material;
    DrivingForce force;
    RunOptions run;
    EngineChoice engine = EngineChoice::Both;
    OutputSpec output;

    // lines of the sections, 0-based, -1 when absent
    int line_grid = -1, line_hidden = -1, line_material = -1, line_force = -1, line_run = -1, line_dt = -1;

    bool uses_extended() const { return engine != EngineChoice::Tdd; }
};

namespace detail {

inline int line_of(const YAML::Node& n) { return n.Mark().line; }

inline void require_map(const YAML::Node& n, const std::string& what) {
    if (!n.IsMap()) throw ConfigError(what + ": expected a mapping", line_of(n));
}

inline void allow_keys(const YAML::Node& n, const std::string& what, std::initializer_list<const char*> keys) {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& kv : n) {
        const auto k = kv.first.as<std::string>();
        if (!ok.count(k)) throw ConfigError(what + ": unknown key '" + k + "'", line_of(kv.first));
    }
}

template <class T>
T get(const YAML::Node& n, const char* key, const std::string& what) {
    const YAML::Node v = n[key];
    if (!v) throw ConfigError(what + "." + key + ": missing", line_of(n));
    try {
        return v.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(what + "." + key + ": cannot read value '" + (v.IsScalar() ? v.Scalar() : "<node>") + "'",
                          line_of(v));
    }
}

template <class T>
T get_or(const YAML::Node& n, const char* key, const std::string& what, T fallback) {
    if (!n[key]) return fallback;
    return get<T>(n, key, what);
}

inline double positive(const YAML::Node& n, const char* key, const std::string& what) {
    double v = get<double>(n, key, what);
    if (!(v > 0.0)) throw ConfigError(what + "." + key + " must be > 0", line_of(n[key]));
    return v;
}

inline double non_negative(const YAML::Node& n, const char* key, const std::string& what, double fallback) {
    if (!n[key]) return fallback;
    double v = get<double>(n, key, what);
    if (!(v >= 0.0)) throw ConfigError(what + "." + key + " must be >= 0", line_of(n[key]));
    return v;
}

inline std::vector<double> number_list(const YAML::Node& n, const char* key, const std::string& what) {
    const YAML::Node v = n[key];
    if (!v) throw ConfigError(what + "." + key + ": missing", line_of(n));
    if (!v.IsSequence()) throw ConfigError(what + "." + key + ": expected a list", line_of(v));
    try {
        return v.as<std::vector<double>>();
    } catch (const YAML::Exception&) {
        throw ConfigError(what + "." + key + ": expected a list of numbers", line_of(v));
    }
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& file) {
    std::filesystem::path p(file);
    return p.is_absolute() ? p : base / p;
}

} // namespace detail

/// Two-column (tau, chi) table. Blank lines and lines starting with '#' are skipped; a
/// first line that does not parse as numbers is taken as a header.
inline TabulatedKernel read_kernel_csv(std::istream& is, const std::string& name = "kernel csv") {
    TabulatedKernel k;
    std::string line;
    int lineno = -1;
    bool first = true;
    while (std::getline(is, line)) {
        ++lineno;
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        double t, c;
        if (!(ss >> t >> c)) {
            if (first) {
                first = false;
                continue;
            }
            throw ConfigError(name + ": expected two numbers (tau, chi)", lineno);
        }
        first = false;
        k.tau.push_back(t);
        k.chi.push_back(c);
    }
    return k;
}

inline TabulatedKernel read_kernel_csv(const std::filesystem::path& p) {
    std::ifstream is(p);
    if (!is) throw ConfigError("cannot open kernel table '" + p.string() + "'");
    return read_kernel_csv(is, p.string());
}

/// {kind: zero | constant | debye | tabulated, ...}
inline SusceptibilityModel parse_model(const YAML::Node& n, const std::string& what,
                                       const std::filesystem::path& base = ".") {
    detail::require_map(n, what);
    const auto kind = detail::get<std::string>(n, "kind", what);
    SusceptibilityModel m;
    if (kind == "zero") {
        detail::allow_keys(n, what, {"kind"});
        m = ZeroKernel{};
    } else if (kind == "constant") {
        detail::allow_keys(n, what, {"kind", "alpha"});
        m = ConstantKernel{detail::get<double>(n, "alpha", what)};
    } else if (kind == "debye") {
        detail::allow_keys(n, what, {"kind", "alpha", "nu"});
        m = DebyeKernel{detail::get<double>(n, "alpha", what), detail::get<double>(n, "nu", what)};
    } else if (kind == "tabulated") {
        detail::allow_keys(n, what, {"kind", "file", "tau", "chi", "tail_c", "tail_mu"});
        TabulatedKernel k;
        if (n["file"]) {
            if (n["tau"] || n["chi"]) throw ConfigError(what + ": give either file or tau/chi", detail::line_of(n));
            k = read_kernel_csv(detail::resolve(base, detail::get<std::string>(n, "file", what)));
        } else {
            k.tau = detail::number_list(n, "tau", what);
            k.chi = detail::number_list(n, "chi", what);
        }
        k.tail_c = detail::get_or<double>(n, "tail_c", what, 0.0);
        k.tail_mu = detail::get_or<double>(n, "tail_mu", what, 0.0);
        m = std::move(k);
    } else {
        throw ConfigError(what + ".kind: unknown model '" + kind + "'", detail::line_of(n["kind"]));
    }
    try {
        validate(m);
    } catch (const DomainError& e) {
        throw ConfigError(what + ": " + e.what(), detail::line_of(n));
    }
    return m;
}

/// Compact model syntax for the command line: zero, constant:A, debye:A,NU, tabulated:FILE.
inline SusceptibilityModel parse_model_spec(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
    std::vector<double> p;
    if (kind != "tabulated") {
        std::string tok;
        std::istringstream ss(rest);
        while (std::getline(ss, tok, ',')) {
            try {
                std::size_t used = 0;
                p.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw ConfigError("model '" + spec + "': bad number '" + tok + "'");
            }
        }
    }
    auto want = [&](std::size_t k) {
        if (p.size() != k) throw ConfigError("model '" + spec + "': expected " + std::to_string(k) + " parameters");
    };
    SusceptibilityModel m;
    if (kind == "zero") {
        want(0);
        m = ZeroKernel{};
    } else if (kind == "constant") {
        want(1);
        m = ConstantKernel{p[0]};
    } else if (kind == "debye") {
        want(2);
        m = DebyeKernel{p[0], p[1]};
    } else if (kind == "tabulated") {
        if (rest.empty()) throw ConfigError("model '" + spec + "': missing file");
        m = read_kernel_csv(std::filesystem::path(rest));
    } else {
        throw ConfigError("unknown model kind '" + kind + "'");
    }
    try {
        validate(m);
    } catch (const DomainError& e) {
        throw ConfigError(std::string("model '") + spec + "': " + e.what());
    }
    return m;
}

/// material: {gamma, background | model, regions: [{x_min, x_max, model}]}
inline MaterialProfile parse_material(const YAML::Node& n, double& gamma, const std::filesystem::path& base = ".") {
    const std::string what = "material";
    detail::require_map(n, what);
    detail::allow_keys(n, what, {"gamma", "background", "model", "regions"});
    gamma = detail::get_or<double>(n, "gamma", what, 1.0);
    if (!(gamma > 0.0)) throw ConfigError("material.gamma must be > 0", detail::line_of(n["gamma"]));
    if (n["background"] && n["model"])
        throw ConfigError("material: give either background or model", detail::line_of(n));
    SusceptibilityModel bg = ZeroKernel{};
    if (n["background"]) bg = parse_model(n["background"], what + ".background", base);
    if (n["model"]) bg = parse_model(n["model"], what + ".model", base);
    MaterialProfile mat(bg);
    if (const auto rs = n["regions"]) {
        if (!rs.IsSequence()) throw ConfigError("material.regions: expected a list", detail::line_of(rs));
        for (std::size_t i = 0; i < rs.size(); ++i) {
            const std::string w = what + ".regions[" + std::to_string(i) + "]";
            const YAML::Node r = rs[i];
            detail::require_map(r, w);
            detail::allow_keys(r, w, {"x_min", "x_max", "model"});
            const double a = detail::get_or<double>(r, "x_min", w, -infinity);
            const double b = detail::get_or<double>(r, "x_max", w, infinity);
            if (!r["model"]) throw ConfigError(w + ".model: missing", detail::line_of(r));
            auto m = parse_model(r["model"], w + ".model", base);
            try {
                mat.add_region(a, b, m);
            } catch (const DomainError& e) {
                throw ConfigError(w + ": " + e.what(), detail::line_of(r));
            }
        }
    }
    return mat;
}

/// The model an analysis command works with: the first region's model if regions are
/// present, the background otherwise.
inline SusceptibilityModel analysis_model(const MaterialProfile& mat) {
    return mat.regions().empty() ? mat.models().front() : mat.models()[mat.regions().front().model];
}

inline Grid1D parse_grid(const YAML::Node& n) {
    const std::string what = "grid";
    detail::require_map(n, what);
    detail::allow_keys(n, what, {"x_min", "x_max", "n_x", "boundary", "sponge_width", "sponge_strength"});
    Grid1D g;
    g.x_min = detail::get<double>(n, "x_min", what);
    g.x_max = detail::get<double>(n, "x_max", what);
    const long nx = detail::get<long>(n, "n_x", what);
    if (nx < 3) throw ConfigError("grid.n_x must be >= 3", detail::line_of(n["n_x"]));
    g.n = std::size_t(nx);
    const auto b = detail::get_or<std::string>(n, "boundary", what, "dirichlet");
    if (b == "dirichlet") g.boundary = Boundary::Dirichlet;
    else if (b == "sponge") g.boundary = Boundary::Sponge;
    else if (b == "periodic") g.boundary = Boundary::Periodic;
    else throw ConfigError("grid.boundary must be dirichlet, sponge or periodic", detail::line_of(n["boundary"]));
    g.sponge_width = detail::non_negative(n, "sponge_width", what, 0.0);
    g.sponge_strength = detail::non_negative(n, "sponge_strength", what, 0.0);
    try {
        g.validate();
    } catch (const PreconditionError& e) {
        throw ConfigError(e.what(), detail::line_of(n));
    }
    return g;
}

inline HiddenGrid parse_hidden(const YAML::Node& n) {
    const std::string what = "hidden";
    detail::require_map(n, what);
    detail::allow_keys(n, what, {"half_width", "ds", "n_sigma"});
    HiddenGrid h;
    h.half_width = detail::positive(n, "half_width", what);
    h.ds = detail::positive(n, "ds", what);
    const long ns = detail::get_or<long>(n, "n_sigma", what, long(h.n_sigma));
    if (ns < 4 || (ns & (ns - 1)) != 0)
        throw ConfigError("hidden.n_sigma must be a power of two >= 4", detail::line_of(n["n_sigma"]));
    h.n_sigma = std::size_t(ns);
    if (h.half_width < 2.0 * h.ds) throw ConfigError("hidden.half_width must be >= 2 ds", detail::line_of(n));
    return h;
}

namespace detail {

inline SpaceShape parse_space_shape(const YAML::Node& n, const std::string& what) {
    require_map(n, what);
    const auto s = get<std::string>(n, "shape", what);
    if (s == "gaussian") {
        allow_keys(n, what, {"shape", "center", "width", "cut"});
        return GaussianShape{get<double>(n, "center", what), positive(n, "width", what),
                             get_or<double>(n, "cut", what, 6.0)};
    }
    if (s == "box") {
        allow_keys(n, what, {"shape", "a", "b"});
        BoxShape b{get<double>(n, "a", what), get<double>(n, "b", what)};
        if (!(b.b > b.a)) throw ConfigError(what + ": need b > a", line_of(n));
        return b;
    }
    throw ConfigError(what + ".shape must be gaussian or box", line_of(n["shape"]));
}

inline TimeShape parse_time_shape(const YAML::Node& n, const std::string& what) {
    require_map(n, what);
    const auto s = get<std::string>(n, "shape", what);
    if (s == "harmonic") {
        allow_keys(n, what, {"shape", "omega", "t_on", "ramp"});
        return HarmonicShape{get<double>(n, "omega", what), get_or<double>(n, "t_on", what, 0.0),
                             non_negative(n, "ramp", what, 0.0)};
    }
    if (s == "gaussian" || s == "box")
        return std::visit([](const auto& v) -> TimeShape { return v; }, parse_space_shape(n, what));
    throw ConfigError(what + ".shape must be gaussian, box or harmonic", line_of(n["shape"]));
}

} // namespace detail

/// force: {kind: none} | {kind: separable, amplitude, space, time} |
///        {kind: tabulated, t: [..], x: [..], f: [[..] per t]}
inline DrivingForce parse_force(const YAML::Node& n) {
    const std::string what = "force";
    detail::require_map(n, what);
    const auto kind = detail::get<std::string>(n, "kind", what);
    if (kind == "none") {
        detail::allow_keys(n, what, {"kind"});
        return {};
    }
    if (kind == "separable") {
        detail::allow_keys(n, what, {"kind", "amplitude", "space", "time"});
        if (!n["space"] || !n["time"]) throw ConfigError("force: separable needs space and time", detail::line_of(n));
        return SeparableForce{detail::get<double>(n, "amplitude", what),
                              detail::parse_space_shape(n["space"], "force.space"),
                              detail::parse_time_shape(n["time"], "force.time")};
    }
    if (kind == "tabulated") {
        detail::allow_keys(n, what, {"kind", "t", "x", "f"});
        TabulatedForce tf;
        tf.t = detail::number_list(n, "t", what);
        tf.x = detail::number_list(n, "x", what);
        const YAML::Node rows = n["f"];
        if (!rows || !rows.IsSequence()) throw ConfigError("force.f: expected a list of rows", detail::line_of(n));
        for (const auto& row : rows) {
            std::vector<double> r;
            try {
                r = row.as<std::vector<double>>();
            } catch (const YAML::Exception&) {
                throw ConfigError("force.f: rows must be lists of numbers", detail::line_of(row));
            }
            if (r.size() != tf.x.size()) throw ConfigError("force.f: row length differs from x", detail::line_of(row));
            tf.f.insert(tf.f.end(), r.begin(), r.end());
        }
        try {
            return DrivingForce(std::move(tf));
        } catch (const DomainError& e) {
            throw ConfigError(e.what(), detail::line_of(n));
        }
    }
    throw ConfigError("force.kind must be none, separable or tabulated", detail::line_of(n["kind"]));
}

/// Cross-field checks: CFL for the chosen engines and hidden-string truncation.
inline void validate_scenario(const ScenarioConfig& c) {
    const double t0 = start_time(c.force, c.run.dt);
    if (!(c.run.t_end > t0)) throw ConfigError("run.t_end must exceed the start time " + std::to_string(t0), c.line_run);
    try {
        detail::check_cfl(c.grid, c.gamma, c.run.dt);
    } catch (const PreconditionError& e) {
        throw ConfigError(std::string("CFL: ") + e.what(), c.line_dt >= 0 ? c.line_dt : c.line_run);
    }
    if (c.engine == EngineChoice::Tdd) return;
    HiddenLattice lat;
    try {
        lat = HiddenLattice::from_profile(c.grid, c.material, c.hidden);
    } catch (const Error& e) {
        throw ConfigError(std::string("hidden: ") + e.what(), c.line_hidden >= 0 ? c.line_hidden : c.line_material);
    }
    try {
        if (lat.columns() > 0) detail::check_cfl(c.grid, c.gamma, c.run.dt, 0.5 * lat.ds());
    } catch (const PreconditionError& e) {
        throw ConfigError(std::string("CFL (hidden grid): ") + e.what(), c.line_dt >= 0 ? c.line_dt : c.line_run);
    }
    try {
        check_no_reentry(lat, c.run.t_end - t0);
    } catch (const PreconditionError& e) {
        throw ConfigError(std::string("s-truncation: ") + e.what(), c.line_hidden);
    }
}

inline ScenarioConfig parse_scenario(const YAML::Node& root, const std::filesystem::path& base = ".") {
    if (!root || !root.IsMap()) throw ConfigError("scenario: top level must be a mapping", root ? root.Mark().line : -1);
    detail::allow_keys(root, "scenario", {"grid", "hidden", "material", "force", "run", "output", "sweep", "eigen",
                                          "coupling", "check"});
    ScenarioConfig c;
    auto section = [&](const char* key) {
        const YAML::Node n = root[key];
        if (!n) throw ConfigError(std::string("section '") + key + "' missing", root.Mark().line);
        return n;
    };
    const YAML::Node g = section("grid");
    c.line_grid = detail::line_of(g);
    c.grid = parse_grid(g);
    if (const YAML::Node m = root["material"]) {
        c.line_material = detail::line_of(m);
        c.material = parse_material(m, c.gamma, base);
    }
    if (const YAML::Node f = root["force"]) {
        c.line_force = detail::line_of(f);
        c.force = parse_force(f);
    }
    const YAML::Node r = section("run");
    c.line_run = detail::line_of(r);
    detail::require_map(r, "run");
    detail::allow_keys(r, "run", {"t_end", "dt", "snapshot_stride", "energy_stride", "engine", "memory_window"});
    c.run.t_end = detail::get<double>(r, "t_end", "run");
    c.run.dt = detail::positive(r, "dt", "run");
    c.line_dt = detail::line_of(r["dt"]);
    auto stride = [&](const char* key) {
        const long v = detail::get_or<long>(r, key, "run", 1);
        if (v < 1) throw ConfigError(std::string("run.") + key + " must be >= 1", detail::line_of(r[key]));
        return std::size_t(v);
    };
    c.run.snapshot_stride = stride("snapshot_stride");
    c.run.energy_stride = stride("energy_stride");
    c.run.memory_window = detail::non_negative(r, "memory_window", "run", 0.0);
    if (r["engine"]) c.engine = parse_engine(detail::get<std::string>(r, "engine", "run"), detail::line_of(r["engine"]));
    if (const YAML::Node h = root["hidden"]) {
        c.line_hidden = detail::line_of(h);
        c.hidden = parse_hidden(h);
    } else if (c.uses_extended()) {
        throw ConfigError("section 'hidden' missing (needed by the extended engine)", root.Mark().line);
    }
    if (const YAML::Node o = root["output"]) {
        detail::require_map(o, "output");
        detail::allow_keys(o, "output", {"directory", "format", "dump_hidden"});
        c.output.directory = detail::get_or<std::string>(o, "directory", "output", c.output.directory);
        c.output.format = detail::get_or<std::string>(o, "format", "output", c.output.format);
        if (c.output.format != "csv" && c.output.format != "json")
            throw ConfigError("output.format must be csv or json", detail::line_of(o["format"]));
        c.output.dump_hidden = detail::get_or<bool>(o, "dump_hidden", "output", false);
    }
    return c;
}

/// Parse a YAML document, turning parser errors into ConfigError with their line.
inline YAML::Node load_yaml_text(const std::string& text) {
    try {
        return YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError("yaml: " + e.msg, e.mark.line);
    }
}

inline YAML::Node load_yaml_file(const std::filesystem::path& p) {
    std::ifstream is(p);
    if (!is) throw ConfigError("cannot open config '" + p.string() + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return load_yaml_text(ss.str());
}

inline ScenarioConfig load_scenario(const std::filesystem::path& p) {
    auto c = parse_scenario(load_yaml_file(p), p.parent_path().empty() ? "." : p.parent_path());
    validate_scenario(c);
    return c;
}

} // namespace tdd
