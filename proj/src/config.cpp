#include "fblab/config.hpp"

#include "fblab/kernels.hpp"
#include "fblab/parallel.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fblab::config {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw ConfigError(what); }

void check_keys(const json& j, const char* where, const std::set<std::string>& allowed) {
    for (const auto& item : j.items())
        if (!allowed.count(item.key()))
            bad(std::string("unknown key '") + item.key() + "' in " + where);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        bad(std::string("bad value for '") + key + "'");
    }
}

std::vector<std::string> coeff_list(const json& j, const char* key, std::size_t want) {
    const auto& v = j.at(key);
    std::vector<std::string> out;
    if (v.is_string()) {
        out.push_back(v.get<std::string>());
    } else if (v.is_array()) {
        for (const auto& e : v) {
            if (e.is_string()) {
                out.push_back(e.get<std::string>());
            } else if (e.is_array()) { // nested rows (sigma matrix)
                for (const auto& r : e) out.push_back(r.get<std::string>());
            } else {
                bad(std::string("'") + key + "' entries must be expression strings");
            }
        }
    } else {
        bad(std::string("'") + key + "' must be a string or array of strings");
    }
    if (out.size() != want)
        bad(std::string("'") + key + "' needs " + std::to_string(want) + " expressions, got " +
            std::to_string(out.size()));
    return out;
}

ControlSet parse_controls(const json& j, int k) {
    if (j.contains("points")) {
        ControlSet cs;
        cs.k = k;
        for (const auto& p : j.at("points")) {
            auto pt = p.get<std::vector<double>>();
            if (static_cast<int>(pt.size()) != k) bad("control point dimension mismatch");
            cs.points.push_back(std::move(pt));
        }
        cs.validate();
        return cs;
    }
    if (j.contains("uniform")) {
        const auto& u = j.at("uniform");
        check_keys(u, "controls.uniform", {"lo", "hi", "counts"});
        auto lo = u.at("lo").get<std::vector<double>>();
        auto hi = u.at("hi").get<std::vector<double>>();
        auto counts = u.at("counts").get<std::vector<int>>();
        if (static_cast<int>(lo.size()) != k || lo.size() != hi.size() ||
            lo.size() != counts.size())
            bad("controls.uniform shape mismatch");
        return ControlSet::uniform(lo, hi, counts);
    }
    bad("controls needs 'points' or 'uniform'");
}

ProblemSpec parse_problem(const json& j) {
    if (j.is_string()) return builtin_problem(j.get<std::string>());
    if (!j.is_object()) bad("'problem' must be a builtin name or an object");

    check_keys(j, "problem",
               {"name", "n", "d", "k", "T", "b", "sigma", "g", "phi", "L1", "L2", "L3",
                "controls"});

    ProblemSpec spec;
    spec.name = get_or<std::string>(j, "name", "custom");
    spec.n = get_or<int>(j, "n", 1);
    spec.d = get_or<int>(j, "d", 1);
    spec.k = get_or<int>(j, "k", 1);
    if (spec.n < 1 || spec.d < 1 || spec.k < 0) bad("problem dimensions must be positive");
    if (!j.contains("T")) bad("problem needs a horizon 'T'");
    spec.T = j.at("T").get<double>();
    spec.L1 = get_or<double>(j, "L1", 1.0);
    spec.L2 = get_or<double>(j, "L2", 0.0);
    spec.L3 = get_or<double>(j, "L3", 0.0);

    if (j.contains("controls"))
        spec.controls = parse_controls(j.at("controls"), spec.k);
    else
        spec.controls = ControlSet::single(std::vector<double>(static_cast<std::size_t>(spec.k), 0.0));

    const expr::Dims dims = spec.dims();
    auto compile = [&](const std::string& src) { return Coefficient(expr::parse(src, dims)); };

    for (const auto& src : coeff_list(j, "b", static_cast<std::size_t>(spec.n)))
        spec.b.push_back(compile(src));
    for (const auto& src : coeff_list(j, "sigma", static_cast<std::size_t>(spec.n * spec.d)))
        spec.sigma.push_back(compile(src));
    if (!j.contains("g") || !j.contains("phi")) bad("problem needs 'g' and 'phi'");
    spec.g = compile(j.at("g").get<std::string>());
    spec.phi = compile(j.at("phi").get<std::string>());

    spec.validate();
    spec.hash = problem_hash(spec);
    return spec;
}

SpaceTimeGrid parse_grid(const json& j, const ProblemSpec& spec) {
    check_keys(j, "grid", {"t0", "T", "steps", "x_min", "x_max", "x_nodes"});
    SpaceTimeGrid g;
    g.t0 = get_or<double>(j, "t0", 0.0);
    g.T = get_or<double>(j, "T", spec.T);
    if (!j.contains("steps")) bad("grid needs 'steps'");
    g.steps = j.at("steps").get<int>();
    g.x_min = j.at("x_min").get<std::vector<double>>();
    g.x_max = j.at("x_max").get<std::vector<double>>();
    g.x_nodes = j.at("x_nodes").get<std::vector<int>>();
    g.validate();
    if (g.dim() != spec.n) bad("grid dimension does not match the problem");
    return g;
}

} // namespace

ProblemSpec builtin_problem(const std::string& name) {
    auto make = [](const std::string& nm, double T, const char* b, const char* sigma,
                   const char* g, const char* phi, double L1, double L2, double L3,
                   ControlSet controls) {
        ProblemSpec spec;
        spec.name = nm;
        spec.n = spec.d = 1;
        spec.k = controls.k;
        spec.T = T;
        const expr::Dims dims = spec.dims();
        spec.b = {Coefficient(expr::parse(b, dims))};
        spec.sigma = {Coefficient(expr::parse(sigma, dims))};
        spec.g = Coefficient(expr::parse(g, dims));
        spec.phi = Coefficient(expr::parse(phi, dims));
        spec.L1 = L1;
        spec.L2 = L2;
        spec.L3 = L3;
        spec.controls = std::move(controls);
        spec.validate();
        spec.hash = problem_hash(spec);
        return spec;
    };

    const ControlSet none = ControlSet::single({0.0});
    if (name == "heat")
        return make("heat", 1.0, "0", "1", "0", "x1^2", 1.0, 0.0, 0.0, none);
    if (name == "burgers")
        return make("burgers", 0.5, "y", "1", "0", "-tanh(x1)", 1.0, 1.0, 0.0, none);
    if (name == "drift_control")
        return make("drift_control", 1.0, "u1", "1", "0", "x1^2", 1.0, 0.0, 0.0,
                    ControlSet::uniform({-1.0}, {1.0}, {3}));
    if (name == "weak_coupling")
        return make("weak_coupling", 1.0, "0.1*y", "1", "0", "x1^2", 1.0, 0.1, 0.0, none);
    if (name == "sigma_z")
        return make("sigma_z", 0.5, "0", "1+0.5*z1", "0", "0.25*x1^2", 1.0, 0.5, 0.5, none);
    bad("unknown builtin problem '" + name + "'");
}

std::vector<std::string> builtin_names() {
    return {"heat", "burgers", "drift_control", "weak_coupling", "sigma_z"};
}

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        bad(std::string("not valid JSON: ") + e.what());
    }
    if (!j.is_object()) bad("top level must be an object");
    check_keys(j, "config",
               {"schema", "problem", "constants", "gate", "grid", "seed", "threads", "simd",
                "tolerances", "fbsde", "value", "monotonicity", "verify"});
    if (get_or<int>(j, "schema", 1) != 1) bad("unsupported schema version");

    RunConfig cfg;
    if (!j.contains("problem")) bad("missing 'problem'");
    cfg.problem = parse_problem(j.at("problem"));

    if (j.contains("constants")) {
        const auto& c = j.at("constants");
        check_keys(c, "constants", {"C2", "C4", "L_W"});
        if (c.contains("C2")) {
            const double c2 = c.at("C2").get<double>();
            cfg.constants.C2 = [c2](double) { return c2; };
            cfg.constants.source = "config";
        }
        if (c.contains("C4")) {
            cfg.constants.C4 = c.at("C4").get<double>();
            cfg.constants.source = "config";
        }
        if (c.contains("L_W") && !c.at("L_W").is_null())
            cfg.constants.L_W = c.at("L_W").get<double>();
    }

    if (j.contains("gate")) {
        const auto& g = j.at("gate");
        check_keys(g, "gate", {"allow_override"});
        cfg.allow_gate_override = get_or<bool>(g, "allow_override", false);
    }

    if (j.contains("grid")) {
        cfg.grid = parse_grid(j.at("grid"), cfg.problem);
        cfg.has_grid = true;
    }

    cfg.seed = get_or<std::uint64_t>(j, "seed", 1);
    cfg.threads = get_or<int>(j, "threads", 1);
    if (cfg.threads < 1) bad("'threads' must be >= 1");
    cfg.simd = get_or<std::string>(j, "simd", "auto");
    if (cfg.simd != "auto" && cfg.simd != "scalar" && cfg.simd != "avx2")
        bad("'simd' must be auto, scalar or avx2");

    if (j.contains("tolerances")) {
        const auto& t = j.at("tolerances");
        check_keys(t, "tolerances",
                   {"algebra_tol", "algebra_max_iter", "picard_tol", "picard_max_iter",
                    "skip_decoupled_iteration", "ridge", "basis_degree", "cond_limit",
                    "monotonicity_tol", "probe_pairs", "probe_box", "cfl_check"});
        cfg.algebra_tol = get_or<double>(t, "algebra_tol", cfg.algebra_tol);
        cfg.algebra_max_iter = get_or<int>(t, "algebra_max_iter", cfg.algebra_max_iter);
        cfg.picard.tol = get_or<double>(t, "picard_tol", cfg.picard.tol);
        cfg.picard.max_iter = get_or<int>(t, "picard_max_iter", cfg.picard.max_iter);
        cfg.picard.skip_decoupled_iteration =
            get_or<bool>(t, "skip_decoupled_iteration", cfg.picard.skip_decoupled_iteration);
        cfg.picard.regression.ridge = get_or<double>(t, "ridge", cfg.picard.regression.ridge);
        cfg.picard.regression.basis_degree =
            get_or<int>(t, "basis_degree", cfg.picard.regression.basis_degree);
        cfg.picard.regression.cond_limit =
            get_or<double>(t, "cond_limit", cfg.picard.regression.cond_limit);
        cfg.monotonicity_tol = get_or<double>(t, "monotonicity_tol", cfg.monotonicity_tol);
        cfg.probe_pairs = get_or<long>(t, "probe_pairs", cfg.probe_pairs);
        cfg.probe_box = get_or<double>(t, "probe_box", cfg.probe_box);
        cfg.cfl_check = get_or<bool>(t, "cfl_check", cfg.cfl_check);
    }

    if (j.contains("fbsde")) {
        const auto& f = j.at("fbsde");
        check_keys(f, "fbsde", {"M", "steps", "x0"});
        cfg.fbsde_M = get_or<int>(f, "M", cfg.fbsde_M);
        cfg.fbsde_steps = get_or<int>(f, "steps", cfg.fbsde_steps);
        if (f.contains("x0")) cfg.x0 = f.at("x0").get<std::vector<double>>();
    }

    cfg.dpp.picard = cfg.picard;
    cfg.dpp.seed = cfg.seed;
    if (j.contains("value")) {
        const auto& v = j.at("value");
        check_keys(v, "value", {"M", "slab_substeps", "record_argmin"});
        cfg.dpp.M = get_or<int>(v, "M", cfg.dpp.M);
        cfg.dpp.slab_substeps = get_or<int>(v, "slab_substeps", cfg.dpp.slab_substeps);
        cfg.dpp.record_argmin = get_or<bool>(v, "record_argmin", cfg.dpp.record_argmin);
    }

    if (j.contains("monotonicity")) {
        const auto& m = j.at("monotonicity");
        check_keys(m, "monotonicity", {"G", "beta1", "beta2", "mu1"});
        cfg.monotonicity.G = m.at("G").get<std::vector<double>>();
        cfg.monotonicity.beta1 = get_or<double>(m, "beta1", 0.0);
        cfg.monotonicity.beta2 = get_or<double>(m, "beta2", 0.0);
        cfg.monotonicity.mu1 = get_or<double>(m, "mu1", 0.0);
        cfg.monotonicity.validate(cfg.problem.n);
        cfg.has_monotonicity = true;
    }

    // verify options inherit the shared sampling defaults
    cfg.uniqueness.dpp = cfg.dpp;
    cfg.full.dpp = cfg.dpp;
    cfg.full.algebra_tol = cfg.algebra_tol;
    cfg.full.algebra_max_iter = cfg.algebra_max_iter;
    cfg.pr_um.picard = cfg.picard;
    cfg.pr_um.seed = cfg.seed;
    cfg.ito.picard = cfg.picard;
    cfg.ito.seed = cfg.seed;
    cfg.ito.algebra_tol = cfg.algebra_tol;
    cfg.ito.algebra_max_iter = cfg.algebra_max_iter;

    if (j.contains("verify")) {
        const auto& v = j.at("verify");
        check_keys(v, "verify",
                   {"mode", "candidate", "t", "x", "tol", "lip_bound", "epsilon", "m",
                    "substeps", "M", "selection_M", "z_paths", "z_steps", "z_seed", "ito_M",
                    "ito_steps"});
        cfg.verify_mode = get_or<std::string>(v, "mode", cfg.verify_mode);
        if (cfg.verify_mode != "pr-um" && cfg.verify_mode != "frozen-sigma" &&
            cfg.verify_mode != "full" && cfg.verify_mode != "ito")
            bad("verify.mode must be pr-um, frozen-sigma, full or ito");
        cfg.candidate_path = get_or<std::string>(v, "candidate", "");
        if (v.contains("t")) {
            cfg.verify_t = v.at("t").get<double>();
            cfg.has_verify_t = true;
        }
        if (v.contains("x")) cfg.verify_x = v.at("x").get<std::vector<double>>();

        const double tol = get_or<double>(v, "tol", cfg.uniqueness.tol);
        cfg.uniqueness.tol = tol;
        cfg.full.tol = tol;
        cfg.uniqueness.lip_bound = get_or<double>(v, "lip_bound", 0.0);
        cfg.full.epsilon = get_or<double>(v, "epsilon", cfg.full.epsilon);
        cfg.pr_um.m = get_or<int>(v, "m", cfg.pr_um.m);
        cfg.pr_um.substeps = get_or<int>(v, "substeps", cfg.pr_um.substeps);
        cfg.pr_um.M = get_or<int>(v, "M", cfg.pr_um.M);
        cfg.pr_um.selection_M = get_or<int>(v, "selection_M", cfg.pr_um.selection_M);
        cfg.full.z_paths = get_or<int>(v, "z_paths", cfg.full.z_paths);
        cfg.full.z_steps = get_or<int>(v, "z_steps", cfg.full.z_steps);
        cfg.full.z_seed = get_or<std::uint64_t>(v, "z_seed", cfg.full.z_seed);
        cfg.ito.M = get_or<int>(v, "ito_M", cfg.ito.M);
        cfg.ito.steps = get_or<int>(v, "ito_steps", cfg.ito.steps);
    }

    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

Gate make_gate(const RunConfig& cfg) {
    Gate gate;
    gate.report = check_standing_assumptions(cfg.problem, cfg.constants);
    gate.override_gate = cfg.allow_gate_override;
    return gate;
}

void apply_execution_settings(const RunConfig& cfg) {
    set_thread_count(cfg.threads);
    if (cfg.simd == "scalar") kernels::force_backend(kernels::Backend::scalar);
    else if (cfg.simd == "avx2") kernels::force_backend(kernels::Backend::avx2);
    else kernels::force_backend(kernels::Backend::auto_detect);
}

} // namespace fblab::config
