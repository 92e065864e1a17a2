#pragma once

#include "error.hpp"
#include "homogenize.hpp"
#include "linear_solver.hpp"
#include "model.hpp"
#include "presets.hpp"
#include "simulate.hpp"

#include "json.hpp"

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace swhom {

using json = nlohmann::json;

inline const std::vector<std::string>& verify_test_names() {
    static const std::vector<std::string> names{"covariance", "crossvariation", "ergodic"};
    return names;
}

struct ErgodicSettings {
    std::vector<double> epsilons{0.2, 0.1, 0.05};
    double t = 1.0;
    std::size_t n_paths = 500;
    double h_micro = 0.001;
    /// "diffusion_trace" (tr a(x, alpha)) or "mode_indicator" (1 on `mode`).
    std::string observable = "diffusion_trace";
    /// 1-based.
    std::size_t mode = 1;
    double ratio_min = 1.4;
    double ratio_max = 2.9;
    double mean_tol = 0.02;
};

struct VerifySettings {
    std::vector<std::string> tests{"covariance", "crossvariation", "ergodic"};
    double covariance_tol = 0.1;
    double crossvariation_tol = 0.05;
    std::size_t crossvariation_paths = 2000;
    double martingale_z = 4.0;
    ErgodicSettings ergodic;
    /// Read C and b_bar from effective.json in the output directory instead of recomputing them.
    bool from_artifacts = false;
};

struct DebugSettings {
    /// Solve the cell problem with the uncentered drift (exercises the compatibility check).
    bool uncentered_rhs = false;
    /// Multiplies the target C in verify (negative control).
    double C_scale = 1.0;
};

struct RunConfig {
    /// Empty for an explicit model.
    std::string preset;
    json model_doc;
    std::optional<SwitchingModel> model;
    std::vector<std::size_t> grid;
    SolverOptions solver;
    SimConfig sim;
    bool write_paths = false;
    VerifySettings verify;
    std::vector<std::size_t> convergence;
    DebugSettings debug;
    std::string output_dir = "out";

    const SwitchingModel& get_model() const { return model.value(); }
};

// ---------------------------------------------------------------------------------------------
// Field and model documents

inline json field_to_json(const FieldSpec& f) {
    if (f.terms.empty()) return f.constant;
    json terms = json::array();
    for (const auto& t : f.terms) terms.push_back({{"k", t.k}, {"cos", t.cos_coeff}, {"sin", t.sin_coeff}});
    return {{"constant", f.constant}, {"terms", terms}};
}

inline json model_to_json(const SwitchingModel& m) {
    json drift = json::array();
    json sigma = json::array();
    json intensity = json::array();
    for (std::size_t a = 0; a < m.modes(); ++a) {
        json b = json::array();
        for (std::size_t j = 0; j < m.dim(); ++j) b.push_back(field_to_json(m.drift_field(a, j)));
        drift.push_back(b);
        json s = json::array();
        for (std::size_t i = 0; i < m.dim(); ++i) {
            json row = json::array();
            for (std::size_t j = 0; j < m.noise_dim(); ++j) row.push_back(field_to_json(m.sigma_field(a, i, j)));
            s.push_back(row);
        }
        sigma.push_back(s);
        json q = json::array();
        for (std::size_t b2 = 0; b2 < m.modes(); ++b2) q.push_back(field_to_json(m.intensity_field(a, b2)));
        intensity.push_back(q);
    }
    return {{"d", m.dim()}, {"r", m.noise_dim()}, {"modes", m.modes()},
            {"drift", drift}, {"sigma", sigma}, {"intensity", intensity}};
}

namespace detail {

inline void check_keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) throw ConfigError("unknown key '" + (path.empty() ? "" : path + ".") + it.key() + "'");
    }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& path) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    const std::string name = path.empty() ? key : path + "." + key;
    try {
        out = it->template get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(name + ": " + e.what());
    }
}

inline double number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path + ": expected a number");
    return j.get<double>();
}

inline FieldSpec parse_field(const json& j, const std::string& path) {
    if (j.is_null()) return FieldSpec{};
    if (j.is_number()) return FieldSpec::constant_field(j.get<double>());
    check_keys(j, path, {"constant", "terms"});
    FieldSpec f;
    if (j.contains("constant")) f.constant = number(j["constant"], path + ".constant");
    if (j.contains("terms")) {
        if (!j["terms"].is_array()) throw ConfigError(path + ".terms: expected an array");
        for (std::size_t t = 0; t < j["terms"].size(); ++t) {
            const json& term = j["terms"][t];
            const std::string tp = path + ".terms[" + std::to_string(t) + "]";
            check_keys(term, tp, {"k", "cos", "sin"});
            if (!term.contains("k")) throw ConfigError(tp + ".k: missing wavevector");
            std::vector<int> k;
            read(term, "k", k, tp);
            double c = 0.0;
            double s = 0.0;
            read(term, "cos", c, tp);
            read(term, "sin", s, tp);
            f.add(std::move(k), c, s);
        }
    }
    return f;
}

inline const json& array_of(const json& j, std::size_t n, const std::string& path) {
    if (!j.is_array() || j.size() != n) throw ConfigError(path + ": expected an array of length " + std::to_string(n));
    return j;
}

}  // namespace detail

inline SwitchingModel model_from_json(const json& j) {
    detail::check_keys(j, "model", {"d", "r", "modes", "drift", "sigma", "intensity"});
    std::size_t d = 0;
    std::size_t r = 0;
    std::size_t m = 1;
    detail::read(j, "d", d, "model");
    detail::read(j, "modes", m, "model");
    r = d;
    detail::read(j, "r", r, "model");
    if (d < 1) throw ConfigError("model.d: must be at least 1");
    if (r < 1) throw ConfigError("model.r: must be at least 1");
    if (m < 1) throw ConfigError("model.modes: must be at least 1");
    if (!j.contains("drift")) throw ConfigError("model.drift: missing");
    if (!j.contains("sigma")) throw ConfigError("model.sigma: missing");

    std::vector<std::vector<FieldSpec>> drift(m);
    std::vector<std::vector<FieldSpec>> sigma(m);
    std::vector<FieldSpec> intensity(m * m);
    const json& dj = detail::array_of(j["drift"], m, "model.drift");
    const json& sj = detail::array_of(j["sigma"], m, "model.sigma");
    for (std::size_t a = 0; a < m; ++a) {
        const std::string dp = "model.drift[" + std::to_string(a) + "]";
        const json& da = detail::array_of(dj[a], d, dp);
        for (std::size_t k = 0; k < d; ++k) drift[a].push_back(detail::parse_field(da[k], dp + "[" + std::to_string(k) + "]"));
        const std::string sp = "model.sigma[" + std::to_string(a) + "]";
        const json& sa = detail::array_of(sj[a], d, sp);
        for (std::size_t i = 0; i < d; ++i) {
            const std::string rp = sp + "[" + std::to_string(i) + "]";
            const json& row = detail::array_of(sa[i], r, rp);
            for (std::size_t k = 0; k < r; ++k) sigma[a].push_back(detail::parse_field(row[k], rp + "[" + std::to_string(k) + "]"));
        }
    }
    if (j.contains("intensity")) {
        const json& qj = detail::array_of(j["intensity"], m, "model.intensity");
        for (std::size_t a = 0; a < m; ++a) {
            const std::string qp = "model.intensity[" + std::to_string(a) + "]";
            const json& qa = detail::array_of(qj[a], m, qp);
            for (std::size_t b = 0; b < m; ++b)
                if (a != b) intensity[a * m + b] = detail::parse_field(qa[b], qp + "[" + std::to_string(b) + "]");
        }
    } else if (m > 1) {
        throw ConfigError("model.intensity: required when modes > 1");
    }
    try {
        return SwitchingModel(d, r, m, std::move(drift), std::move(sigma), std::move(intensity));
    } catch (const DimensionError& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
}

// ---------------------------------------------------------------------------------------------
// Defaults per preset

inline RunConfig preset_config(const std::string& name) {
    Preset p = make_preset(name);
    RunConfig c;
    c.preset = name;
    c.model_doc = model_to_json(p.model);
    c.model = p.model;
    c.grid = p.grid;
    c.sim.epsilon = 0.05;
    c.sim.T = 1.0;
    c.sim.h_micro = 0.01;
    c.sim.n_paths = 4000;
    c.sim.seed = 1;
    c.sim.record_stride = 100;
    if (name == "telegraph") {
        c.verify.ergodic.observable = "mode_indicator";
        c.verify.ergodic.mode = 1;
        c.verify.ergodic.h_micro = 0.01;
    } else if (name == "harmonic-mean") {
        c.verify.ergodic.observable = "diffusion_trace";
        c.verify.ergodic.h_micro = 0.001;
    } else {
        // a constant observable has no fluctuation to decay; mode statistics are checked elsewhere
        c.verify.tests = {"covariance", "crossvariation"};
    }
    return c;
}

inline std::vector<std::size_t> default_convergence(const std::vector<std::size_t>& grid) {
    const std::size_t n = grid.empty() ? 64 : grid.front();
    std::vector<std::size_t> out;
    for (std::size_t f : {4u, 2u, 1u})
        if (n / f >= 4) out.push_back(n / f);
    return out;
}

// ---------------------------------------------------------------------------------------------
// Parsing

/// Builds a run configuration from a document, optionally forcing a preset.
///
/// A document may name a preset ("preset": "telegraph") or give an explicit "model". Any
/// other section overrides the preset defaults key by key.
inline RunConfig parse_run_config(const json& doc, const std::string& preset_override = "") {
    detail::check_keys(doc, "", {"preset", "model", "grid", "solver", "sim", "verify", "convergence", "debug", "output_dir"});
    std::string preset = preset_override;
    if (preset.empty() && doc.contains("preset")) detail::read(doc, "preset", preset, "");
    if (!preset.empty() && doc.contains("model")) throw ConfigError("model: give either a preset or a model, not both");
    if (preset.empty() && !doc.contains("model")) throw ConfigError("model: missing (or name a preset)");

    RunConfig c;
    if (!preset.empty()) {
        c = preset_config(preset);
    } else {
        c.model = model_from_json(doc["model"]);
        c.model_doc = model_to_json(*c.model);
        c.sim.record_stride = 100;
    }
    const std::size_t d = c.get_model().dim();

    if (doc.contains("grid")) {
        const json& g = doc["grid"];
        detail::check_keys(g, "grid", {"n"});
        detail::read(g, "n", c.grid, "grid");
        if (c.grid.size() == 1 && d > 1) c.grid.assign(d, c.grid.front());
    }
    if (c.grid.size() != d) throw ConfigError("grid.n: expected " + std::to_string(d) + " axis counts");
    for (std::size_t n : c.grid)
        if (n < 4) throw ConfigError("grid.n: every axis needs at least 4 nodes");

    if (doc.contains("solver")) {
        const json& s = doc["solver"];
        detail::check_keys(s, "solver", {"density_tol", "cell_tol", "centering_tol", "lambda_tol", "linear_solver",
                                         "inverse_iteration", "krylov_tol", "direct_limit"});
        detail::read(s, "density_tol", c.solver.density_tol, "solver");
        detail::read(s, "cell_tol", c.solver.cell_tol, "solver");
        detail::read(s, "centering_tol", c.solver.centering_tol, "solver");
        detail::read(s, "lambda_tol", c.solver.lambda_tol, "solver");
        detail::read(s, "inverse_iteration", c.solver.force_inverse_iteration, "solver");
        detail::read(s, "krylov_tol", c.solver.linear.krylov_tol, "solver");
        detail::read(s, "direct_limit", c.solver.linear.direct_limit, "solver");
        if (s.contains("linear_solver")) {
            std::string name;
            detail::read(s, "linear_solver", name, "solver");
            try {
                c.solver.linear.kind = parse_linear_solver(name);
            } catch (const ConfigError& e) {
                throw ConfigError(std::string("solver.linear_solver: ") + e.what());
            }
        }
    }

    if (doc.contains("sim")) {
        const json& s = doc["sim"];
        detail::check_keys(s, "sim", {"epsilon", "T", "h_micro", "n_paths", "seed", "x0", "alpha0", "record_stride",
                                      "write_paths"});
        detail::read(s, "epsilon", c.sim.epsilon, "sim");
        detail::read(s, "T", c.sim.T, "sim");
        detail::read(s, "h_micro", c.sim.h_micro, "sim");
        detail::read(s, "n_paths", c.sim.n_paths, "sim");
        detail::read(s, "seed", c.sim.seed, "sim");
        detail::read(s, "x0", c.sim.x0, "sim");
        detail::read(s, "record_stride", c.sim.record_stride, "sim");
        detail::read(s, "write_paths", c.write_paths, "sim");
        if (s.contains("alpha0")) {
            std::size_t a = 0;
            detail::read(s, "alpha0", a, "sim");
            if (a < 1 || a > c.get_model().modes()) throw ConfigError("sim.alpha0: modes are numbered 1.." +
                                                                      std::to_string(c.get_model().modes()));
            c.sim.alpha0 = a - 1;
        }
    }
    if (!c.sim.x0.empty() && c.sim.x0.size() != d) throw ConfigError("sim.x0: expected " + std::to_string(d) + " values");
    if (!(c.sim.epsilon > 0.0 && c.sim.epsilon <= 1.0)) throw ConfigError("sim.epsilon: must lie in (0, 1]");
    if (!(c.sim.T >= 0.0)) throw ConfigError("sim.T: must be nonnegative");
    if (!(c.sim.h_micro > 0.0)) throw ConfigError("sim.h_micro: must be positive");
    if (c.sim.record_stride < 1) throw ConfigError("sim.record_stride: must be at least 1");

    if (doc.contains("verify")) {
        const json& v = doc["verify"];
        detail::check_keys(v, "verify", {"tests", "covariance_tol", "crossvariation_tol", "crossvariation_paths",
                                         "martingale_z", "ergodic", "from_artifacts"});
        detail::read(v, "tests", c.verify.tests, "verify");
        detail::read(v, "covariance_tol", c.verify.covariance_tol, "verify");
        detail::read(v, "crossvariation_tol", c.verify.crossvariation_tol, "verify");
        detail::read(v, "crossvariation_paths", c.verify.crossvariation_paths, "verify");
        detail::read(v, "martingale_z", c.verify.martingale_z, "verify");
        detail::read(v, "from_artifacts", c.verify.from_artifacts, "verify");
        if (v.contains("ergodic")) {
            const json& e = v["ergodic"];
            auto& eg = c.verify.ergodic;
            detail::check_keys(e, "verify.ergodic", {"epsilons", "t", "n_paths", "h_micro", "observable", "mode",
                                                     "ratio_min", "ratio_max", "mean_tol"});
            detail::read(e, "epsilons", eg.epsilons, "verify.ergodic");
            detail::read(e, "t", eg.t, "verify.ergodic");
            detail::read(e, "n_paths", eg.n_paths, "verify.ergodic");
            detail::read(e, "h_micro", eg.h_micro, "verify.ergodic");
            detail::read(e, "observable", eg.observable, "verify.ergodic");
            detail::read(e, "mode", eg.mode, "verify.ergodic");
            detail::read(e, "ratio_min", eg.ratio_min, "verify.ergodic");
            detail::read(e, "ratio_max", eg.ratio_max, "verify.ergodic");
            detail::read(e, "mean_tol", eg.mean_tol, "verify.ergodic");
        }
    }
    for (const auto& t : c.verify.tests) {
        bool known = false;
        for (const auto& n : verify_test_names()) known |= n == t;
        if (!known) throw ConfigError("verify.tests: unknown test '" + t + "'");
    }
    const auto& eg = c.verify.ergodic;
    if (eg.observable != "diffusion_trace" && eg.observable != "mode_indicator") {
        throw ConfigError("verify.ergodic.observable: expected diffusion_trace or mode_indicator");
    }
    if (eg.mode < 1 || eg.mode > c.get_model().modes()) throw ConfigError("verify.ergodic.mode: not a valid mode");

    c.convergence = default_convergence(c.grid);
    if (doc.contains("convergence")) {
        const json& cv = doc["convergence"];
        detail::check_keys(cv, "convergence", {"n"});
        detail::read(cv, "n", c.convergence, "convergence");
    }
    for (std::size_t n : c.convergence)
        if (n < 4) throw ConfigError("convergence.n: every grid needs at least 4 nodes per axis");

    if (doc.contains("debug")) {
        const json& g = doc["debug"];
        detail::check_keys(g, "debug", {"uncentered_rhs", "C_scale"});
        detail::read(g, "uncentered_rhs", c.debug.uncentered_rhs, "debug");
        detail::read(g, "C_scale", c.debug.C_scale, "debug");
    }
    detail::read(doc, "output_dir", c.output_dir, "");
    return c;
}

inline json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": malformed JSON: " + e.what());
    }
}

inline RunConfig load_run_config(const std::string& path, const std::string& preset_override = "") {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(parse_json_text(ss.str(), path), preset_override);
}

// ---------------------------------------------------------------------------------------------
// Canonical form

/// The resolved configuration; output_dir is excluded because it does not affect results.
inline json to_json(const RunConfig& c) {
    json j;
    if (!c.preset.empty()) j["preset"] = c.preset;
    j["model"] = c.model_doc;
    j["grid"] = {{"n", c.grid}};
    j["solver"] = {{"density_tol", c.solver.density_tol},
                   {"cell_tol", c.solver.cell_tol},
                   {"centering_tol", c.solver.centering_tol},
                   {"lambda_tol", c.solver.lambda_tol},
                   {"linear_solver", to_string(c.solver.linear.kind)},
                   {"inverse_iteration", c.solver.force_inverse_iteration},
                   {"krylov_tol", c.solver.linear.krylov_tol},
                   {"direct_limit", c.solver.linear.direct_limit}};
    j["sim"] = {{"epsilon", c.sim.epsilon},
                {"T", c.sim.T},
                {"h_micro", c.sim.h_micro},
                {"n_paths", c.sim.n_paths},
                {"seed", c.sim.seed},
                {"x0", c.sim.x0},
                {"alpha0", c.sim.alpha0 + 1},
                {"record_stride", c.sim.record_stride},
                {"write_paths", c.write_paths}};
    const auto& e = c.verify.ergodic;
    j["verify"] = {{"tests", c.verify.tests},
                   {"covariance_tol", c.verify.covariance_tol},
                   {"crossvariation_tol", c.verify.crossvariation_tol},
                   {"crossvariation_paths", c.verify.crossvariation_paths},
                   {"martingale_z", c.verify.martingale_z},
                   {"from_artifacts", c.verify.from_artifacts},
                   {"ergodic",
                    {{"epsilons", e.epsilons},
                     {"t", e.t},
                     {"n_paths", e.n_paths},
                     {"h_micro", e.h_micro},
                     {"observable", e.observable},
                     {"mode", e.mode},
                     {"ratio_min", e.ratio_min},
                     {"ratio_max", e.ratio_max},
                     {"mean_tol", e.mean_tol}}}};
    j["convergence"] = {{"n", c.convergence}};
    j["debug"] = {{"uncentered_rhs", c.debug.uncentered_rhs}, {"C_scale", c.debug.C_scale}};
    return j;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string config_hash(const RunConfig& c) {
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << fnv1a(to_json(c).dump());
    return os.str();
}

}  // namespace swhom
