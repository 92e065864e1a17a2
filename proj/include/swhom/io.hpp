#pragma once

#include "config.hpp"
#include "grid.hpp"
#include "homogenize.hpp"
#include "validate.hpp"
#include "verify.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

namespace swhom {

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) throw ConfigError(path + ": expected a matrix");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || j[i].size() != j[0].size()) throw ConfigError(path + ": ragged matrix");
        for (std::size_t k = 0; k < j[i].size(); ++k) {
            if (!j[i][k].is_number()) throw ConfigError(path + ": non-numeric entry");
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
        }
    }
    return m;
}

/// Fields every output file carries so it can be traced back to its run.
inline json provenance(const RunConfig& c) { return {{"config_hash", config_hash(c)}, {"seed", c.sim.seed}}; }

inline json to_json(const ValidationReport& r, const TorusGrid& grid) {
    json v = json::array();
    for (const auto& x : r.violations) {
        json e = {{"node", x.node}, {"x", grid.coordinates(x.node)}, {"kind", to_string(x.kind)}, {"value", x.value}};
        if (x.kind == Violation::Kind::NegativeIntensity) {
            e["from_mode"] = x.mode + 1;
            e["to_mode"] = x.to_mode + 1;
        } else {
            e["mode"] = x.mode + 1;
        }
        v.push_back(e);
    }
    return {{"accepted", r.accepted()},
            {"ellipticity_min", r.ellipticity_min},
            {"intensity_min", r.intensity_min},
            {"irreducible_everywhere", r.irreducible_everywhere},
            {"max_total_rate", r.max_total_rate},
            {"grid", r.grid_counts},
            {"violation_count", r.violation_count},
            {"violations", v}};
}

inline json to_json(const HomogenizationResult& h) {
    const auto& e = h.effective;
    const auto& c = h.corrector;
    return {{"b_bar", vector_to_json(e.b_bar)},
            {"C", matrix_to_json(e.C)},
            {"diffusive_part", matrix_to_json(e.diffusive_part)},
            {"switching_part", matrix_to_json(e.switching_part)},
            {"C_asymmetry", e.asymmetry},
            {"C_min_eigenvalue", e.min_eigenvalue},
            {"density",
             {{"residual", h.density.residual},
              {"relative_residual", h.density.relative_residual},
              {"normalization", h.density.normalization},
              {"min_value", h.density.min_value},
              {"inverse_iteration", h.density.inverse_iteration},
              {"iterations", h.density.iterations}}},
            {"corrector",
             {{"lambda", c.lambda},
              {"relative_residual", c.relative_residual},
              {"centering", c.centering},
              {"max_abs", c.max_abs()}}},
            {"operator",
             {{"size", h.op.size()},
              {"nonzeros", h.op.matrix.nonZeros()},
              {"stencil_order", h.op.stencil_order},
              {"cell_peclet", h.op.cell_peclet},
              {"negative_offdiagonals", h.op.negative_offdiagonals},
              {"warnings", h.op.warnings}}}};
}

inline json to_json(const CovarianceEstimate& e) {
    return {{"C_hat", matrix_to_json(e.C_hat)},
            {"mc_stderr", matrix_to_json(e.mc_stderr)},
            {"mean_Y", vector_to_json(e.mean)},
            {"n_paths", e.n_paths}};
}

inline json to_json(const VerifyReport& r) {
    json j = json::object();
    if (r.covariance) {
        const auto& c = *r.covariance;
        j["covariance"] = {{"C_hat", matrix_to_json(c.C_hat)},
                           {"C_target", matrix_to_json(c.C_target)},
                           {"mc_stderr", matrix_to_json(c.mc_stderr)},
                           {"rel_error", c.rel_error},
                           {"tolerance", c.tolerance},
                           {"pass", c.pass}};
    }
    if (r.crossvariation) {
        const auto& c = *r.crossvariation;
        const auto& x = c.report;
        j["crossvariation"] = {{"realized_mean", matrix_to_json(x.realized_mean)},
                               {"predicted_mean", matrix_to_json(x.predicted_mean)},
                               {"crossvar_rel_error", x.rel_error},
                               {"tolerance", c.tolerance},
                               {"martingale_mean", vector_to_json(x.martingale_mean)},
                               {"martingale_stderr", vector_to_json(x.martingale_stderr)},
                               {"martingale_z", x.martingale_z},
                               {"martingale_z_limit", c.z_limit},
                               {"corrector_term", x.corrector_term},
                               {"corrector_bound", x.corrector_bound},
                               {"n_paths", x.n_paths},
                               {"pass", c.pass}};
    }
    if (r.ergodic) {
        const auto& c = *r.ergodic;
        j["ergodic"] = {{"epsilons", c.scaling.epsilons},
                        {"ergodic_errors", c.scaling.rms},
                        {"mean_average", c.scaling.mean},
                        {"ratios", c.scaling.ratios},
                        {"target", c.scaling.target},
                        {"ratio_bracket", {c.ratio_min, c.ratio_max}},
                        {"mean_rel_error", c.mean_rel_error},
                        {"mean_tolerance", c.mean_tolerance},
                        {"pass", c.pass}};
    }
    j["pass"] = r.pass();
    return j;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

inline void write_json_file(const std::filesystem::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

/// `# config_hash=..., seed=...` line that precedes every CSV table.
inline void write_csv_provenance(std::ostream& os, const RunConfig& c) {
    os << "# config_hash=" << config_hash(c) << " seed=" << c.sim.seed << '\n';
}

/// node_index,x_1..x_d,mode,phi_1..phi_d with 1-based modes.
inline void write_corrector_csv(std::ostream& os, const TorusGrid& grid, const Corrector& corr) {
    const std::size_t d = grid.dim();
    os << "node_index";
    for (std::size_t j = 0; j < d; ++j) os << ",x_" << j + 1;
    os << ",mode";
    for (std::size_t k = 0; k < corr.phi.size(); ++k) os << ",phi_" << k + 1;
    os << '\n';
    os.precision(17);
    const std::size_t modes = corr.phi.empty() ? 0 : corr.phi.front().modes;
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        for (std::size_t a = 0; a < modes; ++a) {
            os << i;
            for (std::size_t j = 0; j < d; ++j) os << ',' << grid.coordinate(i, j);
            os << ',' << a + 1;
            for (const auto& p : corr.phi) os << ',' << p(i, a);
            os << '\n';
        }
    }
}

}  // namespace swhom
