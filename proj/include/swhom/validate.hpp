#pragma once

#include "grid.hpp"
#include "model.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace swhom {

struct Violation {
    enum class Kind { Ellipticity, NegativeIntensity, Reducible };

    std::size_t node;
    // mode for Ellipticity/Reducible, (from, to) for NegativeIntensity
    std::size_t mode;
    std::size_t to_mode;
    Kind kind;
    double value;
};

inline const char* to_string(Violation::Kind k) {
    switch (k) {
        case Violation::Kind::Ellipticity: return "ellipticity";
        case Violation::Kind::NegativeIntensity: return "negative_intensity";
        case Violation::Kind::Reducible: return "reducible";
    }
    return "unknown";
}

/// Outcome of checking ellipticity, nonnegative intensities and irreducibility at grid nodes.
struct ValidationReport {
    double ellipticity_min = std::numeric_limits<double>::infinity();
    /// Minimum off-diagonal intensity; 0 for a single-mode model (no pairs).
    double intensity_min = 0.0;
    bool irreducible_everywhere = true;
    /// max over nodes and modes of the total exit rate.
    double max_total_rate = 0.0;
    std::vector<std::size_t> grid_counts;
    /// Only the first `max_recorded` violations are stored; the count is exact.
    std::vector<Violation> violations;
    std::size_t violation_count = 0;

    bool accepted() const { return ellipticity_min > 0.0 && intensity_min >= 0.0 && irreducible_everywhere; }
};

struct ValidationOptions {
    double irreducibility_tol = 1e-12;
    std::size_t max_recorded = 100;
};

namespace detail {

// Strong connectivity of the mode graph with edges where q(from,to) > tol.
inline bool strongly_connected(const Eigen::MatrixXd& q, double tol) {
    const auto n = static_cast<std::size_t>(q.rows());
    auto reach_all = [&](bool forward) {
        std::vector<char> seen(n, 0);
        std::vector<std::size_t> stack{0};
        seen[0] = 1;
        std::size_t count = 1;
        while (!stack.empty()) {
            const std::size_t a = stack.back();
            stack.pop_back();
            for (std::size_t b = 0; b < n; ++b) {
                if (a == b || seen[b]) continue;
                const double rate = forward ? q(a, b) : q(b, a);
                if (rate > tol) {
                    seen[b] = 1;
                    ++count;
                    stack.push_back(b);
                }
            }
        }
        return count == n;
    };
    return reach_all(true) && reach_all(false);
}

}  // namespace detail

inline ValidationReport validate_model(const SwitchingModel& model, const TorusGrid& grid,
                                       const ValidationOptions& opts = {}) {
    if (grid.dim() != model.dim()) throw DimensionError("validate_model: grid and model dimensions differ");
    ValidationReport rep;
    rep.grid_counts = grid.counts();
    const std::size_t m = model.modes();
    if (m > 1) rep.intensity_min = std::numeric_limits<double>::infinity();

    auto record = [&](Violation v) {
        ++rep.violation_count;
        if (rep.violations.size() < opts.max_recorded) rep.violations.push_back(v);
    };

    std::vector<double> x(grid.dim());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        grid.coordinates(i, x);
        for (std::size_t a = 0; a < m; ++a) {
            eig.compute(model.diffusion(x, a), Eigen::EigenvaluesOnly);
            const double lmin = eig.eigenvalues().minCoeff();
            rep.ellipticity_min = std::min(rep.ellipticity_min, lmin);
            if (!(lmin > 0.0)) record({i, a, a, Violation::Kind::Ellipticity, lmin});
        }
        const Eigen::MatrixXd q = model.intensity_matrix(x);
        for (std::size_t a = 0; a < m; ++a) {
            double total = 0.0;
            for (std::size_t b = 0; b < m; ++b) {
                if (a == b) continue;
                rep.intensity_min = std::min(rep.intensity_min, q(a, b));
                if (q(a, b) < 0.0) record({i, a, b, Violation::Kind::NegativeIntensity, q(a, b)});
                total += q(a, b);
            }
            rep.max_total_rate = std::max(rep.max_total_rate, total);
        }
        if (m > 1 && !detail::strongly_connected(q, opts.irreducibility_tol)) {
            rep.irreducible_everywhere = false;
            record({i, 0, 0, Violation::Kind::Reducible, 0.0});
        }
    }
    return rep;
}

}  // namespace swhom
