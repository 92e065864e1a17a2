#pragma once

#include "grid.hpp"
#include "model.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace swhom {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Second-order finite-difference generator on (node, mode) unknowns.
///
/// Row (i, alpha) applies sum_j b_j D_j + 1/2 sum_jk a_jk D_jk + sum_beta q_{alpha beta} (mode coupling)
/// at node i with periodic stencils. The discrete adjoint is the transpose.
struct DiscreteOperator {
    SparseMatrix matrix;
    std::size_t nodes = 0;
    std::size_t modes = 0;
    int stencil_order = 2;
    /// Largest cell Peclet number max|b_j| h_j / a_min over nodes and modes.
    double cell_peclet = 0.0;
    std::size_t negative_offdiagonals = 0;
    std::vector<std::string> warnings;

    std::size_t size() const { return nodes * modes; }

    /// Infinity norm (max absolute row sum).
    double norm_inf() const {
        double n = 0.0;
        for (Eigen::Index r = 0; r < matrix.outerSize(); ++r) {
            double s = 0.0;
            for (SparseMatrix::InnerIterator it(matrix, r); it; ++it) s += std::abs(it.value());
            n = std::max(n, s);
        }
        return n;
    }
};

inline DiscreteOperator assemble_generator(const SwitchingModel& model, const TorusGrid& grid) {
    if (grid.dim() != model.dim()) {
        throw DimensionError("assemble_generator: model dimension " + std::to_string(model.dim()) +
                             " does not match grid dimension " + std::to_string(grid.dim()));
    }
    const std::size_t d = model.dim();
    const std::size_t m = model.modes();
    const std::size_t n = grid.nodes();

    DiscreteOperator op;
    op.nodes = n;
    op.modes = m;

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(n * m * (1 + 2 * d + 2 * d * (d - 1) + m));
    std::vector<double> x(d);
    double a_min = std::numeric_limits<double>::infinity();
    double peclet_num = 0.0;

    for (std::size_t i = 0; i < n; ++i) {
        grid.coordinates(i, x);
        const Eigen::MatrixXd q = model.intensity_matrix(x);
        for (std::size_t a = 0; a < m; ++a) {
            const auto row = static_cast<Eigen::Index>(i * m + a);
            auto put = [&](std::size_t node, std::size_t mode, double v) {
                trip.emplace_back(row, static_cast<Eigen::Index>(node * m + mode), v);
            };
            const Eigen::VectorXd b = model.drift(x, a);
            const Eigen::MatrixXd diff = model.diffusion(x, a);
            for (std::size_t j = 0; j < d; ++j) {
                const double h = grid.spacing(j);
                const std::size_t up = grid.neighbor(i, j, +1);
                const std::size_t dn = grid.neighbor(i, j, -1);
                const double first = b[j] / (2.0 * h);
                const double second = 0.5 * diff(j, j) / (h * h);
                put(up, a, first + second);
                put(dn, a, -first + second);
                put(i, a, -2.0 * second);
                peclet_num = std::max(peclet_num, std::abs(b[j]) * h);
                a_min = std::min(a_min, diff(j, j));
                for (std::size_t k = j + 1; k < d; ++k) {
                    // 1/2 (a_jk + a_kj) D_jk with the 4-point cross stencil
                    const double c = diff(j, k) / (4.0 * h * grid.spacing(k));
                    put(grid.neighbor(up, k, +1), a, c);
                    put(grid.neighbor(dn, k, -1), a, c);
                    put(grid.neighbor(up, k, -1), a, -c);
                    put(grid.neighbor(dn, k, +1), a, -c);
                }
            }
            for (std::size_t b2 = 0; b2 < m; ++b2) {
                if (b2 != a) put(i, b2, q(a, b2));
            }
            if (m > 1) put(i, a, q(a, a));
        }
    }

    op.matrix.resize(static_cast<Eigen::Index>(n * m), static_cast<Eigen::Index>(n * m));
    op.matrix.setFromTriplets(trip.begin(), trip.end());
    op.matrix.makeCompressed();

    op.cell_peclet = a_min > 0.0 ? peclet_num / a_min : std::numeric_limits<double>::infinity();
    if (op.cell_peclet > 2.0) {
        std::ostringstream msg;
        msg << "cell Peclet number " << op.cell_peclet << " exceeds 2; centered drift differences may lose monotonicity";
        op.warnings.push_back(msg.str());
    }
    for (Eigen::Index r = 0; r < op.matrix.outerSize(); ++r) {
        for (SparseMatrix::InnerIterator it(op.matrix, r); it; ++it) {
            if (it.col() != r && it.value() < 0.0) ++op.negative_offdiagonals;
        }
    }
    if (op.negative_offdiagonals > 0) {
        op.warnings.push_back(std::to_string(op.negative_offdiagonals) +
                              " negative off-diagonal entries; discrete maximum principle is not guaranteed");
    }
    return op;
}

namespace detail {
inline Eigen::Map<const Eigen::VectorXd> as_vector(const GridFunction& f) {
    return {f.values.data(), static_cast<Eigen::Index>(f.values.size())};
}
}  // namespace detail

inline GridFunction apply_generator(const DiscreteOperator& op, const GridFunction& u) {
    if (u.values.size() != op.size() || u.modes != op.modes) throw DimensionError("apply_generator: size mismatch");
    GridFunction out(op.nodes, op.modes);
    Eigen::Map<Eigen::VectorXd>(out.values.data(), static_cast<Eigen::Index>(out.values.size())) =
        op.matrix * detail::as_vector(u);
    return out;
}

/// A^T v: the discrete stand-in for the adjoint generator.
inline GridFunction apply_adjoint(const DiscreteOperator& op, const GridFunction& v) {
    if (v.values.size() != op.size() || v.modes != op.modes) throw DimensionError("apply_adjoint: size mismatch");
    GridFunction out(op.nodes, op.modes);
    Eigen::Map<Eigen::VectorXd>(out.values.data(), static_cast<Eigen::Index>(out.values.size())) =
        op.matrix.transpose() * detail::as_vector(v);
    return out;
}

/// Q(f,g)(i, alpha) = sum_beta q_{alpha beta}(x_i) (f(i,beta) - f(i,alpha)) (g(i,beta) - g(i,alpha)).
inline GridFunction carre_du_champ(const SwitchingModel& model, const TorusGrid& grid, const GridFunction& f,
                                   const GridFunction& g) {
    const std::size_t m = model.modes();
    if (f.modes != m || g.modes != m || f.values.size() != grid.nodes() * m || g.values.size() != f.values.size()) {
        throw DimensionError("carre_du_champ: grid functions do not match grid and mode count");
    }
    GridFunction out(grid.nodes(), m);
    if (m == 1) return out;
    std::vector<double> x(grid.dim());
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        grid.coordinates(i, x);
        for (std::size_t a = 0; a < m; ++a) {
            double s = 0.0;
            for (std::size_t b = 0; b < m; ++b) {
                if (b == a) continue;
                s += model.rate(x, a, b) * (f(i, b) - f(i, a)) * (g(i, b) - g(i, a));
            }
            out(i, a) = s;
        }
    }
    return out;
}

/// Writes one `row col value` line per stored entry (0-based indices).
inline void write_coordinate_format(std::ostream& os, const DiscreteOperator& op) {
    const auto old_precision = os.precision(17);
    os << "% " << op.matrix.rows() << ' ' << op.matrix.cols() << ' ' << op.matrix.nonZeros() << '\n';
    for (Eigen::Index r = 0; r < op.matrix.outerSize(); ++r) {
        for (SparseMatrix::InnerIterator it(op.matrix, r); it; ++it) {
            os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
        }
    }
    os.precision(old_precision);
}

}  // namespace swhom
