#pragma once

#include "error.hpp"
#include "model.hpp"

#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace swhom {

/// Uniform periodic tensor grid on the torus [0,1)^d.
///
/// Nodes are numbered row-major over axes (the last axis varies fastest).
class TorusGrid {
public:
    TorusGrid(std::vector<std::size_t> n) : n_(std::move(n)) {
        if (n_.empty()) throw DimensionError("grid dimension must be at least 1");
        nodes_ = 1;
        weight_ = 1.0;
        for (std::size_t j = 0; j < n_.size(); ++j) {
            if (n_[j] < 4) {
                throw DimensionError("grid axis " + std::to_string(j) + " has " + std::to_string(n_[j]) +
                                     " nodes; at least 4 are required");
            }
            h_.push_back(1.0 / static_cast<double>(n_[j]));
            weight_ *= h_.back();
            nodes_ *= n_[j];
        }
        stride_.assign(n_.size(), 1);
        for (std::size_t j = n_.size() - 1; j > 0; --j) stride_[j - 1] = stride_[j] * n_[j];
    }

    std::size_t dim() const { return n_.size(); }
    std::size_t nodes() const { return nodes_; }
    std::size_t axis_count(std::size_t axis) const { return n_[axis]; }
    const std::vector<std::size_t>& counts() const { return n_; }
    double spacing(std::size_t axis) const { return h_[axis]; }
    /// Uniform quadrature weight, the product of the spacings.
    double weight() const { return weight_; }

    std::size_t axis_index(std::size_t node, std::size_t axis) const { return (node / stride_[axis]) % n_[axis]; }

    double coordinate(std::size_t node, std::size_t axis) const {
        return static_cast<double>(axis_index(node, axis)) * h_[axis];
    }

    void coordinates(std::size_t node, std::span<double> x) const {
        for (std::size_t j = 0; j < n_.size(); ++j) x[j] = coordinate(node, j);
    }

    std::vector<double> coordinates(std::size_t node) const {
        std::vector<double> x(n_.size());
        coordinates(node, x);
        return x;
    }

    std::size_t node_from_indices(std::span<const std::size_t> idx) const {
        std::size_t node = 0;
        for (std::size_t j = 0; j < n_.size(); ++j) node += (idx[j] % n_[j]) * stride_[j];
        return node;
    }

    /// Node shifted by `offset` cells along `axis`, wrapping periodically.
    std::size_t neighbor(std::size_t node, std::size_t axis, long offset) const {
        const long n = static_cast<long>(n_[axis]);
        const long i = static_cast<long>(axis_index(node, axis));
        const long shifted = ((i + offset) % n + n) % n;
        return node + (static_cast<std::size_t>(shifted) - static_cast<std::size_t>(i)) * stride_[axis];
    }

private:
    std::vector<std::size_t> n_;
    std::vector<double> h_;
    std::vector<std::size_t> stride_;
    std::size_t nodes_ = 0;
    double weight_ = 1.0;
};

inline TorusGrid build_grid(std::size_t d, std::vector<std::size_t> n) {
    if (d < 1) throw DimensionError("grid dimension must be at least 1");
    if (n.size() != d) throw DimensionError("expected " + std::to_string(d) + " axis counts, got " + std::to_string(n.size()));
    return TorusGrid(std::move(n));
}

/// Values indexed by (node, mode) with global index node * modes + mode.
struct GridFunction {
    std::size_t modes = 1;
    std::vector<double> values;

    GridFunction() = default;
    GridFunction(std::size_t nodes, std::size_t modes_, double fill = 0.0)
        : modes(modes_), values(nodes * modes_, fill) {}

    std::size_t nodes() const { return modes == 0 ? 0 : values.size() / modes; }
    double& operator()(std::size_t node, std::size_t mode) { return values[node * modes + mode]; }
    double operator()(std::size_t node, std::size_t mode) const { return values[node * modes + mode]; }
};

namespace detail {

// Neumaier compensated summation in index order.
class CompensatedSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) comp_ += (sum_ - t) + v;
        else comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline void check_matches(const TorusGrid& grid, const GridFunction& f, const char* what) {
    if (f.modes == 0 || f.values.size() != grid.nodes() * f.modes) {
        throw DimensionError(std::string(what) + ": grid function of length " + std::to_string(f.values.size()) +
                             " does not match a grid of " + std::to_string(grid.nodes()) + " nodes");
    }
}

}  // namespace detail

/// Periodic trapezoidal rule summed over modes: w * sum over (node, mode) of f.
inline double quadrature(const TorusGrid& grid, const GridFunction& f) {
    detail::check_matches(grid, f, "quadrature");
    detail::CompensatedSum s;
    for (double v : f.values) s.add(v);
    return grid.weight() * s.value();
}

/// w * sum of f*g.
inline double weighted_inner(const TorusGrid& grid, const GridFunction& f, const GridFunction& g) {
    detail::check_matches(grid, f, "weighted_inner");
    if (f.values.size() != g.values.size()) throw DimensionError("weighted_inner: operands differ in length");
    detail::CompensatedSum s;
    for (std::size_t i = 0; i < f.values.size(); ++i) s.add(f.values[i] * g.values[i]);
    return grid.weight() * s.value();
}

/// Names one coefficient of a model for tabulation.
namespace selector {
struct Drift {
    std::size_t mode;
    std::size_t component;
};
struct Diffusion {
    std::size_t mode;
    std::size_t row;
    std::size_t col;
};
struct Intensity {
    std::size_t from;
    std::size_t to;
};
}  // namespace selector

using CoefficientSelector = std::variant<selector::Drift, selector::Diffusion, selector::Intensity>;

/// Tabulates one coefficient at the grid nodes as a single-mode grid function.
inline GridFunction sample_field(const TorusGrid& grid, const SwitchingModel& model, const CoefficientSelector& sel) {
    if (grid.dim() != model.dim()) throw DimensionError("sample_field: grid and model dimensions differ");
    const std::size_t d = model.dim();
    const std::size_t m = model.modes();
    std::visit(
        [&](const auto& s) {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, selector::Drift>) {
                if (s.mode >= m || s.component >= d) throw DimensionError("sample_field: drift selector out of range");
            } else if constexpr (std::is_same_v<S, selector::Diffusion>) {
                if (s.mode >= m || s.row >= d || s.col >= d) throw DimensionError("sample_field: diffusion selector out of range");
            } else {
                if (s.from >= m || s.to >= m) throw DimensionError("sample_field: intensity selector out of range");
            }
        },
        sel);

    GridFunction out(grid.nodes(), 1);
    std::vector<double> x(d);
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        grid.coordinates(i, x);
        out.values[i] = std::visit(
            [&](const auto& s) -> double {
                using S = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<S, selector::Drift>) {
                    return model.drift(x, s.mode, s.component);
                } else if constexpr (std::is_same_v<S, selector::Diffusion>) {
                    double a = 0.0;
                    for (std::size_t k = 0; k < model.noise_dim(); ++k) {
                        a += eval_field(model.sigma_field(s.mode, s.row, k), x) *
                             eval_field(model.sigma_field(s.mode, s.col, k), x);
                    }
                    return a;
                } else {
                    return model.rate(x, s.from, s.to);
                }
            },
            sel);
    }
    return out;
}

/// b_k(x_i, alpha) over all nodes and modes.
inline GridFunction tabulate_drift(const TorusGrid& grid, const SwitchingModel& model, std::size_t k) {
    if (grid.dim() != model.dim()) throw DimensionError("tabulate_drift: grid and model dimensions differ");
    GridFunction out(grid.nodes(), model.modes());
    std::vector<double> x(grid.dim());
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        grid.coordinates(i, x);
        for (std::size_t a = 0; a < model.modes(); ++a) out(i, a) = model.drift(x, a, k);
    }
    return out;
}

/// Writes `node_index,x_1..x_d,mode,value` rows; modes are written 1-based.
inline void write_grid_function_csv(std::ostream& os, const TorusGrid& grid, const GridFunction& f) {
    detail::check_matches(grid, f, "write_grid_function_csv");
    os << "node_index";
    for (std::size_t j = 0; j < grid.dim(); ++j) os << ",x_" << (j + 1);
    os << ",mode,value\n";
    const auto old_precision = os.precision(17);
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        for (std::size_t a = 0; a < f.modes; ++a) {
            os << i;
            for (std::size_t j = 0; j < grid.dim(); ++j) os << ',' << grid.coordinate(i, j);
            os << ',' << (a + 1) << ',' << f(i, a) << '\n';
        }
    }
    os.precision(old_precision);
}

}  // namespace swhom
