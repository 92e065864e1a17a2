#pragma once

#include "grid.hpp"
#include "linear_solver.hpp"
#include "model.hpp"
#include "operators.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

namespace swhom {

struct SolverOptions {
    /// ||A^T m||_inf <= density_tol * ||A||_inf * ||m||_inf
    double density_tol = 1e-10;
    /// ||A phi - rhs||_inf <= cell_tol * scale, scale = max(||rhs||_inf, caller scale)
    double cell_tol = 1e-8;
    /// |w sum m rhs| <= centering_tol
    double centering_tol = 1e-9;
    double lambda_tol = 1e-8;
    bool force_inverse_iteration = false;
    int inverse_iteration_max = 50;
    LinearSolverOptions linear;
};

struct InvariantDensity {
    GridFunction m;
    /// ||A^T m||_inf
    double residual = 0.0;
    /// residual / (||A||_inf ||m||_inf)
    double relative_residual = 0.0;
    /// w * sum of m after normalization
    double normalization = 0.0;
    double min_value = 0.0;
    bool inverse_iteration = false;
    int iterations = 0;
};

/// Solution of one bordered cell system [[A, m], [w^T, 0]] [phi; lambda] = [rhs; 0].
struct CellSolution {
    GridFunction phi;
    double lambda = 0.0;
    /// ||A phi - rhs||_inf / scale
    double relative_residual = 0.0;
    /// w * sum of phi
    double centering = 0.0;
};

struct Corrector {
    std::vector<GridFunction> phi;
    /// gradient[k][j] = d phi_k / d x_j at the nodes, centered differences
    std::vector<std::vector<GridFunction>> gradient;
    std::vector<double> b_bar;
    std::vector<double> centering;
    std::vector<double> lambda;
    std::vector<double> relative_residual;

    double max_abs() const {
        double v = 0.0;
        for (const auto& p : phi)
            for (double x : p.values) v = std::max(v, std::abs(x));
        return v;
    }
};

struct EffectiveCoefficients {
    Eigen::VectorXd b_bar;
    Eigen::MatrixXd C;
    /// average of (I - D phi) a (I - D phi)^T
    Eigen::MatrixXd diffusive_part;
    /// average of Q(phi_k, phi_l)
    Eigen::MatrixXd switching_part;
    double asymmetry = 0.0;
    double min_eigenvalue = 0.0;
};

namespace detail {

using ColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

inline Eigen::VectorXd to_eigen(const GridFunction& f) {
    return Eigen::Map<const Eigen::VectorXd>(f.values.data(), static_cast<Eigen::Index>(f.values.size()));
}

inline GridFunction from_eigen(const Eigen::VectorXd& v, std::size_t modes, std::size_t count) {
    GridFunction f(count / modes, modes);
    for (std::size_t i = 0; i < count; ++i) f.values[i] = v[static_cast<Eigen::Index>(i)];
    return f;
}

inline double norm_inf(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

inline double norm_inf(const GridFunction& f) {
    double n = 0.0;
    for (double v : f.values) n = std::max(n, std::abs(v));
    return n;
}

}  // namespace detail

/// Normalized invariant density: A^T m = 0, w sum m = 1, m > 0.
///
/// Solves A^T with its last row replaced by the normalization row. Falls back to inverse
/// iteration on A^T + delta I when the residual against the unmodified A^T is too large.
inline InvariantDensity solve_invariant_density(const DiscreteOperator& op, const TorusGrid& grid,
                                                const SolverOptions& opts = {}) {
    const std::size_t size = op.size();
    if (grid.nodes() != op.nodes) throw DimensionError("solve_invariant_density: operator and grid differ");
    const auto N = static_cast<Eigen::Index>(size);
    const detail::ColMatrix at = op.matrix.transpose();
    const double a_norm = op.norm_inf();

    InvariantDensity out;
    Eigen::VectorXd m;
    auto relative = [&](const Eigen::VectorXd& v) {
        const double r = detail::norm_inf(at * v);
        const double s = a_norm * detail::norm_inf(v);
        return s > 0.0 ? r / s : r;
    };

    if (!opts.force_inverse_iteration) {
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(op.matrix.nonZeros()) + size);
        for (Eigen::Index r = 0; r < op.matrix.outerSize(); ++r) {
            for (SparseMatrix::InnerIterator it(op.matrix, r); it; ++it) {
                // entry (r, c) of A is entry (c, r) of A^T; row N-1 of A^T is replaced
                if (it.col() != N - 1) trip.emplace_back(it.col(), it.row(), it.value());
            }
        }
        for (Eigen::Index c = 0; c < N; ++c) trip.emplace_back(N - 1, c, grid.weight());
        detail::ColMatrix b(N, N);
        b.setFromTriplets(trip.begin(), trip.end());
        b.makeCompressed();
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N);
        rhs[N - 1] = 1.0;
        try {
            LinearSolver solver(b, opts.linear);
            m = solver.solve(rhs);
        } catch (const SolverError&) {
            m.resize(0);
        }
        out.iterations = 1;
    }

    if (m.size() != N || !m.allFinite() || relative(m) > opts.density_tol) {
        out.inverse_iteration = true;
        detail::ColMatrix shifted = at;
        const double delta = 1e-12 * a_norm;
        for (Eigen::Index i = 0; i < N; ++i) shifted.coeffRef(i, i) += delta;
        shifted.makeCompressed();
        LinearSolverOptions lopts = opts.linear;
        LinearSolver solver(shifted, lopts);
        Eigen::VectorXd v = Eigen::VectorXd::Ones(N);
        bool converged = false;
        for (int it = 1; it <= opts.inverse_iteration_max; ++it) {
            v = solver.solve(v);
            const double scale = detail::norm_inf(v);
            if (!(scale > 0.0) || !std::isfinite(scale)) throw SolverError("inverse iteration broke down");
            v /= scale;
            out.iterations = it;
            if (relative(v) <= opts.density_tol) {
                converged = true;
                break;
            }
        }
        if (!converged) {
            std::ostringstream msg;
            msg << "invariant density did not converge: relative residual " << relative(v) << " after "
                << out.iterations << " inverse iterations";
            throw SolverError(msg.str());
        }
        m = v;
    }

    out.m = detail::from_eigen(m, op.modes, size);
    const double mass = quadrature(grid, out.m);
    if (!(std::abs(mass) > 0.0)) throw SolverError("invariant density has zero mass");
    for (double& v : out.m.values) v /= mass;
    m /= mass;
    out.normalization = quadrature(grid, out.m);
    out.residual = detail::norm_inf(at * m);
    out.relative_residual = relative(m);
    out.min_value = *std::min_element(out.m.values.begin(), out.m.values.end());
    if (!(out.min_value > 0.0)) {
        std::ostringstream msg;
        msg << "invariant density is not strictly positive (min " << out.min_value
            << "); refine the grid (cell Peclet " << op.cell_peclet << ")";
        throw SolverError(msg.str());
    }
    return out;
}

/// b_bar_k = w * sum over nodes and modes of b_k m.
inline std::vector<double> effective_drift(const SwitchingModel& model, const TorusGrid& grid,
                                           const InvariantDensity& density) {
    if (density.m.modes != model.modes() || density.m.nodes() != grid.nodes()) {
        throw DimensionError("effective_drift: density does not match model and grid");
    }
    std::vector<double> b(model.dim());
    for (std::size_t k = 0; k < model.dim(); ++k) b[k] = weighted_inner(grid, tabulate_drift(grid, model, k), density.m);
    return b;
}

/// Discrete compatibility functional w * sum m rhs; zero iff rhs is in the range of the generator.
inline double check_solvability(const InvariantDensity& density, const GridFunction& rhs, const TorusGrid& grid) {
    return weighted_inner(grid, density.m, rhs);
}

namespace detail {

inline ColMatrix bordered_matrix(const DiscreteOperator& op, const TorusGrid& grid, const InvariantDensity& density) {
    const auto N = static_cast<Eigen::Index>(op.size());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(op.matrix.nonZeros()) + 2 * op.size());
    for (Eigen::Index r = 0; r < op.matrix.outerSize(); ++r)
        for (SparseMatrix::InnerIterator it(op.matrix, r); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    for (Eigen::Index i = 0; i < N; ++i) {
        trip.emplace_back(i, N, density.m.values[static_cast<std::size_t>(i)]);
        trip.emplace_back(N, i, grid.weight());
    }
    ColMatrix b(N + 1, N + 1);
    b.setFromTriplets(trip.begin(), trip.end());
    b.makeCompressed();
    return b;
}

}  // namespace detail

/// Solves A phi = rhs_k with w sum phi = 0 for every rhs sharing one factorization.
///
/// `scales[k]` (optional) is a lower bound on the residual scale for rhs k, used when the
/// rhs is itself at rounding level.
inline std::vector<CellSolution> solve_cell_problems(const DiscreteOperator& op, const TorusGrid& grid,
                                                     const InvariantDensity& density,
                                                     const std::vector<GridFunction>& rhs,
                                                     const SolverOptions& opts = {},
                                                     const std::vector<double>& scales = {}) {
    const std::size_t size = op.size();
    for (std::size_t k = 0; k < rhs.size(); ++k) {
        if (rhs[k].values.size() != size || rhs[k].modes != op.modes) throw DimensionError("solve_cell_problems: rhs size mismatch");
        const double c = check_solvability(density, rhs[k], grid);
        if (!(std::abs(c) <= opts.centering_tol)) {
            std::ostringstream msg;
            msg << "right-hand side " << k << " has w*sum(m*rhs) = " << c << " (tolerance " << opts.centering_tol << ")";
            throw CompatibilityError(msg.str());
        }
    }
    std::vector<CellSolution> out;
    if (rhs.empty()) return out;

    const auto N = static_cast<Eigen::Index>(size);
    const LinearSolver solver(detail::bordered_matrix(op, grid, density), opts.linear);
    for (std::size_t k = 0; k < rhs.size(); ++k) {
        Eigen::VectorXd r(N + 1);
        r.head(N) = detail::to_eigen(rhs[k]);
        r[N] = 0.0;
        const Eigen::VectorXd sol = solver.solve(r);
        if (!sol.allFinite()) throw SolverError("bordered cell system produced non-finite values");

        CellSolution cs;
        cs.phi = detail::from_eigen(sol.head(N), op.modes, size);
        cs.lambda = sol[N];
        double scale = detail::norm_inf(rhs[k]);
        if (k < scales.size()) scale = std::max(scale, scales[k]);
        const double res = detail::norm_inf(Eigen::VectorXd(op.matrix * sol.head(N) - r.head(N)));
        cs.relative_residual = scale > 0.0 ? res / scale : res;
        cs.centering = quadrature(grid, cs.phi);
        if (!(std::abs(cs.lambda) <= opts.lambda_tol)) {
            std::ostringstream msg;
            msg << "border multiplier " << cs.lambda << " exceeds " << opts.lambda_tol;
            throw CompatibilityError(msg.str());
        }
        if (!(scale == 0.0 ? res == 0.0 : cs.relative_residual <= opts.cell_tol)) {
            std::ostringstream msg;
            msg << "cell problem residual " << cs.relative_residual << " exceeds " << opts.cell_tol;
            throw SolverError(msg.str());
        }
        out.push_back(std::move(cs));
    }
    return out;
}

inline CellSolution solve_cell_problem(const DiscreteOperator& op, const TorusGrid& grid,
                                       const InvariantDensity& density, const GridFunction& rhs,
                                       const SolverOptions& opts = {}) {
    return solve_cell_problems(op, grid, density, {rhs}, opts).front();
}

/// Centered-difference derivative along `axis`, per mode.
inline GridFunction centered_derivative(const TorusGrid& grid, const GridFunction& f, std::size_t axis) {
    GridFunction out(grid.nodes(), f.modes);
    const double inv = 1.0 / (2.0 * grid.spacing(axis));
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        const std::size_t up = grid.neighbor(i, axis, +1);
        const std::size_t dn = grid.neighbor(i, axis, -1);
        for (std::size_t a = 0; a < f.modes; ++a) out(i, a) = (f(up, a) - f(dn, a)) * inv;
    }
    return out;
}

/// Cell problem L phi_k = b_k - b_bar_k with sum_alpha int phi_k = 0, for k = 1..d.
inline Corrector solve_corrector(const DiscreteOperator& op, const TorusGrid& grid, const InvariantDensity& density,
                                 const std::vector<double>& b_bar, const SwitchingModel& model,
                                 const SolverOptions& opts = {}) {
    const std::size_t d = model.dim();
    if (b_bar.size() != d) throw DimensionError("solve_corrector: b_bar has wrong length");
    std::vector<GridFunction> rhs;
    std::vector<double> scales;
    for (std::size_t k = 0; k < d; ++k) {
        GridFunction r = tabulate_drift(grid, model, k);
        scales.push_back(detail::norm_inf(r));
        for (double& v : r.values) v -= b_bar[k];
        rhs.push_back(std::move(r));
    }
    auto sols = solve_cell_problems(op, grid, density, rhs, opts, scales);

    Corrector c;
    c.b_bar = b_bar;
    for (auto& s : sols) {
        c.centering.push_back(s.centering);
        c.lambda.push_back(s.lambda);
        c.relative_residual.push_back(s.relative_residual);
        c.phi.push_back(std::move(s.phi));
    }
    c.gradient.resize(d);
    for (std::size_t k = 0; k < d; ++k)
        for (std::size_t j = 0; j < d; ++j) c.gradient[k].push_back(centered_derivative(grid, c.phi[k], j));
    return c;
}

/// Pointwise integrand (I - D phi) a (I - D phi)^T + Q(phi, phi) at one node and mode.
inline Eigen::MatrixXd covariance_integrand(const SwitchingModel& model, const TorusGrid& grid, const Corrector& corr,
                                            std::size_t node, std::size_t mode) {
    const std::size_t d = model.dim();
    const std::vector<double> x = grid.coordinates(node);
    Eigen::MatrixXd g = Eigen::MatrixXd::Identity(d, d);
    for (std::size_t k = 0; k < d; ++k)
        for (std::size_t j = 0; j < d; ++j) g(k, j) -= corr.gradient[k][j](node, mode);
    Eigen::MatrixXd out = g * model.diffusion(x, mode) * g.transpose();
    for (std::size_t b = 0; b < model.modes(); ++b) {
        if (b == mode) continue;
        const double q = model.rate(x, mode, b);
        for (std::size_t k = 0; k < d; ++k)
            for (std::size_t l = 0; l < d; ++l)
                out(k, l) += q * (corr.phi[k](node, b) - corr.phi[k](node, mode)) *
                             (corr.phi[l](node, b) - corr.phi[l](node, mode));
    }
    return out;
}

/// C = sum_alpha int [(I - D phi) a (I - D phi)^T + Q(phi, phi)] m dx, symmetrized.
inline EffectiveCoefficients effective_covariance(const SwitchingModel& model, const TorusGrid& grid,
                                                  const InvariantDensity& density, const Corrector& corr) {
    const std::size_t d = model.dim();
    const std::size_t m = model.modes();
    if (density.m.modes != m || density.m.nodes() != grid.nodes() || corr.phi.size() != d) {
        throw DimensionError("effective_covariance: density or corrector does not match model and grid");
    }
    for (const auto& p : corr.phi)
        if (p.values.size() != density.m.values.size()) throw DimensionError("effective_covariance: corrector size mismatch");

    std::vector<detail::CompensatedSum> diff(d * d);
    std::vector<double> x(d);
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        grid.coordinates(i, x);
        for (std::size_t a = 0; a < m; ++a) {
            Eigen::MatrixXd g = Eigen::MatrixXd::Identity(d, d);
            for (std::size_t k = 0; k < d; ++k)
                for (std::size_t j = 0; j < d; ++j) g(k, j) -= corr.gradient[k][j](i, a);
            const Eigen::MatrixXd integrand = g * model.diffusion(x, a) * g.transpose();
            const double wm = density.m(i, a);
            for (std::size_t k = 0; k < d; ++k)
                for (std::size_t l = 0; l < d; ++l) diff[k * d + l].add(integrand(k, l) * wm);
        }
    }

    EffectiveCoefficients out;
    out.b_bar = Eigen::Map<const Eigen::VectorXd>(corr.b_bar.data(), static_cast<Eigen::Index>(d));
    out.diffusive_part.resize(d, d);
    out.switching_part = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t k = 0; k < d; ++k)
        for (std::size_t l = 0; l < d; ++l) out.diffusive_part(k, l) = grid.weight() * diff[k * d + l].value();
    if (m > 1) {
        for (std::size_t k = 0; k < d; ++k) {
            for (std::size_t l = k; l < d; ++l) {
                const GridFunction q = carre_du_champ(model, grid, corr.phi[k], corr.phi[l]);
                out.switching_part(k, l) = weighted_inner(grid, q, density.m);
                out.switching_part(l, k) = out.switching_part(k, l);
            }
        }
    }
    const Eigen::MatrixXd raw = out.diffusive_part + out.switching_part;
    out.asymmetry = (raw - raw.transpose()).cwiseAbs().maxCoeff();
    out.diffusive_part = 0.5 * (out.diffusive_part + out.diffusive_part.transpose());
    out.C = out.diffusive_part + out.switching_part;
    out.min_eigenvalue = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(out.C, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    return out;
}

/// Full homogenization pipeline on one grid.
struct HomogenizationResult {
    DiscreteOperator op;
    InvariantDensity density;
    Corrector corrector;
    EffectiveCoefficients effective;
};

inline HomogenizationResult homogenize(const SwitchingModel& model, const TorusGrid& grid, const SolverOptions& opts = {}) {
    HomogenizationResult r;
    r.op = assemble_generator(model, grid);
    r.density = solve_invariant_density(r.op, grid, opts);
    const auto b_bar = effective_drift(model, grid, r.density);
    r.corrector = solve_corrector(r.op, grid, r.density, b_bar, model, opts);
    r.effective = effective_covariance(model, grid, r.density, r.corrector);
    return r;
}

}  // namespace swhom
