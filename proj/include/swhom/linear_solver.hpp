#pragma once

#include "error.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/IterativeSolvers>

#include <cstddef>
#include <memory>
#include <string>

namespace swhom {

enum class LinearSolverKind { Auto, Direct, Gmres };

inline LinearSolverKind parse_linear_solver(const std::string& s) {
    if (s == "auto") return LinearSolverKind::Auto;
    if (s == "direct" || s == "lu") return LinearSolverKind::Direct;
    if (s == "gmres" || s == "krylov") return LinearSolverKind::Gmres;
    throw ConfigError("unknown linear solver '" + s + "' (expected auto, direct or gmres)");
}

inline const char* to_string(LinearSolverKind k) {
    switch (k) {
        case LinearSolverKind::Auto: return "auto";
        case LinearSolverKind::Direct: return "direct";
        case LinearSolverKind::Gmres: return "gmres";
    }
    return "auto";
}

struct LinearSolverOptions {
    LinearSolverKind kind = LinearSolverKind::Auto;
    /// Auto switches from sparse LU to GMRES above this many unknowns.
    std::size_t direct_limit = 200000;
    double krylov_tol = 1e-13;
    int krylov_restart = 200;
    int krylov_max_iterations = 20000;
    double ilut_drop_tol = 1e-6;
    int ilut_fill_factor = 20;
};

/// One factorization (or preconditioner setup) reused for several right-hand sides.
class LinearSolver {
public:
    using Matrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

    LinearSolver(const Matrix& a, const LinearSolverOptions& opts) : opts_(opts) {
        kind_ = opts.kind;
        if (kind_ == LinearSolverKind::Auto) {
            kind_ = static_cast<std::size_t>(a.rows()) <= opts.direct_limit ? LinearSolverKind::Direct
                                                                             : LinearSolverKind::Gmres;
        }
        if (kind_ == LinearSolverKind::Direct) {
            lu_ = std::make_unique<Eigen::SparseLU<Matrix>>();
            lu_->analyzePattern(a);
            lu_->factorize(a);
            if (lu_->info() != Eigen::Success) throw SolverError("sparse LU factorization failed: " + lu_->lastErrorMessage());
        } else {
            matrix_ = a;  // GMRES keeps a reference to the operator
            gmres_ = std::make_unique<Gmres>();
            gmres_->preconditioner().setDroptol(opts.ilut_drop_tol);
            gmres_->preconditioner().setFillfactor(opts.ilut_fill_factor);
            gmres_->set_restart(opts.krylov_restart);
            gmres_->setTolerance(opts.krylov_tol);
            gmres_->setMaxIterations(opts.krylov_max_iterations);
            gmres_->compute(matrix_);
            if (gmres_->info() != Eigen::Success) throw SolverError("incomplete LU preconditioner setup failed");
        }
    }

    LinearSolverKind kind() const { return kind_; }

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
        if (lu_) {
            Eigen::VectorXd x = lu_->solve(rhs);
            if (lu_->info() != Eigen::Success) throw SolverError("sparse LU solve failed");
            return x;
        }
        Eigen::VectorXd x = gmres_->solve(rhs);
        if (gmres_->info() != Eigen::Success) {
            throw SolverError("GMRES did not converge: " + std::to_string(gmres_->iterations()) +
                              " iterations, estimated error " + std::to_string(gmres_->error()));
        }
        return x;
    }

private:
    using Gmres = Eigen::GMRES<Matrix, Eigen::IncompleteLUT<double>>;

    LinearSolverOptions opts_;
    LinearSolverKind kind_;
    Matrix matrix_;
    std::unique_ptr<Eigen::SparseLU<Matrix>> lu_;
    std::unique_ptr<Gmres> gmres_;
};

}  // namespace swhom
