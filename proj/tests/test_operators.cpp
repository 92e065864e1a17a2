#include "swhom/operators.hpp"
#include "swhom/presets.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace swhom {
namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

double entry(const DiscreteOperator& op, std::size_t r, std::size_t c) {
    return op.matrix.coeff(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

GridFunction random_function(std::size_t nodes, std::size_t modes, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    GridFunction f(nodes, modes);
    for (double& v : f.values) v = z(rng);
    return f;
}

TEST(AssembleTest, PureDiffusionStencil) {
    const auto model = constant_model(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, std::sqrt(2.0)));
    const auto grid = build_grid(1, {4});
    const auto op = assemble_generator(model, grid);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(entry(op, i, (i + 3) % 4), 16.0, 1e-12);
        EXPECT_NEAR(entry(op, i, i), -32.0, 1e-12);
        EXPECT_NEAR(entry(op, i, (i + 1) % 4), 16.0, 1e-12);
        EXPECT_EQ(entry(op, i, (i + 2) % 4), 0.0);
    }
    EXPECT_TRUE(op.warnings.empty());
}

TEST(AssembleTest, AnnihilatesConstants) {
    for (const auto& name : preset_names()) {
        auto p = make_preset(name);
        std::vector<std::size_t> n(p.model.dim(), 16);
        const auto grid = build_grid(p.model.dim(), n);
        const auto op = assemble_generator(p.model, grid);
        const GridFunction one(grid.nodes(), p.model.modes(), 1.0);
        const auto r = apply_generator(op, one);
        for (double v : r.values) ASSERT_LE(std::abs(v), 1e-11 * op.norm_inf()) << name;
    }
}

TEST(AssembleTest, JumpBlockIsIntensityMatrix) {
    const auto model = telegraph_model(1.0, 1.0, 0.1);
    const auto grid = build_grid(1, {8});
    const auto op = assemble_generator(model, grid);
    const double h = grid.spacing(0);
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        EXPECT_EQ(entry(op, 2 * i, 2 * i + 1), 1.0);
        EXPECT_EQ(entry(op, 2 * i + 1, 2 * i), 1.0);
        // diagonal = diffusion part -a/h^2 plus q_aa = -1
        EXPECT_NEAR(entry(op, 2 * i, 2 * i) + 0.1 / (h * h), -1.0, 1e-12);
        EXPECT_NEAR(entry(op, 2 * i + 1, 2 * i + 1) + 0.1 / (h * h), -1.0, 1e-12);
    }
}

TEST(AssembleTest, MismatchedGridThrows) {
    EXPECT_THROW(assemble_generator(telegraph_model(), build_grid(2, {4, 4})), DimensionError);
}

TEST(AssembleTest, PecletWarning) {
    const auto model = constant_model(Eigen::VectorXd::Constant(1, 10.0), Eigen::MatrixXd::Constant(1, 1, 0.1));
    const auto op = assemble_generator(model, build_grid(1, {8}));
    EXPECT_GT(op.cell_peclet, 2.0);
    EXPECT_FALSE(op.warnings.empty());
}

TEST(AdjointTest, ConstantCoefficientColumnsSumToZero) {
    Eigen::Matrix2d s;
    s << 1.0, 0.3, -0.2, 0.7;
    const auto model = constant_model(Eigen::Vector2d(0.4, -1.2), s);
    const auto grid = build_grid(2, {8, 12});
    const auto op = assemble_generator(model, grid);
    const auto r = apply_adjoint(op, GridFunction(grid.nodes(), 1, 1.0));
    for (double v : r.values) ASSERT_LE(std::abs(v), 1e-11);
}

TEST(AdjointTest, TransposeIdentity) {
    const auto model = two_mode_periodic_model();
    const auto grid = build_grid(2, {10, 12});
    const auto op = assemble_generator(model, grid);
    std::mt19937_64 rng(11);
    for (int t = 0; t < 5; ++t) {
        const auto u = random_function(grid.nodes(), 2, rng);
        const auto v = random_function(grid.nodes(), 2, rng);
        const double lhs = weighted_inner(grid, apply_adjoint(op, v), u);
        const double rhs = weighted_inner(grid, v, apply_generator(op, u));
        EXPECT_LE(std::abs(lhs - rhs), 1e-12 * std::max(std::abs(lhs), 1.0));
    }
}

TEST(AdjointTest, InverseDiffusionIsNullFunction) {
    // (a m)'' = 0 for m = c / a; the transposed non-divergence stencil reproduces this exactly,
    // so the residual sits well inside any O(h^2) envelope.
    const auto model = harmonic_mean_model();
    for (std::size_t n : {32u, 64u, 128u}) {
        const auto grid = build_grid(1, {n});
        const auto op = assemble_generator(model, grid);
        GridFunction v(n, 1);
        for (std::size_t i = 0; i < n; ++i) v(i, 0) = 1.0 / (2.0 + std::sin(two_pi * grid.coordinate(i, 0)));
        const auto r = apply_adjoint(op, v);
        double res = 0.0;
        for (double x : r.values) res = std::max(res, std::abs(x));
        const double h = grid.spacing(0);
        EXPECT_LE(res, h * h) << "n=" << n;
    }
}

TEST(AdjointTest, SizeMismatchThrows) {
    const auto op = assemble_generator(telegraph_model(), build_grid(1, {8}));
    EXPECT_THROW(apply_adjoint(op, GridFunction(8, 1)), DimensionError);
}

TEST(CarreDuChampTest, ConstantAcrossModesVanishes) {
    const auto model = two_mode_periodic_model();
    const auto grid = build_grid(2, {6, 6});
    const GridFunction f(grid.nodes(), 2, 3.7);
    for (double v : carre_du_champ(model, grid, f, f).values) EXPECT_EQ(v, 0.0);
}

TEST(CarreDuChampTest, TwoModeConstantRates) {
    const double q = 2.5;
    const auto model = telegraph_model(q);
    const auto grid = build_grid(1, {8});
    GridFunction f(grid.nodes(), 2);
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        f(i, 0) = 1.5;
        f(i, 1) = -0.5;
    }
    // q (c2 - c1)^2
    for (double v : carre_du_champ(model, grid, f, f).values) EXPECT_NEAR(v, q * 4.0, 1e-14);
}

TEST(CarreDuChampTest, SymmetricAndNonnegative) {
    const auto model = two_mode_periodic_model();
    const auto grid = build_grid(2, {8, 8});
    std::mt19937_64 rng(19);
    const auto f = random_function(grid.nodes(), 2, rng);
    const auto g = random_function(grid.nodes(), 2, rng);
    const auto fg = carre_du_champ(model, grid, f, g);
    const auto gf = carre_du_champ(model, grid, g, f);
    for (std::size_t i = 0; i < fg.values.size(); ++i) EXPECT_NEAR(fg.values[i], gf.values[i], 1e-13 * (1.0 + std::abs(fg.values[i])));
    for (double v : carre_du_champ(model, grid, f, f).values) EXPECT_GE(v, 0.0);
}

TEST(OperatorStructure, SignPattern) {
    const auto model = two_mode_periodic_model();
    const auto grid = build_grid(2, {8, 8});
    const auto op = assemble_generator(model, grid);
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        EXPECT_GE(entry(op, 2 * i, 2 * i + 1), 0.0);
        EXPECT_GE(entry(op, 2 * i + 1, 2 * i), 0.0);
    }
    // b = 0 with diagonal constant a: all off-diagonal entries nonnegative
    Eigen::Matrix2d s;
    s << 1.0, 0.0, 0.0, 0.5;
    const auto diag = assemble_generator(constant_model(Eigen::Vector2d::Zero(), s), grid);
    EXPECT_EQ(diag.negative_offdiagonals, 0u);
}

TEST(OperatorExport, CoordinateFormat) {
    const auto op = assemble_generator(telegraph_model(), build_grid(1, {4}));
    std::ostringstream os;
    write_coordinate_format(os, op);
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    EXPECT_EQ(header, "% 8 8 " + std::to_string(op.matrix.nonZeros()));
    long r = 0, c = 0;
    double v = 0.0;
    long count = 0;
    while (is >> r >> c >> v) {
        EXPECT_EQ(v, entry(op, static_cast<std::size_t>(r), static_cast<std::size_t>(c)));
        ++count;
    }
    EXPECT_EQ(count, op.matrix.nonZeros());
}

// Test function f(x, alpha) = sin(2 pi (x1 + 2 x2) + alpha) + cos(2 pi x1) (alpha + 1).
struct TestFunction {
    static double value(const std::vector<double>& x, std::size_t a) {
        return std::sin(two_pi * (x[0] + 2.0 * x[1]) + static_cast<double>(a)) +
               std::cos(two_pi * x[0]) * static_cast<double>(a + 1);
    }
    static Eigen::Vector2d gradient(const std::vector<double>& x, std::size_t a) {
        const double c = std::cos(two_pi * (x[0] + 2.0 * x[1]) + static_cast<double>(a));
        const double s1 = std::sin(two_pi * x[0]) * static_cast<double>(a + 1);
        return {two_pi * c - two_pi * s1, 2.0 * two_pi * c};
    }
    static Eigen::Matrix2d hessian(const std::vector<double>& x, std::size_t a) {
        const double s = std::sin(two_pi * (x[0] + 2.0 * x[1]) + static_cast<double>(a));
        const double c1 = std::cos(two_pi * x[0]) * static_cast<double>(a + 1);
        const double w2 = two_pi * two_pi;
        Eigen::Matrix2d h;
        h << -w2 * s - w2 * c1, -2.0 * w2 * s, -2.0 * w2 * s, -4.0 * w2 * s;
        return h;
    }
};

TEST(OperatorProperty, SecondOrderConsistency) {
    const auto model = two_mode_periodic_model();
    std::vector<double> errors;
    for (std::size_t n : {32u, 64u, 128u}) {
        const auto grid = build_grid(2, {n, n});
        const auto op = assemble_generator(model, grid);
        GridFunction f(grid.nodes(), 2);
        for (std::size_t i = 0; i < grid.nodes(); ++i)
            for (std::size_t a = 0; a < 2; ++a) f(i, a) = TestFunction::value(grid.coordinates(i), a);
        const auto lf = apply_generator(op, f);
        double err = 0.0;
        for (std::size_t i = 0; i < grid.nodes(); ++i) {
            const auto x = grid.coordinates(i);
            for (std::size_t a = 0; a < 2; ++a) {
                const Eigen::MatrixXd diff = model.diffusion(x, a);
                double exact = model.drift(x, a).dot(TestFunction::gradient(x, a)) +
                               0.5 * (diff.array() * TestFunction::hessian(x, a).array()).sum();
                for (std::size_t b = 0; b < 2; ++b)
                    if (b != a) exact += model.rate(x, a, b) * (TestFunction::value(x, b) - TestFunction::value(x, a));
                err = std::max(err, std::abs(lf(i, a) - exact));
            }
        }
        errors.push_back(err);
    }
    for (std::size_t k = 0; k + 1 < errors.size(); ++k) {
        const double order = std::log2(errors[k] / errors[k + 1]);
        EXPECT_GE(order, 1.7);
        EXPECT_LE(order, 2.3);
    }
}

}  // namespace
}  // namespace swhom
