#include "swhom/presets.hpp"
#include "swhom/simulate.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <sstream>

namespace swhom {
namespace {

SwitchingModel constant_rates(std::size_t m, const std::vector<double>& q) {
    const auto zero = FieldSpec::constant_field(0.0);
    const auto one = FieldSpec::constant_field(1.0);
    std::vector<FieldSpec> fields;
    for (double v : q) fields.push_back(FieldSpec::constant_field(v));
    return SwitchingModel(1, 1, m, std::vector<std::vector<FieldSpec>>(m, {zero}),
                          std::vector<std::vector<FieldSpec>>(m, {one}), fields);
}

TEST(SampleSwitchTest, BeyondTotalWidthStays) {
    const auto model = constant_rates(2, {0, 1, 1, 0});
    const std::vector<double> x{0.3};
    EXPECT_EQ(sample_switch(model, x, 0, 0.01, 0.5), 0u);
}

TEST(SampleSwitchTest, InsideIntervalSwitches) {
    const auto model = constant_rates(2, {0, 1, 1, 0});
    const std::vector<double> x{0.3};
    EXPECT_EQ(sample_switch(model, x, 0, 0.01, 0.005), 1u);
}

TEST(SampleSwitchTest, ThreeModeIntervalsInOrder) {
    // [0, 0.01) -> mode 1, [0.01, 0.03) -> mode 2
    const auto model = constant_rates(3, {0, 1, 2, 1, 0, 1, 1, 1, 0});
    const std::vector<double> x{0.0};
    EXPECT_EQ(sample_switch(model, x, 0, 0.01, 0.015), 2u);
    EXPECT_EQ(sample_switch(model, x, 0, 0.01, 0.0), 1u);
    EXPECT_EQ(sample_switch(model, x, 0, 0.01, 0.03), 0u);
}

TEST(SimulateTest, ConstantDriftIsExact) {
    const auto model = constant_model(Eigen::Vector2d(0.75, -1.5), Eigen::Matrix2d::Zero());
    SimConfig cfg;
    cfg.epsilon = 1.0;
    cfg.T = 2.0;
    cfg.h_micro = 0.25;
    cfg.x0 = {0.5, 0.125};
    const auto p = simulate_micro_path(model, cfg, 0);
    ASSERT_EQ(p.size(), 9u);
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double s = p.times[k];
        EXPECT_EQ(p.x(k)[0], 0.5 + 0.75 * s);
        EXPECT_EQ(p.x(k)[1], 0.125 - 1.5 * s);
    }
}

TEST(SimulateTest, ZeroHorizonKeepsInitialState) {
    SimConfig cfg;
    cfg.T = 0.0;
    cfg.alpha0 = 1;
    const auto p = simulate_micro_path(telegraph_model(), cfg, 3);
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p.times[0], 0.0);
    EXPECT_EQ(p.x(0)[0], 0.0);
    EXPECT_EQ(p.I[0], 1u);
}

TEST(SimulateTest, StepCountAndFinalTime) {
    SimConfig cfg;
    cfg.epsilon = 0.05;
    cfg.T = 1.0;
    cfg.h_micro = 0.01;
    EXPECT_EQ(cfg.n_steps(), 40000u);
    cfg.epsilon = 1.0;
    cfg.h_micro = 0.3;
    EXPECT_EQ(cfg.n_steps(), 4u);
    cfg.record_stride = 3;
    const auto p = simulate_micro_path(constant_model(Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Zero(1, 1)), cfg, 0);
    // steps 0 and 3, plus the final state
    ASSERT_EQ(p.size(), 3u);
    EXPECT_EQ(p.times.back(), 1.0);
    EXPECT_NEAR(p.x(2)[0], 1.0, 1e-15);
}

TEST(SimulateTest, TelegraphSpendsHalfTheTimeInEachMode) {
    // Half the paths start in each mode so the transient cancels by symmetry.
    const auto model = telegraph_model();
    SimConfig cfg;
    cfg.epsilon = 1.0;
    cfg.T = 10.0;
    cfg.h_micro = 0.01;
    cfg.seed = 17;
    const std::size_t n = 10000;
    double time_in_first = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        cfg.alpha0 = p % 2;
        double prev_s = 0.0;
        std::size_t prev_mode = 0;
        run_micro_path(model, cfg, p, [&](std::size_t k, double s, std::span<const double>, std::size_t mode) {
            if (k > 0 && prev_mode == 0) time_in_first += s - prev_s;
            prev_s = s;
            prev_mode = mode;
        });
    }
    const double frac = time_in_first / (static_cast<double>(n) * cfg.T);
    EXPECT_GE(frac, 0.48);
    EXPECT_LE(frac, 0.52);
}

TEST(RescaleTest, ScalesPositionAndTime) {
    PathSample micro;
    micro.dim = 1;
    micro.times = {0.0, 200.0, 400.0};
    micro.X = {0.0, -4.0, 10.0};
    micro.I = {0, 1, 1};
    const auto macro = rescale_path(micro, 0.05, 1.0);
    ASSERT_EQ(macro.size(), 3u);
    EXPECT_NEAR(macro.times[2], 1.0, 1e-15);
    EXPECT_NEAR(macro.x(2)[0], 0.5, 1e-15);
    EXPECT_EQ(macro.I, micro.I);
    EXPECT_EQ(macro.scale, 0.05);
}

TEST(RescaleTest, UnitEpsilonIsIdentity) {
    SimConfig cfg;
    cfg.epsilon = 1.0;
    cfg.T = 2.0;
    const auto micro = simulate_micro_path(telegraph_model(), cfg, 1);
    const auto macro = rescale_path(micro, 1.0, 2.0);
    EXPECT_EQ(macro.times, micro.times);
    EXPECT_EQ(macro.X, micro.X);
    EXPECT_EQ(macro.I, micro.I);
}

TEST(RescaleTest, HorizonShortfallThrows) {
    SimConfig cfg;
    cfg.epsilon = 1.0;
    cfg.T = 1.0;
    const auto micro = simulate_micro_path(telegraph_model(), cfg, 0);
    EXPECT_THROW(rescale_path(micro, 0.5, 1.0), SimulationError);
}

TEST(GuardTest, SwitchFractionEnforced) {
    SimConfig cfg;
    cfg.h_micro = 1.0;
    try {
        check_sim_config(telegraph_model(), cfg);
        FAIL() << "expected refusal";
    } catch (const SimulationError& e) {
        EXPECT_NE(std::string(e.what()).find("h_micro <= 0.1"), std::string::npos) << e.what();
    }
    cfg.h_micro = 0.1;
    EXPECT_NO_THROW(check_sim_config(telegraph_model(), cfg));
    // the bound uses the supremum of varying rates
    EXPECT_NEAR(total_rate_bound(two_mode_periodic_model()), 1.0 + 0.5, 1e-15);
}

TEST(GuardTest, InvalidConfigRejected) {
    SimConfig cfg;
    cfg.epsilon = 0.0;
    EXPECT_THROW(check_sim_config(telegraph_model(), cfg), SimulationError);
    cfg = SimConfig{};
    cfg.alpha0 = 2;
    EXPECT_THROW(check_sim_config(telegraph_model(), cfg), DimensionError);
    cfg = SimConfig{};
    cfg.x0 = {0.0, 0.0};
    EXPECT_THROW(check_sim_config(telegraph_model(), cfg), DimensionError);
}

TEST(SimulateTest, NonFiniteStateReportsStep) {
    const auto model = constant_model(Eigen::VectorXd::Constant(1, 1e307), Eigen::MatrixXd::Zero(1, 1));
    SimConfig cfg;
    cfg.epsilon = 1.0;
    cfg.T = 100.0;
    cfg.h_micro = 1.0;
    try {
        simulate_micro_path(model, cfg, 0);
        FAIL() << "expected overflow";
    } catch (const SimulationError& e) {
        EXPECT_NE(std::string(e.what()).find("step 18"), std::string::npos) << e.what();
    }
}

TEST(SimulateProperty, ReproducibleAcrossThreadCounts) {
    SimConfig cfg;
    cfg.epsilon = 0.2;
    cfg.T = 1.0;
    cfg.n_paths = 12;
    cfg.seed = 99;
    cfg.record_stride = 7;
    const auto model = two_mode_periodic_model();
    const auto serial = simulate_paths(model, cfg, 1);
    const auto threaded = simulate_paths(model, cfg, 4);
    ASSERT_EQ(serial.size(), threaded.size());
    for (std::size_t p = 0; p < serial.size(); ++p) {
        ASSERT_EQ(serial[p].X.size(), threaded[p].X.size());
        EXPECT_EQ(std::memcmp(serial[p].X.data(), threaded[p].X.data(), serial[p].X.size() * sizeof(double)), 0);
        EXPECT_EQ(serial[p].I, threaded[p].I);
    }
    const auto single = simulate_micro_path(model, cfg, 5);
    EXPECT_EQ(single.X, serial[5].X);
    EXPECT_NE(serial[0].X, serial[1].X);
    cfg.seed = 100;
    EXPECT_NE(simulate_micro_path(model, cfg, 0).X, serial[0].X);
}

TEST(SimulateProperty, OneStepSwitchFrequency) {
    const auto model = two_mode_periodic_model();
    const std::vector<double> x{0.3, 0.7};
    const double h = 0.05;
    PathEngine engine = path_engine(4, 0);
    for (std::size_t from : {0u, 1u}) {
        const double p = model.rate(x, from, 1 - from) * h;
        const std::size_t n = 1000000;
        std::size_t hits = 0;
        for (std::size_t i = 0; i < n; ++i) hits += sample_switch(model, x, from, h, uniform01(engine)) != from;
        const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
        EXPECT_LE(std::abs(static_cast<double>(hits) / static_cast<double>(n) - p), 4.0 * se) << "from " << from;
    }
}

TEST(SimulateProperty, PureDiffusionVariance) {
    const auto model = constant_model(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Ones(1, 1));
    SimConfig cfg;
    cfg.epsilon = 1.0;
    cfg.T = 1.0;
    cfg.h_micro = 0.01;
    cfg.n_paths = 10000;
    cfg.seed = 5;
    cfg.record_stride = 1000;
    const auto paths = simulate_paths(model, cfg, 0);
    double sum = 0.0;
    double sq = 0.0;
    for (const auto& p : paths) {
        const double v = p.x(p.size() - 1)[0];
        sum += v;
        sq += v * v;
    }
    const double n = static_cast<double>(paths.size());
    const double var = (sq - sum * sum / n) / (n - 1.0);
    EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(SimulateProperty, ForbiddenTransitionNeverOccurs) {
    // 0 -> 2 has zero intensity; 0 reaches 2 only through 1
    const auto model = constant_rates(3, {0, 2, 0, 1, 0, 1, 1, 1, 0});
    SimConfig cfg;
    cfg.epsilon = 1.0;
    cfg.T = 50.0;
    cfg.h_micro = 0.02;
    cfg.n_paths = 200;
    cfg.seed = 8;
    std::size_t visits_to_two = 0;
    for (const auto& p : simulate_paths(model, cfg, 0)) {
        for (std::size_t k = 1; k < p.size(); ++k) {
            ASSERT_FALSE(p.I[k - 1] == 0 && p.I[k] == 2) << "path " << p.path_id << " step " << k;
            visits_to_two += p.I[k] == 2;
        }
    }
    EXPECT_GT(visits_to_two, 0u);
}

TEST(PathsCsv, HeaderAndOneBasedModes) {
    SimConfig cfg;
    cfg.epsilon = 1.0;
    cfg.T = 0.02;
    cfg.n_paths = 2;
    const auto paths = simulate_paths(two_mode_periodic_model(), cfg, 1);
    std::ostringstream os;
    write_paths_csv(os, paths);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "path_id,t,X_1,X_2,I");
    std::getline(is, line);
    EXPECT_EQ(line, "0,0,0,0,1");
}

}  // namespace
}  // namespace swhom
