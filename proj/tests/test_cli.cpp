#include "swhom/cli.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace swhom {
namespace {

namespace fs = std::filesystem;

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("swhom_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path config(const json& doc, const std::string& name = "run.json") const {
        const auto p = dir_ / name;
        std::ofstream(p) << doc.dump(2);
        return p;
    }

    Outcome run(std::vector<std::string> args, const std::string& out_name = "out") const {
        args.insert(args.begin(), "swhom");
        args.push_back("--out");
        args.push_back((dir_ / out_name).string());
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out;
        std::ostringstream err;
        const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        return {code, out.str(), err.str()};
    }

    json read_json(const std::string& rel) const {
        std::ifstream in(dir_ / rel);
        return json::parse(in);
    }

    std::string read_text(const std::string& rel) const {
        std::ifstream in(dir_ / rel);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    fs::path dir_;
};

json two_mode_model(double q12) {
    return {{"d", 1},
            {"r", 1},
            {"modes", 2},
            {"drift", {{0.0}, {0.0}}},
            {"sigma", {{{1.0}}, {{0.5}}}},
            {"intensity", {{0.0, q12}, {1.0, 0.0}}}};
}

TEST_F(CliTest, ValidateAcceptsPreset) {
    const auto r = run({"validate", "--preset", "telegraph"});
    EXPECT_EQ(r.code, 0) << r.err;
    const auto v = read_json("out/validation.json");
    EXPECT_TRUE(v["accepted"].get<bool>());
    EXPECT_EQ(v["violation_count"], 0);
}

TEST_F(CliTest, NegativeIntensityRejected) {
    const auto cfg = config({{"model", two_mode_model(-1.0)}, {"grid", {{"n", {16}}}}});
    const auto r = run({"validate", "--config", cfg.string()});
    EXPECT_EQ(r.code, 1);
    const auto v = read_json("out/validation.json");
    EXPECT_FALSE(v["accepted"].get<bool>());
    ASSERT_FALSE(v["violations"].empty());
    EXPECT_EQ(v["violations"][0]["kind"], "negative_intensity");
    EXPECT_EQ(v["violations"][0]["from_mode"], 1);
    EXPECT_EQ(v["violations"][0]["to_mode"], 2);
    // downstream commands refuse a rejected model
    EXPECT_EQ(run({"homogenize", "--config", cfg.string()}).code, 1);
}

TEST_F(CliTest, MalformedConfigIsUsageError) {
    const auto p = dir_ / "bad.json";
    std::ofstream(p) << "{\"preset\": \"telegraph\",";
    const auto r = run({"validate", "--config", p.string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("malformed JSON"), std::string::npos) << r.err;
}

TEST_F(CliTest, UnknownKeyAndWrongTypeNamed) {
    auto r = run({"validate", "--config", config({{"preset", "telegraph"}, {"sim", {{"epsilonn", 0.1}}}}).string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("sim.epsilonn"), std::string::npos) << r.err;
    r = run({"validate", "--config", config({{"preset", "telegraph"}, {"sim", {{"n_paths", "many"}}}}).string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("sim.n_paths"), std::string::npos) << r.err;
}

TEST_F(CliTest, UsageErrors) {
    EXPECT_EQ(run({"validate"}).code, 2);
    EXPECT_EQ(run({"validate", "--config", (dir_ / "missing.json").string()}).code, 2);
    EXPECT_EQ(run({"validate", "--preset", "no-such-model"}).code, 2);
    EXPECT_EQ(run({"frobnicate"}).code, 2);
    EXPECT_EQ(run({"validate", "--config", config({{"model", two_mode_model(1.0)}, {"grid", {{"n", {16, 16}}}}}).string()}).code, 2);
}

TEST_F(CliTest, HomogenizeHarmonicMean) {
    const auto r = run({"homogenize", "--preset", "harmonic-mean"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto e = read_json("out/effective.json");
    EXPECT_NEAR(e["C"][0][0].get<double>(), std::sqrt(3.0), 1e-3);
    EXPECT_NEAR(e["b_bar"][0].get<double>(), 0.0, 1e-12);
    const auto density = read_text("out/density.csv");
    const auto corrector = read_text("out/corrector.csv");
    EXPECT_EQ(density.rfind("# config_hash=", 0), 0u);
    EXPECT_NE(corrector.find("node_index,x_1,mode,phi_1"), std::string::npos);
}

TEST_F(CliTest, HomogenizeConstantIsExact) {
    ASSERT_EQ(run({"homogenize", "--preset", "constant"}).code, 0);
    const auto e = read_json("out/effective.json");
    const auto C = matrix_from_json(e["C"], "C");
    Eigen::Matrix2d s;
    s << 1.0, 0.0, 0.5, 0.8;
    EXPECT_LE((C - s * s.transpose()).norm(), 1e-12);
    EXPECT_NEAR(e["b_bar"][0].get<double>(), 1.0, 1e-12);
    EXPECT_NEAR(e["b_bar"][1].get<double>(), -0.5, 1e-12);
}

TEST_F(CliTest, UncenteredRightHandSideFails) {
    const auto cfg = config({{"preset", "telegraph"}, {"debug", {{"uncentered_rhs", true}}}});
    const auto r = run({"homogenize", "--config", cfg.string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("Fredholm compatibility violated"), std::string::npos) << r.err;
}

TEST_F(CliTest, SimulateRefusesCoarseStep) {
    const auto cfg = config({{"preset", "telegraph"}, {"sim", {{"h_micro", 0.5}}}});
    const auto r = run({"simulate", "--config", cfg.string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("h_micro <="), std::string::npos) << r.err;
}

TEST_F(CliTest, SimulateReproducible) {
    const auto cfg = config({{"preset", "telegraph"}, {"sim", {{"n_paths", 200}, {"epsilon", 0.1}}}});
    ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--threads", "1"}, "a").code, 0);
    ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--threads", "3"}, "b").code, 0);
    EXPECT_EQ(read_text("a/summary.json"), read_text("b/summary.json"));
    ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--seed", "99"}, "c").code, 0);
    const auto c = read_json("c/summary.json");
    EXPECT_EQ(c["seed"], 99);
    EXPECT_NE(c["C_hat"], read_json("a/summary.json")["C_hat"]);
}

TEST_F(CliTest, SimulateTelegraphCovariance) {
    const auto cfg = config({{"preset", "telegraph"}, {"sim", {{"n_paths", 2000}, {"epsilon", 0.1}}}});
    ASSERT_EQ(run({"simulate", "--config", cfg.string()}).code, 0);
    const auto s = read_json("out/summary.json");
    EXPECT_NEAR(s["C_hat"][0][0].get<double>(), 1.1, 0.11);
    EXPECT_EQ(s["n_paths"], 2000);
}

TEST_F(CliTest, SimulateWritesPaths) {
    const auto cfg = config({{"preset", "telegraph"},
                             {"sim", {{"n_paths", 3}, {"epsilon", 0.5}, {"record_stride", 1}, {"write_paths", true}}}});
    ASSERT_EQ(run({"simulate", "--config", cfg.string()}).code, 0);
    const auto text = read_text("out/paths.csv");
    EXPECT_EQ(text.rfind("# config_hash=", 0), 0u);
    EXPECT_NE(text.find("path_id,t,X_1,I"), std::string::npos);
}

TEST_F(CliTest, VerifyDetectsScaledTarget) {
    const auto cfg = config({{"preset", "telegraph"},
                             {"sim", {{"n_paths", 1000}, {"epsilon", 0.1}}},
                             {"verify", {{"tests", {"covariance"}}}},
                             {"debug", {{"C_scale", 2.0}}}});
    const auto r = run({"verify", "--config", cfg.string()});
    EXPECT_EQ(r.code, 1);
    const auto v = read_json("out/verify.json");
    EXPECT_FALSE(v["pass"].get<bool>());
    EXPECT_FALSE(v["covariance"]["pass"].get<bool>());
}

TEST_F(CliTest, VerifyErgodicOnly) {
    const auto cfg = config({{"preset", "telegraph"}, {"verify", {{"tests", {"ergodic"}}, {"ergodic", {{"n_paths", 300}}}}}});
    const auto r = run({"verify", "--config", cfg.string()});
    EXPECT_EQ(r.code, 0) << r.out << r.err;
    const auto v = read_json("out/verify.json");
    EXPECT_TRUE(v.contains("ergodic"));
    EXPECT_FALSE(v.contains("covariance"));
    EXPECT_FALSE(v.contains("crossvariation"));
    EXPECT_EQ(v["ergodic"]["ratios"].size(), 2u);
}

TEST_F(CliTest, VerifyFromArtifacts) {
    const json doc = {{"preset", "telegraph"},
                      {"sim", {{"n_paths", 500}, {"epsilon", 0.1}}},
                      {"verify", {{"tests", {"covariance"}}, {"from_artifacts", true}, {"covariance_tol", 0.2}}}};
    const auto cfg = config(doc);
    EXPECT_EQ(run({"verify", "--config", cfg.string()}).code, 2);
    ASSERT_EQ(run({"homogenize", "--config", cfg.string()}).code, 0);
    EXPECT_EQ(run({"verify", "--config", cfg.string()}).code, 0);
    // artifacts from a different configuration are not reused
    EXPECT_EQ(run({"verify", "--config", cfg.string(), "--seed", "5"}).code, 2);
}

TEST_F(CliTest, ConvergenceTable) {
    const auto cfg = config({{"preset", "two-mode-periodic"}, {"convergence", {{"n", {8, 16, 32}}}}});
    const auto r = run({"convergence", "--config", cfg.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(read_text("out/convergence.csv"));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line.rfind("# config_hash=", 0), 0u);
    std::getline(in, line);
    EXPECT_EQ(line, "n,h,error,order,C_11,C_12,C_21,C_22");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 3);
}

TEST_F(CliTest, ProvenanceInEveryOutput) {
    const auto cfg = config({{"preset", "telegraph"}, {"sim", {{"n_paths", 50}, {"seed", 7}}}});
    ASSERT_EQ(run({"validate", "--config", cfg.string()}).code, 0);
    ASSERT_EQ(run({"homogenize", "--config", cfg.string()}).code, 0);
    ASSERT_EQ(run({"simulate", "--config", cfg.string()}).code, 0);
    const auto hash = read_json("out/validation.json")["config_hash"].get<std::string>();
    EXPECT_EQ(hash.size(), 16u);
    for (const char* f : {"out/validation.json", "out/effective.json", "out/summary.json"}) {
        const auto j = read_json(f);
        EXPECT_EQ(j["config_hash"], hash) << f;
        EXPECT_EQ(j["seed"], 7) << f;
    }
    for (const char* f : {"out/density.csv", "out/corrector.csv"})
        EXPECT_EQ(read_text(f).rfind("# config_hash=" + hash + " seed=7", 0), 0u) << f;
}

TEST_F(CliTest, HelpExitsCleanly) { EXPECT_EQ(run({"--help"}).code, 0); }

}  // namespace
}  // namespace swhom
