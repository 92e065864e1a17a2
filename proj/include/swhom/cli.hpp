#pragma once

#include "config.hpp"
#include "homogenize.hpp"
#include "io.hpp"
#include "presets.hpp"
#include "rng.hpp"
#include "simulate.hpp"
#include "validate.hpp"
#include "verify.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace swhom::cli {

enum ExitCode : int { Ok = 0, CheckFailed = 1, UsageError = 2 };

/// Sub-streams of the root seed, one per verification test.
enum SeedStream : std::uint64_t { CrossVariationStream = 1, ErgodicStream = 2, PathsStream = 3 };

struct Options {
    std::string command;
    std::string config_path;
    std::string out_dir;
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 0;
};

/// Raised inside a command to end it with a given exit code and message.
struct Exit {
    int code;
    std::string message;
};

class Runner {
public:
    Runner(const Options& opts, std::ostream& out, std::ostream& err) : opts_(opts), out_(out), err_(err) {}

    int run() {
        try {
            load();
            if (opts_.command == "validate") return validate();
            if (opts_.command == "homogenize") return homogenize_cmd();
            if (opts_.command == "simulate") return simulate();
            if (opts_.command == "verify") return verify();
            if (opts_.command == "convergence") return convergence();
            err_ << "error: unknown command '" << opts_.command << "'\n";
            return UsageError;
        } catch (const Exit& e) {
            if (!e.message.empty()) (e.code == Ok ? out_ : err_) << e.message << '\n';
            return e.code;
        } catch (const ConfigError& e) {
            err_ << "configuration error: " << e.what() << '\n';
            return UsageError;
        } catch (const DimensionError& e) {
            err_ << "configuration error: " << e.what() << '\n';
            return UsageError;
        } catch (const SolverError& e) {
            err_ << "solver error: " << e.what() << '\n';
            return CheckFailed;
        } catch (const std::exception& e) {
            err_ << "error: " << e.what() << '\n';
            return CheckFailed;
        }
    }

private:
    void load() {
        if (opts_.config_path.empty() && opts_.preset.empty()) throw ConfigError("--config PATH (or --preset NAME) is required");
        cfg_ = opts_.config_path.empty() ? parse_run_config(json{{"preset", opts_.preset}})
                                         : load_run_config(opts_.config_path, opts_.preset);
        if (opts_.seed) cfg_.sim.seed = *opts_.seed;
        if (!opts_.out_dir.empty()) cfg_.output_dir = opts_.out_dir;
        grid_ = std::make_unique<TorusGrid>(build_grid(model().dim(), cfg_.grid));
        hash_ = config_hash(cfg_);
    }

    const SwitchingModel& model() const { return cfg_.get_model(); }
    std::filesystem::path out_path(const std::string& name) const { return std::filesystem::path(cfg_.output_dir) / name; }

    json stamped(json body) const {
        json j = provenance(cfg_);
        j["command"] = opts_.command;
        j["config"] = to_json(cfg_);
        for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = it.value();
        return j;
    }

    ValidationReport run_validation(bool write) {
        const ValidationReport rep = validate_model(model(), *grid_);
        if (write) write_json_file(out_path("validation.json"), stamped(to_json(rep, *grid_)));
        return rep;
    }

    void require_valid() {
        const ValidationReport rep = run_validation(true);
        if (!rep.accepted()) {
            throw Exit{CheckFailed, "model rejected by validation (" + std::to_string(rep.violation_count) +
                                        " violations); see validation.json"};
        }
    }

    int validate() {
        const ValidationReport rep = run_validation(true);
        out_ << "ellipticity_min " << rep.ellipticity_min << "\nintensity_min " << rep.intensity_min
             << "\nirreducible " << (rep.irreducible_everywhere ? "yes" : "no") << "\nviolations "
             << rep.violation_count << '\n';
        for (const auto& v : rep.violations) {
            out_ << "  " << to_string(v.kind) << " at node " << v.node << " mode " << v.mode + 1;
            if (v.kind == Violation::Kind::NegativeIntensity) out_ << " -> " << v.to_mode + 1;
            out_ << " value " << v.value << '\n';
        }
        out_ << (rep.accepted() ? "accepted" : "rejected") << '\n';
        return rep.accepted() ? Ok : CheckFailed;
    }

    HomogenizationResult solve() {
        if (cfg_.debug.uncentered_rhs) {
            const auto op = assemble_generator(model(), *grid_);
            const auto dens = solve_invariant_density(op, *grid_, cfg_.solver);
            // b_k - b_bar_k + 1 has m-weighted mean exactly 1, whatever the model
            const auto b_bar = effective_drift(model(), *grid_, dens);
            std::vector<GridFunction> rhs;
            for (std::size_t k = 0; k < model().dim(); ++k) {
                rhs.push_back(tabulate_drift(*grid_, model(), k));
                for (double& v : rhs.back().values) v += 1.0 - b_bar[k];
            }
            solve_cell_problems(op, *grid_, dens, rhs, cfg_.solver);
        }
        return swhom::homogenize(model(), *grid_, cfg_.solver);
    }

    int homogenize_cmd() {
        require_valid();
        const HomogenizationResult h = solve();
        write_json_file(out_path("effective.json"), stamped(to_json(h)));
        {
            std::ostringstream os;
            write_csv_provenance(os, cfg_);
            write_grid_function_csv(os, *grid_, h.density.m);
            write_text_file(out_path("density.csv"), os.str());
        }
        {
            std::ostringstream os;
            write_csv_provenance(os, cfg_);
            write_corrector_csv(os, *grid_, h.corrector);
            write_text_file(out_path("corrector.csv"), os.str());
        }
        print_effective(h.effective);
        for (const auto& w : h.op.warnings) err_ << "warning: " << w << '\n';
        return Ok;
    }

    void print_effective(const EffectiveCoefficients& e) {
        const Eigen::IOFormat fmt(Eigen::FullPrecision, 0, " ", "\n", "  ", "");
        out_ << "b_bar\n" << e.b_bar.transpose().format(fmt) << "\nC\n" << e.C.format(fmt) << '\n';
    }

    void check_sim(const SimConfig& sc) {
        try {
            check_sim_config(model(), sc);
        } catch (const SimulationError& e) {
            throw Exit{UsageError, std::string("simulation refused: ") + e.what()};
        }
    }

    int simulate() {
        require_valid();
        check_sim(cfg_.sim);
        const HomogenizationResult h = solve();
        const CovarianceEstimate est = simulate_covariance(model(), cfg_.sim, h.corrector.b_bar, opts_.threads);
        json body = to_json(est);
        body["epsilon"] = cfg_.sim.epsilon;
        body["T"] = cfg_.sim.T;
        body["h_micro"] = cfg_.sim.h_micro;
        body["n_steps"] = cfg_.sim.n_steps();
        body["b_bar"] = h.corrector.b_bar;
        body["C_target"] = matrix_to_json(h.effective.C);
        body["rel_error"] = frobenius_relative(est.C_hat, h.effective.C);
        write_json_file(out_path("summary.json"), stamped(body));
        if (cfg_.write_paths) {
            SimConfig sc = cfg_.sim;
            sc.seed = derive_seed(cfg_.sim.seed, PathsStream);
            const auto micro = simulate_paths(model(), sc, opts_.threads);
            std::vector<PathSample> macro;
            macro.reserve(micro.size());
            for (const auto& p : micro) macro.push_back(rescale_path(p, sc.epsilon, sc.T));
            std::ostringstream os;
            write_csv_provenance(os, cfg_);
            write_paths_csv(os, macro);
            write_text_file(out_path("paths.csv"), os.str());
        }
        const Eigen::IOFormat fmt(Eigen::FullPrecision, 0, " ", "\n", "  ", "");
        out_ << "n_paths " << est.n_paths << "\nmean_Y " << est.mean.transpose().format(fmt) << "\nC_hat\n"
             << est.C_hat.format(fmt) << "\nC_target\n" << h.effective.C.format(fmt) << '\n';
        return Ok;
    }

    Observable observable() const {
        const auto& eg = cfg_.verify.ergodic;
        if (eg.observable == "mode_indicator") {
            const std::size_t mode = eg.mode - 1;
            return [mode](std::span<const double>, std::size_t a) { return a == mode ? 1.0 : 0.0; };
        }
        const SwitchingModel* m = &model();
        return [m](std::span<const double> x, std::size_t a) {
            double tr = 0.0;
            for (std::size_t i = 0; i < m->dim(); ++i)
                for (std::size_t j = 0; j < m->noise_dim(); ++j) {
                    const double s = eval_field(m->sigma_field(a, i, j), x);
                    tr += s * s;
                }
            return tr;
        };
    }

    int verify() {
        require_valid();
        const HomogenizationResult h = solve();
        Eigen::MatrixXd C_target = h.effective.C;
        std::vector<double> b_bar = h.corrector.b_bar;
        if (cfg_.verify.from_artifacts) {
            const auto path = out_path("effective.json");
            std::ifstream in(path);
            if (!in) throw Exit{UsageError, "missing artifact '" + path.string() + "'; run homogenize first"};
            std::ostringstream ss;
            ss << in.rdbuf();
            const json art = parse_json_text(ss.str(), path.string());
            if (art.value("config_hash", std::string()) != hash_) {
                throw Exit{UsageError, "artifact '" + path.string() + "' was produced by a different configuration"};
            }
            C_target = matrix_from_json(art.at("C"), "effective.json C");
            b_bar = art.at("b_bar").get<std::vector<double>>();
        }
        C_target *= cfg_.debug.C_scale;

        const auto& tests = cfg_.verify.tests;
        auto selected = [&](const char* name) { return std::find(tests.begin(), tests.end(), name) != tests.end(); };
        VerifyReport report;
        if (selected("covariance")) {
            check_sim(cfg_.sim);
            const auto est = simulate_covariance(model(), cfg_.sim, b_bar, opts_.threads);
            report.covariance = check_covariance(est, C_target, cfg_.verify.covariance_tol);
            out_ << "covariance      rel_error " << report.covariance->rel_error << " (tol " << cfg_.verify.covariance_tol
                 << ") " << (report.covariance->pass ? "PASS" : "FAIL") << '\n';
        }
        if (selected("crossvariation")) {
            SimConfig sc = cfg_.sim;
            sc.n_paths = cfg_.verify.crossvariation_paths;
            sc.seed = derive_seed(cfg_.sim.seed, CrossVariationStream);
            check_sim(sc);
            const auto r = crossvariation_check(model(), *grid_, h.corrector, b_bar, sc, opts_.threads);
            report.crossvariation = check_crossvariation(r, cfg_.verify.crossvariation_tol, cfg_.verify.martingale_z);
            out_ << "crossvariation  rel_error " << r.rel_error << " martingale_z " << r.martingale_z << ' '
                 << (report.crossvariation->pass ? "PASS" : "FAIL") << '\n';
        }
        if (selected("ergodic")) {
            const auto& eg = cfg_.verify.ergodic;
            SimConfig base = cfg_.sim;
            base.h_micro = eg.h_micro;
            base.seed = derive_seed(cfg_.sim.seed, ErgodicStream);
            const Observable g = observable();
            const double target = ergodic_target(*grid_, h.density, g);
            ErgodicScaling s;
            try {
                s = ergodic_scaling_test(model(), g, eg.epsilons, eg.t, eg.n_paths, target, base, opts_.threads);
            } catch (const SimulationError& e) {
                throw Exit{UsageError, std::string("simulation refused: ") + e.what()};
            }
            report.ergodic = check_ergodic(s, eg.ratio_min, eg.ratio_max, eg.mean_tol);
            out_ << "ergodic         ratios";
            for (double r : s.ratios) out_ << ' ' << r;
            out_ << " mean_rel_error " << report.ergodic->mean_rel_error << ' ' << (report.ergodic->pass ? "PASS" : "FAIL")
                 << '\n';
        }
        write_json_file(out_path("verify.json"), stamped(to_json(report)));
        out_ << (report.pass() ? "all checks passed" : "some checks failed") << '\n';
        return report.pass() ? Ok : CheckFailed;
    }

    int convergence() {
        require_valid();
        std::optional<Eigen::MatrixXd> exact;
        if (!cfg_.preset.empty()) exact = make_preset(cfg_.preset).exact_C;
        const std::size_t d = model().dim();
        std::vector<Eigen::MatrixXd> Cs;
        for (std::size_t n : cfg_.convergence) {
            const auto grid = build_grid(d, std::vector<std::size_t>(d, n));
            Cs.push_back(swhom::homogenize(model(), grid, cfg_.solver).effective.C);
        }
        const Eigen::MatrixXd ref = exact ? *exact : Cs.back();
        std::ostringstream os;
        write_csv_provenance(os, cfg_);
        os << "n,h,error,order";
        for (std::size_t k = 0; k < d; ++k)
            for (std::size_t l = 0; l < d; ++l) os << ",C_" << k + 1 << l + 1;
        os << '\n';
        os.precision(17);
        double prev_err = 0.0;
        double prev_h = 0.0;
        for (std::size_t i = 0; i < Cs.size(); ++i) {
            const double h = 1.0 / static_cast<double>(cfg_.convergence[i]);
            const bool reference_row = !exact && i + 1 == Cs.size();
            const double err = (Cs[i] - ref).norm();
            os << cfg_.convergence[i] << ',' << h << ',';
            if (!reference_row) os << err;
            os << ',';
            if (i > 0 && !reference_row && prev_err > 0.0 && err > 0.0) os << std::log(prev_err / err) / std::log(prev_h / h);
            for (std::size_t k = 0; k < d; ++k)
                for (std::size_t l = 0; l < d; ++l)
                    os << ',' << Cs[i](static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
            os << '\n';
            prev_err = err;
            prev_h = h;
        }
        write_text_file(out_path("convergence.csv"), os.str());
        out_ << "reference " << (exact ? "exact" : "finest grid") << '\n' << os.str();
        return Ok;
    }

    Options opts_;
    std::ostream& out_;
    std::ostream& err_;
    RunConfig cfg_;
    std::unique_ptr<TorusGrid> grid_;
    std::string hash_;
};

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Periodic homogenization of switching diffusions"};
    app.require_subcommand(1);
    Options opts;
    std::uint64_t seed = 0;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"validate", "check model assumptions on the grid"},
        {"homogenize", "solve for the invariant density, corrector and effective coefficients"},
        {"simulate", "Monte Carlo paths and displacement summary"},
        {"verify", "statistical checks against the homogenized limit"},
        {"convergence", "grid-refinement study of the effective covariance"}};
    std::vector<CLI::App*> subs;
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opts.config_path, "run configuration (JSON)");
        sub->add_option("--out", opts.out_dir, "output directory");
        sub->add_option("--seed", seed, "root seed, overrides the configuration");
        sub->add_option("--threads", opts.threads, "worker threads (0 = all cores)");
        sub->add_option("--preset", opts.preset, "built-in model")
            ->check(CLI::IsMember(preset_names()));
        subs.push_back(sub);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? Ok : UsageError;
    }
    for (auto* sub : subs) {
        if (sub->parsed()) {
            opts.command = sub->get_name();
            if (sub->count("--seed") > 0) opts.seed = seed;
        }
    }
    return Runner(opts, out, err).run();
}

}  // namespace swhom::cli
