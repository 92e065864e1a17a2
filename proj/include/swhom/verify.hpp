#pragma once

#include "error.hpp"
#include "grid.hpp"
#include "homogenize.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "simulate.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace swhom {

/// Observable g(x, mode) on the unit cell; x is already wrapped into [0,1)^d.
using Observable = std::function<double(std::span<const double>, std::size_t)>;

/// Periodic multilinear interpolation on a torus grid.
///
/// `locate` fixes the point; values of any grid function are then weighted sums over the
/// 2^d surrounding nodes.
class PeriodicInterpolator {
public:
    explicit PeriodicInterpolator(const TorusGrid& grid)
        : grid_(grid), corners_(std::size_t{1} << grid.dim()), weights_(corners_.size()), stride_(grid.dim()),
          lo_(grid.dim()), hi_(grid.dim()), frac_(grid.dim()) {
        std::size_t s = 1;
        for (std::size_t j = grid.dim(); j-- > 0;) {
            stride_[j] = s;
            s *= grid.axis_count(j);
        }
    }

    void locate(std::span<const double> x) {
        const std::size_t d = grid_.dim();
        if (x.size() != d) throw DimensionError("interpolation point has wrong dimension");
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t n = grid_.axis_count(j);
            const double u = wrap_coordinate(x[j]) * static_cast<double>(n);
            std::size_t i = static_cast<std::size_t>(u);
            if (i >= n) i = n - 1;
            frac_[j] = u - static_cast<double>(i);
            lo_[j] = i;
            hi_[j] = (i + 1) % n;
        }
        for (std::size_t c = 0; c < corners_.size(); ++c) {
            std::size_t node = 0;
            double w = 1.0;
            for (std::size_t j = 0; j < d; ++j) {
                const bool up = (c >> j) & 1U;
                node += (up ? hi_[j] : lo_[j]) * stride_[j];
                w *= up ? frac_[j] : 1.0 - frac_[j];
            }
            corners_[c] = node;
            weights_[c] = w;
        }
    }

    double operator()(const GridFunction& f, std::size_t mode) const {
        double v = 0.0;
        for (std::size_t c = 0; c < corners_.size(); ++c) v += weights_[c] * f(corners_[c], mode);
        return v;
    }

private:
    const TorusGrid& grid_;
    std::vector<std::size_t> corners_;
    std::vector<double> weights_;
    std::vector<std::size_t> stride_;
    std::vector<std::size_t> lo_;
    std::vector<std::size_t> hi_;
    std::vector<double> frac_;
};

inline double interpolate(const TorusGrid& grid, const GridFunction& f, std::size_t mode, std::span<const double> x) {
    PeriodicInterpolator ip(grid);
    ip.locate(x);
    return ip(f, mode);
}

// ---------------------------------------------------------------------------------------------
// Effective covariance from endpoint displacements

struct CovarianceEstimate {
    Eigen::MatrixXd C_hat;
    /// Gaussian standard error of each entry of C_hat.
    Eigen::MatrixXd mc_stderr;
    Eigen::VectorXd mean;
    std::size_t n_paths = 0;
};

/// C_hat = sample covariance of Y_p divided by T.
inline CovarianceEstimate covariance_from_displacements(const std::vector<Eigen::VectorXd>& Y, double T) {
    if (Y.size() < 2) throw Error("covariance estimate needs at least 2 paths");
    if (!(T > 0.0)) throw Error("covariance estimate needs T > 0");
    const auto d = Y.front().size();
    const double n = static_cast<double>(Y.size());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (const auto& y : Y) mean += y;
    mean /= n;
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(d, d);
    for (const auto& y : Y) {
        const Eigen::VectorXd c = y - mean;
        S.noalias() += c * c.transpose();
    }
    CovarianceEstimate out;
    out.C_hat = S / ((n - 1.0) * T);
    out.C_hat = 0.5 * (out.C_hat + out.C_hat.transpose()).eval();
    out.mc_stderr.resize(d, d);
    for (Eigen::Index k = 0; k < d; ++k)
        for (Eigen::Index l = 0; l < d; ++l) {
            const double v = out.C_hat(k, k) * out.C_hat(l, l) + out.C_hat(k, l) * out.C_hat(k, l);
            out.mc_stderr(k, l) = std::sqrt(std::max(v, 0.0) / n);
        }
    out.mean = mean;
    out.n_paths = Y.size();
    return out;
}

/// Y_p = X^eps_p(T) - X^eps_p(0) - b_bar T / eps for macro paths ending at T.
inline std::vector<Eigen::VectorXd> macro_displacements(const std::vector<PathSample>& paths,
                                                        const std::vector<double>& b_bar, double epsilon, double T) {
    std::vector<Eigen::VectorXd> Y;
    Y.reserve(paths.size());
    for (const auto& p : paths) {
        if (p.size() == 0 || p.dim != b_bar.size()) throw DimensionError("path and effective drift dimensions differ");
        if (std::abs(p.times.back() - T) > 1e-9 * std::max(1.0, T)) throw SimulationError("path does not end at T");
        Eigen::VectorXd y(static_cast<Eigen::Index>(p.dim));
        const auto x0 = p.x(0);
        const auto xT = p.x(p.size() - 1);
        for (std::size_t j = 0; j < p.dim; ++j) y[static_cast<Eigen::Index>(j)] = xT[j] - x0[j] - b_bar[j] * T / epsilon;
        Y.push_back(std::move(y));
    }
    return Y;
}

inline CovarianceEstimate estimate_covariance(const std::vector<PathSample>& macro_paths, const std::vector<double>& b_bar,
                                              double epsilon, double T) {
    if (macro_paths.size() < 2) throw Error("covariance estimate needs at least 2 paths");
    return covariance_from_displacements(macro_displacements(macro_paths, b_bar, epsilon, T), T);
}

/// Simulates n_paths endpoints only and estimates C; memory stays O(n_paths d).
inline CovarianceEstimate simulate_covariance(const SwitchingModel& model, const SimConfig& cfg,
                                              const std::vector<double>& b_bar, std::size_t threads = 0) {
    check_sim_config(model, cfg);
    if (b_bar.size() != model.dim()) throw DimensionError("effective drift has wrong dimension");
    const std::size_t d = model.dim();
    const double eps = cfg.epsilon;
    std::vector<Eigen::VectorXd> Y(cfg.n_paths, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)));
    parallel_for(cfg.n_paths, threads, [&](std::size_t p) {
        std::vector<double> first(d);
        std::vector<double> last(d);
        run_micro_path(model, cfg, p, [&](std::size_t k, double, std::span<const double> x, std::size_t) {
            if (k == 0) std::copy(x.begin(), x.end(), first.begin());
            std::copy(x.begin(), x.end(), last.begin());
        });
        for (std::size_t j = 0; j < d; ++j)
            Y[p][static_cast<Eigen::Index>(j)] = eps * (last[j] - first[j]) - b_bar[j] * cfg.T / eps;
    });
    return covariance_from_displacements(Y, cfg.T);
}

/// Frobenius-relative deviation |A - B|_F / |B|_F (absolute when B = 0).
inline double frobenius_relative(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    const double nb = B.norm();
    const double diff = (A - B).norm();
    return nb > 0.0 ? diff / nb : diff;
}

// ---------------------------------------------------------------------------------------------
// Ergodic averages

/// (1/t) sum g(wrap(X_s), I_s) ds over records with s < t (left-endpoint rule).
inline double ergodic_average(const PathSample& micro, const Observable& g, double t_micro) {
    if (!(t_micro > 0.0)) throw Error("ergodic average needs a positive horizon");
    if (micro.size() == 0 || micro.times.back() < t_micro * (1.0 - 1e-12)) {
        throw SimulationError("path ends before the averaging horizon");
    }
    std::vector<double> xw(micro.dim);
    double sum = 0.0;
    for (std::size_t k = 0; k + 1 < micro.size() && micro.times[k] < t_micro; ++k) {
        const double dt = std::min(micro.times[k + 1], t_micro) - micro.times[k];
        wrap_point(micro.x(k), xw);
        sum += g(xw, micro.I[k]) * dt;
    }
    return sum / t_micro;
}

/// sum_alpha int g m dx on the grid.
inline double ergodic_target(const TorusGrid& grid, const InvariantDensity& density, const Observable& g) {
    GridFunction gv(grid.nodes(), density.m.modes);
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        const auto x = grid.coordinates(i);
        for (std::size_t a = 0; a < gv.modes; ++a) gv(i, a) = g(x, a);
    }
    return weighted_inner(grid, density.m, gv);
}

struct ErgodicScaling {
    std::vector<double> epsilons;
    /// RMS over paths of |time average - target|, per epsilon.
    std::vector<double> rms;
    /// Ensemble mean of the time averages, per epsilon.
    std::vector<double> mean;
    /// rms[i] / rms[i + 1].
    std::vector<double> ratios;
    double target = 0.0;
};

/// For each epsilon, simulates n_paths micro paths to t / eps^2 and compares the macro-time
/// average of g(X^eps / eps, I^eps) over [0, t] with `target`.
///
/// `base` supplies h_micro, seed, x0 and alpha0; epsilon, T and n_paths are overridden.
inline ErgodicScaling ergodic_scaling_test(const SwitchingModel& model, const Observable& g,
                                           const std::vector<double>& epsilons, double t, std::size_t n_paths,
                                           double target, const SimConfig& base, std::size_t threads = 0) {
    if (epsilons.size() < 2) throw Error("ergodic scaling needs at least two epsilon values");
    for (std::size_t i = 0; i + 1 < epsilons.size(); ++i) {
        if (std::abs(epsilons[i] - 2.0 * epsilons[i + 1]) > 1e-12 * epsilons[i]) {
            throw Error("ergodic scaling needs each epsilon to halve the previous one");
        }
    }
    if (n_paths < 1) throw Error("ergodic scaling needs at least one path");
    ErgodicScaling out;
    out.epsilons = epsilons;
    out.target = target;
    for (std::size_t e = 0; e < epsilons.size(); ++e) {
        SimConfig cfg = base;
        cfg.epsilon = epsilons[e];
        cfg.T = t;
        cfg.n_paths = n_paths;
        cfg.seed = splitmix64(base.seed ^ splitmix64(e + 1));
        check_sim_config(model, cfg);
        const double horizon = cfg.micro_horizon();
        std::vector<double> avg(n_paths);
        parallel_for(n_paths, threads, [&](std::size_t p) {
            std::vector<double> xw(model.dim());
            double sum = 0.0;
            double prev_s = 0.0;
            double prev_g = 0.0;
            run_micro_path(model, cfg, p, [&](std::size_t k, double s, std::span<const double> x, std::size_t mode) {
                if (k > 0) sum += prev_g * (s - prev_s);
                wrap_point(x, xw);
                prev_g = g(xw, mode);
                prev_s = s;
            });
            avg[p] = sum / horizon;
        });
        double sq = 0.0;
        double mean = 0.0;
        for (double a : avg) {
            sq += (a - target) * (a - target);
            mean += a;
        }
        out.rms.push_back(std::sqrt(sq / static_cast<double>(n_paths)));
        out.mean.push_back(mean / static_cast<double>(n_paths));
    }
    for (std::size_t i = 0; i + 1 < out.rms.size(); ++i)
        out.ratios.push_back(out.rms[i + 1] > 0.0 ? out.rms[i] / out.rms[i + 1] : 0.0);
    return out;
}

// ---------------------------------------------------------------------------------------------
// Martingale part and its cross-variation

/// Per-path result of the martingale reconstruction.
struct CrossVariationSample {
    /// sum of dM dM^T over recorded steps.
    Eigen::MatrixXd realized;
    /// left-endpoint integral of (I - D phi) a (I - D phi)^T + Q(phi, phi) along the path.
    Eigen::MatrixXd predicted;
    /// M^eps at the final time.
    Eigen::VectorXd M_T;
    /// max over t and components of |X^eps_t - b_bar t / eps - M^eps_t - X^eps_0|.
    double max_corrector_term = 0.0;
};

/// Streams micro records (s, X_s, I_s) of one path and reconstructs
/// M^eps_t = X^eps_t - b_bar t/eps - X^eps_0 - eps [phi(X^eps_t/eps, I_t) - phi(X^eps_0/eps, I_0)].
class MartingaleTracker {
public:
    MartingaleTracker(const SwitchingModel& model, const TorusGrid& grid, const Corrector& corr,
                      const std::vector<double>& b_bar, double epsilon)
        : model_(model), corr_(corr), b_bar_(b_bar), eps_(epsilon), ip_(grid), d_(model.dim()),
          xw_(d_), phi_(d_), phi0_(d_), x0_(d_), M_(d_), Mprev_(d_), dM_(d_), G_(d_, d_), g_(d_, d_),
          sigma_(d_, model.noise_dim()), phi_modes_(d_ * model.modes()) {
        if (model.dim() != grid.dim() || corr.phi.size() != d_ || b_bar.size() != d_) {
            throw DimensionError("martingale tracker: model, grid, corrector and drift dimensions differ");
        }
        sample_.realized = Eigen::MatrixXd::Zero(d_, d_);
        sample_.predicted = Eigen::MatrixXd::Zero(d_, d_);
    }

    void push(double s, std::span<const double> x, std::size_t mode) {
        const double t = eps_ * eps_ * s;
        wrap_point(x, xw_);
        ip_.locate(xw_);
        for (std::size_t a = 0; a < model_.modes(); ++a)
            for (std::size_t k = 0; k < d_; ++k) phi_modes_[k * model_.modes() + a] = ip_(corr_.phi[k], a);
        for (std::size_t k = 0; k < d_; ++k) phi_[k] = phi_modes_[k * model_.modes() + mode];
        if (!started_) {
            for (std::size_t k = 0; k < d_; ++k) {
                x0_[k] = eps_ * x[k];
                phi0_[k] = phi_[k];
            }
            started_ = true;
        } else {
            sample_.predicted.noalias() += G_ * (t - t_prev_);
        }
        double corr_term = 0.0;
        for (std::size_t k = 0; k < d_; ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            const double remainder = eps_ * (phi_[k] - phi0_[k]);
            M_[kk] = eps_ * x[k] - b_bar_[k] * t / eps_ - x0_[k] - remainder;
            corr_term = std::max(corr_term, std::abs(remainder));
        }
        sample_.max_corrector_term = std::max(sample_.max_corrector_term, corr_term);
        if (count_ > 0) {
            dM_ = M_ - Mprev_;
            sample_.realized.noalias() += dM_ * dM_.transpose();
        }
        Mprev_ = M_;
        t_prev_ = t;
        ++count_;
        integrand(mode);
    }

    CrossVariationSample result() const {
        CrossVariationSample out = sample_;
        out.M_T = M_;
        return out;
    }

private:
    // G_ = (I - D phi) a (I - D phi)^T + Q(phi, phi) at the current point.
    void integrand(std::size_t mode) {
        const std::size_t r = model_.noise_dim();
        for (std::size_t i = 0; i < d_; ++i)
            for (std::size_t j = 0; j < r; ++j)
                sigma_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    eval_field(model_.sigma_field(mode, i, j), xw_);
        g_.setIdentity();
        for (std::size_t k = 0; k < d_; ++k)
            for (std::size_t j = 0; j < d_; ++j)
                g_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) -= ip_(corr_.gradient[k][j], mode);
        const Eigen::MatrixXd gs = g_ * sigma_;
        G_.noalias() = gs * gs.transpose();
        const std::size_t m = model_.modes();
        for (std::size_t b = 0; b < m; ++b) {
            if (b == mode) continue;
            const double q = eval_field(model_.intensity_field(mode, b), xw_);
            if (q == 0.0) continue;
            for (std::size_t k = 0; k < d_; ++k)
                for (std::size_t l = 0; l < d_; ++l)
                    G_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) +=
                        q * (phi_modes_[k * m + b] - phi_modes_[k * m + mode]) *
                        (phi_modes_[l * m + b] - phi_modes_[l * m + mode]);
        }
    }

    const SwitchingModel& model_;
    const Corrector& corr_;
    std::vector<double> b_bar_;
    double eps_;
    PeriodicInterpolator ip_;
    std::size_t d_;
    std::vector<double> xw_;
    std::vector<double> phi_;
    std::vector<double> phi0_;
    std::vector<double> x0_;
    Eigen::VectorXd M_;
    Eigen::VectorXd Mprev_;
    Eigen::VectorXd dM_;
    Eigen::MatrixXd G_;
    Eigen::MatrixXd g_;
    Eigen::MatrixXd sigma_;
    std::vector<double> phi_modes_;
    CrossVariationSample sample_;
    double t_prev_ = 0.0;
    std::size_t count_ = 0;
    bool started_ = false;
};

/// Martingale reconstruction along one stored micro path (record_stride must be 1).
inline CrossVariationSample crossvariation_sample(const SwitchingModel& model, const TorusGrid& grid,
                                                  const Corrector& corr, const std::vector<double>& b_bar,
                                                  double epsilon, const PathSample& micro) {
    if (micro.scale != 1.0) throw SimulationError("crossvariation needs the micro path");
    if (micro.record_stride != 1) throw SimulationError("crossvariation needs every step recorded (record_stride = 1)");
    MartingaleTracker tracker(model, grid, corr, b_bar, epsilon);
    for (std::size_t k = 0; k < micro.size(); ++k) tracker.push(micro.times[k], micro.x(k), micro.I[k]);
    return tracker.result();
}

struct CrossVariationReport {
    Eigen::MatrixXd realized_mean;
    Eigen::MatrixXd predicted_mean;
    double rel_error = 0.0;
    Eigen::VectorXd martingale_mean;
    Eigen::VectorXd martingale_stderr;
    /// max_k |mean_k| / stderr_k.
    double martingale_z = 0.0;
    /// max over paths of max_corrector_term, and its bound eps * 2 max|phi|.
    double corrector_term = 0.0;
    double corrector_bound = 0.0;
    std::size_t n_paths = 0;
};

inline CrossVariationReport summarize_crossvariation(const std::vector<CrossVariationSample>& samples, double bound) {
    if (samples.size() < 2) throw Error("crossvariation check needs at least 2 paths");
    const auto d = samples.front().realized.rows();
    const double n = static_cast<double>(samples.size());
    CrossVariationReport r;
    r.realized_mean = Eigen::MatrixXd::Zero(d, d);
    r.predicted_mean = Eigen::MatrixXd::Zero(d, d);
    r.martingale_mean = Eigen::VectorXd::Zero(d);
    for (const auto& s : samples) {
        r.realized_mean += s.realized;
        r.predicted_mean += s.predicted;
        r.martingale_mean += s.M_T;
        r.corrector_term = std::max(r.corrector_term, s.max_corrector_term);
    }
    r.realized_mean /= n;
    r.predicted_mean /= n;
    r.martingale_mean /= n;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
    for (const auto& s : samples) var += (s.M_T - r.martingale_mean).cwiseAbs2();
    r.martingale_stderr = (var / ((n - 1.0) * n)).cwiseSqrt();
    for (Eigen::Index k = 0; k < d; ++k) {
        const double se = r.martingale_stderr[k];
        const double z = se > 0.0 ? std::abs(r.martingale_mean[k]) / se : (r.martingale_mean[k] == 0.0 ? 0.0 : INFINITY);
        r.martingale_z = std::max(r.martingale_z, z);
    }
    r.rel_error = frobenius_relative(r.realized_mean, r.predicted_mean);
    r.corrector_bound = bound;
    r.n_paths = samples.size();
    return r;
}

/// Ensemble cross-variation check over cfg.n_paths paths, streamed at full step resolution.
inline CrossVariationReport crossvariation_check(const SwitchingModel& model, const TorusGrid& grid,
                                                 const Corrector& corr, const std::vector<double>& b_bar,
                                                 const SimConfig& cfg, std::size_t threads = 0) {
    check_sim_config(model, cfg);
    std::vector<CrossVariationSample> samples(cfg.n_paths);
    parallel_for(cfg.n_paths, threads, [&](std::size_t p) {
        MartingaleTracker tracker(model, grid, corr, b_bar, cfg.epsilon);
        run_micro_path(model, cfg, p, [&](std::size_t, double s, std::span<const double> x, std::size_t mode) {
            tracker.push(s, x, mode);
        });
        samples[p] = tracker.result();
    });
    return summarize_crossvariation(samples, cfg.epsilon * 2.0 * corr.max_abs());
}

// ---------------------------------------------------------------------------------------------
// Report

struct CovarianceCheck {
    Eigen::MatrixXd C_hat;
    Eigen::MatrixXd C_target;
    Eigen::MatrixXd mc_stderr;
    double rel_error = 0.0;
    double tolerance = 0.1;
    bool pass = false;
};

struct CrossVariationCheck {
    CrossVariationReport report;
    double tolerance = 0.05;
    double z_limit = 4.0;
    bool pass = false;
};

struct ErgodicCheck {
    ErgodicScaling scaling;
    double ratio_min = 1.4;
    double ratio_max = 2.9;
    double mean_tolerance = 0.02;
    double mean_rel_error = 0.0;
    bool pass = false;
};

/// Sections are present only for the tests that were run.
struct VerifyReport {
    std::optional<CovarianceCheck> covariance;
    std::optional<CrossVariationCheck> crossvariation;
    std::optional<ErgodicCheck> ergodic;

    bool pass() const {
        return (!covariance || covariance->pass) && (!crossvariation || crossvariation->pass) &&
               (!ergodic || ergodic->pass);
    }
};

inline CovarianceCheck check_covariance(const CovarianceEstimate& est, const Eigen::MatrixXd& target, double tolerance) {
    CovarianceCheck c;
    c.C_hat = est.C_hat;
    c.C_target = target;
    c.mc_stderr = est.mc_stderr;
    c.rel_error = frobenius_relative(est.C_hat, target);
    c.tolerance = tolerance;
    c.pass = c.rel_error <= tolerance;
    return c;
}

inline CrossVariationCheck check_crossvariation(const CrossVariationReport& r, double tolerance, double z_limit = 4.0) {
    CrossVariationCheck c;
    c.report = r;
    c.tolerance = tolerance;
    c.z_limit = z_limit;
    c.pass = r.rel_error <= tolerance && r.martingale_z <= z_limit &&
             r.corrector_term <= r.corrector_bound * (1.0 + 1e-12) + 1e-15;
    return c;
}

inline ErgodicCheck check_ergodic(const ErgodicScaling& s, double ratio_min = 1.4, double ratio_max = 2.9,
                                  double mean_tolerance = 0.02) {
    ErgodicCheck c;
    c.scaling = s;
    c.ratio_min = ratio_min;
    c.ratio_max = ratio_max;
    c.mean_tolerance = mean_tolerance;
    c.mean_rel_error = s.target != 0.0 ? std::abs(s.mean.back() - s.target) / std::abs(s.target)
                                       : std::abs(s.mean.back());
    c.pass = c.mean_rel_error <= mean_tolerance;
    for (double r : s.ratios) c.pass = c.pass && r >= ratio_min && r <= ratio_max;
    return c;
}

}  // namespace swhom
