#pragma once

#include "error.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "rng.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace swhom {

/// Largest admissible h * qbar_tot.
inline constexpr double max_switch_fraction = 0.1;

struct SimConfig {
    double epsilon = 0.05;
    /// Macroscopic horizon; the micro horizon is T / epsilon^2.
    double T = 1.0;
    double h_micro = 0.01;
    std::size_t n_paths = 1000;
    std::uint64_t seed = 0;
    /// Empty means the origin.
    std::vector<double> x0;
    std::size_t alpha0 = 0;
    std::size_t record_stride = 1;

    double micro_horizon() const { return T / (epsilon * epsilon); }

    /// ceil(micro_horizon / h_micro), ignoring rounding noise in the ratio.
    std::size_t n_steps() const {
        const double ratio = micro_horizon() / h_micro;
        const double r = std::round(ratio);
        if (std::abs(ratio - r) <= 1e-9 * std::max(1.0, r)) return static_cast<std::size_t>(r);
        return static_cast<std::size_t>(std::ceil(ratio));
    }
};

/// Upper bound on sup_x of the total jump rate out of any mode, from the Fourier coefficients.
inline double total_rate_bound(const SwitchingModel& model) {
    double q = 0.0;
    for (std::size_t a = 0; a < model.modes(); ++a) {
        double s = 0.0;
        for (std::size_t b = 0; b < model.modes(); ++b)
            if (b != a) s += model.intensity_field(a, b).sup_bound();
        q = std::max(q, s);
    }
    return q;
}

/// Throws SimulationError (or DimensionError for shape problems) if `cfg` is unusable for `model`.
inline void check_sim_config(const SwitchingModel& model, const SimConfig& cfg) {
    if (!(cfg.epsilon > 0.0 && cfg.epsilon <= 1.0)) throw SimulationError("epsilon must lie in (0, 1]");
    if (!(cfg.T >= 0.0) || !std::isfinite(cfg.T)) throw SimulationError("T must be finite and nonnegative");
    if (!(cfg.h_micro > 0.0) || !std::isfinite(cfg.h_micro)) throw SimulationError("h_micro must be positive");
    if (cfg.record_stride < 1) throw SimulationError("record_stride must be at least 1");
    if (!cfg.x0.empty() && cfg.x0.size() != model.dim()) throw DimensionError("x0 must have d components");
    if (cfg.alpha0 >= model.modes()) throw DimensionError("alpha0 is not a valid mode");
    const double q = total_rate_bound(model);
    if (cfg.h_micro * q > max_switch_fraction) {
        std::ostringstream msg;
        msg << "h_micro * qbar_tot = " << cfg.h_micro * q << " exceeds " << max_switch_fraction
            << "; use h_micro <= " << max_switch_fraction / q;
        throw SimulationError(msg.str());
    }
}

/// One-step mode update: intervals of width q_{alpha beta}(x) h for beta != alpha, laid out in
/// increasing beta from 0; returns the beta whose interval holds u, or alpha past the last one.
inline std::size_t sample_switch(const SwitchingModel& model, std::span<const double> x, std::size_t alpha, double h,
                                 double u) {
    double edge = 0.0;
    for (std::size_t b = 0; b < model.modes(); ++b) {
        if (b == alpha) continue;
        edge += eval_field(model.intensity_field(alpha, b), x) * h;
        if (u < edge) return b;
    }
    return alpha;
}

/// Recorded trajectory. Micro paths have scale 1; macro paths hold (eps X_{t/eps^2}, I_{t/eps^2}).
struct PathSample {
    std::size_t dim = 0;
    std::vector<double> times;
    /// Row-major, dim values per record; X is not wrapped.
    std::vector<double> X;
    std::vector<std::size_t> I;
    std::uint64_t path_id = 0;
    std::uint64_t seed = 0;
    std::size_t record_stride = 1;
    /// Spatial scale applied to X (1 for micro paths, epsilon for macro paths).
    double scale = 1.0;

    std::size_t size() const { return times.size(); }
    std::span<const double> x(std::size_t k) const { return {X.data() + k * dim, dim}; }
};

/// Integrates one micro path, calling visit(step, s, x, mode) at every step 0..n_steps.
///
/// Euler-Maruyama at the pre-step position, then one switch draw using intensities at the
/// same pre-step position. The last step is shortened so the path ends at T / eps^2.
template <typename Visitor>
void run_micro_path(const SwitchingModel& model, const SimConfig& cfg, std::uint64_t path_id, Visitor&& visit) {
    const std::size_t d = model.dim();
    const std::size_t r = model.noise_dim();
    const std::size_t steps = cfg.n_steps();
    const double horizon = cfg.micro_horizon();
    const bool switching = model.modes() > 1;

    PathEngine engine = path_engine(cfg.seed, path_id);
    std::normal_distribution<double> normal;

    std::vector<double> x(d, 0.0);
    if (!cfg.x0.empty()) x = cfg.x0;
    std::vector<double> xw(d);
    std::vector<double> drift(d);
    std::vector<double> xi(r);
    std::size_t mode = cfg.alpha0;

    double s = 0.0;
    visit(std::size_t{0}, s, std::span<const double>(x), mode);
    for (std::size_t k = 0; k < steps; ++k) {
        const double s_next = k + 1 == steps ? horizon : static_cast<double>(k + 1) * cfg.h_micro;
        const double h = s_next - s;
        const double sq = std::sqrt(h);
        wrap_point(x, xw);
        for (std::size_t i = 0; i < d; ++i) drift[i] = eval_field(model.drift_field(mode, i), xw);
        for (auto& z : xi) z = normal(engine);
        for (std::size_t i = 0; i < d; ++i) {
            double noise = 0.0;
            for (std::size_t j = 0; j < r; ++j) noise += eval_field(model.sigma_field(mode, i, j), xw) * xi[j];
            x[i] += drift[i] * h + noise * sq;
            if (!std::isfinite(x[i])) {
                throw SimulationError("non-finite state at step " + std::to_string(k + 1) + " of path " +
                                      std::to_string(path_id));
            }
        }
        if (switching) mode = sample_switch(model, xw, mode, h, uniform01(engine));
        s = s_next;
        visit(k + 1, s, std::span<const double>(x), mode);
    }
}

/// Micro path recorded every record_stride steps; the final state is always kept.
inline PathSample simulate_micro_path(const SwitchingModel& model, const SimConfig& cfg, std::uint64_t path_id) {
    check_sim_config(model, cfg);
    const std::size_t steps = cfg.n_steps();
    PathSample p;
    p.dim = model.dim();
    p.path_id = path_id;
    p.seed = cfg.seed;
    p.record_stride = cfg.record_stride;
    const std::size_t records = steps / cfg.record_stride + 2;
    p.times.reserve(records);
    p.X.reserve(records * p.dim);
    p.I.reserve(records);
    run_micro_path(model, cfg, path_id, [&](std::size_t k, double s, std::span<const double> x, std::size_t mode) {
        if (k % cfg.record_stride != 0 && k != steps) return;
        p.times.push_back(s);
        p.X.insert(p.X.end(), x.begin(), x.end());
        p.I.push_back(mode);
    });
    return p;
}

/// (eps X_{t/eps^2}, I_{t/eps^2}) on [0, T]; mode labels are copied unchanged.
inline PathSample rescale_path(const PathSample& micro, double epsilon, double T) {
    if (micro.scale != 1.0) throw SimulationError("rescale_path expects a micro path");
    if (!(epsilon > 0.0)) throw SimulationError("epsilon must be positive");
    const double horizon = T / (epsilon * epsilon);
    const double slack = 1e-12 * std::max(1.0, horizon);
    if (micro.times.empty() || micro.times.back() < horizon - slack) {
        throw SimulationError("micro path ends before T / epsilon^2");
    }
    PathSample out;
    out.dim = micro.dim;
    out.path_id = micro.path_id;
    out.seed = micro.seed;
    out.record_stride = micro.record_stride;
    out.scale = epsilon;
    const double e2 = epsilon * epsilon;
    for (std::size_t k = 0; k < micro.size() && micro.times[k] <= horizon + slack; ++k) {
        out.times.push_back(micro.times[k] * e2);
        for (double v : micro.x(k)) out.X.push_back(v * epsilon);
        out.I.push_back(micro.I[k]);
    }
    return out;
}

/// Independent micro paths with ids 0..n_paths-1, ordered by id.
inline std::vector<PathSample> simulate_paths(const SwitchingModel& model, const SimConfig& cfg, std::size_t threads = 0) {
    check_sim_config(model, cfg);
    std::vector<PathSample> out(cfg.n_paths);
    parallel_for(cfg.n_paths, threads, [&](std::size_t i) { out[i] = simulate_micro_path(model, cfg, i); });
    return out;
}

/// paths.csv rows: path_id,t,X_1..X_d,I with 1-based modes.
inline void write_paths_csv(std::ostream& os, const std::vector<PathSample>& paths) {
    if (paths.empty()) return;
    const std::size_t d = paths.front().dim;
    os << "path_id,t";
    for (std::size_t j = 0; j < d; ++j) os << ",X_" << j + 1;
    os << ",I\n";
    os.precision(17);
    for (const auto& p : paths) {
        for (std::size_t k = 0; k < p.size(); ++k) {
            os << p.path_id << ',' << p.times[k];
            for (double v : p.x(k)) os << ',' << v;
            os << ',' << p.I[k] + 1 << '\n';
        }
    }
}

}  // namespace swhom
