#pragma once

#include "error.hpp"
#include "field.hpp"
#include "model.hpp"

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace swhom {

/// Single-mode model with constant drift and constant d x r sigma.
inline SwitchingModel constant_model(const Eigen::VectorXd& b, const Eigen::MatrixXd& sigma) {
    const auto d = static_cast<std::size_t>(b.size());
    const auto r = static_cast<std::size_t>(sigma.cols());
    if (static_cast<std::size_t>(sigma.rows()) != d) throw DimensionError("constant_model: sigma must have d rows");
    std::vector<FieldSpec> drift;
    std::vector<FieldSpec> sig;
    for (std::size_t j = 0; j < d; ++j) drift.push_back(FieldSpec::constant_field(b[static_cast<Eigen::Index>(j)]));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < r; ++j)
            sig.push_back(FieldSpec::constant_field(sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    return SwitchingModel(d, r, 1, {drift}, {sig}, {});
}

/// Two-mode constant-velocity model in d = 1: b = +v / -v, q12 = q21 = q, a = diffusion.
inline SwitchingModel telegraph_model(double q = 1.0, double v = 1.0, double diffusion = 0.1) {
    const auto s = FieldSpec::constant_field(std::sqrt(diffusion));
    std::vector<FieldSpec> rates(4);
    rates[1] = FieldSpec::constant_field(q);
    rates[2] = FieldSpec::constant_field(q);
    return SwitchingModel(1, 1, 2, {{FieldSpec::constant_field(v)}, {FieldSpec::constant_field(-v)}}, {{s}, {s}}, rates);
}

/// d = 1, one mode, b = 0, a(x) = 2 + sin(2 pi x).
///
/// a is realized with r = 2 as sigma = (c0 + c1 sin, c1 cos), c0 = (1 + sqrt 3)/2,
/// c1 = (sqrt 3 - 1)/2, so that c0^2 + c1^2 = 2 and 2 c0 c1 = 1.
inline SwitchingModel harmonic_mean_model() {
    const double c0 = 0.5 * (1.0 + std::sqrt(3.0));
    const double c1 = 0.5 * (std::sqrt(3.0) - 1.0);
    FieldSpec s1 = FieldSpec::constant_field(c0);
    s1.add({1}, 0.0, c1);
    FieldSpec s2;
    s2.add({1}, c1, 0.0);
    return SwitchingModel(1, 2, 1, {{FieldSpec::constant_field(0.0)}}, {{s1, s2}}, {});
}

/// d = 2, two modes, spatially varying drift, anisotropic sigma and intensities. No closed form.
inline SwitchingModel two_mode_periodic_model() {
    auto trig = [](double c, std::vector<int> k, double cc, double ss) {
        FieldSpec f = FieldSpec::constant_field(c);
        if (cc != 0.0 || ss != 0.0) f.add(std::move(k), cc, ss);
        return f;
    };
    const FieldSpec zero = FieldSpec::constant_field(0.0);

    std::vector<FieldSpec> b0{trig(0.3, {1, 0}, 0.0, 0.5), trig(0.0, {0, 1}, 0.4, 0.0).add({1, 1}, 0.0, 0.2)};
    std::vector<FieldSpec> s0{trig(1.0, {0, 1}, 0.0, 0.3), FieldSpec::constant_field(0.2), trig(0.0, {1, 0}, 0.1, 0.0),
                              FieldSpec::constant_field(0.8)};
    std::vector<FieldSpec> b1{trig(-0.6, {0, 1}, 0.3, 0.0), trig(0.0, {1, 0}, 0.0, 0.5)};
    std::vector<FieldSpec> s1{FieldSpec::constant_field(0.7), trig(0.0, {0, 1}, 0.0, 0.1), zero,
                              trig(1.1, {1, 0}, 0.2, 0.0)};

    std::vector<FieldSpec> rates(4);
    rates[1] = trig(1.0, {1, 0}, 0.5, 0.0);
    rates[2] = trig(0.8, {0, 1}, 0.0, 0.3).add({1, -1}, 0.2, 0.0);
    return SwitchingModel(2, 2, 2, {b0, b1}, {s0, s1}, rates);
}

/// Built-in model together with its default grid and, where known, the exact effective covariance.
struct Preset {
    std::string name;
    SwitchingModel model;
    std::vector<std::size_t> grid;
    std::optional<Eigen::MatrixXd> exact_C;
};

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"constant", "harmonic-mean", "telegraph", "two-mode-periodic"};
    return names;
}

inline Preset make_preset(const std::string& name) {
    if (name == "constant") {
        Eigen::Vector2d b(1.0, -0.5);
        Eigen::Matrix2d s;
        s << 1.0, 0.0, 0.5, 0.8;
        return {name, constant_model(b, s), {8, 8}, Eigen::MatrixXd(s * s.transpose())};
    }
    if (name == "harmonic-mean") {
        return {name, harmonic_mean_model(), {256}, Eigen::MatrixXd::Constant(1, 1, std::sqrt(3.0))};
    }
    if (name == "telegraph") {
        return {name, telegraph_model(), {32}, Eigen::MatrixXd::Constant(1, 1, 1.1)};
    }
    if (name == "two-mode-periodic") {
        return {name, two_mode_periodic_model(), {64, 64}, std::nullopt};
    }
    throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace swhom
