#pragma once

#include "error.hpp"

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace swhom {

/// One Fourier mode of a periodic field: cos_coeff*cos(2 pi k.x) + sin_coeff*sin(2 pi k.x).
struct FourierTerm {
    std::vector<int> k;
    double cos_coeff = 0.0;
    double sin_coeff = 0.0;
};

/// A smooth 1-periodic scalar field on R^d stored as a finite trigonometric polynomial.
///
/// A field with no terms is a constant and can be evaluated at points of any dimension.
struct FieldSpec {
    double constant = 0.0;
    std::vector<FourierTerm> terms;

    static FieldSpec constant_field(double c) { return FieldSpec{c, {}}; }

    /// Spatial dimension implied by the wavevectors, or 0 for a constant field.
    std::size_t dimension() const { return terms.empty() ? 0 : terms.front().k.size(); }

    bool is_constant() const { return terms.empty(); }

    /// Upper bound on |f(x)|.
    double sup_bound() const {
        double s = std::abs(constant);
        for (const auto& t : terms) s += std::hypot(t.cos_coeff, t.sin_coeff);
        return s;
    }

    FieldSpec& add(std::vector<int> k, double cos_coeff, double sin_coeff) {
        terms.push_back(FourierTerm{std::move(k), cos_coeff, sin_coeff});
        return *this;
    }
};

/// Maps a coordinate onto [0,1).
inline double wrap_coordinate(double x) {
    double w = x - std::floor(x);
    // x slightly below an integer can round up to exactly 1.0
    return w >= 1.0 ? 0.0 : w;
}

inline void wrap_point(std::span<const double> x, std::span<double> out) {
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = wrap_coordinate(x[j]);
}

namespace detail {

inline void check_field_dimension(const FieldSpec& f, std::size_t d) {
    for (const auto& t : f.terms) {
        if (t.k.size() != d) {
            throw DimensionError("field wavevector has " + std::to_string(t.k.size()) +
                                 " components but the point has " + std::to_string(d));
        }
    }
}

// 2 pi k.wrap(x); each coordinate is wrapped independently so integer shifts cancel
inline double phase(const FourierTerm& t, std::span<const double> x) {
    double p = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (t.k[j] != 0) p += static_cast<double>(t.k[j]) * wrap_coordinate(x[j]);
    }
    return 2.0 * std::numbers::pi * p;
}

}  // namespace detail

/// Value of the field at x. Coordinates outside [0,1) are wrapped first.
inline double eval_field(const FieldSpec& f, std::span<const double> x) {
    detail::check_field_dimension(f, x.size());
    double v = f.constant;
    for (const auto& t : f.terms) {
        const double p = detail::phase(t, x);
        v += t.cos_coeff * std::cos(p) + t.sin_coeff * std::sin(p);
    }
    return v;
}

/// Analytic gradient of the field at x, written into grad (size d).
inline void eval_field_gradient(const FieldSpec& f, std::span<const double> x, std::span<double> grad) {
    detail::check_field_dimension(f, x.size());
    if (grad.size() != x.size()) throw DimensionError("gradient buffer size does not match point dimension");
    for (auto& g : grad) g = 0.0;
    for (const auto& t : f.terms) {
        const double p = detail::phase(t, x);
        const double dphase = -t.cos_coeff * std::sin(p) + t.sin_coeff * std::cos(p);
        for (std::size_t j = 0; j < x.size(); ++j) {
            grad[j] += 2.0 * std::numbers::pi * static_cast<double>(t.k[j]) * dphase;
        }
    }
}

inline std::vector<double> eval_field_gradient(const FieldSpec& f, std::span<const double> x) {
    std::vector<double> g(x.size());
    eval_field_gradient(f, x, g);
    return g;
}

}  // namespace swhom
