#pragma once

#include "error.hpp"
#include "field.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace swhom {

/// Periodic switching diffusion: dX = b(X,I) dt + sigma(X,I) dW, with mode I jumping
/// alpha -> beta at intensity q_{alpha beta}(X).
///
/// Modes are indexed 0..modes()-1 throughout the C++ interface; files and the CLI use
/// 1-based mode labels. Diagonal intensities are never stored: q_{alpha alpha} is
/// computed as minus the off-diagonal row sum, so rows of Q(x) sum to zero.
class SwitchingModel {
public:
    /// drift[alpha][j]                 : b_j(., alpha), j < d
    /// sigma[alpha][i * r + j]         : sigma_ij(., alpha), i < d, j < r
    /// intensity[alpha * modes + beta] : q_{alpha beta}(.), diagonal entries ignored
    SwitchingModel(std::size_t d, std::size_t r, std::size_t modes,
                   std::vector<std::vector<FieldSpec>> drift,
                   std::vector<std::vector<FieldSpec>> sigma,
                   std::vector<FieldSpec> intensity)
        : d_(d), r_(r), modes_(modes),
          drift_(std::move(drift)), sigma_(std::move(sigma)), intensity_(std::move(intensity)) {
        if (d_ < 1 || r_ < 1 || modes_ < 1) throw DimensionError("model needs d >= 1, r >= 1 and at least one mode");
        if (drift_.size() != modes_ || sigma_.size() != modes_) {
            throw DimensionError("drift and sigma must be given for each of the " + std::to_string(modes_) + " modes");
        }
        if (intensity_.empty()) intensity_.assign(modes_ * modes_, FieldSpec{});
        if (intensity_.size() != modes_ * modes_) throw DimensionError("intensity table must be modes x modes");
        for (std::size_t a = 0; a < modes_; ++a) {
            if (drift_[a].size() != d_) throw DimensionError("mode " + std::to_string(a) + ": drift must have d components");
            if (sigma_[a].size() != d_ * r_) throw DimensionError("mode " + std::to_string(a) + ": sigma must be d x r");
            for (const auto& f : drift_[a]) check_field(f);
            for (const auto& f : sigma_[a]) check_field(f);
        }
        for (std::size_t a = 0; a < modes_; ++a) {
            intensity_[a * modes_ + a] = FieldSpec{};
            for (std::size_t b = 0; b < modes_; ++b) check_field(intensity_[a * modes_ + b]);
        }
    }

    std::size_t dim() const { return d_; }
    std::size_t noise_dim() const { return r_; }
    std::size_t modes() const { return modes_; }

    const FieldSpec& drift_field(std::size_t mode, std::size_t j) const { return drift_.at(mode).at(j); }
    const FieldSpec& sigma_field(std::size_t mode, std::size_t i, std::size_t j) const {
        return sigma_.at(mode).at(i * r_ + j);
    }
    /// Off-diagonal intensity field; the diagonal slot holds a zero field.
    const FieldSpec& intensity_field(std::size_t from, std::size_t to) const {
        return intensity_.at(from * modes_ + to);
    }

    double drift(std::span<const double> x, std::size_t mode, std::size_t j) const {
        return eval_field(drift_field(mode, j), x);
    }

    Eigen::VectorXd drift(std::span<const double> x, std::size_t mode) const {
        Eigen::VectorXd b(d_);
        for (std::size_t j = 0; j < d_; ++j) b[j] = eval_field(drift_[mode][j], x);
        return b;
    }

    Eigen::MatrixXd sigma(std::span<const double> x, std::size_t mode) const {
        Eigen::MatrixXd s(d_, r_);
        for (std::size_t i = 0; i < d_; ++i)
            for (std::size_t j = 0; j < r_; ++j) s(i, j) = eval_field(sigma_[mode][i * r_ + j], x);
        return s;
    }

    /// a = sigma sigma^T, symmetric by construction.
    Eigen::MatrixXd diffusion(std::span<const double> x, std::size_t mode) const {
        const Eigen::MatrixXd s = sigma(x, mode);
        Eigen::MatrixXd a = s * s.transpose();
        return 0.5 * (a + a.transpose());
    }

    /// q_{from,to}(x) for from != to; for from == to returns the computed diagonal.
    double rate(std::span<const double> x, std::size_t from, std::size_t to) const {
        if (from != to) return eval_field(intensity_[from * modes_ + to], x);
        return -total_rate(x, from);
    }

    /// sum over beta != alpha of q_{alpha beta}(x).
    double total_rate(std::span<const double> x, std::size_t from) const {
        double s = 0.0;
        for (std::size_t b = 0; b < modes_; ++b)
            if (b != from) s += eval_field(intensity_[from * modes_ + b], x);
        return s;
    }

    /// Full intensity matrix Q(x) with computed diagonal.
    Eigen::MatrixXd intensity_matrix(std::span<const double> x) const {
        Eigen::MatrixXd q = Eigen::MatrixXd::Zero(modes_, modes_);
        for (std::size_t a = 0; a < modes_; ++a) {
            double s = 0.0;
            for (std::size_t b = 0; b < modes_; ++b) {
                if (a == b) continue;
                q(a, b) = eval_field(intensity_[a * modes_ + b], x);
                s += q(a, b);
            }
            q(a, a) = -s;
        }
        return q;
    }

    bool has_switching() const {
        for (std::size_t a = 0; a < modes_; ++a)
            for (std::size_t b = 0; b < modes_; ++b)
                if (a != b) {
                    const auto& f = intensity_[a * modes_ + b];
                    if (f.constant != 0.0 || !f.terms.empty()) return true;
                }
        return false;
    }

private:
    void check_field(const FieldSpec& f) const {
        if (!f.is_constant() && f.dimension() != d_) {
            throw DimensionError("field wavevector dimension " + std::to_string(f.dimension()) +
                                 " does not match model dimension " + std::to_string(d_));
        }
        for (const auto& t : f.terms)
            if (t.k.size() != d_) throw DimensionError("inconsistent wavevector lengths within a field");
    }

    std::size_t d_;
    std::size_t r_;
    std::size_t modes_;
    std::vector<std::vector<FieldSpec>> drift_;
    std::vector<std::vector<FieldSpec>> sigma_;
    std::vector<FieldSpec> intensity_;
};

}  // namespace swhom
