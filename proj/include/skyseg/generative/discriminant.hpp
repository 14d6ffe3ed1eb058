#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>

#include <Eigen/Core>

#include "skyseg/generative/gaussian.hpp"

namespace skyseg {

enum class CovarianceKind { full, diagonal, identity };

/// Two-class Gaussian discriminant (class 0 = clear, 1 = cloud) with uniform
/// class priors, so classification is maximum likelihood.
class GaussianDiscriminant {
public:
    GaussianDiscriminant() = default;
    GaussianDiscriminant(std::array<GaussianClass, 2> classes, CovarianceKind kind, double gamma);

    /// Fits per-class means and covariances (plus gamma * I). Each class needs
    /// at least two samples.
    static GaussianDiscriminant fit(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y, CovarianceKind kind,
                                    double gamma);

    const GaussianClass& clear() const { return classes_[0]; }
    const GaussianClass& cloud() const { return classes_[1]; }
    const std::array<GaussianClass, 2>& classes() const { return classes_; }
    CovarianceKind kind() const { return kind_; }
    double gamma() const { return gamma_; }

    /// p(cloud | x).
    double posterior(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    Eigen::VectorXd posterior_rows(const Eigen::MatrixXd& x) const;
    /// Log-likelihoods, column 0 = clear, column 1 = cloud.
    Eigen::MatrixXd log_likelihoods(const Eigen::MatrixXd& x) const;

private:
    std::array<GaussianClass, 2> classes_;
    CovarianceKind kind_ = CovarianceKind::full;
    double gamma_ = 0.0;
};

GaussianDiscriminant fit_gda(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y, double gamma);
/// Diagonal covariances; a tiny variance floor keeps constant features usable.
GaussianDiscriminant fit_nbc(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y);

/// Posterior of class cloud and the virtual-prior decision.
struct Posterior {
    double p_cloud;
    bool cloud;
};
Posterior posterior(const GaussianDiscriminant& model, const Eigen::Ref<const Eigen::VectorXd>& x, double lambda);

CovarianceKind parse_covariance_kind(std::string_view s);
std::string_view to_string(CovarianceKind k);

}  // namespace skyseg
