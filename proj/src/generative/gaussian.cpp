#include "skyseg/generative/gaussian.hpp"

#include <cmath>
#include <numbers>

#include "skyseg/core/error.hpp"

namespace skyseg {

GaussianClass::GaussianClass(Eigen::VectorXd mean, Eigen::MatrixXd covariance, double prior)
    : mean_(std::move(mean)), covariance_(std::move(covariance)), prior_(prior) {
    if (covariance_.rows() != mean_.size() || covariance_.cols() != mean_.size())
        throw DataError("GaussianClass: covariance shape does not match mean");
    llt_.compute(covariance_);
    if (llt_.info() != Eigen::Success) throw DataError("GaussianClass: covariance is not positive definite");
    const Eigen::MatrixXd& l = llt_.matrixLLT();
    double log_det = 0.0;
    for (Eigen::Index k = 0; k < l.rows(); ++k) log_det += 2.0 * std::log(l(k, k));
    log_norm_ = -0.5 * (static_cast<double>(mean_.size()) * std::log(2.0 * std::numbers::pi) + log_det);
}

double GaussianClass::log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const Eigen::VectorXd z = llt_.matrixL().solve(x - mean_);
    return log_norm_ - 0.5 * z.squaredNorm();
}

Eigen::VectorXd GaussianClass::log_density_rows(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd centred = (x.rowwise() - mean_.transpose()).transpose();
    llt_.matrixL().solveInPlace(centred);
    return (log_norm_ - 0.5 * centred.colwise().squaredNorm().array()).transpose();
}

WeightedMoments weighted_moments(const Eigen::MatrixXd& x, const Eigen::VectorXd& weights) {
    WeightedMoments m;
    m.weight = weights.sum();
    if (!(m.weight > 0.0)) throw DataError("weighted_moments: zero total weight");
    m.mean = (x.transpose() * weights) / m.weight;
    const Eigen::MatrixXd centred = x.rowwise() - m.mean.transpose();
    m.scatter = centred.transpose() * weights.asDiagonal() * centred;
    return m;
}

double log_add_exp(double a, double b) {
    if (a < b) std::swap(a, b);
    if (a == -std::numeric_limits<double>::infinity()) return a;
    return a + std::log1p(std::exp(b - a));
}

}  // namespace skyseg
