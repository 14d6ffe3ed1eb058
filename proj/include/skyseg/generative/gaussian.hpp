#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace skyseg {

/// Gaussian class-conditional density with a cached Cholesky factor.
class GaussianClass {
public:
    GaussianClass() = default;
    GaussianClass(Eigen::VectorXd mean, Eigen::MatrixXd covariance, double prior);

    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& covariance() const { return covariance_; }
    double prior() const { return prior_; }
    void set_prior(double p) { prior_ = p; }
    int dim() const { return static_cast<int>(mean_.size()); }

    /// log N(x; mean, covariance).
    double log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    /// Row-wise log densities of a sample matrix.
    Eigen::VectorXd log_density_rows(const Eigen::MatrixXd& x) const;

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd covariance_;
    double prior_ = 0.5;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double log_norm_ = 0.0;  // -0.5 (d log 2pi + log det)
};

/// Sample mean and covariance (divided by n) of the rows selected by `weights`
/// (non-negative, same length as x.rows()).
struct WeightedMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd scatter;  // sum_i w_i (x_i - mean)(x_i - mean)^T
    double weight = 0.0;
};
WeightedMoments weighted_moments(const Eigen::MatrixXd& x, const Eigen::VectorXd& weights);

/// log(exp(a) + exp(b)) without overflow.
double log_add_exp(double a, double b);

}  // namespace skyseg
