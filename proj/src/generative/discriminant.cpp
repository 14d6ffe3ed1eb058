#include "skyseg/generative/discriminant.hpp"

#include <cmath>
#include <string>

#include "skyseg/core/error.hpp"
#include "skyseg/models/decision.hpp"

namespace skyseg {

namespace {

constexpr double kVarianceFloor = 1e-9;

double logistic_of_difference(double l1, double l0) {
    // 1 / (1 + exp(l0 - l1)) evaluated on the stable side.
    const double d = l1 - l0;
    if (d >= 0) return 1.0 / (1.0 + std::exp(-d));
    const double e = std::exp(d);
    return e / (1.0 + e);
}

}  // namespace

GaussianDiscriminant::GaussianDiscriminant(std::array<GaussianClass, 2> classes, CovarianceKind kind, double gamma)
    : classes_(std::move(classes)), kind_(kind), gamma_(gamma) {}

GaussianDiscriminant GaussianDiscriminant::fit(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y,
                                               CovarianceKind kind, double gamma) {
    if (static_cast<Eigen::Index>(y.size()) != x.rows()) throw DataError("discriminant fit: label count mismatch");
    if (gamma < 0.0) throw ConfigError("discriminant fit: gamma must be non-negative");
    const Eigen::Index d = x.cols();
    std::array<GaussianClass, 2> classes;
    for (int k = 0; k < 2; ++k) {
        Eigen::VectorXd w(x.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i) w[i] = y[static_cast<std::size_t>(i)] == k ? 1.0 : 0.0;
        if (w.sum() < 2.0)
            throw DataError(std::string("discriminant fit: class ") + (k ? "cloud" : "clear") +
                            " has fewer than 2 samples");
        const WeightedMoments m = weighted_moments(x, w);
        Eigen::MatrixXd cov;
        switch (kind) {
            case CovarianceKind::full:
                cov = m.scatter / m.weight;
                break;
            case CovarianceKind::diagonal:
                cov = (m.scatter.diagonal() / m.weight).cwiseMax(kVarianceFloor).asDiagonal();
                break;
            case CovarianceKind::identity:
                cov = Eigen::MatrixXd::Identity(d, d);
                break;
        }
        cov.diagonal().array() += gamma;
        classes[k] = GaussianClass(m.mean, cov, 0.5);
    }
    return GaussianDiscriminant(std::move(classes), kind, gamma);
}

double GaussianDiscriminant::posterior(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return logistic_of_difference(classes_[1].log_density(x) + std::log(classes_[1].prior()),
                                  classes_[0].log_density(x) + std::log(classes_[0].prior()));
}

Eigen::MatrixXd GaussianDiscriminant::log_likelihoods(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out(x.rows(), 2);
    out.col(0) = classes_[0].log_density_rows(x);
    out.col(1) = classes_[1].log_density_rows(x);
    return out;
}

Eigen::VectorXd GaussianDiscriminant::posterior_rows(const Eigen::MatrixXd& x) const {
    const Eigen::MatrixXd ll = log_likelihoods(x);
    const double lp0 = std::log(classes_[0].prior());
    const double lp1 = std::log(classes_[1].prior());
    Eigen::VectorXd p(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) p[i] = logistic_of_difference(ll(i, 1) + lp1, ll(i, 0) + lp0);
    return p;
}

GaussianDiscriminant fit_gda(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y, double gamma) {
    return GaussianDiscriminant::fit(x, y, CovarianceKind::full, gamma);
}

GaussianDiscriminant fit_nbc(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y) {
    return GaussianDiscriminant::fit(x, y, CovarianceKind::diagonal, 0.0);
}

Posterior posterior(const GaussianDiscriminant& model, const Eigen::Ref<const Eigen::VectorXd>& x, double lambda) {
    const double p = model.posterior(x);
    return {p, decide_cloud(p, lambda)};
}

CovarianceKind parse_covariance_kind(std::string_view s) {
    if (s == "full") return CovarianceKind::full;
    if (s == "diagonal") return CovarianceKind::diagonal;
    if (s == "identity") return CovarianceKind::identity;
    throw ParseError("unknown covariance kind \"" + std::string(s) + "\"");
}

std::string_view to_string(CovarianceKind k) {
    switch (k) {
        case CovarianceKind::full: return "full";
        case CovarianceKind::diagonal: return "diagonal";
        case CovarianceKind::identity: return "identity";
    }
    return "?";
}

}  // namespace skyseg
