#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "skyseg/generative/gaussian.hpp"

namespace skyseg {

struct KMeansResult {
    Eigen::MatrixXd centroids;  // K x d
    std::vector<int> assignment;
    std::vector<double> inertia_trace;  // after every assignment step
    int iterations = 0;
    bool converged = false;

    double inertia() const { return inertia_trace.empty() ? 0.0 : inertia_trace.back(); }
    /// Index of the nearest centroid.
    int nearest(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

struct ClusterOptions {
    int max_iterations = 500;
    double tolerance = 1e-8;
};

/// Lloyd iterations from k-means++ seeding. An emptied cluster is reseeded
/// at the sample farthest from its current centroid.
KMeansResult fit_kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, const ClusterOptions& options = {});

/// k-means++ seeding alone.
Eigen::MatrixXd kmeans_plus_plus(const Eigen::MatrixXd& x, int k, std::uint64_t seed);

struct MixtureModel {
    std::vector<GaussianClass> components;
    /// Objective after every EM iteration: the log-likelihood minus
    /// 0.5 * sum_k tr(Gamma Sigma_k^-1), Gamma = gamma * (n/K) * I. This is the
    /// quantity EM with covariance regularization provably never decreases;
    /// it equals the plain log-likelihood when gamma = 0.
    std::vector<double> loglik_trace;
    double gamma = 0.0;
    int iterations = 0;
    bool converged = false;

    /// n x K posterior responsibilities.
    Eigen::MatrixXd responsibilities(const Eigen::MatrixXd& x) const;
    double log_likelihood(const Eigen::MatrixXd& x) const;
};

/// EM for a K-component Gaussian mixture initialised from k-means. Covariance
/// M-step: (S_k + gamma (n/K) I) / N_k, which behaves like S_k/N_k + gamma I.
/// A component whose weight vanishes ends the iterations at the last model
/// with both components alive (converged = false).
MixtureModel fit_gmm(const Eigen::MatrixXd& x, int k, double gamma, std::uint64_t seed,
                     const ClusterOptions& options = {});

/// Which cluster is "cloud": the one overlapping most with cloud labels
/// (majority vote of each cluster's members).
int cloud_cluster_by_overlap(std::span<const int> assignment, std::span<const std::uint8_t> labels);
/// Fallback without labels: the cluster whose centroid is warmer on the
/// temperature feature.
int cloud_cluster_by_temperature(const Eigen::MatrixXd& centroids, int temperature_index);

}  // namespace skyseg
