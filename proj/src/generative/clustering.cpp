#include "skyseg/generative/clustering.hpp"

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/LU>

#include "skyseg/core/error.hpp"

namespace skyseg {

int KMeansResult::nearest(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
        const double d = (centroids.row(c).transpose() - x).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

Eigen::MatrixXd kmeans_plus_plus(const Eigen::MatrixXd& x, int k, std::uint64_t seed) {
    const Eigen::Index n = x.rows();
    if (k <= 0 || n < k) throw DataError("k-means: need at least K samples");
    std::mt19937_64 rng(seed);
    Eigen::MatrixXd c(k, x.cols());
    c.row(0) = x.row(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
    Eigen::VectorXd d2 = (x.rowwise() - c.row(0)).rowwise().squaredNorm();
    for (int m = 1; m < k; ++m) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (pick = 0; pick < n - 1; ++pick) {
                u -= d2[pick];
                if (u <= 0.0) break;
            }
            while (d2[pick] == 0.0 && pick > 0) --pick;  // never pick an existing centroid
        }
        c.row(m) = x.row(pick);
        d2 = d2.cwiseMin((x.rowwise() - c.row(m)).rowwise().squaredNorm());
    }
    return c;
}

KMeansResult fit_kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, const ClusterOptions& options) {
    const Eigen::Index n = x.rows();
    KMeansResult r;
    r.centroids = kmeans_plus_plus(x, k, seed);
    r.assignment.assign(static_cast<std::size_t>(n), -1);

    for (int it = 0; it < options.max_iterations; ++it) {
        // Assignment step.
        bool changed = false;
        double inertia = 0.0;
        std::vector<double> dist(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double d = (x.row(i) - r.centroids.row(c)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            changed |= r.assignment[static_cast<std::size_t>(i)] != best;
            r.assignment[static_cast<std::size_t>(i)] = best;
            dist[static_cast<std::size_t>(i)] = best_d;
            inertia += best_d;
        }
        r.inertia_trace.push_back(inertia);
        r.iterations = it + 1;
        const std::size_t t = r.inertia_trace.size();
        if (!changed || (t >= 2 && r.inertia_trace[t - 2] - inertia < options.tolerance * (1.0 + inertia))) {
            r.converged = true;
            break;
        }

        // Update step.
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int c = r.assignment[static_cast<std::size_t>(i)];
            sums.row(c) += x.row(i);
            ++counts[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                r.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
            } else {
                Eigen::Index far = 0;
                for (Eigen::Index i = 1; i < n; ++i)
                    if (dist[static_cast<std::size_t>(i)] > dist[static_cast<std::size_t>(far)]) far = i;
                r.centroids.row(c) = x.row(far);
                dist[static_cast<std::size_t>(far)] = 0.0;
            }
        }
    }
    return r;
}

namespace {

struct EStep {
    Eigen::MatrixXd resp;
    double loglik;
};

EStep e_step(const std::vector<GaussianClass>& comps, const Eigen::MatrixXd& x) {
    const Eigen::Index n = x.rows();
    const int k = static_cast<int>(comps.size());
    Eigen::MatrixXd lp(n, k);
    for (int c = 0; c < k; ++c) lp.col(c) = comps[c].log_density_rows(x).array() + std::log(comps[c].prior());
    EStep e{Eigen::MatrixXd(n, k), 0.0};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m = lp.row(i).maxCoeff();
        const double lse = m + std::log((lp.row(i).array() - m).exp().sum());
        e.resp.row(i) = (lp.row(i).array() - lse).exp();
        e.loglik += lse;
    }
    return e;
}

double penalty(const std::vector<GaussianClass>& comps, double reg) {
    if (reg == 0.0) return 0.0;
    double p = 0.0;
    for (const auto& c : comps) p += reg * c.covariance().inverse().trace();
    return 0.5 * p;
}

}  // namespace

Eigen::MatrixXd MixtureModel::responsibilities(const Eigen::MatrixXd& x) const { return e_step(components, x).resp; }

double MixtureModel::log_likelihood(const Eigen::MatrixXd& x) const { return e_step(components, x).loglik; }

MixtureModel fit_gmm(const Eigen::MatrixXd& x, int k, double gamma, std::uint64_t seed, const ClusterOptions& options) {
    if (gamma < 0.0) throw ConfigError("GMM: gamma must be non-negative");
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    const double reg = gamma * static_cast<double>(n) / k;

    ClusterOptions init_opts;
    init_opts.max_iterations = 20;
    const KMeansResult km = fit_kmeans(x, k, seed, init_opts);
    Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, k);
    for (Eigen::Index i = 0; i < n; ++i) resp(i, km.assignment[static_cast<std::size_t>(i)]) = 1.0;

    MixtureModel model;
    model.gamma = gamma;
    // Returns false when a component has lost all of its weight. Restarting
    // it would break the monotone objective, so EM stops at the last valid
    // model instead.
    auto m_step = [&](const Eigen::MatrixXd& r, std::vector<GaussianClass>& comps) {
        comps.clear();
        for (int c = 0; c < k; ++c) {
            const Eigen::VectorXd w = r.col(c);
            const double nk = w.sum();
            if (!(nk > 1e-8 * static_cast<double>(n))) return false;
            const WeightedMoments m = weighted_moments(x, w);
            Eigen::MatrixXd cov = m.scatter;
            cov.diagonal().array() += reg > 0.0 ? reg : 1e-12 * std::max(1.0, cov.trace() / d);
            cov /= nk;
            comps.emplace_back(m.mean, cov, nk / static_cast<double>(n));
        }
        return true;
    };

    if (!m_step(resp, model.components)) throw DataError("GMM: k-means initialization left a cluster empty");
    std::vector<GaussianClass> next;
    for (int it = 0; it < options.max_iterations; ++it) {
        EStep e = e_step(model.components, x);
        const double objective = e.loglik - penalty(model.components, reg);
        model.loglik_trace.push_back(objective);
        model.iterations = it + 1;
        const std::size_t t = model.loglik_trace.size();
        if (t >= 2 && std::abs(objective - model.loglik_trace[t - 2]) < options.tolerance * (1.0 + std::abs(objective))) {
            model.converged = true;
            break;
        }
        if (!m_step(e.resp, next)) break;
        model.components.swap(next);
    }
    return model;
}

int cloud_cluster_by_overlap(std::span<const int> assignment, std::span<const std::uint8_t> labels) {
    if (assignment.size() != labels.size()) throw DataError("cluster mapping: label count mismatch");
    // Fraction of each cluster labelled cloud; the cloudier cluster is cloud.
    double cloud[2] = {0, 0}, total[2] = {0, 0};
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        const int c = assignment[i] == 0 ? 0 : 1;
        total[c] += 1.0;
        cloud[c] += labels[i];
    }
    const double f0 = total[0] > 0 ? cloud[0] / total[0] : 0.0;
    const double f1 = total[1] > 0 ? cloud[1] / total[1] : 0.0;
    return f1 >= f0 ? 1 : 0;
}

int cloud_cluster_by_temperature(const Eigen::MatrixXd& centroids, int temperature_index) {
    return centroids(1, temperature_index) >= centroids(0, temperature_index) ? 1 : 0;
}

}  // namespace skyseg
