#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/LU>

#include "skyseg/core/error.hpp"
#include "skyseg/generative/clustering.hpp"
#include "skyseg/generative/discriminant.hpp"
#include "skyseg/models/decision.hpp"

using namespace skyseg;

namespace {

struct Labelled {
    Eigen::MatrixXd x;
    std::vector<std::uint8_t> y;
};

// Two spherical blobs with unit spread, centres `sep` apart on every axis.
Labelled blobs(std::uint64_t seed, int n_per_class, int d, double sep) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Labelled out;
    out.x.resize(2 * n_per_class, d);
    for (int i = 0; i < 2 * n_per_class; ++i) {
        const int k = i < n_per_class ? 0 : 1;
        for (int c = 0; c < d; ++c) out.x(i, c) = (k ? sep / 2.0 : -sep / 2.0) + n(rng);
        out.y.push_back(static_cast<std::uint8_t>(k));
    }
    return out;
}

// Samples mirrored about each class mean in every coordinate, so the sample
// cross-covariances vanish and the data are exactly axis-aligned.
Labelled mirrored(std::uint64_t seed, int base) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Labelled out;
    out.x.resize(8 * base, 2);
    const double mean[2][2] = {{-1.0, 0.5}, {2.0, -1.0}};
    const double sd[2][2] = {{1.0, 2.0}, {0.5, 1.5}};
    int row = 0;
    for (int k = 0; k < 2; ++k)
        for (int b = 0; b < base; ++b) {
            const double a = sd[k][0] * n(rng);
            const double c = sd[k][1] * n(rng);
            for (int sa : {-1, 1})
                for (int sc : {-1, 1}) {
                    out.x(row, 0) = mean[k][0] + sa * a;
                    out.x(row, 1) = mean[k][1] + sc * c;
                    out.y.push_back(static_cast<std::uint8_t>(k));
                    ++row;
                }
        }
    return out;
}

double accuracy_on(const GaussianDiscriminant& m, const Labelled& data) {
    const Eigen::VectorXd p = m.posterior_rows(data.x);
    int ok = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) ok += decide_cloud(p[i], 1.0) == (data.y[i] == 1);
    return static_cast<double>(ok) / static_cast<double>(p.size());
}

}  // namespace

TEST_CASE("GDA separates distant blobs") {
    const Labelled data = blobs(1, 300, 3, 5.0);
    const GaussianDiscriminant m = fit_gda(data.x, data.y, 0.0);
    CHECK(accuracy_on(m, data) >= 0.99);
    for (Eigen::Index i = 0; i < data.x.rows(); i += 17) {
        const double p = m.posterior(data.x.row(i).transpose());
        const double q = 1.0 / (1.0 + std::exp(m.clear().log_density(data.x.row(i).transpose()) -
                                               m.cloud().log_density(data.x.row(i).transpose())));
        CHECK(p == doctest::Approx(q).epsilon(1e-12));
    }
}

TEST_CASE("equal covariances put the boundary on the bisector of the means") {
    Eigen::MatrixXd cov(2, 2);
    cov << 2.0, 0.3, 0.3, 1.0;
    Eigen::VectorXd m0(2), m1(2);
    m0 << -1.0, 0.0;
    m1 << 3.0, 2.0;
    const GaussianDiscriminant g({GaussianClass(m0, cov, 0.5), GaussianClass(m1, cov, 0.5)}, CovarianceKind::full,
                                 0.0);
    // Points x with (x - mid)^T Sigma^-1 (m1 - m0) = 0 are equidistant in the
    // Mahalanobis metric and get posterior one half.
    const Eigen::VectorXd mid = 0.5 * (m0 + m1);
    const Eigen::VectorXd normal = cov.inverse() * (m1 - m0);
    Eigen::VectorXd along(2);
    along << -normal[1], normal[0];
    for (double t : {-5.0, -1.0, 0.0, 2.5, 7.0}) {
        const Eigen::VectorXd x = mid + t * along;
        CHECK(g.posterior(x) == doctest::Approx(0.5).epsilon(1e-12));
    }
    CHECK(g.posterior(mid + 0.1 * normal) > 0.5);
}

TEST_CASE("heavy regularization reduces GDA to the nearest-mean rule") {
    // Both the quadratic term and the log-determinant difference shrink like
    // 1/gamma, so the boundary converges to a bisector shifted by
    // tr(S_cloud - S_clear) / (2 |m_cloud - m_clear|), a few hundredths here.
    const Labelled data = blobs(4, 200, 2, 1.5);
    const GaussianDiscriminant g = fit_gda(data.x, data.y, 1e8);
    const double gap = (g.cloud().mean() - g.clear().mean()).norm();
    int agree = 0, total = 0;
    for (double a = -4.0; a <= 4.0; a += 0.25)
        for (double b = -4.0; b <= 4.0; b += 0.25) {
            Eigen::VectorXd x(2);
            x << a, b;
            const bool cloud = decide_cloud(g.posterior(x), 1.0);
            const double d_cloud = (x - g.cloud().mean()).squaredNorm();
            const double d_clear = (x - g.clear().mean()).squaredNorm();
            const bool nearer_cloud = d_cloud < d_clear;
            agree += cloud == nearer_cloud;
            ++total;
            if (cloud != nearer_cloud) CHECK(std::abs(d_cloud - d_clear) / (2.0 * gap) < 0.1);
        }
    CHECK(agree >= 0.99 * total);
}

TEST_CASE("NBC matches GDA on one feature and on axis-aligned data") {
    const Labelled one = blobs(2, 100, 1, 2.0);
    const GaussianDiscriminant nbc1 = fit_nbc(one.x, one.y);
    const GaussianDiscriminant gda1 = fit_gda(one.x, one.y, 0.0);
    CHECK(nbc1.posterior_rows(one.x) == gda1.posterior_rows(one.x));

    const Labelled aligned = mirrored(3, 200);
    const GaussianDiscriminant nbc = fit_nbc(aligned.x, aligned.y);
    const GaussianDiscriminant gda = fit_gda(aligned.x, aligned.y, 0.0);
    double worst = 0.0;
    for (double a = -5.0; a <= 5.0; a += 0.5)
        for (double b = -5.0; b <= 5.0; b += 0.5) {
            Eigen::VectorXd x(2);
            x << a, b;
            worst = std::max(worst, std::abs(nbc.posterior(x) - gda.posterior(x)));
        }
    CHECK(worst < 1e-6);
}

TEST_CASE("NBC and GDA disagree on correlated data") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    Labelled data;
    data.x.resize(600, 2);
    for (int i = 0; i < 600; ++i) {
        const int k = i % 2;
        const double u = n(rng), v = n(rng);
        // Strongly correlated clouds offset along the anti-diagonal.
        data.x(i, 0) = u + 0.2 * v + (k ? 1.0 : -1.0);
        data.x(i, 1) = u - 0.2 * v + (k ? -1.0 : 1.0) * 0.2;
        data.y.push_back(static_cast<std::uint8_t>(k));
    }
    const GaussianDiscriminant nbc = fit_nbc(data.x, data.y);
    const GaussianDiscriminant gda = fit_gda(data.x, data.y, 0.0);
    int disagree = 0;
    for (double a = -4.0; a <= 4.0; a += 0.25)
        for (double b = -4.0; b <= 4.0; b += 0.25) {
            Eigen::VectorXd x(2);
            x << a, b;
            disagree += decide_cloud(nbc.posterior(x), 1.0) != decide_cloud(gda.posterior(x), 1.0);
        }
    CHECK(disagree > 0);
}

TEST_CASE("class posteriors sum to one") {
    const Labelled data = blobs(6, 50, 3, 1.0);
    const GaussianDiscriminant g = fit_gda(data.x, data.y, 0.1);
    for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
        const Eigen::VectorXd x = data.x.row(i).transpose();
        const double l1 = g.cloud().log_density(x), l0 = g.clear().log_density(x);
        const double p_clear = 1.0 / (1.0 + std::exp(l1 - l0));
        CHECK(std::abs(g.posterior(x) + p_clear - 1.0) < 1e-12);
    }
}

TEST_CASE("virtual prior decisions") {
    CHECK(decide_cloud(0.5, 1.0));  // exact tie goes to cloud
    CHECK_FALSE(decide_cloud(0.49, 1.0));
    for (double p : {0.0, 0.3, 0.999, 1.0}) CHECK_FALSE(decide_cloud(p, 0.0));
    CHECK(decide_cloud(0.3, 2.0));  // 0.6 > 0.4
    const Labelled data = blobs(7, 20, 2, 3.0);
    const GaussianDiscriminant g = fit_gda(data.x, data.y, 0.0);
    const Posterior post = posterior(g, data.x.row(0).transpose(), 1.0);
    CHECK(post.cloud == (post.p_cloud >= 0.5));
}

TEST_CASE("discriminant input errors") {
    Eigen::MatrixXd x(3, 1);
    x << 0.0, 1.0, 2.0;
    const std::vector<std::uint8_t> y{0, 0, 1};
    CHECK_THROWS_AS(fit_gda(x, y, 0.0), DataError);
    const std::vector<std::uint8_t> wrong{0, 1};
    CHECK_THROWS_AS(fit_gda(x, wrong, 0.0), DataError);
    const std::vector<std::uint8_t> ok{0, 0, 1};
    CHECK_THROWS_AS(fit_gda(x, ok, -1.0), ConfigError);
}

TEST_CASE("k-means on two points and on blobs") {
    Eigen::MatrixXd two(2, 2);
    two << 0.0, 0.0, 3.0, 4.0;
    const KMeansResult r = fit_kmeans(two, 2, 1);
    CHECK(r.inertia() == 0.0);
    CHECK(r.assignment[0] != r.assignment[1]);
    CHECK(r.centroids.row(r.assignment[0]) == two.row(0));
    CHECK(r.centroids.row(r.assignment[1]) == two.row(1));
    CHECK_THROWS_AS(fit_kmeans(two, 3, 1), DataError);

    const Labelled data = blobs(8, 150, 2, 8.0);
    const KMeansResult b = fit_kmeans(data.x, 2, 3);
    CHECK(b.converged);
    const int cloud = cloud_cluster_by_overlap(b.assignment, data.y);
    int ok = 0;
    for (std::size_t i = 0; i < data.y.size(); ++i) ok += (b.assignment[i] == cloud) == (data.y[i] == 1);
    CHECK(ok == static_cast<int>(data.y.size()));
    CHECK(cloud_cluster_by_temperature(b.centroids, 0) == cloud);
}

TEST_CASE("k-means inertia never increases") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Labelled data = blobs(100 + seed, 60, 3, 1.0);
        const KMeansResult r = fit_kmeans(data.x, 2, seed);
        for (std::size_t t = 1; t < r.inertia_trace.size(); ++t)
            CHECK(r.inertia_trace[t] <= r.inertia_trace[t - 1] + 1e-9);
    }
}

TEST_CASE("EM objective never decreases") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Labelled data = blobs(300 + seed, 60, 2, 1.5);
        const MixtureModel m = fit_gmm(data.x, 2, seed % 2 ? 0.0 : 0.1, seed);
        REQUIRE(!m.loglik_trace.empty());
        for (std::size_t t = 1; t < m.loglik_trace.size(); ++t)
            CHECK(m.loglik_trace[t] >= m.loglik_trace[t - 1] - 1e-9);
    }
}

TEST_CASE("GMM recovers well separated component means") {
    const Labelled data = blobs(11, 1000, 2, 6.0);
    const MixtureModel m = fit_gmm(data.x, 2, 0.0, 4);
    REQUIRE(m.components.size() == 2);
    const int hi = m.components[1].mean()[0] > m.components[0].mean()[0] ? 1 : 0;
    for (int c = 0; c < 2; ++c) {
        CHECK(std::abs(m.components[hi].mean()[c] - 3.0) < 0.1);
        CHECK(std::abs(m.components[1 - hi].mean()[c] + 3.0) < 0.1);
    }
    const Eigen::MatrixXd r = m.responsibilities(data.x);
    for (Eigen::Index i = 0; i < r.rows(); ++i) CHECK(std::abs(r.row(i).sum() - 1.0) < 1e-12);

    // Hard GMM assignments agree with k-means on blobs this far apart.
    const KMeansResult k = fit_kmeans(data.x, 2, 4);
    int same = 0;
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
        Eigen::Index arg = 0;
        r.row(i).maxCoeff(&arg);
        same += (arg == hi) == (k.centroids(k.assignment[static_cast<std::size_t>(i)], 0) > 0.0);
    }
    CHECK(same == r.rows());
}

TEST_CASE("cluster to class mapping") {
    const std::vector<int> assignment{0, 0, 1, 1, 1};
    const std::vector<std::uint8_t> labels{1, 1, 0, 0, 1};
    CHECK(cloud_cluster_by_overlap(assignment, labels) == 0);
    Eigen::MatrixXd centroids(2, 2);
    centroids << 5.0, 0.0, 1.0, 9.0;
    CHECK(cloud_cluster_by_temperature(centroids, 0) == 0);
    CHECK(cloud_cluster_by_temperature(centroids, 1) == 1);
}

TEST_CASE("log_add_exp is stable") {
    CHECK(log_add_exp(1000.0, 1000.0) == doctest::Approx(1000.0 + std::log(2.0)));
    CHECK(log_add_exp(-1000.0, 0.0) == doctest::Approx(0.0));
    CHECK(log_add_exp(std::log(2.0), std::log(3.0)) == doctest::Approx(std::log(5.0)));
}
