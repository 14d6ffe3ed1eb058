#include "skyseg/mrf/mrf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "skyseg/core/error.hpp"
#include "skyseg/generative/clustering.hpp"

namespace skyseg {

namespace {

constexpr int kDi[8] = {-1, 0, 0, 1, -1, -1, 1, 1};
constexpr int kDj[8] = {0, -1, 1, 0, -1, 1, -1, 1};

int degree(CliqueOrder order) { return order == CliqueOrder::first ? 4 : 8; }

// Sum of neighbour spins s_j = 2 y_j - 1 (pixels outside the frame have none).
int neighbour_spin_sum(const LabelMask& labels, int i, int j, CliqueOrder order) {
    int s = 0;
    for (int n = 0; n < degree(order); ++n) {
        const int ii = i + kDi[n];
        const int jj = j + kDj[n];
        if (ii < 0 || jj < 0 || ii >= labels.rows() || jj >= labels.cols()) continue;
        s += labels(ii, jj) ? 1 : -1;
    }
    return s;
}

void check_shapes(const LabelMask& labels, const Eigen::MatrixXd& unary) {
    if (unary.rows() != static_cast<Eigen::Index>(labels.size()) || unary.cols() != 2)
        throw DataError("MRF: unary terms do not match the label grid");
}

double local_delta(const LabelMask& labels, const Eigen::MatrixXd& unary, const MrfModel& model, int k, double bias) {
    const int i = k / labels.cols();
    const int j = k % labels.cols();
    const int s = neighbour_spin_sum(labels, i, j, model.order);
    return unary(k, 1) - unary(k, 0) + bias - 2.0 * model.beta * s;
}

GaussianClass class_from_mask(const Eigen::MatrixXd& x, const LabelMask& mask, int cls, double gamma) {
    Eigen::VectorXd w(x.rows());
    for (Eigen::Index k = 0; k < x.rows(); ++k) w[k] = mask[static_cast<std::size_t>(k)] == cls ? 1.0 : 0.0;
    const WeightedMoments m = weighted_moments(x, w);
    Eigen::MatrixXd cov = m.scatter / m.weight;
    cov.diagonal().array() += gamma;
    return GaussianClass(m.mean, cov, 0.5);
}

}  // namespace

CliqueOrder parse_clique_order(std::string_view s) {
    if (s == "first" || s == "1" || s == "4") return CliqueOrder::first;
    if (s == "second" || s == "2" || s == "8") return CliqueOrder::second;
    throw ParseError("unknown clique order \"" + std::string(s) + "\" (expected first or second)");
}

std::string_view to_string(CliqueOrder c) { return c == CliqueOrder::first ? "first" : "second"; }

MrfInference parse_inference(std::string_view s) {
    if (s == "icm") return MrfInference::icm;
    if (s == "sa") return MrfInference::sa;
    throw ParseError("unknown MRF inference \"" + std::string(s) + "\" (expected icm or sa)");
}

std::string_view to_string(MrfInference m) { return m == MrfInference::icm ? "icm" : "sa"; }

Eigen::MatrixXd unary_terms(const MrfModel& model, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd u(x.rows(), 2);
    u.col(0) = -model.classes[0].log_density_rows(x);
    u.col(1) = -model.classes[1].log_density_rows(x);
    return u;
}

double energy(const LabelMask& labels, const Eigen::MatrixXd& unary, const MrfModel& model, double bias) {
    check_shapes(labels, unary);
    double data = 0.0;
    long cloud = 0;
    for (std::size_t k = 0; k < labels.size(); ++k) {
        data += unary(static_cast<Eigen::Index>(k), labels[k] ? 1 : 0);
        cloud += labels[k] ? 1 : 0;
    }
    // Each unordered pair once: right, down, and for Omega2 the two downward
    // diagonals.
    long agree = 0;
    const int rows = labels.rows();
    const int cols = labels.cols();
    auto pair = [&](int i, int j, int ii, int jj) {
        if (ii < 0 || jj < 0 || ii >= rows || jj >= cols) return;
        agree += labels(i, j) == labels(ii, jj) ? 1 : -1;
    };
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            pair(i, j, i, j + 1);
            pair(i, j, i + 1, j);
            if (model.order == CliqueOrder::second) {
                pair(i, j, i + 1, j + 1);
                pair(i, j, i + 1, j - 1);
            }
        }
    }
    const double prior = cloud == 0 ? 0.0 : bias * static_cast<double>(cloud);
    return data - model.beta * static_cast<double>(agree) + prior;
}

double flip_delta(const LabelMask& labels, const Eigen::MatrixXd& unary, const MrfModel& model, int k, double bias) {
    check_shapes(labels, unary);
    return local_delta(labels, unary, model, k, bias);
}

int icm_sweep(LabelMask& labels, const Eigen::MatrixXd& unary, const MrfModel& model, double bias) {
    check_shapes(labels, unary);
    int changed = 0;
    const int n = static_cast<int>(labels.size());
    for (int k = 0; k < n; ++k) {
        const std::uint8_t next = local_delta(labels, unary, model, k, bias) <= 0.0 ? 1 : 0;
        if (next != labels[static_cast<std::size_t>(k)]) {
            labels[static_cast<std::size_t>(k)] = next;
            ++changed;
        }
    }
    return changed;
}

int icm(LabelMask& labels, const Eigen::MatrixXd& unary, const MrfModel& model, double bias, int max_sweeps) {
    for (int s = 1; s <= max_sweeps; ++s)
        if (icm_sweep(labels, unary, model, bias) == 0) return s;
    return max_sweeps;
}

std::vector<int> margin_sampling(const LabelMask& labels, const Eigen::MatrixXd& unary, const MrfModel& model,
                                 double fraction, double bias) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("margin sampling: fraction must be in (0, 1]");
    check_shapes(labels, unary);
    const int n = static_cast<int>(labels.size());
    std::vector<double> margin(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) margin[static_cast<std::size_t>(k)] = std::abs(local_delta(labels, unary, model, k, bias));
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    // Guard against 0.1 * 4800 = 480.00000000000006 rounding up.
    const int m = std::clamp(static_cast<int>(std::ceil(fraction * n - 1e-9)), 1, n);
    auto less = [&](int a, int b) {
        const double ma = margin[static_cast<std::size_t>(a)];
        const double mb = margin[static_cast<std::size_t>(b)];
        return ma != mb ? ma < mb : a < b;
    };
    std::partial_sort(idx.begin(), idx.begin() + m, idx.end(), less);
    idx.resize(static_cast<std::size_t>(m));
    return idx;
}

int anneal(LabelMask& labels, const Eigen::MatrixXd& unary, const MrfModel& model, const AnnealSchedule& schedule,
           double bias) {
    if (!(schedule.alpha > 0.0 && schedule.alpha < 1.0)) throw ConfigError("annealing: alpha must be in (0, 1)");
    if (!(schedule.t0 > 0.0)) throw ConfigError("annealing: T0 must be positive");
    if (schedule.t_max < 0) throw ConfigError("annealing: t_max must be non-negative");
    std::mt19937_64 rng(schedule.seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    double temperature = schedule.t0;
    int accepted = 0;
    for (int t = 0; t < schedule.t_max; ++t) {
        std::vector<int> subset = margin_sampling(labels, unary, model, schedule.sample_fraction, bias);
        std::shuffle(subset.begin(), subset.end(), rng);
        for (const int k : subset) {
            const double d = local_delta(labels, unary, model, k, bias);
            const double change = labels[static_cast<std::size_t>(k)] ? -d : d;
            if (change <= 0.0 || uniform(rng) < std::exp(-change / temperature)) {
                labels[static_cast<std::size_t>(k)] ^= 1;
                ++accepted;
            }
        }
        temperature *= schedule.alpha;
    }
    icm_sweep(labels, unary, model, bias);
    return accepted;
}

MrfModel fit_mrf_supervised(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y, double gamma, double beta,
                            CliqueOrder order) {
    if (static_cast<Eigen::Index>(y.size()) != x.rows()) throw DataError("MRF fit: label count mismatch");
    if (gamma < 0.0) throw ConfigError("MRF fit: gamma must be non-negative");
    MrfModel model;
    model.beta = beta;
    model.order = order;
    model.gamma = gamma;
    for (int c = 0; c < 2; ++c) {
        Eigen::VectorXd w(x.rows());
        for (Eigen::Index k = 0; k < x.rows(); ++k) w[k] = y[static_cast<std::size_t>(k)] == c ? 1.0 : 0.0;
        if (w.sum() < 2.0)
            throw DataError(std::string("MRF fit: class ") + (c ? "cloud" : "clear") + " has fewer than 2 samples");
        const WeightedMoments m = weighted_moments(x, w);
        Eigen::MatrixXd cov = m.scatter / m.weight;
        cov.diagonal().array() += gamma;
        model.classes[static_cast<std::size_t>(c)] = GaussianClass(m.mean, cov, 0.5);
    }
    return model;
}

LabelMask segment_mrf(const MrfModel& model, const Eigen::MatrixXd& x, int rows, int cols, MrfInference mode,
                      const std::optional<AnnealSchedule>& schedule, double bias) {
    if (x.rows() != static_cast<Eigen::Index>(rows) * cols) throw DataError("MRF segment: feature rows do not match frame");
    if (mode == MrfInference::sa && !schedule) throw ConfigError("MRF segment: annealing needs a schedule");
    const Eigen::MatrixXd unary = unary_terms(model, x);
    LabelMask labels(rows, cols);
    for (std::size_t k = 0; k < labels.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        labels[k] = unary(r, 1) - unary(r, 0) + bias <= 0.0 ? 1 : 0;
    }
    if (mode == MrfInference::icm)
        icm(labels, unary, model, bias);
    else
        anneal(labels, unary, model, *schedule, bias);
    return labels;
}

Eigen::VectorXd conditional_posterior(const LabelMask& labels, const Eigen::MatrixXd& unary, const MrfModel& model) {
    check_shapes(labels, unary);
    Eigen::VectorXd p(unary.rows());
    for (Eigen::Index k = 0; k < unary.rows(); ++k) {
        const double d = local_delta(labels, unary, model, static_cast<int>(k), 0.0);
        p[k] = d >= 0.0 ? std::exp(-d) / (1.0 + std::exp(-d)) : 1.0 / (1.0 + std::exp(d));
    }
    return p;
}

UnsupervisedMrf fit_icm_unsupervised(const Eigen::MatrixXd& x, int rows, int cols, double beta, CliqueOrder order,
                                     std::uint64_t seed, int temperature_index, const UnsupervisedOptions& options) {
    if (x.rows() != static_cast<Eigen::Index>(rows) * cols)
        throw DataError("ICM-MRF: feature rows do not match frame");
    if (temperature_index < 0 || temperature_index >= x.cols())
        throw ConfigError("ICM-MRF: temperature feature index out of range");

    UnsupervisedMrf out;
    out.model.beta = beta;
    out.model.order = order;
    out.model.gamma = options.gamma;

    auto init_from_kmeans = [&](std::uint64_t s) {
        const KMeansResult km = fit_kmeans(x, 2, s);
        const int cloud = cloud_cluster_by_temperature(km.centroids, temperature_index);
        LabelMask mask(rows, cols);
        for (std::size_t k = 0; k < mask.size(); ++k) mask[k] = km.assignment[k] == cloud ? 1 : 0;
        return mask;
    };
    auto count_cloud = [](const LabelMask& m) {
        return static_cast<long>(std::count(m.begin(), m.end(), std::uint8_t{1}));
    };

    LabelMask mask = init_from_kmeans(seed);
    const long n = static_cast<long>(mask.size());
    for (int it = 0; it < options.max_outer; ++it) {
        const long cloud = count_cloud(mask);
        if (cloud < 2 || n - cloud < 2) {
            if (++out.collapses > options.max_collapses)
                throw ConvergenceError("ICM-MRF: a class collapsed to fewer than 2 pixels " +
                                       std::to_string(options.max_collapses) + " times; giving up");
            mask = init_from_kmeans(seed + static_cast<std::uint64_t>(out.collapses));
            continue;
        }
        out.model.classes[0] = class_from_mask(x, mask, 0, options.gamma);
        out.model.classes[1] = class_from_mask(x, mask, 1, options.gamma);
        const Eigen::MatrixXd unary = unary_terms(out.model, x);
        const LabelMask before = mask;
        if (options.schedule) {
            AnnealSchedule s = *options.schedule;
            s.seed += static_cast<std::uint64_t>(it);
            anneal(mask, unary, out.model, s, options.bias);
        } else {
            icm_sweep(mask, unary, out.model, options.bias);
        }
        out.iterations = it + 1;
        if (mask == before) {
            out.converged = true;
            break;
        }
    }

    // Make sure the returned model matches the returned mask.
    const long cloud = count_cloud(mask);
    if (cloud < 2 || n - cloud < 2) throw ConvergenceError("ICM-MRF: final mask has an empty class");
    out.model.classes[0] = class_from_mask(x, mask, 0, options.gamma);
    out.model.classes[1] = class_from_mask(x, mask, 1, options.gamma);
    if (out.model.classes[0].mean()[temperature_index] > out.model.classes[1].mean()[temperature_index]) {
        std::swap(out.model.classes[0], out.model.classes[1]);
        for (auto& v : mask) v ^= 1;
    }
    out.mask = std::move(mask);
    return out;
}

}  // namespace skyseg
