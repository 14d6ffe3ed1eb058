#include "skyseg/evaluation/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "skyseg/core/error.hpp"
#include "skyseg/models/decision.hpp"

namespace skyseg {

ConfusionMatrix confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
    if (predicted.size() != truth.size()) throw DataError("confusion: prediction and truth sizes differ");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool p = predicted[i] != 0;
        const bool t = truth[i] != 0;
        if (p && t)
            ++cm.tp;
        else if (p)
            ++cm.fp;
        else if (t)
            ++cm.fn;
        else
            ++cm.tn;
    }
    return cm;
}

ConfusionMatrix confusion(const LabelMask& predicted, const LabelMask& truth) {
    if (!predicted.same_shape(truth)) throw DataError("confusion: mask shapes differ");
    return confusion(predicted.values(), truth.values());
}

double sensitivity(const ConfusionMatrix& cm) {
    if (cm.positives() == 0) return cm.fp == 0 ? 1.0 : 0.0;
    return static_cast<double>(cm.tp) / static_cast<double>(cm.positives());
}

double specificity(const ConfusionMatrix& cm) {
    if (cm.negatives() == 0) return cm.fn == 0 ? 1.0 : 0.0;
    return static_cast<double>(cm.tn) / static_cast<double>(cm.negatives());
}

double j_stat(const ConfusionMatrix& cm) { return sensitivity(cm) + specificity(cm) - 1.0; }

double accuracy(const ConfusionMatrix& cm) {
    if (cm.total() == 0) return 1.0;
    return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

bool degenerate(const ConfusionMatrix& cm) { return cm.positives() == 0 || cm.negatives() == 0; }

std::vector<double> default_lambda_grid(int points, double lo, double hi) {
    if (points < 1 || !(lo > 0.0) || !(hi >= lo)) throw ConfigError("lambda grid: need points >= 1 and 0 < lo <= hi");
    std::vector<double> g(static_cast<std::size_t>(points));
    if (points == 1) {
        g[0] = lo;
        return g;
    }
    const double a = std::log(lo);
    const double b = std::log(hi);
    for (int i = 0; i < points; ++i) g[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (points - 1));
    g.front() = lo;
    g.back() = hi;
    return g;
}

std::vector<ConfusionMatrix> lambda_sweep(std::span<const double> scores, std::span<const std::uint8_t> truth,
                                          std::span<const double> grid) {
    if (scores.size() != truth.size()) throw DataError("lambda sweep: score and truth sizes differ");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> sorted(n);
    // positives_above[k] = number of cloud truths among sorted[k..n).
    std::vector<long> positives_above(n + 1, 0);
    for (std::size_t k = 0; k < n; ++k) sorted[k] = scores[order[k]];
    for (std::size_t k = n; k-- > 0;) positives_above[k] = positives_above[k + 1] + (truth[order[k]] ? 1 : 0);
    const long positives = positives_above[0];
    const long negatives = static_cast<long>(n) - positives;

    std::vector<ConfusionMatrix> out;
    out.reserve(grid.size());
    for (const double lambda : grid) {
        // The decision is monotone in the score, so the predicted-cloud set is
        // a suffix of the sorted scores.
        const auto first = std::partition_point(sorted.begin(), sorted.end(),
                                                [&](double p) { return !decide_cloud(p, lambda); });
        const auto k = static_cast<std::size_t>(first - sorted.begin());
        ConfusionMatrix cm;
        cm.tp = positives_above[k];
        cm.fp = static_cast<long>(n - k) - cm.tp;
        cm.fn = positives - cm.tp;
        cm.tn = negatives - cm.fp;
        out.push_back(cm);
    }
    return out;
}

LambdaChoice roc_select_lambda(std::span<const double> scores, std::span<const std::uint8_t> truth,
                               std::span<const double> grid) {
    if (grid.empty()) throw ConfigError("lambda selection: empty grid");
    for (const double s : scores)
        if (!(s >= 0.0 && s <= 1.0)) throw DomainError("lambda selection: scores must lie in [0, 1]");
    const std::vector<ConfusionMatrix> cms = lambda_sweep(scores, truth, grid);
    LambdaChoice best;
    if (cms.empty() || degenerate(cms.front())) {
        best.degenerate = true;
        best.lambda = 1.0;
        const std::vector<ConfusionMatrix> at_one = lambda_sweep(scores, truth, std::span<const double>(&best.lambda, 1));
        best.j = j_stat(at_one.front());
        return best;
    }
    best.j = -std::numeric_limits<double>::infinity();
    best.lambda = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double j = j_stat(cms[i]);
        if (j > best.j || (j == best.j && grid[i] < best.lambda)) {
            best.j = j;
            best.lambda = grid[i];
        }
    }
    return best;
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const std::uint8_t> truth) {
    if (scores.size() != truth.size()) throw DataError("roc: score and truth sizes differ");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    long positives = 0;
    for (const auto t : truth) positives += t ? 1 : 0;
    const long negatives = static_cast<long>(truth.size()) - positives;
    auto rate = [](long num, long den) { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); };

    std::vector<RocPoint> roc;
    roc.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    long tp = 0, fp = 0;
    for (std::size_t k = 0; k < order.size();) {
        const double s = scores[order[k]];
        while (k < order.size() && scores[order[k]] == s) {
            (truth[order[k]] ? tp : fp) += 1;
            ++k;
        }
        roc.push_back({s, rate(tp, positives), rate(fp, negatives)});
    }
    return roc;
}

}  // namespace skyseg
