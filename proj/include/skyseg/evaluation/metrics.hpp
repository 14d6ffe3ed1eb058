#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "skyseg/core/grid.hpp"

namespace skyseg {

struct ConfusionMatrix {
    long tp = 0;
    long fp = 0;
    long tn = 0;
    long fn = 0;

    long total() const { return tp + fp + tn + fn; }
    long positives() const { return tp + fn; }
    long negatives() const { return tn + fp; }
    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        tp += o.tp;
        fp += o.fp;
        tn += o.tn;
        fn += o.fn;
        return *this;
    }
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);
ConfusionMatrix confusion(const LabelMask& predicted, const LabelMask& truth);

/// When the truth has no positives, sensitivity is 1 if there are no false
/// positives and 0 otherwise; specificity mirrors this with false negatives.
/// This keeps all-clear and all-cloud images evaluable.
double sensitivity(const ConfusionMatrix& cm);
double specificity(const ConfusionMatrix& cm);
double j_stat(const ConfusionMatrix& cm);
double accuracy(const ConfusionMatrix& cm);
/// True when one of the truth classes is absent.
bool degenerate(const ConfusionMatrix& cm);

/// 50 log-spaced values from 0.02 to 2.
std::vector<double> default_lambda_grid(int points = 50, double lo = 0.02, double hi = 2.0);

/// Confusion matrix of the virtual-prior decision for every lambda in `grid`
/// (same order), using one sort of the scores.
std::vector<ConfusionMatrix> lambda_sweep(std::span<const double> scores, std::span<const std::uint8_t> truth,
                                          std::span<const double> grid);

struct LambdaChoice {
    double lambda = 1.0;
    double j = 0.0;
    bool degenerate = false;  // one truth class missing: lambda forced to 1
};

/// Lambda maximizing J on the grid; ties go to the smaller lambda.
LambdaChoice roc_select_lambda(std::span<const double> scores, std::span<const std::uint8_t> truth,
                               std::span<const double> grid);

struct RocPoint {
    double threshold;  // predict cloud iff score >= threshold
    double tpr;
    double fpr;
};
/// ROC by direct score sorting: one point per distinct score plus the
/// all-clear point.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const std::uint8_t> truth);

}  // namespace skyseg
