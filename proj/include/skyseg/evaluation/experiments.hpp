#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "skyseg/core/dataset.hpp"
#include "skyseg/evaluation/metrics.hpp"
#include "skyseg/features/features.hpp"
#include "skyseg/models/segmenter.hpp"
#include "skyseg/preprocessing/pipeline.hpp"

namespace skyseg {

/// Features of one processed frame with its label attached.
FeatureFrame features_for(const ProcessedFrame& frame, const FeatureSpec& spec);
std::vector<FeatureFrame> features_for(std::span<const ProcessedFrame> frames, const FeatureSpec& spec);

// --- evaluation reports ------------------------------------------------------

struct ImageEval {
    std::string name;
    ConfusionMatrix cm;
    double sensitivity = 0.0;
    double specificity = 0.0;
    double j = 0.0;
    double accuracy = 0.0;
    double seconds = 0.0;  // segmentation wall time
};

struct EvalReport {
    std::string model;
    std::vector<ImageEval> images;
    /// Aggregate rates come from the confusion matrix pooled over all images.
    ConfusionMatrix pooled;
    double sensitivity = 0.0;
    double specificity = 0.0;
    double j = 0.0;
    double accuracy = 0.0;
    double mean_image_j = 0.0;
    double train_time_s = 0.0;
    double test_time_s_per_image = 0.0;
};

ImageEval evaluate_image(std::string name, const LabelMask& predicted, const LabelMask& truth, double seconds = 0.0);
EvalReport summarize(std::string model, std::vector<ImageEval> images, double train_time_s = 0.0);

/// Segments every labelled frame with the model's lambda and scores it.
EvalReport evaluate(const Segmenter& model, std::span<const FeatureFrame> frames, std::span<const std::string> names,
                    std::string model_name, double train_time_s = 0.0);

/// One row per image plus an "ALL" row per report.
void write_report_csv(std::ostream& out, std::span<const EvalReport> reports);
/// "model,j,sensitivity,specificity,test_ms_per_image,train_s" for plotting.
void write_plot_data(std::ostream& out, std::span<const EvalReport> reports);

// --- cross-validation --------------------------------------------------------

/// Hyperparameter grid around a base configuration. Empty lists mean "use the
/// base value". Only the lists relevant to the base family are expanded.
struct GridSpec {
    ModelConfig base;
    std::vector<FeatureSpec> features;
    std::vector<double> gammas;
    std::vector<double> cs;
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<int> poly_orders;
    std::vector<double> lambdas;  // empty: default_lambda_grid()

    /// Configurations in tie-break order: feature specs as given, then
    /// hyperparameters ascending.
    std::vector<ModelConfig> expand() const;
    std::vector<double> lambda_grid() const;
};

struct CvEntry {
    ModelConfig config;  // config.lambda = the lambda of this row
    double mean_j = 0.0;
    std::vector<double> fold_j;
    bool valid = true;
    std::string error;
};

struct CvResult {
    std::vector<CvEntry> table;
    CvEntry best;
    int folds = 0;
};

/// Leave-one-image-out validation of every (configuration, lambda) pair. A
/// configuration whose training fails on any fold is marked invalid. The best
/// row maximizes mean J; ties go to the earlier configuration (smaller
/// hyperparameters) and then the smaller lambda. Folds and configurations run
/// on up to `threads` workers; results do not depend on scheduling.
CvResult loo_cross_validate(std::span<const ProcessedFrame> train, const GridSpec& grid, int threads = 1);

void write_cv_csv(std::ostream& out, const CvResult& result);

// --- timing ------------------------------------------------------------------

struct TimingStats {
    double median_s = 0.0;
    double mean_s = 0.0;
    std::size_t samples = 0;
};
TimingStats timing_stats(std::vector<double> seconds);

struct BenchmarkReport {
    std::string model;
    TimingStats preprocessing;  // preprocessing plus feature extraction, per image
    TimingStats segmentation;   // per image
    TimingStats total;          // per image
    int images = 0;
    int repetitions = 0;
};

/// Single-threaded per-image timings over the test split (all non-calibration
/// frames if there is none). One warm-up pass is discarded.
BenchmarkReport benchmark(const Segmenter& model, std::span<const LoadedFrame> dataset, int repetitions,
                          const PreprocessOptions& options = {});

/// Segmentation time alone on precomputed features, per image.
TimingStats time_segmentation(const Segmenter& model, std::span<const FeatureFrame> frames, int repetitions);

void write_benchmark_csv(std::ostream& out, std::span<const BenchmarkReport> reports);

// --- voting ------------------------------------------------------------------

struct VoteResult {
    Eigen::VectorXd probability;  // fraction of members voting cloud
    LabelMask mask;               // majority; an exact tie goes to cloud
};

/// `frames[m]` holds the features of member m for the same image.
VoteResult vote(std::span<const Segmenter* const> members, std::span<const FeatureFrame> frames);

}  // namespace skyseg
