#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "skyseg/core/grid.hpp"
#include "skyseg/features/features.hpp"
#include "skyseg/mrf/mrf.hpp"

namespace skyseg {

enum class ModelFamily { nbc, gda, kmeans, gmm, mrf, icm_mrf, rrc, svc, gpc };

ModelFamily parse_model_family(std::string_view s);
std::string_view to_string(ModelFamily f);
bool is_mrf(ModelFamily f);

/// Everything needed to build and train one segmenter. Hyperparameters that
/// do not apply to the family are ignored.
struct ModelConfig {
    ModelFamily family = ModelFamily::gda;
    FeatureSpec features;
    double gamma = 1.0;  // covariance regularizer (GDA, GMM, MRF) or ridge / prior variance (RRC, GPC)
    double c = 1.0;      // SVC penalty
    double beta = 1.0;   // MRF coupling
    CliqueOrder cliques = CliqueOrder::first;
    MrfInference inference = MrfInference::icm;
    AnnealSchedule schedule;
    int poly_order = 1;
    bool gpc_evidence = false;
    double lambda = 1.0;
    std::uint64_t seed = 0;
};

/// Common interface of every segmentation model. Fitted models are immutable
/// and safe to share between threads.
class Segmenter {
public:
    explicit Segmenter(ModelConfig config) : config_(std::move(config)) {}
    virtual ~Segmenter() = default;

    /// Trains on feature frames built with config().features. Supervised
    /// families need labels on every frame.
    void fit(std::span<const FeatureFrame> frames);

    /// Per-pixel p(cloud). MRF families report each pixel's conditional
    /// posterior given its neighbours in the lambda = 1 labelling.
    Eigen::VectorXd probabilities(const FeatureFrame& frame) const;

    /// Hard labels with the virtual prior lambda.
    LabelMask segment(const FeatureFrame& frame, double lambda) const;
    LabelMask segment(const FeatureFrame& frame) const { return segment(frame, config_.lambda); }

    const ModelConfig& config() const { return config_; }
    void set_lambda(double lambda) { config_.lambda = lambda; }
    bool fitted() const { return fitted_; }

    void save(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;

protected:
    virtual void fit_impl(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y,
                          std::span<const FeatureFrame> frames) = 0;
    virtual Eigen::VectorXd probabilities_impl(const FeatureFrame& frame) const = 0;
    /// Default: threshold probabilities_impl with the virtual prior.
    virtual LabelMask segment_impl(const FeatureFrame& frame, double lambda) const;
    virtual bool needs_labels() const { return true; }
    virtual void save_params(std::ostream& out) const = 0;
    virtual void load_params(std::istream& in) = 0;

    ModelConfig config_;
    Standardizer standardizer_;
    bool fitted_ = false;

    friend std::unique_ptr<Segmenter> load_segmenter(std::istream& in);

private:
    FeatureFrame prepare(const FeatureFrame& frame) const;
};

std::unique_ptr<Segmenter> make_segmenter(const ModelConfig& config);

/// Reads a model written by Segmenter::save. Throws ParseError on malformed or
/// version-mismatched input.
std::unique_ptr<Segmenter> load_segmenter(std::istream& in);
std::unique_ptr<Segmenter> load_segmenter(const std::filesystem::path& path);

/// Convenience: builds, fits and returns a model.
std::unique_ptr<Segmenter> train_segmenter(const ModelConfig& config, std::span<const FeatureFrame> frames);

}  // namespace skyseg
