#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "skyseg/core/grid.hpp"
#include "skyseg/preprocessing/pipeline.hpp"

namespace skyseg {

/// Per-pixel feature families:
///   X1 = {T, H}, X2 = {T', H'}, X3 = {dT, H''}, X4 = {|v|, i, dT}.
enum class FeatureFamily { x1, x2, x3, x4 };

/// Single = the pixel alone; First = plus its 4 nearest neighbours;
/// Second = plus its 8 nearest neighbours.
enum class Neighborhood { single, first, second };

struct FeatureSpec {
    FeatureFamily family = FeatureFamily::x3;
    Neighborhood neighborhood = Neighborhood::single;
    bool standardize = false;

    int base_dim() const;
    int dim() const;
    /// Column of the temperature-like feature of the centre pixel; clustering
    /// methods label the warmer component as cloud.
    int temperature_index() const;
    Stage required_stage() const;

    friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

FeatureFamily parse_family(std::string_view s);
Neighborhood parse_neighborhood(std::string_view s);
std::string_view to_string(FeatureFamily f);
std::string_view to_string(Neighborhood n);
std::string to_string(const FeatureSpec& s);
/// Parses "x4", "x4:first", "x3:second:std".
FeatureSpec parse_feature_spec(std::string_view s);

/// Number of neighbours concatenated after the centre pixel.
int neighbor_count(Neighborhood n);

/// Row offsets / column offsets of the neighbours, in concatenation order
/// N, W, E, S, NW, NE, SW, SE.
inline constexpr int kNeighborDi[8] = {-1, 0, 0, 1, -1, -1, 1, 1};
inline constexpr int kNeighborDj[8] = {0, -1, 1, 0, -1, 1, -1, 1};

struct FeatureFrame {
    int rows = 0;
    int cols = 0;
    Eigen::MatrixXd data;  // (rows*cols) x dim, pixel k = i*cols + j
    std::optional<LabelMask> labels;

    int dim() const { return static_cast<int>(data.cols()); }
    Eigen::Index pixels() const { return data.rows(); }
};

/// Builds feature vectors with replicate padding at the borders.
/// Throws ConfigError when a needed channel is missing.
FeatureFrame extract(const DerivedFrame& derived, const FeatureSpec& spec);

/// Frozen per-dimension statistics. The transform divides by the variance
/// (not the standard deviation); zero-variance dimensions only lose their mean.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;

    bool empty() const { return mean.size() == 0; }
    Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
    FeatureFrame transform(const FeatureFrame& f) const;
};

Standardizer standardize(std::span<const FeatureFrame> frames);
Standardizer standardize(const Eigen::MatrixXd& x);

/// One row per pixel: features..., label (empty when unlabelled).
void write_feature_csv(std::ostream& out, const FeatureFrame& f);

/// Stacks frames into one sample matrix and label vector. Frames without
/// labels are rejected when `need_labels` is set.
struct Stacked {
    Eigen::MatrixXd x;
    std::vector<std::uint8_t> y;
};
Stacked stack_frames(std::span<const FeatureFrame> frames, bool need_labels);

}  // namespace skyseg
