#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>
#include <string_view>

#include "skyseg/core/dataset.hpp"
#include "skyseg/core/frame.hpp"
#include "skyseg/core/weather.hpp"
#include "skyseg/preprocessing/atmosphere.hpp"
#include "skyseg/preprocessing/normalize.hpp"
#include "skyseg/preprocessing/optical_flow.hpp"
#include "skyseg/preprocessing/window.hpp"

namespace skyseg {

/// How far down T -> T' -> dT -> I8 -> V a frame is taken.
enum class Stage { raw, window, atmosphere, all };

Stage parse_stage(std::string_view name);
std::string_view to_string(Stage s);

/// Every derived channel of one frame. Channels beyond the requested stage
/// are left empty.
struct DerivedFrame {
    KelvinGrid t;               // raw temperature, K
    KelvinGrid h;               // raw height, km
    KelvinGrid t_prime;         // window-corrected temperature
    KelvinGrid h_prime;         // window-corrected height
    KelvinGrid delta_t;         // increment over the atmospheric background
    KelvinGrid h_double_prime;  // height of the increment, km
    IntensityGrid intensity;    // 8-bit normalized increment
    std::optional<FlowGrid> velocity;

    double lapse_rate = 0.0;       // K/km
    double tropopause_temp = 0.0;  // K
    AtmosphericParams atmosphere;
    bool atmosphere_from_reference = false;

    int rows() const { return t.rows(); }
    int cols() const { return t.cols(); }
};

struct PreprocessOptions {
    std::size_t window_capacity = WindowModel::kDefaultCapacity;
    int robust_rounds = 6;
    /// The first round keeps this cool fraction of the frame.
    double initial_keep_fraction = 0.5;
    /// Pixels warmer than the fit by more than max(floor, k * robust sigma)
    /// are treated as cloud and excluded from the next round.
    double robust_k = 3.0;
    double robust_floor_k = 1.0;
    /// Pixels within this many core widths (theta4) of the fitted Sun are
    /// never excluded.
    double sun_protect_cores = 2.0;
    /// The fitted Sun centre stays within this radius (px) of the frame
    /// centre, where the tracker aims. Negative disables the bound.
    double sun_track_radius = 6.0;
    /// Largest admissible Sun core width theta4 (px). Negative disables it.
    double sun_core_max = 6.0;
    /// A cloudy-frame fit whose mean background exceeds the latest clear-sky
    /// background by this much (K), or that keeps fewer than
    /// `min_kept_fraction` of the pixels, is replaced by the clear-sky fit.
    double overcast_shift_k = 5.0;
    double min_kept_fraction = 0.2;
    FlowOptions flow;
};

/// Stateful per-sequence preprocessor. Frames must be fed in time order;
/// clear-sky frames update the window model and the reference background.
class Preprocessor {
public:
    explicit Preprocessor(int rows = kFrameRows, int cols = kFrameCols, PreprocessOptions options = {});

    /// Registers a clear-sky frame: fits its background on the current T',
    /// then pushes the residual T - A into the window model.
    void observe_clear_sky(const IRFrame& frame);

    /// Computes all channels up to `stage`. `prev` is the preceding frame of
    /// the same sequence and is required for Stage::all.
    DerivedFrame process(const IRFrame& frame, const WeatherRecord& weather, const IRFrame* prev,
                         Stage stage = Stage::all);

    const WindowModel& window() const { return window_; }
    const std::optional<AtmosphericParams>& reference() const { return reference_; }

private:
    AtmosphereFit robust_fit(const KelvinGrid& t_prime, double& kept_fraction) const;

    PreprocessOptions options_;
    WindowModel window_;
    std::optional<AtmosphericParams> reference_;
    std::optional<AtmosphericParams> last_;
};

struct ProcessedFrame {
    std::string name;
    Split split = Split::train;
    bool clear_sky = false;
    DerivedFrame derived;
    std::optional<LabelMask> label;
};

/// Runs a fresh Preprocessor over a time-ordered dataset. Calibration frames
/// only feed the clear-sky models; other frames are processed up to `stage`
/// and, when flagged clear, fed to the clear-sky models afterwards.
std::vector<ProcessedFrame> preprocess_dataset(std::span<const LoadedFrame> frames, Stage stage = Stage::all,
                                               const PreprocessOptions& options = {});

/// Window-corrected temperature T' = T - W.
KelvinGrid apply_window(const WindowModel& model, const KelvinGrid& t);

}  // namespace skyseg
