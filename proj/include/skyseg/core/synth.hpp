#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "skyseg/core/dataset.hpp"
#include "skyseg/preprocessing/atmosphere.hpp"

namespace skyseg {

enum class SkyKind { clear, partial, overcast };

/// Knobs of the synthetic IR scene generator. A frame is
///   background (atmospheric model) + clouds + window stains + noise,
/// where clouds are warmer than the background on their whole support and the
/// label mask is exactly that support.
struct SceneParams {
    int rows = kFrameRows;
    int cols = kFrameCols;
    double noise_sigma = 0.3;        // K
    double cloud_offset = 15.0;      // K, peak cloud excess
    double min_offset_fraction = 0.7;  // cloud excess spans [f, 1] * cloud_offset
    /// Soft cloud edges: excess ramps up over this distance (in units of the
    /// shape field's standard deviation). Zero gives hard edges.
    double boundary_ramp = 0.0;
    double coverage_min = 0.2;
    double coverage_max = 0.5;
    double shape_sigma = 6.0;    // px, smoothing of the cloud shape field
    double texture_sigma = 1.5;  // px, smoothing of the in-cloud texture
    double window_amplitude = 2.0;  // K
    int window_spots = 6;
    int shift_rows = 0;  // cloud translation between consecutive frames
    int shift_cols = 1;
    int n_calib = 20;
    bool clear_and_overcast = true;  // one clear and one overcast frame per split
    double sun_jitter = 3.0;          // px around the frame centre
    Timestamp start = 1496318400;     // 2017-06-01T12:00:00Z
    Timestamp frame_spacing = 1200;   // s between scenes
    Timestamp sequence_step = 15;     // s between a frame and its predecessor
};

struct SynthScene {
    IRFrame frame;
    IRFrame prev;
    LabelMask mask;
    KelvinGrid clouds;      // cloud excess of the current frame, 0 off-support
    KelvinGrid background;  // atmospheric model of the current frame
    AtmosphericParams atmosphere;
    WeatherRecord weather;
    SkyKind kind = SkyKind::partial;
};

struct SynthDataset {
    KelvinGrid window;  // stain pattern shared by all frames
    std::vector<SynthScene> calib;
    std::vector<SynthScene> train;
    std::vector<SynthScene> test;
    std::vector<WeatherRecord> weather;
};

/// Pure function of (seed, n_train, n_test, params).
SynthDataset synth_scenes(std::uint64_t seed, int n_train, int n_test, const SceneParams& params = {});

/// Generates a dataset and writes frames, labels, weather CSV and manifest
/// under `out_dir`. Returns the manifest (with base_dir = out_dir).
DatasetManifest synth_dataset(std::uint64_t seed, int n_train, int n_test, const SceneParams& params,
                              const std::filesystem::path& out_dir);

/// The same frames as synth_dataset would write, without touching the disk,
/// in time order and with interpolated weather.
std::vector<LoadedFrame> to_loaded_frames(const SynthDataset& ds);

/// Single scene from an explicit generator state; exposed for tests.
SynthScene synth_scene(std::mt19937_64& rng, const SceneParams& params, SkyKind kind, const KelvinGrid& window,
                       Timestamp t);

/// Gaussian-blurred white noise rescaled to zero mean, unit variance.
KelvinGrid smooth_noise(std::mt19937_64& rng, int rows, int cols, double sigma);

}  // namespace skyseg
