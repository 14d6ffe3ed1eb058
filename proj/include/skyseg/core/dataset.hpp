#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "skyseg/core/frame.hpp"
#include "skyseg/core/weather.hpp"

namespace skyseg {

/// `calib` marks unlabelled clear-sky frames that only feed the window and
/// background models.
enum class Split { train, test, calib };

Split parse_split(std::string_view s);
std::string_view to_string(Split s);

/// Frame metadata and weather must be within this many seconds of each other.
inline constexpr Timestamp kMaxWeatherGap = 600;

struct ManifestEntry {
    std::string frame;
    std::string weather;
    std::optional<std::string> label;
    Split split = Split::train;
    bool clear_sky = false;
    std::optional<std::string> prev_frame;  // preceding frame of the sequence, for flow
};

/// CSV "frame,weather,label,split,clear_sky" with an optional trailing
/// "prev_frame" column. Paths are relative to the manifest's directory.
struct DatasetManifest {
    std::filesystem::path base_dir;
    std::vector<ManifestEntry> entries;

    std::filesystem::path resolve(const std::string& relative) const { return base_dir / relative; }
};

DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                               std::string_view source = "<memory>");
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

struct LoadedFrame {
    std::string name;  // frame path as written in the manifest
    IRFrame frame;
    std::optional<IRFrame> prev;
    WeatherRecord weather;
    std::optional<LabelMask> label;
    Split split = Split::train;
    bool clear_sky = false;
};

/// Reads one frame file; lets other on-disk formats stand in for load_frame.
using FrameReader = std::function<IRFrame(const std::filesystem::path&)>;

/// Loads every entry, interpolating weather at each frame timestamp and
/// checking frame/label/prev shape agreement. The result is sorted by time.
/// Frames (current and previous) go through `reader` when one is given.
std::vector<LoadedFrame> load_dataset(const DatasetManifest& manifest, const FrameReader& reader = {});

}  // namespace skyseg
