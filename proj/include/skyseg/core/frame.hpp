#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "skyseg/core/grid.hpp"

namespace skyseg {

using Timestamp = std::int64_t;  // UTC seconds since the epoch

/// Parses "YYYY-MM-DDTHH:MM:SSZ" (the trailing Z is optional).
Timestamp parse_iso8601(std::string_view text);
std::string format_iso8601(Timestamp t);

/// One radiometric frame. Raw cells are kept in centi-Kelvin so that files
/// round-trip exactly; kelvin() is the working representation.
struct IRFrame {
    Grid<std::int32_t> centi_kelvin;
    std::optional<Timestamp> timestamp;
    double sun_elevation = 0.0;  // degrees
    double sun_azimuth = 0.0;    // degrees

    int rows() const { return centi_kelvin.rows(); }
    int cols() const { return centi_kelvin.cols(); }
    KelvinGrid kelvin() const;

    /// Rounds a Kelvin grid to centi-Kelvin cells.
    static IRFrame from_kelvin(const KelvinGrid& k);
};

/// Frame file: header "rows cols [timestamp sun_elevation sun_azimuth]",
/// then one line per row of space-separated integers.
IRFrame load_frame(const std::filesystem::path& path);
IRFrame parse_frame(std::string_view text, std::string_view source = "<memory>");
void save_frame(const std::filesystem::path& path, const IRFrame& frame);
std::string format_frame(const IRFrame& frame);

/// Label files share the frame layout with cells restricted to {0,1}.
LabelMask load_label(const std::filesystem::path& path);
LabelMask parse_label(std::string_view text, std::string_view source = "<memory>");
void save_label(const std::filesystem::path& path, const LabelMask& mask);
std::string format_label(const LabelMask& mask);

/// Real-valued channels (derived quantities) written in the same grid layout.
void save_channel(const std::filesystem::path& path, const KelvinGrid& grid);

}  // namespace skyseg
