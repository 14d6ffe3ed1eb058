#pragma once

#include <cstdint>

#include "skyseg/core/grid.hpp"

namespace skyseg {

using IntensityGrid = Grid<std::uint8_t>;

/// Warmest feasible cloud above the tropopause background: a 9.8 K/km lapse
/// over the span between the mean tropopause height (11.5 km at 36 deg N)
/// and the site elevation (1.52 km).
inline constexpr double kTropopauseHeightKm = 11.5;
inline constexpr double kSiteElevationKm = 1.52;
inline constexpr double kDryLapseKPerKm = 9.8;
inline constexpr double kFeasibleCloudRangeK = (kTropopauseHeightKm - kSiteElevationKm) * kDryLapseKPerKm;

/// Shifts the grid minimum to 0, divides by kFeasibleCloudRangeK and maps to
/// 8 bits with round-half-up; fractions above 1 saturate at 255.
IntensityGrid normalize8(const KelvinGrid& delta_t);

/// Same mapping with an explicit zero level instead of the grid minimum.
IntensityGrid normalize8(const KelvinGrid& delta_t, double zero_level);

}  // namespace skyseg
