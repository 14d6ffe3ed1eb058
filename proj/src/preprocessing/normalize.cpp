#include "skyseg/preprocessing/normalize.hpp"

#include <algorithm>
#include <cmath>

#include "skyseg/core/error.hpp"

namespace skyseg {

IntensityGrid normalize8(const KelvinGrid& delta_t) {
    if (delta_t.empty()) throw DataError("normalize8: empty grid");
    return normalize8(delta_t, *std::min_element(delta_t.begin(), delta_t.end()));
}

IntensityGrid normalize8(const KelvinGrid& delta_t, double lo) {
    return map_grid(delta_t, [lo](double v) {
        const double scaled = (v - lo) / kFeasibleCloudRangeK * 255.0;
        // The slack keeps exact halves (48.902 K -> 127.5) from rounding down
        // through representation error in the constants.
        return static_cast<std::uint8_t>(std::clamp(std::floor(scaled + 0.5 + 1e-9), 0.0, 255.0));
    });
}

}  // namespace skyseg
