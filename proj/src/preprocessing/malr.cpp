#include "skyseg/preprocessing/malr.hpp"

#include <algorithm>
#include <cmath>

#include "skyseg/core/error.hpp"

namespace skyseg {

using namespace malr_constants;

double magnus_vapor_pressure(double t_kelvin) {
    const double c = t_kelvin - 273.15;
    return kMagnusA * std::exp(kMagnusB * c / (c + kMagnusC));
}

double malr_rate(double air_temp, double dew_point, double pressure) {
    if (!std::isfinite(air_temp) || !std::isfinite(dew_point) || !std::isfinite(pressure))
        throw DomainError("malr_rate: non-finite input");
    if (air_temp <= 0.0) throw DomainError("malr_rate: air temperature must be positive Kelvin");
    if (dew_point > air_temp) throw DomainError("malr_rate: dew point exceeds air temperature");
    if (pressure <= 0.0) throw DomainError("malr_rate: pressure must be positive");
    const double vapor = magnus_vapor_pressure(dew_point);
    if (vapor >= pressure) throw DomainError("malr_rate: vapour pressure exceeds total pressure");

    const double mixing = kEpsilon * vapor / (pressure - vapor);
    const double num = 1.0 + kLatentVaporization * mixing / (kRDry * air_temp);
    const double den = kCpDry + kLatentVaporization * kLatentVaporization * mixing * kEpsilon /
                                    (kRDry * air_temp * air_temp);
    const double rate = kGravity * num / den * 1000.0;
    return std::min(rate, kDryLapseRate);
}

double pixel_height(double t_pixel, double air_temp, double lapse_rate) {
    if (!(lapse_rate > 0.0)) throw DomainError("pixel_height: lapse rate must be positive");
    const double diff = kHeightFromAbsoluteDifference ? std::abs(t_pixel - air_temp) : t_pixel - air_temp;
    return std::max(0.0, diff / lapse_rate);
}

}  // namespace skyseg
