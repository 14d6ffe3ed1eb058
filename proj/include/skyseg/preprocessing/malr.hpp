#pragma once

namespace skyseg {

/// Physical constants used by the lapse-rate model. The moist adiabatic
/// formula follows the standard saturated-adiabat expression with the vapour
/// pressure from the Magnus approximation evaluated at the dew point.
namespace malr_constants {
inline constexpr double kGravity = 9.80665;         // m s^-2
inline constexpr double kCpDry = 1004.0;            // J kg^-1 K^-1
inline constexpr double kRDry = 287.05;             // J kg^-1 K^-1
inline constexpr double kLatentVaporization = 2.501e6;  // J kg^-1
inline constexpr double kEpsilon = 0.622;           // R_dry / R_vapour
inline constexpr double kMagnusA = 611.2;           // Pa
inline constexpr double kMagnusB = 17.67;
inline constexpr double kMagnusC = 243.5;           // K
inline constexpr double kDryLapseRate = kGravity / kCpDry * 1000.0;  // K/km
}  // namespace malr_constants

/// Magnus saturation vapour pressure (Pa) at temperature `t_kelvin`.
double magnus_vapor_pressure(double t_kelvin);

/// Moist adiabatic lapse rate in K/km. Throws DomainError for dew point
/// above air temperature, non-positive pressure or vapour pressure >= pressure.
double malr_rate(double air_temp, double dew_point, double pressure);

/// Height sign convention: heights are taken from the magnitude of the
/// temperature difference to ground air.
inline constexpr bool kHeightFromAbsoluteDifference = true;

/// |T - T_air| / lapse_rate in km, clamped at zero.
double pixel_height(double t_pixel, double air_temp, double lapse_rate);

}  // namespace skyseg
