#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skyseg/core/frame.hpp"

namespace skyseg {

struct WeatherRecord {
    Timestamp timestamp = 0;
    double air_temp = 0.0;   // K
    double dew_point = 0.0;  // K
    double pressure = 0.0;   // Pa
    double humidity = 0.0;   // fraction in [0,1]

    friend bool operator==(const WeatherRecord&, const WeatherRecord&) = default;
};

/// Throws DomainError unless dew_point <= air_temp, pressure > 0 and
/// humidity lies in [0,1].
void validate(const WeatherRecord& r);

/// CSV with header "timestamp,air_temp_K,dew_point_K,pressure_Pa,humidity".
std::vector<WeatherRecord> load_weather(const std::filesystem::path& path);
std::vector<WeatherRecord> parse_weather(std::string_view text, std::string_view source = "<memory>");
void save_weather(const std::filesystem::path& path, std::span<const WeatherRecord> records);

/// Linear interpolation between the bracketing records. Records must be
/// sorted by timestamp; t outside [first, last] is rejected.
WeatherRecord interpolate_weather(std::span<const WeatherRecord> records, Timestamp t);

/// Seconds from t to the nearest record.
Timestamp nearest_record_gap(std::span<const WeatherRecord> records, Timestamp t);

}  // namespace skyseg
