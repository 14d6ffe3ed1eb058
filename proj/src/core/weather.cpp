#include "skyseg/core/weather.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "skyseg/core/error.hpp"

namespace skyseg {

namespace {

constexpr std::string_view kHeader = "timestamp,air_temp_K,dew_point_K,pressure_Pa,humidity";

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace

void validate(const WeatherRecord& r) {
    if (!std::isfinite(r.air_temp) || !std::isfinite(r.dew_point) || !std::isfinite(r.pressure))
        throw DomainError("weather record has non-finite fields");
    if (r.dew_point > r.air_temp) throw DomainError("dew point exceeds air temperature");
    if (r.pressure <= 0.0) throw DomainError("atmospheric pressure must be positive");
    if (r.humidity < 0.0 || r.humidity > 1.0) throw DomainError("humidity must lie in [0,1]");
}

std::vector<WeatherRecord> parse_weather(std::string_view text, std::string_view source) {
    std::vector<WeatherRecord> out;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty()) continue;
        auto fail = [&](const std::string& what) {
            throw ParseError(std::string(source) + ": line " + std::to_string(line_no) + ": " + what);
        };
        if (!header_seen) {
            if (line != kHeader) fail("expected header \"" + std::string(kHeader) + "\"");
            header_seen = true;
            continue;
        }
        auto cells = split_csv(line);
        if (cells.size() != 5) fail("expected 5 fields");
        WeatherRecord r;
        try {
            r.timestamp = parse_iso8601(trim(cells[0]));
        } catch (const ParseError& e) {
            fail(e.what());
        }
        double* fields[] = {&r.air_temp, &r.dew_point, &r.pressure, &r.humidity};
        for (int k = 0; k < 4; ++k) {
            auto tok = trim(cells[k + 1]);
            auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), *fields[k]);
            if (ec != std::errc{} || ptr != tok.data() + tok.size())
                fail("non-numeric field \"" + std::string(tok) + "\"");
        }
        try {
            validate(r);
        } catch (const DomainError& e) {
            fail(e.what());
        }
        if (!out.empty() && r.timestamp <= out.back().timestamp) fail("timestamps must be increasing");
        out.push_back(r);
    }
    if (!header_seen) throw ParseError(std::string(source) + ": empty weather file");
    return out;
}

std::vector<WeatherRecord> load_weather(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path.string() + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_weather(ss.str(), path.string());
}

void save_weather(const std::filesystem::path& path, std::span<const WeatherRecord> records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << kHeader << '\n';
    for (const auto& r : records) {
        out << format_iso8601(r.timestamp) << ',' << format_number(r.air_temp) << ','
            << format_number(r.dew_point) << ',' << format_number(r.pressure) << ','
            << format_number(r.humidity) << '\n';
    }
}

WeatherRecord interpolate_weather(std::span<const WeatherRecord> records, Timestamp t) {
    if (records.empty()) throw DomainError("no weather records");
    if (t < records.front().timestamp || t > records.back().timestamp)
        throw DomainError("timestamp " + format_iso8601(t) + " outside weather record range");
    auto hi = std::lower_bound(records.begin(), records.end(), t,
                               [](const WeatherRecord& r, Timestamp v) { return r.timestamp < v; });
    if (hi->timestamp == t) return *hi;
    auto lo = hi - 1;
    const double w = static_cast<double>(t - lo->timestamp) /
                     static_cast<double>(hi->timestamp - lo->timestamp);
    auto lerp = [w](double a, double b) { return a + w * (b - a); };
    WeatherRecord r;
    r.timestamp = t;
    r.air_temp = lerp(lo->air_temp, hi->air_temp);
    r.dew_point = std::min(lerp(lo->dew_point, hi->dew_point), r.air_temp);
    r.pressure = lerp(lo->pressure, hi->pressure);
    r.humidity = lerp(lo->humidity, hi->humidity);
    return r;
}

Timestamp nearest_record_gap(std::span<const WeatherRecord> records, Timestamp t) {
    Timestamp best = std::numeric_limits<Timestamp>::max();
    for (const auto& r : records) best = std::min(best, r.timestamp > t ? r.timestamp - t : t - r.timestamp);
    return best;
}

}  // namespace skyseg
