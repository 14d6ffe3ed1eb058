#include "skyseg/core/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "skyseg/core/error.hpp"

namespace skyseg {

namespace {

constexpr std::string_view kHeader = "frame,weather,label,split,clear_sky";
constexpr std::string_view kHeaderWithPrev = "frame,weather,label,split,clear_sky,prev_frame";

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    if (s == "calib") return Split::calib;
    throw ParseError("unknown split \"" + std::string(s) + "\"");
}

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test: return "test";
        case Split::calib: return "calib";
    }
    return "?";
}

DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                               std::string_view source) {
    DatasetManifest m;
    m.base_dir = base_dir;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    bool header_seen = false;
    bool with_prev = false;
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
            if (line == kHeader) {
                with_prev = false;
            } else if (line == kHeaderWithPrev) {
                with_prev = true;
            } else {
                fail("expected header \"" + std::string(kHeader) + "\"");
            }
            header_seen = true;
            continue;
        }
        auto cells = split_csv(line);
        const std::size_t want = with_prev ? 6 : 5;
        if (cells.size() != want) fail("expected " + std::to_string(want) + " fields");
        ManifestEntry e;
        e.frame = cells[0];
        e.weather = cells[1];
        if (e.frame.empty() || e.weather.empty()) fail("frame and weather paths are required");
        if (!cells[2].empty()) e.label = std::string(cells[2]);
        try {
            e.split = parse_split(cells[3]);
        } catch (const ParseError& err) {
            fail(err.what());
        }
        if (cells[4] == "1" || cells[4] == "true") {
            e.clear_sky = true;
        } else if (cells[4] == "0" || cells[4] == "false") {
            e.clear_sky = false;
        } else {
            fail("clear_sky must be 0/1 or true/false");
        }
        if (with_prev && !cells[5].empty()) e.prev_frame = std::string(cells[5]);
        if (e.split == Split::train && !e.label) fail("train entries require a label");
        m.entries.push_back(std::move(e));
    }
    if (!header_seen) throw ParseError(std::string(source) + ": empty manifest");
    return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path.string() + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_manifest(ss.str(), path.parent_path(), path.string());
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    const bool with_prev = std::any_of(manifest.entries.begin(), manifest.entries.end(),
                                       [](const ManifestEntry& e) { return e.prev_frame.has_value(); });
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << (with_prev ? kHeaderWithPrev : kHeader) << '\n';
    for (const auto& e : manifest.entries) {
        out << e.frame << ',' << e.weather << ',' << e.label.value_or("") << ',' << to_string(e.split) << ','
            << (e.clear_sky ? 1 : 0);
        if (with_prev) out << ',' << e.prev_frame.value_or("");
        out << '\n';
    }
}

std::vector<LoadedFrame> load_dataset(const DatasetManifest& manifest, const FrameReader& reader) {
    const auto read = [&](const std::filesystem::path& p) { return reader ? reader(p) : load_frame(p); };
    std::map<std::string, std::vector<WeatherRecord>> weather_cache;
    std::vector<LoadedFrame> out;
    out.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        LoadedFrame f;
        f.name = e.frame;
        f.split = e.split;
        f.clear_sky = e.clear_sky;
        f.frame = read(manifest.resolve(e.frame));
        if (!f.frame.timestamp) throw DataError(e.frame + ": frame header carries no timestamp");

        auto it = weather_cache.find(e.weather);
        if (it == weather_cache.end())
            it = weather_cache.emplace(e.weather, load_weather(manifest.resolve(e.weather))).first;
        const auto& records = it->second;
        if (nearest_record_gap(records, *f.frame.timestamp) > kMaxWeatherGap)
            throw DataError(e.frame + ": no weather record within 10 minutes of the frame");
        try {
            f.weather = interpolate_weather(records, *f.frame.timestamp);
        } catch (const DomainError& err) {
            throw DataError(e.frame + ": " + err.what());
        }

        if (e.label) {
            f.label = load_label(manifest.resolve(*e.label));
            if (!f.label->same_shape(f.frame.centi_kelvin))
                throw DataError(*e.label + ": label shape differs from frame " + e.frame);
        }
        if (e.prev_frame) {
            f.prev = read(manifest.resolve(*e.prev_frame));
            if (!f.prev->centi_kelvin.same_shape(f.frame.centi_kelvin))
                throw DataError(*e.prev_frame + ": previous frame shape differs from " + e.frame);
        }
        out.push_back(std::move(f));
    }
    std::stable_sort(out.begin(), out.end(), [](const LoadedFrame& a, const LoadedFrame& b) {
        return *a.frame.timestamp < *b.frame.timestamp;
    });
    return out;
}

}  // namespace skyseg
