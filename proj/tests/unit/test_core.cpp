#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "skyseg/core/dataset.hpp"
#include "skyseg/core/error.hpp"
#include "skyseg/core/frame.hpp"
#include "skyseg/core/synth.hpp"
#include "skyseg/core/weather.hpp"

using namespace skyseg;

namespace {

std::string constant_frame_text(int rows, int cols, int cell, int cells) {
    std::string text = std::to_string(rows) + " " + std::to_string(cols) + "\n";
    for (int k = 0; k < cells; ++k) {
        text += std::to_string(cell);
        text += (k + 1) % cols == 0 ? '\n' : ' ';
    }
    return text;
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("skyseg_core_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("frame cells are centi-Kelvin") {
    const IRFrame f = parse_frame(constant_frame_text(60, 80, 29315, 4800));
    CHECK(f.rows() == 60);
    CHECK(f.cols() == 80);
    const KelvinGrid k = f.kelvin();
    CHECK(k(0, 0) == doctest::Approx(293.15).epsilon(1e-12));
    CHECK(k(59, 79) == doctest::Approx(293.15).epsilon(1e-12));
}

TEST_CASE("short frame file is rejected with the expected count") {
    try {
        parse_frame(constant_frame_text(60, 80, 29315, 4799), "short.frame");
        FAIL("no exception");
    } catch (const ParseError& e) {
        const std::string what = e.what();
        CHECK(what.find("expected 4800 cells") != std::string::npos);
        CHECK(what.find("short.frame") != std::string::npos);
    }
}

TEST_CASE("frame parse errors") {
    CHECK_THROWS_AS(parse_frame(""), ParseError);
    CHECK_THROWS_AS(parse_frame("2 2\n1 2 3 x\n"), ParseError);
    CHECK_THROWS_AS(parse_frame("2 2\n1 2 3 -4\n"), ParseError);
    CHECK_THROWS_AS(parse_frame("2 2 2017-06-01T12:00:00Z 45 abc\n1 2 3 4\n"), ParseError);
    CHECK_THROWS_AS(parse_label("1 3\n0 1 2\n"), ParseError);
}

TEST_CASE("frame and label text round trips") {
    IRFrame f;
    f.centi_kelvin = Grid<std::int32_t>(3, 4);
    for (std::size_t k = 0; k < f.centi_kelvin.size(); ++k) f.centi_kelvin[k] = 27000 + static_cast<int>(k) * 17;
    f.timestamp = parse_iso8601("2017-06-01T12:34:56Z");
    f.sun_elevation = 61.25;
    f.sun_azimuth = 182.5;
    const IRFrame g = parse_frame(format_frame(f));
    CHECK(g.centi_kelvin == f.centi_kelvin);
    REQUIRE(g.timestamp.has_value());
    CHECK(*g.timestamp == *f.timestamp);
    CHECK(g.sun_elevation == f.sun_elevation);
    CHECK(g.sun_azimuth == f.sun_azimuth);

    LabelMask m(3, 4);
    m(1, 2) = 1;
    m(2, 3) = 1;
    CHECK(parse_label(format_label(m)) == m);

    const auto dir = scratch_dir("roundtrip");
    save_frame(dir / "a.frame", f);
    save_label(dir / "a.label", m);
    CHECK(load_frame(dir / "a.frame").centi_kelvin == f.centi_kelvin);
    CHECK(load_label(dir / "a.label") == m);
    CHECK_THROWS_AS(load_frame(dir / "missing.frame"), ParseError);
}

TEST_CASE("from_kelvin rounds to the nearest centi-Kelvin") {
    KelvinGrid k(1, 3);
    k(0, 0) = 293.154;
    k(0, 1) = 293.156;
    k(0, 2) = 250.0;
    const IRFrame f = IRFrame::from_kelvin(k);
    CHECK(f.centi_kelvin(0, 0) == 29315);
    CHECK(f.centi_kelvin(0, 1) == 29316);
    CHECK(f.centi_kelvin(0, 2) == 25000);
}

TEST_CASE("timestamps") {
    CHECK(parse_iso8601("1970-01-01T00:00:00Z") == 0);
    CHECK(parse_iso8601("2017-06-01T12:00:00Z") == 1496318400);
    CHECK(parse_iso8601("2017-06-01T12:00:00") == 1496318400);
    CHECK(format_iso8601(1496318400) == "2017-06-01T12:00:00Z");
    CHECK_THROWS_AS(parse_iso8601("2017-06-01 12:00"), ParseError);
}

TEST_CASE("weather interpolation takes the midpoint halfway between records") {
    const std::string csv =
        "timestamp,air_temp_K,dew_point_K,pressure_Pa,humidity\n"
        "2017-06-01T12:00:00Z,290,280,85000,0.5\n"
        "2017-06-01T12:10:00Z,300,282,85200,0.3\n";
    const auto records = parse_weather(csv);
    REQUIRE(records.size() == 2);
    const WeatherRecord mid = interpolate_weather(records, parse_iso8601("2017-06-01T12:05:00Z"));
    CHECK(mid.air_temp == doctest::Approx(295.0));
    CHECK(mid.dew_point == doctest::Approx(281.0));
    CHECK(mid.pressure == doctest::Approx(85100.0));
    CHECK(mid.humidity == doctest::Approx(0.4));
    CHECK(interpolate_weather(records, records[1].timestamp) == records[1]);
    CHECK_THROWS_AS(interpolate_weather(records, parse_iso8601("2017-06-01T12:10:01Z")), DomainError);
    CHECK_THROWS_AS(interpolate_weather(records, parse_iso8601("2017-06-01T11:59:59Z")), DomainError);
    CHECK(nearest_record_gap(records, parse_iso8601("2017-06-01T12:02:00Z")) == 120);
}

TEST_CASE("weather validation") {
    WeatherRecord r{0, 290.0, 280.0, 85000.0, 0.5};
    CHECK_NOTHROW(validate(r));
    r.dew_point = 291.0;
    CHECK_THROWS_AS(validate(r), DomainError);
    r.dew_point = 280.0;
    r.pressure = 0.0;
    CHECK_THROWS_AS(validate(r), DomainError);
    r.pressure = 85000.0;
    r.humidity = 1.5;
    CHECK_THROWS_AS(validate(r), DomainError);
    CHECK_THROWS(parse_weather("timestamp,air_temp_K,dew_point_K,pressure_Pa,humidity\n"
                               "2017-06-01T12:00:00Z,280,290,85000,0.5\n"));
}

TEST_CASE("manifest parsing") {
    const std::string text =
        "frame,weather,label,split,clear_sky,prev_frame\n"
        "a.frame,w.csv,a.label,train,0,a0.frame\n"
        "b.frame,w.csv,,calib,1,\n";
    const DatasetManifest m = parse_manifest(text, "/data");
    REQUIRE(m.entries.size() == 2);
    CHECK(m.entries[0].label == std::optional<std::string>("a.label"));
    CHECK(m.entries[0].prev_frame == std::optional<std::string>("a0.frame"));
    CHECK(m.entries[0].split == Split::train);
    CHECK_FALSE(m.entries[0].clear_sky);
    CHECK_FALSE(m.entries[1].label.has_value());
    CHECK(m.entries[1].split == Split::calib);
    CHECK(m.entries[1].clear_sky);
    CHECK(m.resolve("a.frame") == std::filesystem::path("/data/a.frame"));
    CHECK_THROWS_AS(parse_manifest("frame,weather,label,split,clear_sky\na,b,,holdout,0\n", "/"), ParseError);
    CHECK_THROWS_AS(parse_manifest("", "/"), ParseError);
}

TEST_CASE("synthetic scenes are a pure function of the seed") {
    SceneParams p;
    p.n_calib = 2;
    const SynthDataset a = synth_scenes(7, 2, 1, p);
    const SynthDataset b = synth_scenes(7, 2, 1, p);
    const SynthDataset c = synth_scenes(8, 2, 1, p);
    REQUIRE(a.train.size() == 2);
    REQUIRE(a.test.size() == 1);
    CHECK(a.train[0].frame.centi_kelvin == b.train[0].frame.centi_kelvin);
    CHECK(a.test[0].mask == b.test[0].mask);
    CHECK(a.train[0].frame.centi_kelvin != c.train[0].frame.centi_kelvin);

    const auto d1 = scratch_dir("synth1");
    const auto d2 = scratch_dir("synth2");
    synth_dataset(7, 2, 1, p, d1);
    synth_dataset(7, 2, 1, p, d2);
    int files = 0;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(d1)) {
        if (!entry.is_regular_file()) continue;
        ++files;
        const auto rel = std::filesystem::relative(entry.path(), d1);
        std::ifstream x(entry.path()), y(d2 / rel);
        std::stringstream sx, sy;
        sx << x.rdbuf();
        sy << y.rdbuf();
        CHECK_MESSAGE(sx.str() == sy.str(), rel.string());
    }
    CHECK(files > 5);
    const auto loaded = load_dataset(load_manifest(d1 / "manifest.csv"));
    CHECK(loaded.size() == 2 + 2 + 1);
}

TEST_CASE("synthetic labels are exactly the warm cloud support") {
    SceneParams p;
    p.noise_sigma = 0.0;
    p.window_amplitude = 0.0;
    std::mt19937_64 rng(3);
    const KelvinGrid window(p.rows, p.cols);
    const SynthScene partial = synth_scene(rng, p, SkyKind::partial, window, p.start);
    long cloud = 0;
    for (int i = 0; i < p.rows; ++i)
        for (int j = 0; j < p.cols; ++j) {
            const bool in_cloud = partial.clouds(i, j) > 0.0;
            CHECK(in_cloud == (partial.mask(i, j) == 1));
            cloud += partial.mask(i, j);
        }
    const double coverage = static_cast<double>(cloud) / static_cast<double>(partial.mask.size());
    CHECK(coverage >= p.coverage_min - 0.05);
    CHECK(coverage <= p.coverage_max + 0.05);

    const SynthScene clear = synth_scene(rng, p, SkyKind::clear, window, p.start);
    for (auto v : clear.mask) CHECK(v == 0);
    const SynthScene overcast = synth_scene(rng, p, SkyKind::overcast, window, p.start);
    for (auto v : overcast.mask) CHECK(v == 1);
}
