#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <unistd.h>

#include "skyseg/cli/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using skyseg::cli::resolve_threads;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result skyseg_run(std::vector<std::string> args) {
    args.insert(args.begin(), "skyseg");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = skyseg::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

// Per-process scratch directory, removed at exit.
const fs::path& scratch() {
    struct Dir {
        fs::path path;
        Dir() : path(fs::temp_directory_path() / ("skyseg_cli_" + std::to_string(::getpid()))) {
            fs::remove_all(path);
            fs::create_directories(path);
        }
        ~Dir() { fs::remove_all(path); }
    };
    static const Dir dir;
    return dir.path;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

const fs::path& dataset() {
    static const fs::path dir = [] {
        const fs::path d = scratch() / "data";
        const Result r = skyseg_run({"synth", "--seed", "4", "--train", "3", "--test", "3", "--calib", "6", "--out",
                                     d.string()});
        REQUIRE(r.code == 0);
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
    CHECK(skyseg_run({}).code == 1);
    CHECK(skyseg_run({"frobnicate"}).code == 1);
    CHECK(skyseg_run({"train", "--out", (scratch() / "u").string()}).code == 1);  // no --manifest
    const std::string manifest = (dataset() / "manifest.csv").string();
    const Result bad_family =
        skyseg_run({"train", "--manifest", manifest, "--family", "tree", "--out", (scratch() / "u").string()});
    CHECK(bad_family.code == 1);
    CHECK(bad_family.err.find("tree") != std::string::npos);
    CHECK(skyseg_run({"train", "--manifest", manifest, "--lambda", "-1", "--out", (scratch() / "u").string()}).code ==
          1);
    CHECK(skyseg_run({"train", "--manifest", manifest, "--threads", "0", "--out", (scratch() / "u").string()}).code ==
          1);
}

TEST_CASE("data errors exit with 2") {
    const Result missing =
        skyseg_run({"train", "--manifest", (scratch() / "nope.csv").string(), "--out", (scratch() / "d").string()});
    CHECK(missing.code == 2);

    const fs::path broken = scratch() / "broken.csv";
    std::ofstream(broken) << "this is not a manifest\n";
    CHECK(skyseg_run({"train", "--manifest", broken.string(), "--out", (scratch() / "d").string()}).code == 2);

    const fs::path junk_model = scratch() / "junk.model";
    std::ofstream(junk_model) << "garbage\n";
    CHECK(skyseg_run({"segment", "--model", junk_model.string(), "--manifest", (dataset() / "manifest.csv").string(),
                      "--out", (scratch() / "d").string()})
              .code == 2);
}

TEST_CASE("synth is reproducible byte for byte") {
    const fs::path a = scratch() / "synth_a";
    const fs::path b = scratch() / "synth_b";
    for (const auto& d : {a, b})
        REQUIRE(skyseg_run({"synth", "--seed", "9", "--train", "2", "--test", "1", "--calib", "2", "--out", d.string()})
                    .code == 0);
    std::size_t compared = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file() || e.path().filename() == "run-manifest.json") continue;
        const fs::path rel = fs::relative(e.path(), a);
        if (rel == "run-config.ini") continue;  // records the output directory
        CAPTURE(rel.string());
        REQUIRE(fs::exists(b / rel));
        CHECK(slurp(e.path()) == slurp(b / rel));
        ++compared;
    }
    CHECK(compared > 10);
}

TEST_CASE("train then segment") {
    const std::string manifest = (dataset() / "manifest.csv").string();
    const fs::path train_dir = scratch() / "train";
    const Result t = skyseg_run({"train", "--manifest", manifest, "--family", "gda", "--features", "x3", "--gamma",
                                 "0.001", "--out", train_dir.string()});
    REQUIRE(t.code == 0);
    CHECK(fs::exists(train_dir / "model.txt"));
    CHECK(fs::exists(train_dir / "train_report.csv"));

    const fs::path seg_dir = scratch() / "segment";
    const Result s = skyseg_run({"segment", "--model", (train_dir / "model.txt").string(), "--manifest", manifest,
                                 "--out", seg_dir.string()});
    REQUIRE(s.code == 0);
    const json m = read_json(seg_dir / "run-manifest.json");
    CHECK(m["command"] == "segment");
    CHECK(m["results"]["frames"] == 3);
    CHECK(m["results"]["evaluation"]["j"].get<double>() >= 0.9);
    for (const auto& out : m["outputs"]) CHECK(fs::exists(seg_dir / out.get<std::string>()));
    CHECK(fs::exists(seg_dir / "report.csv"));

    // Vote of the same model three times reproduces it.
    const fs::path vote_dir = scratch() / "vote";
    const std::string model = (train_dir / "model.txt").string();
    const Result v = skyseg_run(
        {"vote", "--model", model, model, model, "--manifest", manifest, "--out", vote_dir.string()});
    REQUIRE(v.code == 0);
    for (const auto& e : fs::directory_iterator(seg_dir / "masks")) {
        CAPTURE(e.path().filename().string());
        const fs::path voted = vote_dir / "masks" / e.path().filename();
        REQUIRE(fs::exists(voted));
        CHECK(slurp(voted) == slurp(e.path()));
    }
}

TEST_CASE("run manifest records options and threads") {
    const fs::path dir = scratch() / "manifest";
    REQUIRE(skyseg_run({"synth", "--seed", "2", "--train", "1", "--test", "0", "--calib", "1", "--threads", "3", "--out",
                        dir.string()})
                .code == 0);
    const json m = read_json(dir / "run-manifest.json");
    CHECK(m["tool"] == "skyseg");
    CHECK(m["command"] == "synth");
    CHECK(m["threads"] == 3);
    CHECK(m["options"]["seed"] == "2");
    CHECK(m["argv"].size() == 14);
    CHECK(m["build"].contains("eigen"));
    CHECK(fs::exists(dir / "run-config.ini"));
}

TEST_CASE("flags override the config file, which overrides defaults") {
    const fs::path ini = scratch() / "run.ini";
    std::ofstream(ini) << "[synth]\nseed=5\ntrain=1\ntest=0\ncalib=2\n";

    const fs::path from_file = scratch() / "cfg_file";
    REQUIRE(skyseg_run({"synth", "--config", ini.string(), "--out", from_file.string()}).code == 0);
    json m = read_json(from_file / "run-manifest.json");
    CHECK(m["options"]["seed"] == "5");
    CHECK(m["options"]["calib"] == "2");
    CHECK(m["options"]["noise"] == "0.3");  // not in the file: default
    CHECK(m["results"]["frames"] == 3);

    const fs::path flagged = scratch() / "cfg_flag";
    REQUIRE(skyseg_run({"synth", "--config", ini.string(), "--seed", "6", "--out", flagged.string()}).code == 0);
    m = read_json(flagged / "run-manifest.json");
    CHECK(m["options"]["seed"] == "6");
    CHECK(m["options"]["calib"] == "2");

    // The written run-config.ini repeats the run.
    const fs::path again = scratch() / "cfg_again";
    REQUIRE(skyseg_run({"synth", "--config", (flagged / "run-config.ini").string(), "--out", again.string()}).code ==
            0);
    CHECK(slurp(again / "manifest.csv") == slurp(flagged / "manifest.csv"));
    CHECK(read_json(again / "run-manifest.json")["options"]["seed"] == "6");
}

TEST_CASE("thread count resolution") {
    CHECK(resolve_threads(4, "7", 1) == 4);
    CHECK(resolve_threads(std::nullopt, "7", 1) == 7);
    CHECK(resolve_threads(std::nullopt, nullptr, 2) == 2);
    CHECK(resolve_threads(std::nullopt, "0", 2) == 2);
    CHECK(resolve_threads(std::nullopt, "-3", 2) == 2);
    CHECK(resolve_threads(std::nullopt, "8x", 2) == 2);
    CHECK(resolve_threads(std::nullopt, "", 0) == 1);
}

TEST_CASE("frames can pass through an external converter") {
    const std::string manifest = (dataset() / "manifest.csv").string();
    const fs::path plain = scratch() / "conv_plain";
    const fs::path converted = scratch() / "conv_cp";
    REQUIRE(skyseg_run({"preprocess", "--manifest", manifest, "--stage", "raw", "--out", plain.string()}).code == 0);
    REQUIRE(skyseg_run({"preprocess", "--manifest", manifest, "--stage", "raw", "--frame-converter", "cp", "--out",
                        converted.string()})
                .code == 0);
    CHECK(slurp(plain / "atmosphere.csv") == slurp(converted / "atmosphere.csv"));
    CHECK_FALSE(fs::exists(converted / ".converted.frame"));

    CHECK(skyseg_run({"preprocess", "--manifest", manifest, "--frame-converter", "false", "--out",
                      (scratch() / "conv_bad").string()})
              .code == 2);
}
