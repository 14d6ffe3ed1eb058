#include "skyseg/cli/cli.hpp"

#include <algorithm>
#include <chrono>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include "skyseg/core/dataset.hpp"
#include "skyseg/core/error.hpp"
#include "skyseg/core/frame.hpp"
#include "skyseg/core/synth.hpp"
#include "skyseg/evaluation/experiments.hpp"
#include "skyseg/evaluation/metrics.hpp"
#include "skyseg/models/segmenter.hpp"
#include "skyseg/preprocessing/optical_flow.hpp"
#include "skyseg/preprocessing/pipeline.hpp"

#ifndef SKYSEG_VERSION
#define SKYSEG_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace skyseg::cli {

int resolve_threads(std::optional<int> flag, const char* env_value, int fallback) {
    if (flag) return *flag;
    if (env_value != nullptr) {
        const std::string_view s(env_value);
        int v = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec == std::errc() && ptr == s.data() + s.size() && v > 0) return v;
    }
    return std::max(1, fallback);
}

namespace {

/// Problems with the command line itself: exit code 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ModelFlags {
    std::string family = "gda";
    std::string features = "x3";
    double gamma = 1.0;
    double c = 1.0;
    double beta = 1.0;
    std::string cliques = "first";
    std::string inference = "icm";
    double t0 = 1.0;
    double alpha = 0.75;
    int t_max = 50;
    double sample_fraction = 0.2;
    int poly_order = 1;
    bool gpc_evidence = false;
    double lambda = 1.0;
    std::uint64_t seed = 0;

    void add_to(CLI::App& app) {
        app.add_option("--family", family, "Model family: nbc, gda, kmeans, gmm, mrf, icm_mrf, rrc, svc, gpc");
        app.add_option("--features", features, "Feature spec, e.g. x3, x4:first, x3:second:std");
        app.add_option("--gamma", gamma, "Covariance regularizer (generative) or ridge / prior variance");
        app.add_option("--c", c, "SVC penalty");
        app.add_option("--beta", beta, "MRF coupling strength");
        app.add_option("--cliques", cliques, "MRF neighbourhood: first (4) or second (8)");
        app.add_option("--inference", inference, "MRF inference: icm or sa");
        app.add_option("--t0", t0, "Annealing start temperature");
        app.add_option("--alpha", alpha, "Annealing cooling factor in (0,1)");
        app.add_option("--t-max", t_max, "Annealing iterations");
        app.add_option("--sample-fraction", sample_fraction, "Fraction of pixels proposed per annealing pass");
        app.add_option("--poly-order", poly_order, "Polynomial feature map order (1 or 2)");
        app.add_flag("--gpc-evidence", gpc_evidence, "Choose the GPC prior variance by Laplace evidence");
        app.add_option("--lambda", lambda, "Virtual prior of the cloud decision");
        app.add_option("--seed", seed, "Seed of randomized initializations");
    }

    ModelConfig config() const {
        ModelConfig m;
        try {
            m.family = parse_model_family(family);
            m.features = parse_feature_spec(features);
            m.cliques = parse_clique_order(cliques);
            m.inference = parse_inference(inference);
        } catch (const Error& e) {  // the parsers also serve model files and may throw ParseError
            throw UsageError(e.what());
        }
        if (!(gamma >= 0.0)) throw UsageError("--gamma must be non-negative");
        if (!(c > 0.0)) throw UsageError("--c must be positive");
        if (!(lambda > 0.0)) throw UsageError("--lambda must be positive");
        if (poly_order != 1 && poly_order != 2) throw UsageError("--poly-order must be 1 or 2");
        if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
        if (!(t0 > 0.0)) throw UsageError("--t0 must be positive");
        if (t_max < 0) throw UsageError("--t-max must be non-negative");
        if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) throw UsageError("--sample-fraction must lie in (0, 1]");
        m.gamma = gamma;
        m.c = c;
        m.beta = beta;
        m.schedule.t0 = t0;
        m.schedule.alpha = alpha;
        m.schedule.t_max = t_max;
        m.schedule.sample_fraction = sample_fraction;
        m.schedule.seed = seed;
        m.poly_order = poly_order;
        m.gpc_evidence = gpc_evidence;
        m.lambda = lambda;
        m.seed = seed;
        return m;
    }
};

struct Context {
    CLI::App* app = nullptr;
    CLI::App* command = nullptr;
    std::vector<std::string> argv;
    fs::path out;
    std::optional<int> threads_flag;
    std::string frame_converter;
    std::ostream* log = nullptr;
    json inputs = json::array();
    json outputs = json::array();
    json results = json::object();

    int threads(int fallback) const { return resolve_threads(threads_flag, std::getenv("SKYSEG_THREADS"), fallback); }

    fs::path output(const fs::path& relative) {
        outputs.push_back(relative.generic_string());
        const fs::path p = out / relative;
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        return p;
    }

    std::ofstream open(const fs::path& relative) {
        const fs::path p = output(relative);
        std::ofstream f(p);
        if (!f) throw DataError("cannot write " + p.string());
        f.precision(10);
        return f;
    }
};

std::string frame_stem(const std::string& name) { return fs::path(name).stem().string(); }

std::string shell_quote(const std::string& s) {
    std::string q = "'";
    for (const char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

// Frames in another on-disk format: `<command> <input> <output>` must write
// the native text format to <output>.
FrameReader converter_reader(const std::string& command, const fs::path& scratch) {
    return [command, scratch](const fs::path& in) {
        const std::string line = command + " " + shell_quote(in.string()) + " " + shell_quote(scratch.string());
        if (std::system(line.c_str()) != 0) throw DataError("frame converter failed on " + in.string());
        IRFrame frame = load_frame(scratch);
        fs::remove(scratch);
        return frame;
    };
}

std::vector<LoadedFrame> load_frames(Context& ctx, const std::string& manifest_path) {
    if (manifest_path.empty()) throw UsageError("--manifest is required");
    ctx.inputs.push_back(manifest_path);
    FrameReader reader;
    if (!ctx.frame_converter.empty()) reader = converter_reader(ctx.frame_converter, ctx.out / ".converted.frame");
    return load_dataset(load_manifest(manifest_path), reader);
}

std::vector<ProcessedFrame> select_split(std::vector<ProcessedFrame> frames, const std::string& split) {
    if (split == "all") return frames;
    const Split want = parse_split(split);
    std::erase_if(frames, [&](const ProcessedFrame& f) { return f.split != want; });
    return frames;
}

std::vector<std::string> names_of(std::span<const ProcessedFrame> frames) {
    std::vector<std::string> names;
    for (const auto& f : frames) names.push_back(frame_stem(f.name));
    return names;
}

json config_json(const ModelConfig& c) {
    json j;
    j["family"] = std::string(to_string(c.family));
    j["features"] = to_string(c.features);
    j["gamma"] = c.gamma;
    j["c"] = c.c;
    j["beta"] = c.beta;
    j["cliques"] = std::string(to_string(c.cliques));
    j["inference"] = std::string(to_string(c.inference));
    j["schedule"] = {{"t0", c.schedule.t0},
                     {"alpha", c.schedule.alpha},
                     {"t_max", c.schedule.t_max},
                     {"sample_fraction", c.schedule.sample_fraction}};
    j["poly_order"] = c.poly_order;
    j["gpc_evidence"] = c.gpc_evidence;
    j["lambda"] = c.lambda;
    j["seed"] = c.seed;
    return j;
}

json report_json(const EvalReport& r) {
    return {{"model", r.model},
            {"j", r.j},
            {"sensitivity", r.sensitivity},
            {"specificity", r.specificity},
            {"accuracy", r.accuracy},
            {"mean_image_j", r.mean_image_j},
            {"images", r.images.size()}};
}

// --- commands ------------------------------------------------------------------

struct SynthFlags {
    std::uint64_t seed = 0;
    int train = 7;
    int test = 5;
    int calib = 20;
    double noise = 0.3;
    double cloud_offset = 15.0;
    double boundary_ramp = 0.0;
    double coverage_min = 0.2;
    double coverage_max = 0.5;
    bool no_extremes = false;
};

void run_synth(Context& ctx, const SynthFlags& f) {
    if (f.train < 0 || f.test < 0 || f.calib < 0) throw UsageError("frame counts must be non-negative");
    if (!(f.noise >= 0.0)) throw UsageError("--noise must be non-negative");
    if (!(f.coverage_min >= 0.0 && f.coverage_min <= f.coverage_max && f.coverage_max <= 1.0))
        throw UsageError("coverage bounds must satisfy 0 <= min <= max <= 1");
    SceneParams p;
    p.noise_sigma = f.noise;
    p.cloud_offset = f.cloud_offset;
    p.boundary_ramp = f.boundary_ramp;
    p.coverage_min = f.coverage_min;
    p.coverage_max = f.coverage_max;
    p.n_calib = f.calib;
    p.clear_and_overcast = !f.no_extremes;
    const DatasetManifest m = synth_dataset(f.seed, f.train, f.test, p, ctx.out);
    ctx.outputs.push_back("manifest.csv");
    ctx.outputs.push_back("weather.csv");
    for (const auto& e : m.entries) {
        ctx.outputs.push_back(e.frame);
        if (e.label) ctx.outputs.push_back(*e.label);
        if (e.prev_frame) ctx.outputs.push_back(*e.prev_frame);
    }
    ctx.results["frames"] = m.entries.size();
    *ctx.log << "wrote " << m.entries.size() << " frames to " << ctx.out.string() << '\n';
}

void run_preprocess(Context& ctx, const std::string& manifest, const std::string& stage_name) {
    Stage stage;
    try {
        stage = parse_stage(stage_name);
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    const std::vector<LoadedFrame> frames = load_frames(ctx, manifest);
    const std::vector<ProcessedFrame> processed = preprocess_dataset(frames, stage);

    std::ofstream summary = ctx.open("atmosphere.csv");
    summary << "frame,split,lapse_rate,tropopause_temp,theta1,theta2,theta3,theta4,x0,y0,from_reference\n";
    for (const auto& p : processed) {
        const DerivedFrame& d = p.derived;
        const std::string stem = frame_stem(p.name);
        auto channel = [&](const std::string& key, const KelvinGrid& g) {
            save_channel(ctx.output("channels/" + stem + "." + key + ".frame"), g);
        };
        channel("t", d.t);
        channel("h", d.h);
        if (stage != Stage::raw) {
            channel("t_prime", d.t_prime);
            channel("h_prime", d.h_prime);
        }
        if (stage == Stage::atmosphere || stage == Stage::all) {
            channel("delta_t", d.delta_t);
            channel("h_double_prime", d.h_double_prime);
            channel("intensity", map_grid(d.intensity, [](std::uint8_t v) { return static_cast<double>(v); }));
        }
        if (d.velocity) channel("velocity", flow_magnitude(*d.velocity));
        const AtmosphericParams& a = d.atmosphere;
        summary << stem << ',' << to_string(p.split) << ',' << d.lapse_rate << ',' << d.tropopause_temp << ','
                << a.theta1 << ',' << a.theta2 << ',' << a.theta3 << ',' << a.theta4 << ',' << a.x0 << ',' << a.y0
                << ',' << (d.atmosphere_from_reference ? 1 : 0) << '\n';
    }
    ctx.results["frames"] = processed.size();
    *ctx.log << "preprocessed " << processed.size() << " frames (stage " << to_string(stage) << ")\n";
}

void run_train(Context& ctx, const std::string& manifest, const ModelFlags& flags) {
    const ModelConfig config = flags.config();
    const std::vector<LoadedFrame> frames = load_frames(ctx, manifest);
    const std::vector<ProcessedFrame> train =
        select_split(preprocess_dataset(frames, config.features.required_stage()), "train");
    if (train.empty()) throw DataError(manifest + ": no training frames");
    const std::vector<FeatureFrame> features = features_for(train, config.features);

    const auto t0 = std::chrono::steady_clock::now();
    auto model = train_segmenter(config, features);
    const double train_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    model->save(ctx.output("model.txt"));

    ctx.results["model"] = config_json(model->config());
    bool labelled = std::all_of(features.begin(), features.end(), [](const FeatureFrame& f) { return f.labels; });
    if (labelled) {
        const std::vector<std::string> names = names_of(train);
        const EvalReport report = evaluate(*model, features, names, std::string(to_string(config.family)), train_s);
        std::ofstream csv = ctx.open("train_report.csv");
        write_report_csv(csv, std::span<const EvalReport>(&report, 1));
        ctx.results["training"] = report_json(report);
        *ctx.log << to_string(config.family) << ": training J = " << report.j << '\n';
    }
}

std::unique_ptr<Segmenter> load_model(Context& ctx, const std::string& path) {
    if (path.empty()) throw UsageError("--model is required");
    ctx.inputs.push_back(path);
    return load_segmenter(fs::path(path));
}

void write_masks(Context& ctx, const std::string& dir, std::span<const std::string> names,
                 std::span<const LabelMask> masks) {
    for (std::size_t k = 0; k < masks.size(); ++k) save_label(ctx.output(dir + "/" + names[k] + ".label"), masks[k]);
}

void run_segment(Context& ctx, const std::string& model_path, const std::string& manifest, const std::string& split,
                 std::optional<double> lambda) {
    auto model = load_model(ctx, model_path);
    if (lambda) {
        if (!(*lambda > 0.0)) throw UsageError("--lambda must be positive");
        model->set_lambda(*lambda);
    }
    const FeatureSpec spec = model->config().features;
    const std::vector<LoadedFrame> frames = load_frames(ctx, manifest);
    const std::vector<ProcessedFrame> selected = select_split(preprocess_dataset(frames, spec.required_stage()), split);
    const std::vector<FeatureFrame> features = features_for(selected, spec);
    const std::vector<std::string> names = names_of(selected);

    std::vector<LabelMask> masks;
    for (const auto& f : features) masks.push_back(model->segment(f));
    write_masks(ctx, "masks", names, masks);

    std::vector<ImageEval> evals;
    for (std::size_t k = 0; k < features.size(); ++k)
        if (features[k].labels) evals.push_back(evaluate_image(names[k], masks[k], *features[k].labels));
    if (!evals.empty()) {
        const EvalReport report = summarize(std::string(to_string(model->config().family)), std::move(evals));
        std::ofstream csv = ctx.open("report.csv");
        write_report_csv(csv, std::span<const EvalReport>(&report, 1));
        ctx.results["evaluation"] = report_json(report);
        *ctx.log << report.model << ": J = " << report.j << " over " << report.images.size() << " labelled frames\n";
    }
    ctx.results["frames"] = masks.size();
    ctx.results["lambda"] = model->config().lambda;
}

struct GridFlags {
    std::vector<std::string> features;
    std::vector<double> gammas;
    std::vector<double> cs;
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<int> poly_orders;
    std::vector<double> lambdas;
};

void run_cross_validate(Context& ctx, const std::string& manifest, const ModelFlags& flags, const GridFlags& g) {
    GridSpec grid;
    grid.base = flags.config();
    try {
        for (const auto& s : g.features) grid.features.push_back(parse_feature_spec(s));
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    grid.gammas = g.gammas;
    grid.cs = g.cs;
    grid.betas = g.betas;
    grid.alphas = g.alphas;
    grid.poly_orders = g.poly_orders;
    grid.lambdas = g.lambdas;
    for (const double l : grid.lambdas)
        if (!(l > 0.0)) throw UsageError("--lambdas values must be positive");

    Stage stage = grid.base.features.required_stage();
    for (const auto& f : grid.features)
        if (static_cast<int>(f.required_stage()) > static_cast<int>(stage)) stage = f.required_stage();
    const std::vector<LoadedFrame> frames = load_frames(ctx, manifest);
    const std::vector<ProcessedFrame> train = select_split(preprocess_dataset(frames, stage), "train");
    if (train.size() < 2) throw DataError(manifest + ": cross-validation needs at least two training frames");

    const int threads = ctx.threads(static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
    const CvResult cv = loo_cross_validate(train, grid, threads);
    {
        std::ofstream csv = ctx.open("cv.csv");
        write_cv_csv(csv, cv);
    }
    if (!cv.best.valid) throw ConvergenceError("cross-validation: every configuration failed to train");

    // Refit the winner on every training frame.
    const std::vector<FeatureFrame> features = features_for(train, cv.best.config.features);
    auto model = train_segmenter(cv.best.config, features);
    model->save(ctx.output("model.txt"));

    ctx.results["folds"] = cv.folds;
    ctx.results["configurations"] = cv.table.size();
    ctx.results["best"] = config_json(cv.best.config);
    ctx.results["best_mean_j"] = cv.best.mean_j;
    ctx.results["threads"] = threads;
    *ctx.log << "best " << to_string(cv.best.config.family) << ' ' << to_string(cv.best.config.features)
             << " lambda=" << cv.best.config.lambda << " mean J=" << cv.best.mean_j << '\n';
}

void run_benchmark(Context& ctx, const std::vector<std::string>& model_paths, const std::string& manifest,
                   int repetitions) {
    if (model_paths.empty()) throw UsageError("--model is required");
    if (repetitions < 1) throw UsageError("--repetitions must be at least 1");
    const std::vector<LoadedFrame> frames = load_frames(ctx, manifest);
    std::vector<BenchmarkReport> reports;
    for (const auto& path : model_paths) {
        auto model = load_model(ctx, path);
        BenchmarkReport r = benchmark(*model, frames, repetitions);
        r.model = fs::path(path).parent_path().filename().string();
        if (r.model.empty()) r.model = fs::path(path).stem().string();
        *ctx.log << r.model << " (" << to_string(model->config().family)
                 << "): segmentation median " << r.segmentation.median_s * 1e3 << " ms/image\n";
        reports.push_back(std::move(r));
    }
    std::ofstream csv = ctx.open("benchmark.csv");
    write_benchmark_csv(csv, reports);
    ctx.results["models"] = reports.size();
    ctx.results["repetitions"] = repetitions;
}

void run_vote(Context& ctx, const std::vector<std::string>& model_paths, const std::string& manifest,
              const std::string& split) {
    if (model_paths.size() < 2) throw UsageError("vote needs at least two --model files");
    std::vector<std::unique_ptr<Segmenter>> models;
    Stage stage = Stage::raw;
    for (const auto& p : model_paths) {
        models.push_back(load_model(ctx, p));
        const Stage s = models.back()->config().features.required_stage();
        if (static_cast<int>(s) > static_cast<int>(stage)) stage = s;
    }
    const std::vector<LoadedFrame> frames = load_frames(ctx, manifest);
    const std::vector<ProcessedFrame> selected = select_split(preprocess_dataset(frames, stage), split);
    const std::vector<std::string> names = names_of(selected);

    std::vector<const Segmenter*> members;
    for (const auto& m : models) members.push_back(m.get());
    std::vector<std::vector<FeatureFrame>> per_model;
    for (const auto& m : models) per_model.push_back(features_for(selected, m->config().features));

    std::vector<LabelMask> masks;
    std::vector<ImageEval> vote_evals;
    std::vector<std::vector<ImageEval>> member_evals(models.size());
    for (std::size_t k = 0; k < selected.size(); ++k) {
        std::vector<FeatureFrame> image;
        for (const auto& pm : per_model) image.push_back(pm[k]);
        VoteResult v = vote(members, image);
        if (selected[k].label) {
            vote_evals.push_back(evaluate_image(names[k], v.mask, *selected[k].label));
            for (std::size_t m = 0; m < models.size(); ++m)
                member_evals[m].push_back(evaluate_image(names[k], models[m]->segment(image[m]), *selected[k].label));
        }
        masks.push_back(std::move(v.mask));
    }
    write_masks(ctx, "masks", names, masks);

    if (!vote_evals.empty()) {
        std::vector<EvalReport> reports;
        json members_json = json::array();
        for (std::size_t m = 0; m < models.size(); ++m) {
            reports.push_back(summarize(fs::path(model_paths[m]).parent_path().filename().string() + ":" +
                                            std::string(to_string(models[m]->config().family)),
                                        std::move(member_evals[m])));
            members_json.push_back(report_json(reports.back()));
        }
        reports.push_back(summarize("vote", std::move(vote_evals)));
        std::ofstream csv = ctx.open("report.csv");
        write_report_csv(csv, reports);
        ctx.results["members"] = members_json;
        ctx.results["vote"] = report_json(reports.back());
        *ctx.log << "vote: J = " << reports.back().j << '\n';
    }
    ctx.results["frames"] = masks.size();
}

// --- run manifest ------------------------------------------------------------

json option_values(const CLI::App& app) {
    json j = json::object();
    for (const CLI::Option* opt : app.get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config") continue;
        if (opt->count() > 0) {
            const auto& r = opt->results();
            j[name] = r.size() == 1 ? json(r.front()) : json(r);
        } else {
            j[name] = opt->get_default_str();
        }
    }
    return j;
}

void write_run_manifest(Context& ctx) {
    json m;
    m["tool"] = "skyseg";
    m["version"] = SKYSEG_VERSION;
    m["command"] = ctx.command->get_name();
    m["argv"] = ctx.argv;
    m["options"] = option_values(*ctx.command);
    m["inputs"] = ctx.inputs;
    m["outputs"] = ctx.outputs;
    m["threads"] = ctx.threads(ctx.command->get_name() == "cross-validate"
                                   ? static_cast<int>(std::max(1u, std::thread::hardware_concurrency()))
                                   : 1);
    m["results"] = ctx.results;
    m["build"] = {{"compiler", __VERSION__},
                  {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION)},
                  {"cli11", CLI11_VERSION},
                  {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                        std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                        std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
    std::ofstream f(ctx.out / "run-manifest.json");
    if (!f) throw DataError("cannot write " + (ctx.out / "run-manifest.json").string());
    f << m.dump(2) << '\n';

    // The same settings as a config file: `skyseg <command> --config run-config.ini`
    // repeats the run.
    std::ofstream c(ctx.out / "run-config.ini");
    c << "[" << ctx.command->get_name() << "]\n";
    for (const CLI::Option* opt : ctx.command->get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config") continue;
        std::vector<std::string> values = opt->results();
        if (opt->count() == 0) {
            const std::string d = opt->get_default_str();
            if (d.empty() || d == "{}") continue;
            values = {d};
        }
        c << name << '=';
        if (opt->get_type_size_max() == 0 || opt->get_expected_max() == 0) {
            c << (values.empty() || values.front() != "false" ? "true" : "false");
        } else if (values.size() == 1) {
            c << std::quoted(values.front());
        } else {
            c << '[';
            for (std::size_t k = 0; k < values.size(); ++k) c << (k ? "," : "") << std::quoted(values[k]);
            c << ']';
        }
        c << '\n';
    }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Ground-based infrared cloud segmentation", "skyseg"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.set_config("--config", "", "INI/TOML file with option values; command-line flags take precedence");
    app.set_version_flag("--version", SKYSEG_VERSION);

    Context ctx;
    ctx.app = &app;
    ctx.log = &out;
    std::string out_dir;
    std::optional<int> threads;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--out", out_dir, "Output directory")->required();
        sub->add_option("--threads", threads, "Worker threads (env SKYSEG_THREADS)")->check(CLI::PositiveNumber);
        if (sub->get_name() != "synth")
            sub->add_option("--frame-converter", ctx.frame_converter,
                            "Command run as `CMD <input> <output>` to turn each frame file into the native format");
    };

    std::function<void()> action;

    SynthFlags synth;
    CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic labelled dataset");
    synth_cmd->add_option("--seed", synth.seed, "Generator seed");
    synth_cmd->add_option("--train", synth.train, "Training frames");
    synth_cmd->add_option("--test", synth.test, "Test frames");
    synth_cmd->add_option("--calib", synth.calib, "Clear-sky calibration frames");
    synth_cmd->add_option("--noise", synth.noise, "Pixel noise sigma (K)");
    synth_cmd->add_option("--cloud-offset", synth.cloud_offset, "Peak cloud excess over the background (K)");
    synth_cmd->add_option("--boundary-ramp", synth.boundary_ramp, "Soft cloud edge width; 0 = hard edges");
    synth_cmd->add_option("--coverage-min", synth.coverage_min, "Smallest cloud cover of a partly cloudy frame");
    synth_cmd->add_option("--coverage-max", synth.coverage_max, "Largest cloud cover of a partly cloudy frame");
    synth_cmd->add_flag("--no-extremes", synth.no_extremes, "Omit the all-clear and all-overcast frames");
    common(synth_cmd);
    synth_cmd->callback([&] { action = [&] { run_synth(ctx, synth); }; });

    std::string manifest;
    std::string stage = "all";
    CLI::App* pre_cmd = app.add_subcommand("preprocess", "Write derived channels of every frame");
    pre_cmd->add_option("--manifest", manifest, "Dataset manifest CSV")->required();
    pre_cmd->add_option("--stage", stage, "Last stage to run: raw, window, atmosphere, all");
    common(pre_cmd);
    pre_cmd->callback([&] { action = [&] { run_preprocess(ctx, manifest, stage); }; });

    ModelFlags train_flags;
    CLI::App* train_cmd = app.add_subcommand("train", "Train one model on the training split");
    train_cmd->add_option("--manifest", manifest, "Dataset manifest CSV")->required();
    train_flags.add_to(*train_cmd);
    common(train_cmd);
    train_cmd->callback([&] { action = [&] { run_train(ctx, manifest, train_flags); }; });

    std::string model_path;
    std::string split = "test";
    std::optional<double> lambda;
    CLI::App* seg_cmd = app.add_subcommand("segment", "Segment frames with a trained model");
    seg_cmd->add_option("--model", model_path, "Model file written by train or cross-validate")->required();
    seg_cmd->add_option("--manifest", manifest, "Dataset manifest CSV")->required();
    seg_cmd->add_option("--split", split, "Frames to segment: train, test or all");
    seg_cmd->add_option("--lambda", lambda, "Override the model's virtual prior");
    common(seg_cmd);
    seg_cmd->callback([&] { action = [&] { run_segment(ctx, model_path, manifest, split, lambda); }; });

    ModelFlags cv_flags;
    GridFlags grid;
    CLI::App* cv_cmd = app.add_subcommand("cross-validate", "Leave-one-image-out grid search on the training split");
    cv_cmd->add_option("--manifest", manifest, "Dataset manifest CSV")->required();
    cv_flags.add_to(*cv_cmd);
    cv_cmd->add_option("--feature-grid", grid.features, "Feature specs to compare");
    cv_cmd->add_option("--gammas", grid.gammas, "Gamma grid");
    cv_cmd->add_option("--cs", grid.cs, "SVC penalty grid");
    cv_cmd->add_option("--betas", grid.betas, "MRF coupling grid");
    cv_cmd->add_option("--alphas", grid.alphas, "Annealing cooling grid");
    cv_cmd->add_option("--poly-orders", grid.poly_orders, "Polynomial order grid");
    cv_cmd->add_option("--lambdas", grid.lambdas, "Virtual prior grid (default: 50 log-spaced values in [0.02, 2])");
    common(cv_cmd);
    cv_cmd->callback([&] { action = [&] { run_cross_validate(ctx, manifest, cv_flags, grid); }; });

    std::vector<std::string> model_paths;
    int repetitions = 5;
    CLI::App* bench_cmd = app.add_subcommand("benchmark", "Single-threaded per-image timings on the test split");
    bench_cmd->add_option("--model", model_paths, "Model files")->required();
    bench_cmd->add_option("--manifest", manifest, "Dataset manifest CSV")->required();
    bench_cmd->add_option("--repetitions", repetitions, "Timed passes over the test frames");
    common(bench_cmd);
    bench_cmd->callback([&] { action = [&] { run_benchmark(ctx, model_paths, manifest, repetitions); }; });

    CLI::App* vote_cmd = app.add_subcommand("vote", "Majority vote of several trained models");
    vote_cmd->add_option("--model", model_paths, "Member model files")->required();
    vote_cmd->add_option("--manifest", manifest, "Dataset manifest CSV")->required();
    vote_cmd->add_option("--split", split, "Frames to segment: train, test or all");
    common(vote_cmd);
    vote_cmd->callback([&] { action = [&] { run_vote(ctx, model_paths, manifest, split); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kUsage;
    }

    for (int i = 0; i < argc; ++i) ctx.argv.emplace_back(argv[i]);
    ctx.command = app.get_subcommands().front();
    ctx.out = out_dir;
    ctx.threads_flag = threads;

    try {
        fs::create_directories(ctx.out);
        action();
        write_run_manifest(ctx);
        return kOk;
    } catch (const UsageError& e) {
        err << "skyseg " << ctx.command->get_name() << ": " << e.what() << '\n' << ctx.command->help();
        return kUsage;
    } catch (const ParseError& e) {
        err << "skyseg: " << e.what() << '\n';
        return kDataError;
    } catch (const DataError& e) {
        err << "skyseg: " << e.what() << '\n';
        return kDataError;
    } catch (const DomainError& e) {
        err << "skyseg: " << e.what() << '\n';
        return kDataError;
    } catch (const fs::filesystem_error& e) {
        err << "skyseg: " << e.what() << '\n';
        return kDataError;
    } catch (const ConvergenceError& e) {
        err << "skyseg: " << e.what() << '\n';
        return kModelError;
    } catch (const ConfigError& e) {
        err << "skyseg: " << e.what() << '\n';
        return kModelError;
    } catch (const std::exception& e) {
        err << "skyseg: internal error: " << e.what() << '\n';
        return kModelError;
    }
}

}  // namespace skyseg::cli
