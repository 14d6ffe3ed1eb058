#include "skyseg/core/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "skyseg/core/error.hpp"
#include "skyseg/preprocessing/malr.hpp"

namespace skyseg {

namespace {

std::vector<double> gaussian_kernel(double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * r + 1);
    for (int t = -r; t <= r; ++t) k[t + r] = std::exp(-0.5 * t * t / (sigma * sigma));
    const double s = std::accumulate(k.begin(), k.end(), 0.0);
    for (double& v : k) v /= s;
    return k;
}

KelvinGrid blur(const KelvinGrid& in, double sigma) {
    const auto k = gaussian_kernel(sigma);
    const int r = static_cast<int>(k.size() / 2);
    KelvinGrid tmp(in.rows(), in.cols()), out(in.rows(), in.cols());
    for (int i = 0; i < in.rows(); ++i)
        for (int j = 0; j < in.cols(); ++j) {
            double s = 0.0;
            for (int t = -r; t <= r; ++t) s += k[t + r] * in.clamped(i, j + t);
            tmp(i, j) = s;
        }
    for (int i = 0; i < in.rows(); ++i)
        for (int j = 0; j < in.cols(); ++j) {
            double s = 0.0;
            for (int t = -r; t <= r; ++t) s += k[t + r] * tmp.clamped(i + t, j);
            out(i, j) = s;
        }
    return out;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

KelvinGrid make_window(std::mt19937_64& rng, const SceneParams& p) {
    KelvinGrid w(p.rows, p.cols, 0.0);
    for (int s = 0; s < p.window_spots; ++s) {
        const double ci = uniform(rng, 0, p.rows - 1);
        const double cj = uniform(rng, 0, p.cols - 1);
        const double radius = uniform(rng, 1.5, 3.5);
        const double amp = p.window_amplitude * uniform(rng, 0.5, 1.0) * (uniform(rng, 0, 1) < 0.75 ? 1.0 : -1.0);
        for (int i = 0; i < p.rows; ++i)
            for (int j = 0; j < p.cols; ++j) {
                const double d2 = (i - ci) * (i - ci) + (j - cj) * (j - cj);
                w(i, j) += amp * std::exp(-0.5 * d2 / (radius * radius));
            }
    }
    return w;
}

WeatherRecord make_weather(std::mt19937_64& rng, Timestamp t) {
    WeatherRecord r;
    r.timestamp = t;
    r.air_temp = uniform(rng, 290.0, 300.0);
    r.dew_point = r.air_temp - uniform(rng, 5.0, 15.0);
    r.pressure = uniform(rng, 83700.0, 84300.0);
    r.humidity = std::clamp(magnus_vapor_pressure(r.dew_point) / magnus_vapor_pressure(r.air_temp), 0.0, 1.0);
    return r;
}

double quantile(std::vector<double> v, double q) {
    const std::size_t k = std::min(v.size() - 1, static_cast<std::size_t>(q * static_cast<double>(v.size())));
    std::nth_element(v.begin(), v.begin() + k, v.end());
    return v[k];
}

}  // namespace

KelvinGrid smooth_noise(std::mt19937_64& rng, int rows, int cols, double sigma) {
    std::normal_distribution<double> n01(0.0, 1.0);
    KelvinGrid g(rows, cols);
    for (double& v : g) v = n01(rng);
    g = blur(g, sigma);
    double mean = 0.0, var = 0.0;
    for (double v : g) mean += v;
    mean /= static_cast<double>(g.size());
    for (double v : g) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(g.size()));
    for (double& v : g) v = (v - mean) / (sd > 0 ? sd : 1.0);
    return g;
}

SynthScene synth_scene(std::mt19937_64& rng, const SceneParams& p, SkyKind kind, const KelvinGrid& window,
                       Timestamp t) {
    SynthScene s;
    s.kind = kind;

    AtmosphericParams& a = s.atmosphere;
    a.theta1 = uniform(rng, 218.0, 222.0);
    a.theta2 = uniform(rng, 600.0, 1000.0);
    a.theta4 = uniform(rng, 3.0, 5.0);
    a.theta3 = uniform(rng, 10.0, 20.0) * a.theta4;
    a.x0 = (p.rows - 1) / 2.0 + uniform(rng, -p.sun_jitter, p.sun_jitter);
    a.y0 = (p.cols - 1) / 2.0 + uniform(rng, -p.sun_jitter, p.sun_jitter);
    s.background = render_atmosphere(a, p.rows, p.cols);

    // Cloud fields live on a padded canvas so both frames of the pair can be
    // cropped from it with the configured translation between them.
    const int margin = std::max(std::abs(p.shift_rows), std::abs(p.shift_cols)) + 4;
    const int cr = p.rows + 2 * margin;
    const int cc = p.cols + 2 * margin;
    const KelvinGrid shape = smooth_noise(rng, cr, cc, p.shape_sigma);
    const KelvinGrid texture_raw = smooth_noise(rng, cr, cc, p.texture_sigma);
    KelvinGrid texture = map_grid(texture_raw, [](double v) { return 0.5 * (1.0 + std::erf(v / std::sqrt(2.0))); });

    double threshold = 0.0;
    if (kind == SkyKind::clear) {
        threshold = std::numeric_limits<double>::infinity();
    } else if (kind == SkyKind::overcast) {
        threshold = -std::numeric_limits<double>::infinity();
    } else {
        std::vector<double> visible;
        visible.reserve(static_cast<std::size_t>(p.rows) * p.cols);
        for (int i = 0; i < p.rows; ++i)
            for (int j = 0; j < p.cols; ++j) visible.push_back(shape(i + margin, j + margin));
        const double coverage = uniform(rng, p.coverage_min, p.coverage_max);
        threshold = quantile(visible, 1.0 - coverage);
    }

    auto excess = [&](int ci, int cj) {
        const double sv = shape(ci, cj);
        if (!(sv > threshold)) return 0.0;
        double edge = 1.0;
        if (p.boundary_ramp > 0.0 && std::isfinite(threshold))
            edge = std::clamp((sv - threshold) / p.boundary_ramp, 0.05, 1.0);
        return p.cloud_offset * (p.min_offset_fraction + (1.0 - p.min_offset_fraction) * texture(ci, cj)) * edge;
    };

    std::normal_distribution<double> noise(0.0, p.noise_sigma);
    KelvinGrid cur(p.rows, p.cols), prev(p.rows, p.cols);
    s.clouds = KelvinGrid(p.rows, p.cols);
    s.mask = LabelMask(p.rows, p.cols);
    for (int i = 0; i < p.rows; ++i)
        for (int j = 0; j < p.cols; ++j) {
            const double c = excess(i + margin, j + margin);
            s.clouds(i, j) = c;
            s.mask(i, j) = c > 0.0 ? 1 : 0;
            cur(i, j) = s.background(i, j) + c + window(i, j) + noise(rng);
        }
    for (int i = 0; i < p.rows; ++i)
        for (int j = 0; j < p.cols; ++j) {
            const double c = excess(i + margin + p.shift_rows, j + margin + p.shift_cols);
            prev(i, j) = s.background(i, j) + c + window(i, j) + noise(rng);
        }

    const double elevation = uniform(rng, 30.0, 70.0);
    const double azimuth = uniform(rng, 100.0, 260.0);
    s.frame = IRFrame::from_kelvin(cur);
    s.frame.timestamp = t;
    s.frame.sun_elevation = std::round(elevation * 100.0) / 100.0;
    s.frame.sun_azimuth = std::round(azimuth * 100.0) / 100.0;
    s.prev = IRFrame::from_kelvin(prev);
    s.prev.timestamp = t - p.sequence_step;
    s.prev.sun_elevation = s.frame.sun_elevation;
    s.prev.sun_azimuth = s.frame.sun_azimuth;
    return s;
}

SynthDataset synth_scenes(std::uint64_t seed, int n_train, int n_test, const SceneParams& p) {
    if (n_train < 0 || n_test < 0 || p.n_calib < 0) throw ConfigError("synth: counts must be non-negative");
    if (p.rows <= 0 || p.cols <= 0) throw ConfigError("synth: frame shape must be positive");
    std::mt19937_64 rng(seed);
    SynthDataset ds;
    ds.window = make_window(rng, p);

    Timestamp t = p.start;
    for (int k = 0; k < p.n_calib; ++k, t += p.frame_spacing)
        ds.calib.push_back(synth_scene(rng, p, SkyKind::clear, ds.window, t));

    auto kinds_for = [&](int n) {
        std::vector<SkyKind> kinds(static_cast<std::size_t>(n), SkyKind::partial);
        if (p.clear_and_overcast && n >= 3) {
            kinds[n / 2] = SkyKind::clear;
            kinds[n - 1] = SkyKind::overcast;
        }
        return kinds;
    };
    for (SkyKind kind : kinds_for(n_train)) {
        ds.train.push_back(synth_scene(rng, p, kind, ds.window, t));
        t += p.frame_spacing;
    }
    for (SkyKind kind : kinds_for(n_test)) {
        ds.test.push_back(synth_scene(rng, p, kind, ds.window, t));
        t += p.frame_spacing;
    }

    // Weather every 10 minutes covering every frame and its predecessor.
    const Timestamp first = p.start - p.sequence_step - 600;
    for (Timestamp w = first - (first % 600 + 600) % 600; w <= t + 600; w += 600)
        ds.weather.push_back(make_weather(rng, w));
    for (auto* split : {&ds.calib, &ds.train, &ds.test})
        for (auto& scene : *split) scene.weather = interpolate_weather(ds.weather, *scene.frame.timestamp);
    return ds;
}

std::vector<LoadedFrame> to_loaded_frames(const SynthDataset& ds) {
    std::vector<LoadedFrame> out;
    auto add = [&](const SynthScene& s, const std::string& name, Split split) {
        LoadedFrame f;
        f.name = name;
        f.frame = s.frame;
        f.weather = interpolate_weather(ds.weather, *s.frame.timestamp);
        f.split = split;
        f.clear_sky = s.kind == SkyKind::clear;
        if (split != Split::calib) {
            f.prev = s.prev;
            f.label = s.mask;
        }
        out.push_back(std::move(f));
    };
    for (std::size_t k = 0; k < ds.calib.size(); ++k) add(ds.calib[k], "calib_" + std::to_string(k), Split::calib);
    for (std::size_t k = 0; k < ds.train.size(); ++k) add(ds.train[k], "train_" + std::to_string(k), Split::train);
    for (std::size_t k = 0; k < ds.test.size(); ++k) add(ds.test[k], "test_" + std::to_string(k), Split::test);
    return out;
}

DatasetManifest synth_dataset(std::uint64_t seed, int n_train, int n_test, const SceneParams& params,
                              const std::filesystem::path& out_dir) {
    const SynthDataset ds = synth_scenes(seed, n_train, n_test, params);
    std::filesystem::create_directories(out_dir / "frames");
    std::filesystem::create_directories(out_dir / "labels");

    DatasetManifest m;
    m.base_dir = out_dir;
    save_weather(out_dir / "weather.csv", ds.weather);

    auto emit = [&](const SynthScene& s, const std::string& stem, Split split, bool labelled) {
        ManifestEntry e;
        e.frame = "frames/" + stem + ".frame";
        e.weather = "weather.csv";
        e.split = split;
        e.clear_sky = s.kind == SkyKind::clear;
        save_frame(out_dir / e.frame, s.frame);
        if (labelled) {
            e.label = "labels/" + stem + ".label";
            save_label(out_dir / *e.label, s.mask);
        }
        if (split != Split::calib) {
            e.prev_frame = "frames/" + stem + ".prev.frame";
            save_frame(out_dir / *e.prev_frame, s.prev);
        }
        m.entries.push_back(std::move(e));
    };
    auto stem = [](const char* prefix, std::size_t k) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s_%03zu", prefix, k);
        return std::string(buf);
    };
    for (std::size_t k = 0; k < ds.calib.size(); ++k) emit(ds.calib[k], stem("calib", k), Split::calib, false);
    for (std::size_t k = 0; k < ds.train.size(); ++k) emit(ds.train[k], stem("train", k), Split::train, true);
    for (std::size_t k = 0; k < ds.test.size(); ++k) emit(ds.test[k], stem("test", k), Split::test, true);
    save_manifest(out_dir / "manifest.csv", m);
    return m;
}

}  // namespace skyseg
