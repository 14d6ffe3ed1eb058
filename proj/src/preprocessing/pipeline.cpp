#include "skyseg/preprocessing/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "skyseg/core/error.hpp"
#include "skyseg/preprocessing/malr.hpp"

namespace skyseg {

namespace {

KelvinGrid heights(const KelvinGrid& t, double air_temp, double lapse) {
    return map_grid(t, [&](double v) { return pixel_height(v, air_temp, lapse); });
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    return v[mid];
}

double mean_of(const KelvinGrid& g) {
    double s = 0.0;
    for (double v : g) s += v;
    return s / static_cast<double>(g.size());
}

}  // namespace

Stage parse_stage(std::string_view name) {
    if (name == "raw") return Stage::raw;
    if (name == "window") return Stage::window;
    if (name == "atmosphere") return Stage::atmosphere;
    if (name == "all") return Stage::all;
    throw ConfigError("unknown stage \"" + std::string(name) + "\"");
}

std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::raw: return "raw";
        case Stage::window: return "window";
        case Stage::atmosphere: return "atmosphere";
        case Stage::all: return "all";
    }
    return "?";
}

KelvinGrid apply_window(const WindowModel& model, const KelvinGrid& t) { return model.apply(t); }

Preprocessor::Preprocessor(int rows, int cols, PreprocessOptions options)
    : options_(options), window_(rows, cols, options.window_capacity) {}

void Preprocessor::observe_clear_sky(const IRFrame& frame) {
    const KelvinGrid t = frame.kelvin();
    const KelvinGrid t_prime = window_.apply(t);
    AtmosphereFitOptions fo;
    fo.initial = reference_;
    if (options_.sun_track_radius >= 0.0) fo.sun_radius = options_.sun_track_radius;
    if (options_.sun_core_max >= 0.0) fo.max_core = options_.sun_core_max;
    AtmosphereFit fit = fit_atmosphere(t_prime, (t.rows() - 1) / 2.0, (t.cols() - 1) / 2.0, fo);
    if (fo.initial) {
        AtmosphereFitOptions fresh_options = fo;
        fresh_options.initial.reset();
        AtmosphereFit fresh = fit_atmosphere(t_prime, (t.rows() - 1) / 2.0, (t.cols() - 1) / 2.0, fresh_options);
        if (fresh.cost < fit.cost) fit = std::move(fresh);
    }
    KelvinGrid residual = render_atmosphere(fit.params, t.rows(), t.cols());
    for (std::size_t k = 0; k < residual.size(); ++k) residual[k] = t[k] - residual[k];
    window_.update(residual);
    reference_ = fit.params;
    last_ = fit.params;
}

AtmosphereFit Preprocessor::robust_fit(const KelvinGrid& t_prime, double& kept_fraction) const {
    // Clouds only ever add warmth, so the clear sky sits on the cool side of
    // the residuals. The first round keeps the cooler part of the frame; later
    // rounds keep every pixel within max(floor, k * robust sigma) above the
    // centre of the kept residuals.
    LabelMask use(t_prime.rows(), t_prime.cols(), 1);
    AtmosphereFitOptions fo;
    fo.initial = last_ ? last_ : reference_;
    if (options_.sun_track_radius >= 0.0) fo.sun_radius = options_.sun_track_radius;
    if (options_.sun_core_max >= 0.0) fo.max_core = options_.sun_core_max;
    AtmosphereFit fit;
    const int rounds = std::max(1, options_.robust_rounds) + (fo.initial ? 1 : 0);
    for (int round = 0; round < rounds; ++round) {
        const double sun_row = (t_prime.rows() - 1) / 2.0;
        const double sun_col = (t_prime.cols() - 1) / 2.0;
        if (round == 0 && fo.initial) {
            // Rank pixels against the warm start before fitting, so clouds
            // never enter the first fit.
            fit.params = *fo.initial;
        } else {
            fit = fit_atmosphere(t_prime, sun_row, sun_col, fo, &use);
            fo.initial = fit.params;
        }

        KelvinGrid r(t_prime.rows(), t_prime.cols());
        std::vector<double> residuals;
        residuals.reserve(t_prime.size());
        for (int i = 0; i < t_prime.rows(); ++i)
            for (int j = 0; j < t_prime.cols(); ++j) {
                r(i, j) = t_prime(i, j) - fit.params(i, j);
                if (use(i, j)) residuals.push_back(r(i, j));
            }
        double cut = 0.0;
        if (round == 0) {
            std::sort(residuals.begin(), residuals.end());
            const auto q = static_cast<std::size_t>(options_.initial_keep_fraction * (residuals.size() - 1));
            cut = residuals[q];
        } else {
            const double med = median_of(residuals);
            for (double& v : residuals) v = std::abs(v - med);
            const double sigma = 1.4826 * median_of(residuals);
            cut = med + std::max(options_.robust_floor_k, options_.robust_k * sigma);
        }

        // The circumsolar peak is as warm as a cloud; excluding it would leave
        // the direct term unconstrained, so pixels the fitted Sun dominates
        // are always kept.
        LabelMask next(t_prime.rows(), t_prime.cols());
        std::size_t kept = 0;
        const double radius = options_.sun_protect_cores * fit.params.theta4;
        const double radius2 = radius * radius;
        for (int i = 0; i < t_prime.rows(); ++i)
            for (int j = 0; j < t_prime.cols(); ++j) {
                const double di = i - fit.params.x0;
                const double dj = j - fit.params.y0;
                const bool sun = di * di + dj * dj <= radius2;
                next(i, j) = r(i, j) <= cut || sun ? 1 : 0;
                kept += next(i, j);
            }
        if (kept < 16) break;  // too few pixels left to refit
        const bool same = next == use;
        use = std::move(next);
        if (same) break;
    }
    std::size_t kept = 0;
    for (auto v : use) kept += v;
    kept_fraction = static_cast<double>(kept) / static_cast<double>(use.size());
    return fit;
}

DerivedFrame Preprocessor::process(const IRFrame& frame, const WeatherRecord& weather, const IRFrame* prev,
                                   Stage stage) {
    DerivedFrame d;
    d.t = frame.kelvin();
    d.lapse_rate = malr_rate(weather.air_temp, weather.dew_point, weather.pressure);
    d.h = heights(d.t, weather.air_temp, d.lapse_rate);
    if (stage == Stage::raw) return d;

    d.t_prime = window_.apply(d.t);
    d.h_prime = heights(d.t_prime, weather.air_temp, d.lapse_rate);
    if (stage == Stage::window) return d;

    double kept = 1.0;
    AtmosphereFit fit = robust_fit(d.t_prime, kept);
    AtmosphericParams params = fit.params;
    if (reference_) {
        const KelvinGrid fitted = render_atmosphere(params, d.rows(), d.cols());
        const KelvinGrid ref = render_atmosphere(*reference_, d.rows(), d.cols());
        if (mean_of(fitted) - mean_of(ref) > options_.overcast_shift_k || kept < options_.min_kept_fraction) {
            params = *reference_;
            d.atmosphere_from_reference = true;
        }
    }
    if (!d.atmosphere_from_reference) last_ = params;
    d.atmosphere = params;

    const AtmosphereRemoval removal = remove_atmosphere(d.t_prime, params);
    d.delta_t = removal.delta_t;
    d.tropopause_temp = removal.tropopause_temp;
    d.h_double_prime = map_grid(d.delta_t, [&](double v) { return std::abs(v) / d.lapse_rate; });
    d.intensity = normalize8(d.delta_t);
    if (stage == Stage::atmosphere) return d;

    if (prev == nullptr) throw ConfigError("velocity channel requires the previous frame");
    if (prev->rows() != frame.rows() || prev->cols() != frame.cols())
        throw DataError("previous frame shape differs from frame shape");
    const KelvinGrid prev_t_prime = window_.apply(prev->kelvin());
    // Same zero level as the current frame so that the intensities are comparable.
    const double zero = *std::min_element(d.delta_t.begin(), d.delta_t.end());
    const IntensityGrid prev_i8 = normalize8(remove_atmosphere(prev_t_prime, params).delta_t, zero);
    d.velocity = optical_flow(prev_i8, d.intensity, options_.flow);
    return d;
}

std::vector<ProcessedFrame> preprocess_dataset(std::span<const LoadedFrame> frames, Stage stage,
                                               const PreprocessOptions& options) {
    std::vector<ProcessedFrame> out;
    if (frames.empty()) return out;
    Preprocessor pre(frames.front().frame.centi_kelvin.rows(), frames.front().frame.centi_kelvin.cols(), options);
    for (const auto& f : frames) {
        if (f.split == Split::calib) {
            pre.observe_clear_sky(f.frame);
            continue;
        }
        if (stage == Stage::all && !f.prev)
            throw DataError(f.name + ": velocity features need a previous frame (prev_frame column)");
        ProcessedFrame p;
        p.name = f.name;
        p.split = f.split;
        p.clear_sky = f.clear_sky;
        p.label = f.label;
        p.derived = pre.process(f.frame, f.weather, f.prev ? &*f.prev : nullptr, stage);
        if (f.clear_sky) pre.observe_clear_sky(f.frame);
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace skyseg
