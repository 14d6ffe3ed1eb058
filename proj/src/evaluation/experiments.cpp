#include "skyseg/evaluation/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <ostream>
#include <thread>

#include "skyseg/core/error.hpp"
#include "skyseg/models/decision.hpp"

namespace skyseg {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
}

std::vector<double> sorted_unique(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

template <class F>
void parallel_for(std::size_t n, int threads, F&& body) {
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) body(i);
        });
}

}  // namespace

FeatureFrame features_for(const ProcessedFrame& frame, const FeatureSpec& spec) {
    FeatureFrame f = extract(frame.derived, spec);
    f.labels = frame.label;
    return f;
}

std::vector<FeatureFrame> features_for(std::span<const ProcessedFrame> frames, const FeatureSpec& spec) {
    std::vector<FeatureFrame> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(features_for(f, spec));
    return out;
}

// --- reports -------------------------------------------------------------------

ImageEval evaluate_image(std::string name, const LabelMask& predicted, const LabelMask& truth, double seconds) {
    ImageEval e;
    e.name = std::move(name);
    e.cm = confusion(predicted, truth);
    e.sensitivity = sensitivity(e.cm);
    e.specificity = specificity(e.cm);
    e.j = j_stat(e.cm);
    e.accuracy = accuracy(e.cm);
    e.seconds = seconds;
    return e;
}

EvalReport summarize(std::string model, std::vector<ImageEval> images, double train_time_s) {
    EvalReport r;
    r.model = std::move(model);
    r.train_time_s = train_time_s;
    double jsum = 0.0, tsum = 0.0;
    for (const auto& e : images) {
        r.pooled += e.cm;
        jsum += e.j;
        tsum += e.seconds;
    }
    r.images = std::move(images);
    r.sensitivity = sensitivity(r.pooled);
    r.specificity = specificity(r.pooled);
    r.j = j_stat(r.pooled);
    r.accuracy = accuracy(r.pooled);
    if (!r.images.empty()) {
        r.mean_image_j = jsum / static_cast<double>(r.images.size());
        r.test_time_s_per_image = tsum / static_cast<double>(r.images.size());
    }
    return r;
}

EvalReport evaluate(const Segmenter& model, std::span<const FeatureFrame> frames, std::span<const std::string> names,
                    std::string model_name, double train_time_s) {
    if (!names.empty() && names.size() != frames.size()) throw DataError("evaluate: name count mismatch");
    std::vector<ImageEval> images;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        if (!frames[k].labels) throw DataError("evaluate: test frame without labels");
        const auto t0 = Clock::now();
        const LabelMask pred = model.segment(frames[k]);
        const auto t1 = Clock::now();
        images.push_back(evaluate_image(names.empty() ? "image_" + std::to_string(k) : names[k], pred,
                                        *frames[k].labels, seconds_between(t0, t1)));
    }
    return summarize(std::move(model_name), std::move(images), train_time_s);
}

void write_report_csv(std::ostream& out, std::span<const EvalReport> reports) {
    out << "model,image,tp,fp,tn,fn,sensitivity,specificity,j,accuracy,seconds\n";
    for (const auto& r : reports) {
        for (const auto& e : r.images)
            out << r.model << ',' << e.name << ',' << e.cm.tp << ',' << e.cm.fp << ',' << e.cm.tn << ',' << e.cm.fn
                << ',' << e.sensitivity << ',' << e.specificity << ',' << e.j << ',' << e.accuracy << ','
                << e.seconds << '\n';
        out << r.model << ",ALL," << r.pooled.tp << ',' << r.pooled.fp << ',' << r.pooled.tn << ',' << r.pooled.fn
            << ',' << r.sensitivity << ',' << r.specificity << ',' << r.j << ',' << r.accuracy << ','
            << r.test_time_s_per_image << '\n';
    }
}

void write_plot_data(std::ostream& out, std::span<const EvalReport> reports) {
    out << "model,j,sensitivity,specificity,test_ms_per_image,train_s\n";
    for (const auto& r : reports)
        out << r.model << ',' << r.j << ',' << r.sensitivity << ',' << r.specificity << ','
            << r.test_time_s_per_image * 1e3 << ',' << r.train_time_s << '\n';
}

// --- cross-validation ----------------------------------------------------------

std::vector<ModelConfig> GridSpec::expand() const {
    const ModelFamily fam = base.family;
    auto or_base = [](const std::vector<double>& v, double b, bool relevant) {
        return relevant && !v.empty() ? sorted_unique(v) : std::vector<double>{b};
    };
    const bool uses_gamma = fam == ModelFamily::gda || fam == ModelFamily::gmm || fam == ModelFamily::mrf ||
                            fam == ModelFamily::icm_mrf || fam == ModelFamily::rrc || fam == ModelFamily::gpc;
    const bool uses_poly = fam == ModelFamily::rrc || fam == ModelFamily::svc || fam == ModelFamily::gpc;
    const std::vector<double> g = or_base(gammas, base.gamma, uses_gamma);
    const std::vector<double> c = or_base(cs, base.c, fam == ModelFamily::svc);
    const std::vector<double> b = or_base(betas, base.beta, is_mrf(fam));
    const std::vector<double> a =
        or_base(alphas, base.schedule.alpha, is_mrf(fam) && base.inference == MrfInference::sa);
    std::vector<int> p = uses_poly && !poly_orders.empty() ? poly_orders : std::vector<int>{base.poly_order};
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
    const std::vector<FeatureSpec> fs = features.empty() ? std::vector<FeatureSpec>{base.features} : features;

    std::vector<ModelConfig> out;
    for (const auto& f : fs)
        for (const int po : p)
            for (const double gv : g)
                for (const double cv : c)
                    for (const double bv : b)
                        for (const double av : a) {
                            ModelConfig m = base;
                            m.features = f;
                            m.poly_order = po;
                            m.gamma = gv;
                            m.c = cv;
                            m.beta = bv;
                            m.schedule.alpha = av;
                            out.push_back(m);
                        }
    return out;
}

std::vector<double> GridSpec::lambda_grid() const {
    return lambdas.empty() ? default_lambda_grid() : sorted_unique(lambdas);
}

CvResult loo_cross_validate(std::span<const ProcessedFrame> train, const GridSpec& grid, int threads) {
    if (train.size() < 2) throw DataError("cross-validation needs at least 2 training images");
    for (const auto& f : train)
        if (!f.label) throw DataError("cross-validation: training image " + f.name + " has no label");
    const std::vector<ModelConfig> configs = grid.expand();
    const std::vector<double> lambdas = grid.lambda_grid();
    if (configs.empty() || lambdas.empty()) throw ConfigError("cross-validation: empty grid");

    // Features are shared by every configuration with the same spec.
    std::vector<FeatureSpec> specs;
    std::vector<std::size_t> spec_of(configs.size());
    for (std::size_t c = 0; c < configs.size(); ++c) {
        auto it = std::find(specs.begin(), specs.end(), configs[c].features);
        if (it == specs.end()) {
            specs.push_back(configs[c].features);
            it = specs.end() - 1;
        }
        spec_of[c] = static_cast<std::size_t>(it - specs.begin());
    }
    std::vector<std::vector<FeatureFrame>> features;
    for (const auto& s : specs) features.push_back(features_for(train, s));

    const std::size_t folds = train.size();
    struct Slot {
        std::vector<double> j;  // per lambda
        std::string error;
    };
    std::vector<Slot> slots(configs.size() * folds);
    parallel_for(slots.size(), threads, [&](std::size_t job) {
        const std::size_t c = job / folds;
        const std::size_t held = job % folds;
        const std::vector<FeatureFrame>& all = features[spec_of[c]];
        std::vector<FeatureFrame> fit_set;
        for (std::size_t k = 0; k < folds; ++k)
            if (k != held) fit_set.push_back(all[k]);
        Slot& slot = slots[job];
        try {
            const auto model = train_segmenter(configs[c], fit_set);
            const FeatureFrame& val = all[held];
            if (is_mrf(configs[c].family)) {
                for (const double l : lambdas) slot.j.push_back(j_stat(confusion(model->segment(val, l), *val.labels)));
            } else {
                const Eigen::VectorXd p = model->probabilities(val);
                const std::vector<ConfusionMatrix> cms =
                    lambda_sweep(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
                                 val.labels->values(), lambdas);
                for (const auto& cm : cms) slot.j.push_back(j_stat(cm));
            }
        } catch (const Error& e) {
            slot.error = e.what();
            slot.j.clear();
        }
    });

    CvResult result;
    result.folds = static_cast<int>(folds);
    bool have_best = false;
    for (std::size_t c = 0; c < configs.size(); ++c) {
        std::string error;
        for (std::size_t f = 0; f < folds; ++f)
            if (!slots[c * folds + f].error.empty() && error.empty())
                error = "fold " + std::to_string(f) + ": " + slots[c * folds + f].error;
        for (std::size_t l = 0; l < lambdas.size(); ++l) {
            CvEntry e;
            e.config = configs[c];
            e.config.lambda = lambdas[l];
            e.valid = error.empty();
            e.error = error;
            if (e.valid) {
                double sum = 0.0;
                for (std::size_t f = 0; f < folds; ++f) {
                    e.fold_j.push_back(slots[c * folds + f].j[l]);
                    sum += e.fold_j.back();
                }
                e.mean_j = sum / static_cast<double>(folds);
                if (!have_best || e.mean_j > result.best.mean_j) {
                    result.best = e;
                    have_best = true;
                }
            }
            result.table.push_back(std::move(e));
        }
    }
    if (!have_best) throw ConvergenceError("cross-validation: every configuration failed; first error: " +
                                           result.table.front().error);
    return result;
}

void write_cv_csv(std::ostream& out, const CvResult& result) {
    out << "family,features,gamma,c,beta,alpha,poly_order,lambda,mean_j,valid";
    for (int f = 0; f < result.folds; ++f) out << ",fold" << f;
    out << '\n';
    for (const auto& e : result.table) {
        const ModelConfig& c = e.config;
        out << to_string(c.family) << ',' << to_string(c.features) << ',' << c.gamma << ',' << c.c << ',' << c.beta
            << ',' << c.schedule.alpha << ',' << c.poly_order << ',' << c.lambda << ',' << e.mean_j << ','
            << (e.valid ? 1 : 0);
        for (int f = 0; f < result.folds; ++f)
            out << ',' << (e.valid ? e.fold_j[static_cast<std::size_t>(f)] : 0.0);
        out << '\n';
    }
}

// --- timing --------------------------------------------------------------------

TimingStats timing_stats(std::vector<double> seconds) {
    TimingStats s;
    s.samples = seconds.size();
    if (seconds.empty()) return s;
    double sum = 0.0;
    for (const double v : seconds) sum += v;
    s.mean_s = sum / static_cast<double>(seconds.size());
    std::sort(seconds.begin(), seconds.end());
    const std::size_t n = seconds.size();
    s.median_s = n % 2 ? seconds[n / 2] : 0.5 * (seconds[n / 2 - 1] + seconds[n / 2]);
    return s;
}

BenchmarkReport benchmark(const Segmenter& model, std::span<const LoadedFrame> dataset, int repetitions,
                          const PreprocessOptions& options) {
    if (repetitions < 1) throw ConfigError("benchmark: repetitions must be at least 1");
    if (dataset.empty()) throw DataError("benchmark: empty dataset");
    const Stage stage = model.config().features.required_stage();
    const bool has_test = std::any_of(dataset.begin(), dataset.end(), [](const LoadedFrame& f) {
        return f.split == Split::test;
    });

    // Clear-sky state as of the first timed frame, restored for every pass.
    Preprocessor initial(dataset.front().frame.centi_kelvin.rows(), dataset.front().frame.centi_kelvin.cols(), options);
    std::vector<const LoadedFrame*> timed;
    bool started = false;
    for (const auto& f : dataset) {
        const bool is_timed = has_test ? f.split == Split::test : f.split != Split::calib;
        if (is_timed) {
            timed.push_back(&f);
            started = true;
        } else if (!started && (f.split == Split::calib || f.clear_sky)) {
            initial.observe_clear_sky(f.frame);
        }
    }
    if (timed.empty()) throw DataError("benchmark: no frames to time");

    std::vector<double> pre, seg, tot;
    for (int rep = 0; rep <= repetitions; ++rep) {
        Preprocessor p = initial;
        for (const LoadedFrame* f : timed) {
            const auto t0 = Clock::now();
            const DerivedFrame d = p.process(f->frame, f->weather, f->prev ? &*f->prev : nullptr, stage);
            const FeatureFrame x = extract(d, model.config().features);
            const auto t1 = Clock::now();
            const LabelMask mask = model.segment(x);
            const auto t2 = Clock::now();
            if (f->clear_sky) p.observe_clear_sky(f->frame);
            if (rep == 0) continue;  // warm-up
            pre.push_back(seconds_between(t0, t1));
            seg.push_back(seconds_between(t1, t2));
            tot.push_back(seconds_between(t0, t2));
        }
    }
    BenchmarkReport r;
    r.model = std::string(to_string(model.config().family));
    r.preprocessing = timing_stats(std::move(pre));
    r.segmentation = timing_stats(std::move(seg));
    r.total = timing_stats(std::move(tot));
    r.images = static_cast<int>(timed.size());
    r.repetitions = repetitions;
    return r;
}

TimingStats time_segmentation(const Segmenter& model, std::span<const FeatureFrame> frames, int repetitions) {
    if (repetitions < 1) throw ConfigError("timing: repetitions must be at least 1");
    std::vector<double> samples;
    for (int rep = 0; rep <= repetitions; ++rep) {
        for (const auto& f : frames) {
            const auto t0 = Clock::now();
            const LabelMask mask = model.segment(f);
            const auto t1 = Clock::now();
            if (rep > 0) samples.push_back(seconds_between(t0, t1));
        }
    }
    return timing_stats(std::move(samples));
}

void write_benchmark_csv(std::ostream& out, std::span<const BenchmarkReport> reports) {
    out << "model,images,repetitions,preprocess_median_ms,preprocess_mean_ms,segment_median_ms,segment_mean_ms,"
           "total_median_ms,total_mean_ms\n";
    for (const auto& r : reports)
        out << r.model << ',' << r.images << ',' << r.repetitions << ',' << r.preprocessing.median_s * 1e3 << ','
            << r.preprocessing.mean_s * 1e3 << ',' << r.segmentation.median_s * 1e3 << ','
            << r.segmentation.mean_s * 1e3 << ',' << r.total.median_s * 1e3 << ',' << r.total.mean_s * 1e3 << '\n';
}

// --- voting ----------------------------------------------------------------------

VoteResult vote(std::span<const Segmenter* const> members, std::span<const FeatureFrame> frames) {
    if (members.empty()) throw ConfigError("vote: no members");
    if (members.size() != frames.size()) throw ConfigError("vote: one feature frame per member is required");
    const int rows = frames.front().rows;
    const int cols = frames.front().cols;
    Eigen::VectorXd votes = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows) * cols);
    for (std::size_t m = 0; m < members.size(); ++m) {
        const FeatureFrame& f = frames[m];
        if (f.rows != rows || f.cols != cols) throw ConfigError("vote: member frames have different shapes");
        if (f.dim() != members[m]->config().features.dim())
            throw ConfigError("vote: member " + std::to_string(m) + " (" +
                              std::string(to_string(members[m]->config().family)) + ") expects features " +
                              to_string(members[m]->config().features));
        const LabelMask mask = members[m]->segment(f);
        for (std::size_t k = 0; k < mask.size(); ++k) votes[static_cast<Eigen::Index>(k)] += mask[k];
    }
    VoteResult r;
    const double n = static_cast<double>(members.size());
    r.probability = votes / n;
    r.mask = LabelMask(rows, cols);
    for (std::size_t k = 0; k < r.mask.size(); ++k) r.mask[k] = 2.0 * votes[static_cast<Eigen::Index>(k)] >= n ? 1 : 0;
    return r;
}

}  // namespace skyseg
