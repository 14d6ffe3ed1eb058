#include "skyseg/models/segmenter.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "skyseg/core/error.hpp"
#include "skyseg/discriminative/linear.hpp"
#include "skyseg/generative/clustering.hpp"
#include "skyseg/generative/discriminant.hpp"
#include "skyseg/models/decision.hpp"

namespace skyseg {

namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kMagic = "skyseg-model";

// --- text serialization helpers -------------------------------------------

void put_vector(std::ostream& out, std::string_view key, const Eigen::VectorXd& v) {
    out << key << ' ' << v.size();
    for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << v[i];
    out << '\n';
}

void put_matrix(std::ostream& out, std::string_view key, const Eigen::MatrixXd& m) {
    out << key << ' ' << m.rows() << ' ' << m.cols();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << ' ' << m(i, j);
    out << '\n';
}

void expect_key(std::istream& in, std::string_view key) {
    std::string got;
    if (!(in >> got) || got != key)
        throw ParseError("model file: expected \"" + std::string(key) + "\", found \"" + got + "\"");
}

template <class T>
T get_value(std::istream& in, std::string_view key) {
    expect_key(in, key);
    T v{};
    if (!(in >> v)) throw ParseError("model file: bad value for \"" + std::string(key) + "\"");
    return v;
}

std::string get_word(std::istream& in, std::string_view key) { return get_value<std::string>(in, key); }

Eigen::VectorXd get_vector(std::istream& in, std::string_view key) {
    const auto n = get_value<Eigen::Index>(in, key);
    if (n < 0 || n > 1'000'000) throw ParseError("model file: bad length for \"" + std::string(key) + "\"");
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(in >> v[i])) throw ParseError("model file: truncated \"" + std::string(key) + "\"");
    return v;
}

Eigen::MatrixXd get_matrix(std::istream& in, std::string_view key) {
    expect_key(in, key);
    Eigen::Index r = 0, c = 0;
    if (!(in >> r >> c) || r < 0 || c < 0 || r * c > 10'000'000)
        throw ParseError("model file: bad shape for \"" + std::string(key) + "\"");
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j)
            if (!(in >> m(i, j))) throw ParseError("model file: truncated \"" + std::string(key) + "\"");
    return m;
}

void put_gaussian(std::ostream& out, std::string_view prefix, const GaussianClass& g) {
    put_vector(out, std::string(prefix) + "_mean", g.mean());
    put_matrix(out, std::string(prefix) + "_cov", g.covariance());
    out << prefix << "_prior " << g.prior() << '\n';
}

GaussianClass get_gaussian(std::istream& in, std::string_view prefix) {
    Eigen::VectorXd mean = get_vector(in, std::string(prefix) + "_mean");
    Eigen::MatrixXd cov = get_matrix(in, std::string(prefix) + "_cov");
    const auto prior = get_value<double>(in, std::string(prefix) + "_prior");
    return GaussianClass(std::move(mean), std::move(cov), prior);
}

// --- families ---------------------------------------------------------------

class DiscriminantSegmenter final : public Segmenter {
public:
    using Segmenter::Segmenter;

protected:
    void fit_impl(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y, std::span<const FeatureFrame>) override {
        model_ = config_.family == ModelFamily::nbc ? fit_nbc(x, y) : fit_gda(x, y, config_.gamma);
    }
    Eigen::VectorXd probabilities_impl(const FeatureFrame& f) const override { return model_.posterior_rows(f.data); }
    void save_params(std::ostream& out) const override {
        out << "covariance " << to_string(model_.kind()) << '\n';
        put_gaussian(out, "clear", model_.clear());
        put_gaussian(out, "cloud", model_.cloud());
    }
    void load_params(std::istream& in) override {
        const CovarianceKind kind = parse_covariance_kind(get_word(in, "covariance"));
        GaussianClass clear = get_gaussian(in, "clear");
        GaussianClass cloud = get_gaussian(in, "cloud");
        model_ = GaussianDiscriminant({std::move(clear), std::move(cloud)}, kind, config_.gamma);
    }

private:
    GaussianDiscriminant model_;
};

class KMeansSegmenter final : public Segmenter {
public:
    using Segmenter::Segmenter;

protected:
    void fit_impl(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y, std::span<const FeatureFrame>) override {
        const KMeansResult km = fit_kmeans(x, 2, config_.seed);
        const int cloud = y.empty() ? cloud_cluster_by_temperature(km.centroids, config_.features.temperature_index())
                                    : cloud_cluster_by_overlap(km.assignment, y);
        clear_ = km.centroids.row(1 - cloud).transpose();
        cloud_ = km.centroids.row(cloud).transpose();
    }
    bool needs_labels() const override { return false; }
    // Posterior of the identity-covariance, equal-prior mixture the centroids
    // describe; it crosses 1/2 exactly on the k-means boundary.
    Eigen::VectorXd probabilities_impl(const FeatureFrame& f) const override {
        const Eigen::VectorXd d0 = (f.data.rowwise() - clear_.transpose()).rowwise().squaredNorm();
        const Eigen::VectorXd d1 = (f.data.rowwise() - cloud_.transpose()).rowwise().squaredNorm();
        Eigen::VectorXd p(d0.size());
        for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = sigmoid(0.5 * (d0[i] - d1[i]));
        return p;
    }
    void save_params(std::ostream& out) const override {
        put_vector(out, "clear_centroid", clear_);
        put_vector(out, "cloud_centroid", cloud_);
    }
    void load_params(std::istream& in) override {
        clear_ = get_vector(in, "clear_centroid");
        cloud_ = get_vector(in, "cloud_centroid");
    }

private:
    Eigen::VectorXd clear_, cloud_;
};

class GmmSegmenter final : public Segmenter {
public:
    using Segmenter::Segmenter;

protected:
    void fit_impl(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y, std::span<const FeatureFrame>) override {
        MixtureModel mm = fit_gmm(x, 2, config_.gamma, config_.seed);
        int cloud = 0;
        if (y.empty()) {
            Eigen::MatrixXd means(2, x.cols());
            means.row(0) = mm.components[0].mean().transpose();
            means.row(1) = mm.components[1].mean().transpose();
            cloud = cloud_cluster_by_temperature(means, config_.features.temperature_index());
        } else {
            const Eigen::MatrixXd r = mm.responsibilities(x);
            std::vector<int> hard(static_cast<std::size_t>(x.rows()));
            for (Eigen::Index i = 0; i < x.rows(); ++i) hard[static_cast<std::size_t>(i)] = r(i, 1) > r(i, 0) ? 1 : 0;
            cloud = cloud_cluster_by_overlap(hard, y);
        }
        mixture_ = std::move(mm);
        cloud_ = cloud;
    }
    bool needs_labels() const override { return false; }
    Eigen::VectorXd probabilities_impl(const FeatureFrame& f) const override {
        return mixture_.responsibilities(f.data).col(cloud_);
    }
    void save_params(std::ostream& out) const override {
        out << "cloud_component " << cloud_ << '\n';
        put_gaussian(out, "component0", mixture_.components.at(0));
        put_gaussian(out, "component1", mixture_.components.at(1));
    }
    void load_params(std::istream& in) override {
        cloud_ = get_value<int>(in, "cloud_component");
        if (cloud_ != 0 && cloud_ != 1) throw ParseError("model file: cloud_component must be 0 or 1");
        mixture_.components.clear();
        mixture_.components.push_back(get_gaussian(in, "component0"));
        mixture_.components.push_back(get_gaussian(in, "component1"));
        mixture_.gamma = config_.gamma;
    }

private:
    MixtureModel mixture_;
    int cloud_ = 1;
};

std::optional<AnnealSchedule> schedule_for(const ModelConfig& c) {
    if (c.inference == MrfInference::sa) return c.schedule;
    return std::nullopt;
}

class MrfSegmenter final : public Segmenter {
public:
    using Segmenter::Segmenter;

protected:
    void fit_impl(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y, std::span<const FeatureFrame>) override {
        model_ = fit_mrf_supervised(x, y, config_.gamma, config_.beta, config_.cliques);
    }
    Eigen::VectorXd probabilities_impl(const FeatureFrame& f) const override {
        const LabelMask labels = segment_impl(f, 1.0);
        return conditional_posterior(labels, unary_terms(model_, f.data), model_);
    }
    LabelMask segment_impl(const FeatureFrame& f, double lambda) const override {
        return segment_mrf(model_, f.data, f.rows, f.cols, config_.inference, schedule_for(config_),
                           lambda_log_odds_threshold(lambda));
    }
    void save_params(std::ostream& out) const override {
        put_gaussian(out, "clear", model_.classes[0]);
        put_gaussian(out, "cloud", model_.classes[1]);
    }
    void load_params(std::istream& in) override {
        model_.classes[0] = get_gaussian(in, "clear");
        model_.classes[1] = get_gaussian(in, "cloud");
        model_.beta = config_.beta;
        model_.order = config_.cliques;
        model_.gamma = config_.gamma;
    }

private:
    MrfModel model_;
};

// Unsupervised: class parameters are inferred on each frame at segmentation
// time. With labelled training data, training also fits reference class
// models that decide which cluster is cloud; a frame where both clusters look
// alike to the reference is labelled uniformly (all clear or all cloud).
// Without labels the warmer cluster is cloud.
class IcmMrfSegmenter final : public Segmenter {
public:
    using Segmenter::Segmenter;

protected:
    void fit_impl(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y, std::span<const FeatureFrame>) override {
        reference_.reset();
        if (!y.empty()) reference_ = fit_mrf_supervised(x, y, config_.gamma, 0.0, config_.cliques);
    }
    bool needs_labels() const override { return false; }
    Eigen::VectorXd probabilities_impl(const FeatureFrame& f) const override {
        const UnsupervisedMrf r = run(f, 1.0);
        const auto map = cluster_map(r, f, 1.0);
        if (map[0] == map[1] || r.collapses < 0) return Eigen::VectorXd::Constant(f.data.rows(), map[0]);
        const Eigen::VectorXd p = conditional_posterior(r.mask, unary_terms(r.model, f.data), r.model);
        return map[1] == 1 ? p : Eigen::VectorXd(1.0 - p.array());
    }
    LabelMask segment_impl(const FeatureFrame& f, double lambda) const override {
        UnsupervisedMrf r = run(f, lambda);
        const auto map = cluster_map(r, f, lambda);
        for (auto& v : r.mask.values()) v = map[v];
        return r.mask;
    }
    void save_params(std::ostream& out) const override {
        out << "reference " << (reference_ ? 1 : 0) << '\n';
        if (reference_) {
            put_gaussian(out, "clear", reference_->classes[0]);
            put_gaussian(out, "cloud", reference_->classes[1]);
        }
    }
    void load_params(std::istream& in) override {
        reference_.reset();
        if (get_value<int>(in, "reference") == 0) return;
        MrfModel m;
        m.classes[0] = get_gaussian(in, "clear");
        m.classes[1] = get_gaussian(in, "cloud");
        m.beta = 0.0;
        m.order = config_.cliques;
        m.gamma = config_.gamma;
        reference_ = std::move(m);
    }

private:
    // A frame holding a single class makes the unsupervised fit collapse.
    // With a reference model the whole frame then becomes one cluster
    // (marked by collapses = -1) and takes the reference's majority label.
    UnsupervisedMrf run(const FeatureFrame& f, double lambda) const {
        UnsupervisedOptions options;
        options.gamma = config_.gamma;
        options.schedule = schedule_for(config_);
        options.bias = lambda_log_odds_threshold(lambda);
        try {
            return fit_icm_unsupervised(f.data, f.rows, f.cols, config_.beta, config_.cliques, config_.seed,
                                        config_.features.temperature_index(), options);
        } catch (const ConvergenceError&) {
            if (!reference_) throw;
            UnsupervisedMrf single;
            single.mask = LabelMask(f.rows, f.cols, 0);
            single.collapses = -1;
            return single;
        }
    }

    // Output label of each cluster: the majority pixelwise decision of the
    // reference model over the cluster's pixels.
    std::array<std::uint8_t, 2> cluster_map(const UnsupervisedMrf& r, const FeatureFrame& f, double lambda) const {
        if (!reference_) return {0, 1};
        const Eigen::MatrixXd u = unary_terms(*reference_, f.data);
        const double bias = lambda_log_odds_threshold(lambda);
        long cloud[2] = {0, 0}, total[2] = {0, 0};
        const auto labels = r.mask.values();
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const auto k = labels[i];
            const auto row = static_cast<Eigen::Index>(i);
            ++total[k];
            if (u(row, 1) - u(row, 0) + bias <= 0.0) ++cloud[k];
        }
        std::array<std::uint8_t, 2> map{};
        for (int k = 0; k < 2; ++k) map[k] = 2 * cloud[k] >= total[k] && total[k] > 0 ? 1 : 0;
        // An empty cluster keeps its unsupervised meaning.
        for (int k = 0; k < 2; ++k)
            if (total[k] == 0) map[k] = static_cast<std::uint8_t>(k);
        return map;
    }

    std::optional<MrfModel> reference_;
};

class LinearSegmenter final : public Segmenter {
public:
    using Segmenter::Segmenter;

protected:
    void fit_impl(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y, std::span<const FeatureFrame>) override {
        const PolyMap map(static_cast<int>(x.cols()), config_.poly_order);
        const Eigen::MatrixXd phi = map.expand(x);
        switch (config_.family) {
            case ModelFamily::rrc: model_ = fit_rrc(phi, y, config_.gamma); break;
            case ModelFamily::svc: model_ = fit_svc(phi, y, config_.c); break;
            default:
                model_ = config_.gpc_evidence ? fit_gpc_evidence(phi, y, config_.gamma) : fit_gpc(phi, y, config_.gamma);
                break;
        }
        model_.map = map;
    }
    Eigen::VectorXd probabilities_impl(const FeatureFrame& f) const override { return model_.probabilities(f.data); }
    void save_params(std::ostream& out) const override {
        out << "map " << model_.map.input_dim() << ' ' << model_.map.order() << '\n';
        out << "hyper " << model_.hyper << '\n';
        put_vector(out, "weights", model_.w);
        put_matrix(out, "posterior_cov", model_.sigma_n);
    }
    void load_params(std::istream& in) override {
        const auto d = get_value<int>(in, "map");
        int n = 0;
        if (!(in >> n)) throw ParseError("model file: bad polynomial order");
        model_.map = PolyMap(d, n);
        model_.family = config_.family == ModelFamily::rrc   ? LinearFamily::rrc
                        : config_.family == ModelFamily::svc ? LinearFamily::svc
                                                             : LinearFamily::gpc;
        model_.hyper = get_value<double>(in, "hyper");
        model_.w = get_vector(in, "weights");
        model_.sigma_n = get_matrix(in, "posterior_cov");
        if (model_.w.size() != model_.map.output_dim()) throw ParseError("model file: weight count does not match map");
    }

private:
    LinearModel model_;
};

}  // namespace

ModelFamily parse_model_family(std::string_view s) {
    if (s == "nbc") return ModelFamily::nbc;
    if (s == "gda") return ModelFamily::gda;
    if (s == "kmeans") return ModelFamily::kmeans;
    if (s == "gmm") return ModelFamily::gmm;
    if (s == "mrf") return ModelFamily::mrf;
    if (s == "icm_mrf" || s == "icm-mrf") return ModelFamily::icm_mrf;
    if (s == "rrc") return ModelFamily::rrc;
    if (s == "svc") return ModelFamily::svc;
    if (s == "gpc") return ModelFamily::gpc;
    throw ParseError("unknown model family \"" + std::string(s) + "\"");
}

std::string_view to_string(ModelFamily f) {
    switch (f) {
        case ModelFamily::nbc: return "nbc";
        case ModelFamily::gda: return "gda";
        case ModelFamily::kmeans: return "kmeans";
        case ModelFamily::gmm: return "gmm";
        case ModelFamily::mrf: return "mrf";
        case ModelFamily::icm_mrf: return "icm_mrf";
        case ModelFamily::rrc: return "rrc";
        case ModelFamily::svc: return "svc";
        case ModelFamily::gpc: return "gpc";
    }
    return "?";
}

bool is_mrf(ModelFamily f) { return f == ModelFamily::mrf || f == ModelFamily::icm_mrf; }

FeatureFrame Segmenter::prepare(const FeatureFrame& frame) const {
    if (!fitted_) throw ConfigError("segmenter used before fitting");
    if (frame.dim() != config_.features.dim())
        throw ConfigError("feature frame has " + std::to_string(frame.dim()) + " columns, model expects " +
                          std::to_string(config_.features.dim()) + " (" + to_string(config_.features) + ")");
    return standardizer_.empty() ? frame : standardizer_.transform(frame);
}

void Segmenter::fit(std::span<const FeatureFrame> frames) {
    if (frames.empty()) throw DataError("fit: no training frames");
    for (const auto& f : frames)
        if (f.dim() != config_.features.dim())
            throw ConfigError("training frame does not match feature spec " + to_string(config_.features));
    bool all_labelled = true;
    for (const auto& f : frames) all_labelled &= f.labels.has_value();
    if (needs_labels() && !all_labelled) throw DataError("fit: " + std::string(to_string(config_.family)) +
                                                         " needs labelled training frames");
    // Unsupervised families still use labels, when present, to name clusters.
    Stacked s = stack_frames(frames, all_labelled);
    standardizer_ = config_.features.standardize ? standardize(s.x) : Standardizer{};
    if (!standardizer_.empty()) s.x = standardizer_.transform(s.x);
    if (!standardizer_.empty() && is_mrf(config_.family)) {
        std::vector<FeatureFrame> scaled;
        for (const auto& f : frames) scaled.push_back(standardizer_.transform(f));
        fit_impl(s.x, s.y, scaled);
    } else {
        fit_impl(s.x, s.y, frames);
    }
    fitted_ = true;
}

Eigen::VectorXd Segmenter::probabilities(const FeatureFrame& frame) const { return probabilities_impl(prepare(frame)); }

LabelMask Segmenter::segment(const FeatureFrame& frame, double lambda) const {
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
    return segment_impl(prepare(frame), lambda);
}

LabelMask Segmenter::segment_impl(const FeatureFrame& frame, double lambda) const {
    const Eigen::VectorXd p = probabilities_impl(frame);
    LabelMask mask(frame.rows, frame.cols);
    for (std::size_t k = 0; k < mask.size(); ++k) mask[k] = decide_cloud(p[static_cast<Eigen::Index>(k)], lambda);
    return mask;
}

void Segmenter::save(std::ostream& out) const {
    if (!fitted_) throw ConfigError("cannot save an untrained model");
    const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
    const ModelConfig& c = config_;
    out << kMagic << ' ' << kFormatVersion << '\n';
    out << "family " << to_string(c.family) << '\n';
    out << "features " << to_string(c.features) << '\n';
    out << "gamma " << c.gamma << '\n';
    out << "c " << c.c << '\n';
    out << "beta " << c.beta << '\n';
    out << "cliques " << to_string(c.cliques) << '\n';
    out << "inference " << to_string(c.inference) << '\n';
    out << "schedule " << c.schedule.t0 << ' ' << c.schedule.alpha << ' ' << c.schedule.t_max << ' '
        << c.schedule.sample_fraction << ' ' << c.schedule.seed << '\n';
    out << "poly_order " << c.poly_order << '\n';
    out << "gpc_evidence " << (c.gpc_evidence ? 1 : 0) << '\n';
    out << "lambda " << c.lambda << '\n';
    out << "seed " << c.seed << '\n';
    put_vector(out, "standardizer_mean", standardizer_.mean);
    put_vector(out, "standardizer_variance", standardizer_.variance);
    save_params(out);
    out << "end\n";
    out.precision(old_precision);
}

void Segmenter::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write model file " + path.string());
    save(out);
    if (!out) throw DataError("failed writing model file " + path.string());
}

std::unique_ptr<Segmenter> make_segmenter(const ModelConfig& config) {
    if (config.gamma < 0.0) throw ConfigError("gamma must be non-negative");
    if ((config.family == ModelFamily::rrc || config.family == ModelFamily::svc || config.family == ModelFamily::gpc) &&
        config.poly_order != 1 && config.poly_order != 2)
        throw ConfigError("poly order must be 1 or 2");
    switch (config.family) {
        case ModelFamily::nbc:
        case ModelFamily::gda: return std::make_unique<DiscriminantSegmenter>(config);
        case ModelFamily::kmeans: return std::make_unique<KMeansSegmenter>(config);
        case ModelFamily::gmm: return std::make_unique<GmmSegmenter>(config);
        case ModelFamily::mrf: return std::make_unique<MrfSegmenter>(config);
        case ModelFamily::icm_mrf: return std::make_unique<IcmMrfSegmenter>(config);
        case ModelFamily::rrc:
        case ModelFamily::svc:
        case ModelFamily::gpc: return std::make_unique<LinearSegmenter>(config);
    }
    throw ConfigError("unknown model family");
}

std::unique_ptr<Segmenter> load_segmenter(std::istream& in) {
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kMagic) throw ParseError("model file: missing skyseg-model header");
    if (version != kFormatVersion)
        throw ParseError("model file: unsupported version " + std::to_string(version) + " (expected " +
                         std::to_string(kFormatVersion) + ")");
    ModelConfig c;
    c.family = parse_model_family(get_word(in, "family"));
    c.features = parse_feature_spec(get_word(in, "features"));
    c.gamma = get_value<double>(in, "gamma");
    c.c = get_value<double>(in, "c");
    c.beta = get_value<double>(in, "beta");
    c.cliques = parse_clique_order(get_word(in, "cliques"));
    c.inference = parse_inference(get_word(in, "inference"));
    expect_key(in, "schedule");
    if (!(in >> c.schedule.t0 >> c.schedule.alpha >> c.schedule.t_max >> c.schedule.sample_fraction >> c.schedule.seed))
        throw ParseError("model file: bad schedule");
    c.poly_order = get_value<int>(in, "poly_order");
    c.gpc_evidence = get_value<int>(in, "gpc_evidence") != 0;
    c.lambda = get_value<double>(in, "lambda");
    c.seed = get_value<std::uint64_t>(in, "seed");
    auto model = make_segmenter(c);
    model->standardizer_.mean = get_vector(in, "standardizer_mean");
    model->standardizer_.variance = get_vector(in, "standardizer_variance");
    if (model->standardizer_.mean.size() != model->standardizer_.variance.size())
        throw ParseError("model file: standardizer mean/variance length mismatch");
    model->load_params(in);
    expect_key(in, "end");
    model->fitted_ = true;
    return model;
}

std::unique_ptr<Segmenter> load_segmenter(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file " + path.string());
    try {
        return load_segmenter(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::unique_ptr<Segmenter> train_segmenter(const ModelConfig& config, std::span<const FeatureFrame> frames) {
    auto model = make_segmenter(config);
    model->fit(frames);
    return model;
}

}  // namespace skyseg
