#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "skyseg/core/error.hpp"
#include "skyseg/core/synth.hpp"
#include "skyseg/evaluation/experiments.hpp"
#include "skyseg/evaluation/metrics.hpp"
#include "skyseg/models/decision.hpp"

using namespace skyseg;

namespace {

ConfusionMatrix counts(long tp, long fp, long tn, long fn) {
    ConfusionMatrix cm;
    cm.tp = tp;
    cm.fp = fp;
    cm.tn = tn;
    cm.fn = fn;
    return cm;
}

// Scores and truths with plenty of repeated values, so that ties matter.
void random_scores(std::mt19937_64& rng, std::size_t n, std::vector<double>& s, std::vector<std::uint8_t>& t) {
    std::uniform_int_distribution<int> level(0, 20);
    std::bernoulli_distribution coin(0.5);
    s.resize(n);
    t.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        s[k] = level(rng) / 20.0;
        t[k] = coin(rng) ? 1 : 0;
    }
}

ConfusionMatrix brute_force(const std::vector<double>& s, const std::vector<std::uint8_t>& t, double lambda) {
    std::vector<std::uint8_t> pred(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) pred[k] = decide_cloud(s[k], lambda) ? 1 : 0;
    return confusion(pred, t);
}

// Frames small enough to train dozens of models quickly.
const std::vector<ProcessedFrame>& small_train() {
    static const std::vector<ProcessedFrame> frames = [] {
        SceneParams p;
        p.rows = 30;
        p.cols = 40;
        p.n_calib = 4;
        p.shape_sigma = 3.0;
        p.clear_and_overcast = false;
        const auto loaded = to_loaded_frames(synth_scenes(5, 4, 1, p));
        std::vector<ProcessedFrame> out;
        for (auto& f : preprocess_dataset(loaded, Stage::atmosphere))
            if (f.split == Split::train) out.push_back(f);
        return out;
    }();
    return frames;
}

// A model that ignores its input and always returns the same labels.
class FixedSegmenter final : public Segmenter {
public:
    FixedSegmenter(LabelMask mask, const FeatureSpec& spec) : Segmenter(config_with(spec)), mask_(std::move(mask)) {
        fitted_ = true;
    }

protected:
    void fit_impl(const Eigen::MatrixXd&, std::span<const std::uint8_t>, std::span<const FeatureFrame>) override {}
    Eigen::VectorXd probabilities_impl(const FeatureFrame&) const override {
        Eigen::VectorXd p(static_cast<Eigen::Index>(mask_.size()));
        for (std::size_t k = 0; k < mask_.size(); ++k) p[static_cast<Eigen::Index>(k)] = mask_[k];
        return p;
    }
    void save_params(std::ostream&) const override {}
    void load_params(std::istream&) override {}

private:
    static ModelConfig config_with(const FeatureSpec& spec) {
        ModelConfig c;
        c.features = spec;
        return c;
    }
    LabelMask mask_;
};

FeatureFrame blank_frame(int rows, int cols, const FeatureSpec& spec) {
    FeatureFrame f;
    f.rows = rows;
    f.cols = cols;
    f.data = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows) * cols, spec.dim());
    return f;
}

}  // namespace

TEST_CASE("confusion rates") {
    // 40 cloud pixels of which 32 found; 60 clear of which 54 kept clear.
    const ConfusionMatrix cm = counts(32, 6, 54, 8);
    CHECK(sensitivity(cm) == doctest::Approx(0.8));
    CHECK(specificity(cm) == doctest::Approx(0.9));
    CHECK(j_stat(cm) == doctest::Approx(0.7));
    CHECK(accuracy(cm) == doctest::Approx(0.86));
    CHECK_FALSE(degenerate(cm));

    const std::vector<std::uint8_t> pred = {1, 1, 0, 0, 1};
    const std::vector<std::uint8_t> truth = {1, 0, 0, 1, 1};
    CHECK(confusion(pred, truth) == counts(2, 1, 1, 1));
    CHECK_THROWS_AS(confusion(pred, std::vector<std::uint8_t>{1, 0}), DataError);
}

TEST_CASE("all-clear and all-cloud truths stay evaluable") {
    // No cloud in the truth: a perfect prediction scores J = 1.
    CHECK(j_stat(counts(0, 0, 10, 0)) == doctest::Approx(1.0));
    CHECK(degenerate(counts(0, 0, 10, 0)));
    // Any false cloud on a clear frame zeroes the sensitivity term.
    const ConfusionMatrix false_cloud = counts(0, 2, 8, 0);
    CHECK(sensitivity(false_cloud) == 0.0);
    CHECK(specificity(false_cloud) == doctest::Approx(0.8));
    // Mirror image for overcast frames.
    CHECK(j_stat(counts(10, 0, 0, 0)) == doctest::Approx(1.0));
    CHECK(specificity(counts(7, 0, 0, 3)) == 0.0);
}

TEST_CASE("default lambda grid") {
    const auto g = default_lambda_grid();
    REQUIRE(g.size() == 50);
    CHECK(g.front() == 0.02);
    CHECK(g.back() == 2.0);
    for (std::size_t k = 1; k < g.size(); ++k) CHECK(g[k] / g[k - 1] == doctest::Approx(std::pow(100.0, 1.0 / 49)));
    CHECK_THROWS_AS(default_lambda_grid(0), ConfigError);
}

TEST_CASE("lambda sweep matches per-lambda thresholding") {
    std::mt19937_64 rng(17);
    const auto grid = default_lambda_grid();
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> s;
        std::vector<std::uint8_t> t;
        random_scores(rng, 300, s, t);
        const auto cms = lambda_sweep(s, t, grid);
        REQUIRE(cms.size() == grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) CHECK(cms[i] == brute_force(s, t, grid[i]));
    }
}

TEST_CASE("lambda selection picks the best J and breaks ties toward smaller lambda") {
    std::mt19937_64 rng(29);
    const auto grid = default_lambda_grid();
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> s;
        std::vector<std::uint8_t> t;
        random_scores(rng, 200, s, t);
        double best_j = -2.0, best_l = 0.0;
        for (const double l : grid) {
            const double j = j_stat(brute_force(s, t, l));
            if (j > best_j) {
                best_j = j;
                best_l = l;
            }
        }
        const LambdaChoice got = roc_select_lambda(s, t, grid);
        CHECK(got.lambda == best_l);
        CHECK(got.j == best_j);
    }

    // Scores 0.3 / 0.7 separate perfectly for every lambda in (5/7 .. 5/3];
    // the smallest such lambda on the grid wins.
    const std::vector<double> s = {0.3, 0.3, 0.7, 0.7};
    const std::vector<std::uint8_t> t = {0, 0, 1, 1};
    const std::vector<double> grid2 = {0.5, 0.8, 1.0, 1.5, 1.9};
    const LambdaChoice got = roc_select_lambda(s, t, grid2);
    CHECK(got.lambda == 0.8);
    CHECK(got.j == 1.0);

    const std::vector<std::uint8_t> all_clear = {0, 0, 0, 0};
    const LambdaChoice forced = roc_select_lambda(s, all_clear, grid2);
    CHECK(forced.degenerate);
    CHECK(forced.lambda == 1.0);

    CHECK_THROWS_AS(roc_select_lambda(std::vector<double>{1.5}, std::vector<std::uint8_t>{1}, grid2), DomainError);
}

TEST_CASE("ROC curve from sorted scores") {
    const std::vector<double> s = {0.9, 0.2, 0.6, 0.6, 0.1};
    const std::vector<std::uint8_t> t = {1, 0, 1, 0, 0};
    const auto roc = roc_curve(s, t);
    REQUIRE(roc.size() == 5);  // start point plus four distinct scores
    CHECK(roc[0].tpr == 0.0);
    CHECK(roc[1].threshold == 0.9);
    CHECK(roc[1].tpr == 0.5);
    CHECK(roc[1].fpr == 0.0);
    CHECK(roc[2].threshold == 0.6);
    CHECK(roc[2].tpr == 1.0);
    CHECK(roc[2].fpr == doctest::Approx(1.0 / 3));
    CHECK(roc.back().tpr == 1.0);
    CHECK(roc.back().fpr == 1.0);
}

TEST_CASE("reports pool confusion matrices") {
    LabelMask truth(2, 2, 0), pred(2, 2, 0);
    truth(0, 0) = 1;
    pred(0, 0) = 1;
    pred(1, 1) = 1;
    const ImageEval a = evaluate_image("a", pred, truth, 0.5);
    CHECK(a.cm == counts(1, 1, 2, 0));
    CHECK(a.j == doctest::Approx(2.0 / 3));
    const ImageEval b = evaluate_image("b", truth, truth, 1.5);
    const EvalReport r = summarize("m", {a, b}, 3.0);
    CHECK(r.pooled == counts(2, 1, 5, 0));
    CHECK(r.j == doctest::Approx(5.0 / 6));
    CHECK(r.mean_image_j == doctest::Approx((2.0 / 3 + 1.0) / 2));
    CHECK(r.test_time_s_per_image == doctest::Approx(1.0));

    std::ostringstream csv;
    write_report_csv(csv, std::vector<EvalReport>{r});
    CHECK(csv.str().find("ALL") != std::string::npos);
}

TEST_CASE("cross-validation agrees with folds trained by hand") {
    const auto& train = small_train();
    REQUIRE(train.size() == 4);
    GridSpec grid;
    grid.base.family = ModelFamily::gda;
    grid.base.features = parse_feature_spec("x3");
    grid.base.gamma = 1e-3;
    grid.lambdas = {0.4, 0.7, 1.0, 1.6};
    const CvResult cv = loo_cross_validate(train, grid, 2);
    CHECK(cv.folds == 4);
    REQUIRE(cv.table.size() == 4);

    const auto features = features_for(train, grid.base.features);
    std::vector<double> mean(grid.lambdas.size(), 0.0);
    for (std::size_t held = 0; held < 4; ++held) {
        std::vector<FeatureFrame> fit_set;
        for (std::size_t k = 0; k < 4; ++k)
            if (k != held) fit_set.push_back(features[k]);
        const auto model = train_segmenter(grid.base, fit_set);
        for (std::size_t l = 0; l < grid.lambdas.size(); ++l)
            mean[l] += j_stat(confusion(model->segment(features[held], grid.lambdas[l]), *features[held].labels)) / 4;
    }
    std::size_t best = 0;
    for (std::size_t l = 0; l < mean.size(); ++l) {
        CHECK(cv.table[l].mean_j == doctest::Approx(mean[l]).epsilon(1e-12));
        if (mean[l] > mean[best]) best = l;
    }
    CHECK(cv.best.config.lambda == grid.lambdas[best]);

    // Thread count does not change the outcome.
    const CvResult serial = loo_cross_validate(train, grid, 1);
    for (std::size_t l = 0; l < cv.table.size(); ++l) CHECK(serial.table[l].fold_j == cv.table[l].fold_j);
}

TEST_CASE("cross-validation on identical images scores every fold the same") {
    const auto& train = small_train();
    const std::vector<ProcessedFrame> copies(3, train.front());
    GridSpec grid;
    grid.base.family = ModelFamily::gda;
    grid.base.features = parse_feature_spec("x3");
    grid.base.gamma = 1e-3;
    grid.gammas = {1e-3, 1.0};
    grid.lambdas = {1.0};
    const CvResult cv = loo_cross_validate(copies, grid, 1);
    REQUIRE(cv.table.size() == 2);
    for (const auto& e : cv.table)
        for (const double j : e.fold_j) CHECK(j == e.fold_j.front());
    CHECK(cv.best.config.gamma == 1e-3);  // a tie keeps the smaller gamma
}

TEST_CASE("cross-validation input errors") {
    const auto& train = small_train();
    GridSpec grid;
    CHECK_THROWS_AS(loo_cross_validate(std::span<const ProcessedFrame>(train.data(), 1), grid), DataError);
    std::vector<ProcessedFrame> unlabelled(train.begin(), train.begin() + 2);
    unlabelled[1].label.reset();
    CHECK_THROWS_AS(loo_cross_validate(unlabelled, grid), DataError);
}

TEST_CASE("grid expansion keeps only relevant hyperparameters") {
    GridSpec grid;
    grid.base.family = ModelFamily::svc;
    grid.gammas = {1.0, 2.0};
    grid.cs = {10.0, 0.1, 1.0};
    grid.poly_orders = {2, 1};
    const auto configs = grid.expand();
    REQUIRE(configs.size() == 6);
    CHECK(configs.front().poly_order == 1);
    CHECK(configs.front().c == 0.1);
    CHECK(configs.back().poly_order == 2);
    CHECK(configs.back().c == 10.0);
}

TEST_CASE("majority vote") {
    const FeatureSpec spec = parse_feature_spec("x3");
    LabelMask a(1, 4, 0), b(1, 4, 0), c(1, 4, 0);
    a[0] = b[0] = c[0] = 1;  // unanimous cloud
    a[1] = b[1] = 1;         // majority cloud
    a[2] = 1;                // minority cloud
    const FixedSegmenter ma(a, spec), mb(b, spec), mc(c, spec);
    const std::vector<FeatureFrame> frames(3, blank_frame(1, 4, spec));

    const std::vector<const Segmenter*> three = {&ma, &mb, &mc};
    const VoteResult r = vote(three, frames);
    CHECK(std::vector<std::uint8_t>(r.mask.begin(), r.mask.end()) == std::vector<std::uint8_t>{1, 1, 0, 0});
    CHECK(r.probability[1] == doctest::Approx(2.0 / 3));

    // Two members split evenly: the tie goes to cloud.
    const std::vector<const Segmenter*> two = {&ma, &mc};
    const VoteResult tie = vote(two, std::span<const FeatureFrame>(frames.data(), 2));
    CHECK(std::vector<std::uint8_t>(tie.mask.begin(), tie.mask.end()) == std::vector<std::uint8_t>{1, 1, 1, 0});

    const std::vector<const Segmenter*> one = {&mb};
    const VoteResult single = vote(one, std::span<const FeatureFrame>(frames.data(), 1));
    CHECK(single.mask == b);

    CHECK_THROWS_AS(vote(three, std::span<const FeatureFrame>(frames.data(), 2)), ConfigError);
    CHECK_THROWS_AS(vote(std::span<const Segmenter* const>(), std::span<const FeatureFrame>()), ConfigError);
}

TEST_CASE("timing statistics") {
    const TimingStats odd = timing_stats({3.0, 1.0, 2.0});
    CHECK(odd.median_s == 2.0);
    CHECK(odd.mean_s == 2.0);
    CHECK(odd.samples == 3);
    const TimingStats even = timing_stats({4.0, 1.0, 2.0, 3.0});
    CHECK(even.median_s == 2.5);
    CHECK(timing_stats({}).samples == 0);
}
