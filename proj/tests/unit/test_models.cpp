#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>
#include <vector>

#include "skyseg/core/error.hpp"
#include "skyseg/core/synth.hpp"
#include "skyseg/evaluation/experiments.hpp"
#include "skyseg/models/segmenter.hpp"

using namespace skyseg;

namespace {

struct Fixture {
    std::vector<ProcessedFrame> train;
    std::vector<ProcessedFrame> test;
};

const Fixture& fixture() {
    static const Fixture f = [] {
        SceneParams p;
        p.n_calib = 6;
        const auto frames = to_loaded_frames(synth_scenes(21, 4, 3, p));
        Fixture out;
        for (auto& pf : preprocess_dataset(frames)) (pf.split == Split::train ? out.train : out.test).push_back(pf);
        return out;
    }();
    return f;
}

ModelConfig config_for(ModelFamily family, const char* features) {
    ModelConfig c;
    c.family = family;
    c.features = parse_feature_spec(features);
    c.gamma = family == ModelFamily::gda || family == ModelFamily::gmm || family == ModelFamily::mrf ? 1e-3 : 1.0;
    c.lambda = 0.8;
    c.seed = 3;
    return c;
}

}  // namespace

TEST_CASE("every family survives a save/load round trip") {
    const std::vector<std::pair<ModelFamily, const char*>> cases = {
        {ModelFamily::nbc, "x3"},          {ModelFamily::gda, "x3"},          {ModelFamily::kmeans, "x3:single:std"},
        {ModelFamily::gmm, "x3"},          {ModelFamily::mrf, "x3"},          {ModelFamily::icm_mrf, "x3"},
        {ModelFamily::rrc, "x4"},          {ModelFamily::svc, "x4:first"},    {ModelFamily::gpc, "x4:first"},
    };
    for (const auto& [family, features] : cases) {
        CAPTURE(to_string(family));
        ModelConfig cfg = config_for(family, features);
        if (family == ModelFamily::svc) cfg.poly_order = 2;
        const auto train = features_for(fixture().train, cfg.features);
        const auto test = features_for(fixture().test, cfg.features);
        const auto model = train_segmenter(cfg, train);
        REQUIRE(model->fitted());

        std::stringstream buffer;
        model->save(buffer);
        const auto loaded = load_segmenter(buffer);
        CHECK(loaded->config().family == family);
        CHECK(loaded->config().features == cfg.features);
        CHECK(loaded->config().lambda == cfg.lambda);
        for (const auto& frame : test) {
            CHECK(loaded->segment(frame) == model->segment(frame));
            const Eigen::VectorXd a = model->probabilities(frame);
            const Eigen::VectorXd b = loaded->probabilities(frame);
            CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);
        }
        std::stringstream again;
        loaded->save(again);
        std::stringstream first;
        model->save(first);
        CHECK(again.str() == first.str());
    }
}

TEST_CASE("well separated synthetic scenes are segmented accurately") {
    for (ModelFamily family : {ModelFamily::gda, ModelFamily::rrc, ModelFamily::icm_mrf}) {
        CAPTURE(to_string(family));
        ModelConfig cfg = config_for(family, family == ModelFamily::rrc ? "x4" : "x3");
        cfg.lambda = 1.0;
        const auto train = features_for(fixture().train, cfg.features);
        const auto test = features_for(fixture().test, cfg.features);
        const auto model = train_segmenter(cfg, train);
        const EvalReport r = evaluate(*model, test, {}, std::string(to_string(family)));
        CHECK(r.j >= 0.9);
    }
}

TEST_CASE("models reject misuse") {
    ModelConfig cfg = config_for(ModelFamily::gda, "x3");
    const auto test = features_for(fixture().test, cfg.features);
    auto fresh = make_segmenter(cfg);
    CHECK_THROWS_AS(fresh->segment(test.front()), ConfigError);
    std::stringstream out;
    CHECK_THROWS_AS(fresh->save(out), ConfigError);

    const auto model = train_segmenter(cfg, features_for(fixture().train, cfg.features));
    const auto wrong = features_for(fixture().test, parse_feature_spec("x4:first"));
    CHECK_THROWS_AS(model->segment(wrong.front()), ConfigError);
    CHECK_THROWS_AS(model->segment(test.front(), -1.0), ConfigError);

    std::vector<FeatureFrame> unlabelled = test;
    for (auto& f : unlabelled) f.labels.reset();
    CHECK_THROWS_AS(train_segmenter(cfg, unlabelled), DataError);
    // Clustering families train without labels.
    CHECK_NOTHROW(train_segmenter(config_for(ModelFamily::kmeans, "x3"), unlabelled));

    ModelConfig bad = cfg;
    bad.gamma = -1.0;
    CHECK_THROWS_AS(make_segmenter(bad), ConfigError);
    bad = config_for(ModelFamily::rrc, "x3");
    bad.poly_order = 3;
    CHECK_THROWS_AS(make_segmenter(bad), ConfigError);
}

TEST_CASE("malformed model files") {
    std::stringstream empty;
    CHECK_THROWS_AS(load_segmenter(empty), ParseError);
    std::stringstream wrong_version("skyseg-model 99\n");
    CHECK_THROWS_AS(load_segmenter(wrong_version), ParseError);

    const auto model = train_segmenter(config_for(ModelFamily::gda, "x3"),
                                       features_for(fixture().train, parse_feature_spec("x3")));
    std::stringstream good;
    model->save(good);
    const std::string text = good.str();
    std::stringstream truncated(text.substr(0, text.size() / 2));
    CHECK_THROWS_AS(load_segmenter(truncated), ParseError);
    CHECK_THROWS_AS(load_segmenter(std::filesystem::path("/nonexistent/model.txt")), DataError);
}

TEST_CASE("family names") {
    for (ModelFamily f : {ModelFamily::nbc, ModelFamily::gda, ModelFamily::kmeans, ModelFamily::gmm, ModelFamily::mrf,
                          ModelFamily::icm_mrf, ModelFamily::rrc, ModelFamily::svc, ModelFamily::gpc})
        CHECK(parse_model_family(to_string(f)) == f);
    CHECK(is_mrf(ModelFamily::icm_mrf));
    CHECK_FALSE(is_mrf(ModelFamily::gmm));
    CHECK_THROWS(parse_model_family("cnn"));
}
