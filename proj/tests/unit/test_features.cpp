#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <sstream>
#include <vector>

#include "skyseg/core/error.hpp"
#include "skyseg/features/features.hpp"

using namespace skyseg;

namespace {

// Channels with distinct, position-coded values so every entry of a feature
// vector can be traced back to its pixel.
DerivedFrame coded_frame(int rows, int cols) {
    DerivedFrame d;
    d.t = KelvinGrid(rows, cols);
    d.h = KelvinGrid(rows, cols);
    d.t_prime = KelvinGrid(rows, cols);
    d.h_prime = KelvinGrid(rows, cols);
    d.delta_t = KelvinGrid(rows, cols);
    d.h_double_prime = KelvinGrid(rows, cols);
    d.intensity = IntensityGrid(rows, cols);
    d.velocity = FlowGrid(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            const double code = 100.0 * i + j;
            d.t(i, j) = 1000.0 + code;
            d.h(i, j) = 2000.0 + code;
            d.t_prime(i, j) = 3000.0 + code;
            d.h_prime(i, j) = 4000.0 + code;
            d.delta_t(i, j) = 5000.0 + code;
            d.h_double_prime(i, j) = 6000.0 + code;
            d.intensity(i, j) = static_cast<std::uint8_t>(10 * i + j);
            (*d.velocity)(i, j) = {3.0 * (i + 1), 4.0 * (i + 1)};
        }
    return d;
}

DerivedFrame constant_frame(int rows, int cols) {
    DerivedFrame d;
    d.t = KelvinGrid(rows, cols, 280.0);
    d.h = KelvinGrid(rows, cols, 1.5);
    d.t_prime = d.t;
    d.h_prime = d.h;
    d.delta_t = KelvinGrid(rows, cols, 2.0);
    d.h_double_prime = KelvinGrid(rows, cols, 0.3);
    d.intensity = IntensityGrid(rows, cols, 9);
    d.velocity = FlowGrid(rows, cols, FlowVector{0.5, 0.0});
    return d;
}

}  // namespace

TEST_CASE("feature dimensions") {
    const DerivedFrame d = coded_frame(4, 5);
    CHECK(extract(d, parse_feature_spec("x1")).dim() == 2);
    CHECK(extract(d, parse_feature_spec("x2:first")).dim() == 10);
    CHECK(extract(d, parse_feature_spec("x3:second")).dim() == 18);
    CHECK(extract(d, parse_feature_spec("x4:second")).dim() == 27);
    CHECK(parse_feature_spec("x4:second").dim() == 27);
    CHECK(extract(d, parse_feature_spec("x4")).pixels() == 20);
}

TEST_CASE("family channels and neighbour order") {
    const DerivedFrame d = coded_frame(4, 5);
    const FeatureFrame f = extract(d, parse_feature_spec("x3:second"));
    const Eigen::Index k = 1 * 5 + 2;  // pixel (1, 2)
    CHECK(f.data(k, 0) == 5102.0);
    CHECK(f.data(k, 1) == 6102.0);
    // N, W, E, S, NW, NE, SW, SE
    const double expected_dt[8] = {5002, 5101, 5103, 5202, 5001, 5003, 5201, 5203};
    for (int n = 0; n < 8; ++n) {
        CHECK(f.data(k, 2 * (n + 1)) == expected_dt[n]);
        CHECK(f.data(k, 2 * (n + 1) + 1) == expected_dt[n] + 1000.0);
    }

    const FeatureFrame x4 = extract(d, parse_feature_spec("x4"));
    CHECK(x4.data(k, 0) == doctest::Approx(10.0));  // |(6, 8)|
    CHECK(x4.data(k, 1) == 12.0);
    CHECK(x4.data(k, 2) == 5102.0);

    const FeatureFrame x1 = extract(d, parse_feature_spec("x1"));
    CHECK(x1.data(k, 0) == 1102.0);
    CHECK(x1.data(k, 1) == 2102.0);
}

TEST_CASE("borders replicate the nearest pixel") {
    const DerivedFrame d = coded_frame(4, 5);
    const FeatureFrame f = extract(d, parse_feature_spec("x2:first"));
    // Corner (0, 0): N and W fall outside and repeat the centre.
    CHECK(f.data(0, 2) == 3000.0);
    CHECK(f.data(0, 4) == 3000.0);
    CHECK(f.data(0, 6) == 3001.0);
    CHECK(f.data(0, 8) == 3100.0);
}

TEST_CASE("a constant frame gives identical feature vectors") {
    const DerivedFrame d = constant_frame(6, 7);
    for (const char* spec : {"x1:second", "x2:first", "x3", "x4:second"}) {
        const FeatureFrame f = extract(d, parse_feature_spec(spec));
        for (Eigen::Index k = 1; k < f.pixels(); ++k) CHECK(f.data.row(k) == f.data.row(0));
    }
}

TEST_CASE("missing channels are configuration errors") {
    DerivedFrame d = coded_frame(3, 3);
    d.velocity.reset();
    CHECK_THROWS_AS(extract(d, parse_feature_spec("x4")), ConfigError);
    d.delta_t = KelvinGrid();
    CHECK_THROWS_AS(extract(d, parse_feature_spec("x3")), ConfigError);
    CHECK_NOTHROW(extract(d, parse_feature_spec("x1")));
}

TEST_CASE("feature spec strings") {
    const FeatureSpec s = parse_feature_spec("x3:second:std");
    CHECK(s.family == FeatureFamily::x3);
    CHECK(s.neighborhood == Neighborhood::second);
    CHECK(s.standardize);
    CHECK(to_string(s) == "x3:second:std");
    CHECK(parse_feature_spec(to_string(parse_feature_spec("x4"))) == parse_feature_spec("x4:single"));
    CHECK_THROWS(parse_feature_spec("x5"));
    CHECK_THROWS(parse_feature_spec("x3:third"));
    CHECK_THROWS(parse_feature_spec("x3:first:norm"));
    CHECK(parse_feature_spec("x4").temperature_index() == 2);
    CHECK(parse_feature_spec("x3:first").temperature_index() == 0);
}

TEST_CASE("standardizer divides by the variance") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd x(500, 3);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        x(r, 0) = 4.0 + 3.0 * n(rng);
        x(r, 1) = -2.0 + 0.5 * n(rng);
        x(r, 2) = 7.0;
    }
    const Standardizer s = standardize(x);
    const Eigen::MatrixXd z = s.transform(x);
    for (int c = 0; c < 3; ++c) {
        const double mean = x.col(c).mean();
        const double var = (x.col(c).array() - mean).square().mean();
        CHECK(s.mean[c] == doctest::Approx(mean).epsilon(1e-12));
        CHECK(s.variance[c] == doctest::Approx(var).epsilon(1e-12));
        const double zmean = z.col(c).mean();
        const double zvar = (z.col(c).array() - zmean).square().mean();
        CHECK(std::abs(zmean) < 1e-9);
        if (var > 0.0)
            CHECK(zvar == doctest::Approx(1.0 / var).epsilon(1e-9));
        else
            CHECK(zvar == 0.0);
    }
    // Zero-variance column only loses its mean.
    CHECK(z.col(2).cwiseAbs().maxCoeff() == 0.0);

    // Statistics are frozen: test data reuse the training moments.
    Eigen::MatrixXd other = Eigen::MatrixXd::Constant(2, 3, 1.0);
    const Eigen::MatrixXd zo = s.transform(other);
    CHECK(zo(0, 0) == doctest::Approx((1.0 - s.mean[0]) / s.variance[0]));
    CHECK_THROWS_AS(standardize(Eigen::MatrixXd(0, 3)), DataError);
}

TEST_CASE("stacking frames and CSV export") {
    const DerivedFrame d = coded_frame(2, 2);
    FeatureFrame a = extract(d, parse_feature_spec("x1"));
    FeatureFrame b = a;
    a.labels = LabelMask(2, 2);
    (*a.labels)(1, 1) = 1;
    std::vector<FeatureFrame> frames{a, b};
    CHECK_THROWS_AS(stack_frames(frames, true), DataError);
    const Stacked s = stack_frames(frames, false);
    CHECK(s.x.rows() == 8);
    frames[1].labels = LabelMask(2, 2);
    const Stacked l = stack_frames(frames, true);
    REQUIRE(l.y.size() == 8);
    CHECK(l.y[3] == 1);

    std::ostringstream csv;
    write_feature_csv(csv, a);
    CHECK(csv.str().substr(0, 12) == "f0,f1,label\n");
    CHECK(csv.str().find("1101,2101,1\n") != std::string::npos);
}
