#include "skyseg/features/features.hpp"

#include <vector>

#include "skyseg/core/error.hpp"

namespace skyseg {

int FeatureSpec::base_dim() const { return family == FeatureFamily::x4 ? 3 : 2; }

int neighbor_count(Neighborhood n) {
    switch (n) {
        case Neighborhood::single: return 0;
        case Neighborhood::first: return 4;
        case Neighborhood::second: return 8;
    }
    return 0;
}

int FeatureSpec::dim() const { return base_dim() * (1 + neighbor_count(neighborhood)); }

int FeatureSpec::temperature_index() const { return family == FeatureFamily::x4 ? 2 : 0; }

Stage FeatureSpec::required_stage() const {
    switch (family) {
        case FeatureFamily::x1: return Stage::raw;
        case FeatureFamily::x2: return Stage::window;
        case FeatureFamily::x3: return Stage::atmosphere;
        case FeatureFamily::x4: return Stage::all;
    }
    return Stage::all;
}

FeatureFamily parse_family(std::string_view s) {
    if (s == "x1" || s == "X1") return FeatureFamily::x1;
    if (s == "x2" || s == "X2") return FeatureFamily::x2;
    if (s == "x3" || s == "X3") return FeatureFamily::x3;
    if (s == "x4" || s == "X4") return FeatureFamily::x4;
    throw ConfigError("unknown feature family \"" + std::string(s) + "\"");
}

Neighborhood parse_neighborhood(std::string_view s) {
    if (s == "single") return Neighborhood::single;
    if (s == "first") return Neighborhood::first;
    if (s == "second") return Neighborhood::second;
    throw ConfigError("unknown neighborhood \"" + std::string(s) + "\"");
}

std::string_view to_string(FeatureFamily f) {
    switch (f) {
        case FeatureFamily::x1: return "x1";
        case FeatureFamily::x2: return "x2";
        case FeatureFamily::x3: return "x3";
        case FeatureFamily::x4: return "x4";
    }
    return "?";
}

std::string_view to_string(Neighborhood n) {
    switch (n) {
        case Neighborhood::single: return "single";
        case Neighborhood::first: return "first";
        case Neighborhood::second: return "second";
    }
    return "?";
}

std::string to_string(const FeatureSpec& s) {
    std::string out = std::string(to_string(s.family)) + ":" + std::string(to_string(s.neighborhood));
    if (s.standardize) out += ":std";
    return out;
}

FeatureSpec parse_feature_spec(std::string_view s) {
    FeatureSpec spec;
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    for (;;) {
        const std::size_t colon = s.find(':', start);
        parts.push_back(s.substr(start, colon == s.npos ? s.npos : colon - start));
        if (colon == s.npos) break;
        start = colon + 1;
    }
    spec.family = parse_family(parts[0]);
    if (parts.size() > 1) spec.neighborhood = parse_neighborhood(parts[1]);
    if (parts.size() > 2) {
        if (parts[2] != "std") throw ConfigError("unknown feature flag \"" + std::string(parts[2]) + "\"");
        spec.standardize = true;
    }
    if (parts.size() > 3) throw ConfigError("malformed feature spec \"" + std::string(s) + "\"");
    return spec;
}

FeatureFrame extract(const DerivedFrame& d, const FeatureSpec& spec) {
    std::vector<const KelvinGrid*> channels;
    KelvinGrid intensity, speed;
    auto need = [](const KelvinGrid& g, const char* name) {
        if (g.empty()) throw ConfigError(std::string("feature extraction: channel ") + name + " is missing");
        return &g;
    };
    switch (spec.family) {
        case FeatureFamily::x1:
            channels = {need(d.t, "T"), need(d.h, "H")};
            break;
        case FeatureFamily::x2:
            channels = {need(d.t_prime, "T'"), need(d.h_prime, "H'")};
            break;
        case FeatureFamily::x3:
            channels = {need(d.delta_t, "dT"), need(d.h_double_prime, "H''")};
            break;
        case FeatureFamily::x4:
            if (!d.velocity) throw ConfigError("feature extraction: channel V is missing (needs previous frame)");
            if (d.intensity.empty()) throw ConfigError("feature extraction: channel I is missing");
            speed = flow_magnitude(*d.velocity);
            intensity = map_grid(d.intensity, [](std::uint8_t v) { return static_cast<double>(v); });
            channels = {&speed, &intensity, need(d.delta_t, "dT")};
            break;
    }

    const int rows = channels[0]->rows();
    const int cols = channels[0]->cols();
    const int base = spec.base_dim();
    const int nn = neighbor_count(spec.neighborhood);
    FeatureFrame f;
    f.rows = rows;
    f.cols = cols;
    f.data.resize(static_cast<Eigen::Index>(rows) * cols, spec.dim());
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            const Eigen::Index k = static_cast<Eigen::Index>(i) * cols + j;
            for (int c = 0; c < base; ++c) f.data(k, c) = (*channels[c])(i, j);
            for (int n = 0; n < nn; ++n)
                for (int c = 0; c < base; ++c)
                    f.data(k, base * (n + 1) + c) = channels[c]->clamped(i + kNeighborDi[n], j + kNeighborDj[n]);
        }
    return f;
}

Eigen::MatrixXd Standardizer::transform(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out = x.rowwise() - mean.transpose();
    for (Eigen::Index c = 0; c < out.cols(); ++c)
        if (variance[c] > 0.0) out.col(c) /= variance[c];
    return out;
}

FeatureFrame Standardizer::transform(const FeatureFrame& f) const {
    FeatureFrame out = f;
    out.data = transform(f.data);
    return out;
}

Standardizer standardize(const Eigen::MatrixXd& x) {
    if (x.rows() == 0) throw DataError("standardize: no samples");
    Standardizer s;
    s.mean = x.colwise().mean().transpose();
    s.variance = ((x.rowwise() - s.mean.transpose()).array().square().colwise().sum() /
                  static_cast<double>(x.rows()))
                     .transpose();
    return s;
}

Standardizer standardize(std::span<const FeatureFrame> frames) {
    return standardize(stack_frames(frames, false).x);
}

void write_feature_csv(std::ostream& out, const FeatureFrame& f) {
    for (int c = 0; c < f.dim(); ++c) out << "f" << c << ',';
    out << "label\n";
    for (Eigen::Index k = 0; k < f.pixels(); ++k) {
        for (int c = 0; c < f.dim(); ++c) out << f.data(k, c) << ',';
        if (f.labels) out << static_cast<int>((*f.labels)[static_cast<std::size_t>(k)]);
        out << '\n';
    }
}

Stacked stack_frames(std::span<const FeatureFrame> frames, bool need_labels) {
    Eigen::Index total = 0;
    int dim = -1;
    for (const auto& f : frames) {
        if (dim >= 0 && f.dim() != dim) throw DataError("stack_frames: feature dimensions differ");
        dim = f.dim();
        total += f.pixels();
        if (need_labels && !f.labels) throw DataError("stack_frames: frame without labels");
    }
    if (dim < 0) throw DataError("stack_frames: no frames");
    Stacked s;
    s.x.resize(total, dim);
    if (need_labels) s.y.reserve(static_cast<std::size_t>(total));
    Eigen::Index row = 0;
    for (const auto& f : frames) {
        s.x.middleRows(row, f.pixels()) = f.data;
        row += f.pixels();
        if (need_labels) s.y.insert(s.y.end(), f.labels->begin(), f.labels->end());
    }
    return s;
}

}  // namespace skyseg
