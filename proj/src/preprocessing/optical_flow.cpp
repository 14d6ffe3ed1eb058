#include "skyseg/preprocessing/optical_flow.hpp"

#include <cmath>
#include <vector>

#include "skyseg/core/error.hpp"

namespace skyseg {

namespace {

double bilinear(const KelvinGrid& g, double y, double x) {
    const int i0 = static_cast<int>(std::floor(y));
    const int j0 = static_cast<int>(std::floor(x));
    const double fy = y - i0;
    const double fx = x - j0;
    return (1 - fy) * ((1 - fx) * g.clamped(i0, j0) + fx * g.clamped(i0, j0 + 1)) +
           fy * ((1 - fx) * g.clamped(i0 + 1, j0) + fx * g.clamped(i0 + 1, j0 + 1));
}

}  // namespace

double FlowVector::magnitude() const { return std::hypot(u, v); }

FlowGrid optical_flow(const IntensityGrid& prev, const IntensityGrid& curr, const FlowOptions& options) {
    if (!prev.same_shape(curr)) throw DataError("optical_flow: frame shapes differ");
    const int rows = prev.rows();
    const int cols = prev.cols();
    const int r = options.radius;

    const KelvinGrid a = map_grid(prev, [](std::uint8_t v) { return static_cast<double>(v); });
    const KelvinGrid b = map_grid(curr, [](std::uint8_t v) { return static_cast<double>(v); });

    // Template gradients by central differences with replicate borders.
    KelvinGrid gx(rows, cols), gy(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            gx(i, j) = 0.5 * (a.clamped(i, j + 1) - a.clamped(i, j - 1));
            gy(i, j) = 0.5 * (a.clamped(i + 1, j) - a.clamped(i - 1, j));
        }

    const int side = 2 * r + 1;
    std::vector<double> weights(static_cast<std::size_t>(side) * side);
    double wsum = 0.0;
    for (int di = -r; di <= r; ++di)
        for (int dj = -r; dj <= r; ++dj) {
            const double w = std::exp(-(di * di + dj * dj) / (2.0 * options.sigma * options.sigma));
            weights[(di + r) * side + (dj + r)] = w;
            wsum += w;
        }
    for (double& w : weights) w /= wsum;

    FlowGrid flow(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            double gxx = 0, gxy = 0, gyy = 0;
            for (int di = -r; di <= r; ++di)
                for (int dj = -r; dj <= r; ++dj) {
                    const double w = weights[(di + r) * side + (dj + r)];
                    const double x = gx.clamped(i + di, j + dj);
                    const double y = gy.clamped(i + di, j + dj);
                    gxx += w * x * x;
                    gxy += w * x * y;
                    gyy += w * y * y;
                }
            const double tr = gxx + gyy;
            const double det = gxx * gyy - gxy * gxy;
            const double min_eig = 0.5 * (tr - std::sqrt(std::max(0.0, tr * tr - 4.0 * det)));
            if (!(min_eig >= options.min_eigen)) continue;

            double u = 0.0, v = 0.0;
            for (int it = 0; it < options.iterations; ++it) {
                double bx = 0, by = 0;
                for (int di = -r; di <= r; ++di)
                    for (int dj = -r; dj <= r; ++dj) {
                        const double w = weights[(di + r) * side + (dj + r)];
                        const int qi = std::clamp(i + di, 0, rows - 1);
                        const int qj = std::clamp(j + dj, 0, cols - 1);
                        const double diff = bilinear(b, qi + v, qj + u) - a(qi, qj);
                        bx += w * gx(qi, qj) * diff;
                        by += w * gy(qi, qj) * diff;
                    }
                const double du = -(gyy * bx - gxy * by) / det;
                const double dv = -(-gxy * bx + gxx * by) / det;
                u += du;
                v += dv;
                const double mag = std::hypot(u, v);
                if (mag > options.max_displacement) {
                    u *= options.max_displacement / mag;
                    v *= options.max_displacement / mag;
                }
                if (std::hypot(du, dv) < 1e-3) break;
            }
            flow(i, j) = {u, v};
        }
    return flow;
}

KelvinGrid flow_magnitude(const FlowGrid& flow) {
    return map_grid(flow, [](const FlowVector& f) { return f.magnitude(); });
}

}  // namespace skyseg
