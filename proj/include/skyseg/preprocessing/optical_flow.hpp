#pragma once

#include "skyseg/core/grid.hpp"
#include "skyseg/preprocessing/normalize.hpp"

namespace skyseg {

struct FlowVector {
    double u = 0.0;  // column displacement, pixels/frame
    double v = 0.0;  // row displacement, pixels/frame

    double magnitude() const;
    friend bool operator==(const FlowVector&, const FlowVector&) = default;
};

using FlowGrid = Grid<FlowVector>;

struct FlowOptions {
    int radius = 2;          // 5x5 window
    double sigma = 1.0;      // Gaussian window weight
    double min_eigen = 1e-6;  // structure tensors below this are rejected
    int iterations = 5;
    double max_displacement = 4.0;
};

/// Dense weighted Lucas-Kanade flow from `prev` to `curr`: for every pixel,
/// the displacement d minimising sum_q w(q) (curr(q + d) - prev(q))^2 over a
/// Gaussian-weighted window, refined by a few warping iterations.
FlowGrid optical_flow(const IntensityGrid& prev, const IntensityGrid& curr, const FlowOptions& options = {});

KelvinGrid flow_magnitude(const FlowGrid& flow);

}  // namespace skyseg
