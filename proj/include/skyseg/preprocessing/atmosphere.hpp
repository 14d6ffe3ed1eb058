#pragma once

#include <array>
#include <optional>

#include "skyseg/core/grid.hpp"

namespace skyseg {

/// Background irradiance model: a scatter term exponential in the column
/// index plus a circumsolar direct term centred on the Sun pixel.
///
///   A(i,j) = theta1 * exp((j - y0) / theta2)
///          + theta3 * theta4^2 / ((i - x0)^2 + (j - y0)^2 + theta4^2)^(3/2)
///
/// x0 is the Sun's row coordinate and y0 its column coordinate.
struct AtmosphericParams {
    double theta1 = 0.0;  // K
    double theta2 = 1.0;  // px; may be infinite (flat scatter term)
    double theta3 = 0.0;  // K px
    double theta4 = 1.0;  // px, > 0
    double x0 = 0.0;
    double y0 = 0.0;

    double scatter(int j) const;
    double direct(int i, int j) const;
    double operator()(int i, int j) const { return scatter(j) + direct(i, j); }
};

/// Point evaluation of the background model.
double eval_atmosphere(const AtmosphericParams& p, int i, int j);

/// Whole-frame evaluation.
KelvinGrid render_atmosphere(const AtmosphericParams& p, int rows, int cols);

struct AtmosphereFit {
    AtmosphericParams params;
    double cost = 0.0;          // 0.5 * sum of squared residuals at params
    double initial_cost = 0.0;  // same, at the initial guess
    int iterations = 0;
    bool converged = false;
};

struct AtmosphereFitOptions {
    int max_iterations = 200;
    double cost_tolerance = 1e-8;
    /// Warm start; when absent the guess is built from the frame itself.
    std::optional<AtmosphericParams> initial;
    /// When set, the Sun centre may not leave this radius (px) around the
    /// supplied Sun position. A tracking camera keeps the Sun near its aim
    /// point, and without the bound a warm cloud can capture the Sun term.
    std::optional<double> sun_radius;
    /// Upper bound on the Sun core width theta4 (px); the core is set by the
    /// optics, and a wide core would soak up clouds around the Sun.
    std::optional<double> max_core;
};

/// Internal parameter vector of the fitter:
/// [theta1, 1/theta2, theta3, log(theta4), x0, y0].
using AtmosphereVector = std::array<double, 6>;
AtmosphereVector to_vector(const AtmosphericParams& p);
AtmosphericParams from_vector(const AtmosphereVector& v);

/// Data-driven starting point. Column medians give theta1 (at the Sun's
/// column) and theta2 (log-slope between the first and last columns). The Sun
/// sits at the largest 3x3 excess over the column medians within
/// `search_radius` of the hint (default: a sixth of the frame), with
/// theta4 = 4 px and theta3 from that excess.
AtmosphericParams initial_guess(const KelvinGrid& frame, double sun_row, double sun_col, double search_radius = -1.0);

/// Damped Gauss-Newton (Levenberg-Marquardt) least squares with an analytic
/// Jacobian. Pixels with mask == 0 are ignored when a mask is supplied.
AtmosphereFit fit_atmosphere(const KelvinGrid& frame, double sun_row, double sun_col,
                             const AtmosphereFitOptions& options = {},
                             const LabelMask* use_mask = nullptr);

/// 0.5 * sum (A - frame)^2 over used pixels and its gradient with respect to
/// the internal parameter vector.
double atmosphere_cost(const AtmosphereVector& v, const KelvinGrid& frame,
                       const LabelMask* use_mask = nullptr);
AtmosphereVector atmosphere_cost_gradient(const AtmosphereVector& v, const KelvinGrid& frame,
                                          const LabelMask* use_mask = nullptr);

struct AtmosphereRemoval {
    KelvinGrid delta_t;      // T' - A
    KelvinGrid background;   // A
    double tropopause_temp;  // mean of A over the frame
};

AtmosphereRemoval remove_atmosphere(const KelvinGrid& t_prime, const AtmosphericParams& params);

}  // namespace skyseg
