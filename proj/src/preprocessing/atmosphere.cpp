#include "skyseg/preprocessing/atmosphere.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace skyseg {

namespace {

constexpr double kFlatTheta2 = 1e12;

struct Terms {
    double value;
    std::array<double, 6> grad;  // w.r.t. the internal vector
};

// Model value and gradient at one pixel for internal vector v.
Terms model_terms(const AtmosphereVector& v, int i, int j) {
    const double theta1 = v[0], kappa = v[1], theta3 = v[2], rho = v[3], x0 = v[4], y0 = v[5];
    const double theta4 = std::exp(rho);
    const double dj = j - y0;
    const double di = i - x0;
    const double e = std::exp(kappa * dj);
    const double s = theta1 * e;

    const double t4sq = theta4 * theta4;
    const double q = di * di + dj * dj + t4sq;
    const double q32 = q * std::sqrt(q);
    const double q52 = q32 * q;
    const double d = theta3 * t4sq / q32;

    Terms t;
    t.value = s + d;
    t.grad[0] = e;
    t.grad[1] = s * dj;
    t.grad[2] = t4sq / q32;
    // dD/dtheta4 = theta3 theta4 (2q - 3 theta4^2) / q^(5/2); chain through rho.
    t.grad[3] = theta3 * t4sq * (2.0 * q - 3.0 * t4sq) / q52;
    t.grad[4] = 3.0 * theta3 * t4sq * di / q52;
    t.grad[5] = -s * kappa + 3.0 * theta3 * t4sq * dj / q52;
    return t;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// The Sun is tracked, so its centre stays near the frame and its core is
// narrower than the frame. Steps outside this box are rejected.
struct SunBound {
    double row, col, radius;  // radius < 0: unbounded
    double max_core;          // < 0: unbounded
};

// Moves the Sun back inside the configured bounds.
void project(AtmosphereVector& v, const SunBound& sun) {
    if (sun.max_core >= 0.0) v[3] = std::min(v[3], std::log(sun.max_core));
    if (sun.radius >= 0.0) {
        const double di = v[4] - sun.row;
        const double dj = v[5] - sun.col;
        const double dist = std::hypot(di, dj);
        if (dist > sun.radius) {
            v[4] = sun.row + di * sun.radius / dist;
            v[5] = sun.col + dj * sun.radius / dist;
        }
    }
}

bool plausible(const AtmosphereVector& v, int rows, int cols) {
    const double theta4 = std::exp(v[3]);
    return theta4 >= 0.1 && theta4 <= std::max(rows, cols) && v[4] >= -0.5 * rows && v[4] <= 1.5 * rows &&
           v[5] >= -0.5 * cols && v[5] <= 1.5 * cols;
}

bool used(const LabelMask* mask, int i, int j) { return mask == nullptr || (*mask)(i, j) != 0; }

}  // namespace

double AtmosphericParams::scatter(int j) const {
    if (!std::isfinite(theta2)) return theta1;
    return theta1 * std::exp((j - y0) / theta2);
}

double AtmosphericParams::direct(int i, int j) const {
    const double di = i - x0;
    const double dj = j - y0;
    const double q = di * di + dj * dj + theta4 * theta4;
    return theta3 * theta4 * theta4 / (q * std::sqrt(q));
}

double eval_atmosphere(const AtmosphericParams& p, int i, int j) { return p(i, j); }

KelvinGrid render_atmosphere(const AtmosphericParams& p, int rows, int cols) {
    KelvinGrid g(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) g(i, j) = p(i, j);
    return g;
}

AtmosphereVector to_vector(const AtmosphericParams& p) {
    const double kappa = std::isfinite(p.theta2) ? 1.0 / p.theta2 : 0.0;
    return {p.theta1, kappa, p.theta3, std::log(p.theta4), p.x0, p.y0};
}

AtmosphericParams from_vector(const AtmosphereVector& v) {
    AtmosphericParams p;
    p.theta1 = v[0];
    p.theta2 = std::abs(v[1]) < 1.0 / kFlatTheta2 ? std::numeric_limits<double>::infinity() : 1.0 / v[1];
    p.theta3 = v[2];
    p.theta4 = std::exp(v[3]);
    p.x0 = v[4];
    p.y0 = v[5];
    return p;
}

AtmosphericParams initial_guess(const KelvinGrid& frame, double sun_row, double sun_col, double search_radius) {
    const int rows = frame.rows();
    const int cols = frame.cols();
    // Column medians approximate the scatter term away from the Sun.
    std::vector<double> col_median(static_cast<std::size_t>(cols));
    std::vector<double> column(static_cast<std::size_t>(rows));
    for (int j = 0; j < cols; ++j) {
        for (int i = 0; i < rows; ++i) column[static_cast<std::size_t>(i)] = frame(i, j);
        std::nth_element(column.begin(), column.begin() + rows / 2, column.end());
        col_median[static_cast<std::size_t>(j)] = column[static_cast<std::size_t>(rows / 2)];
    }
    // Sun: the largest 3x3-averaged excess over the column median near the hint.
    const int radius =
        search_radius >= 0.0 ? static_cast<int>(std::floor(search_radius)) : std::max(rows, cols) / 6;
    double best = -std::numeric_limits<double>::infinity();
    int bi = static_cast<int>(std::lround(sun_row));
    int bj = static_cast<int>(std::lround(sun_col));
    for (int i = std::max(1, bi - radius); i <= std::min(rows - 2, bi + radius); ++i)
        for (int j = std::max(1, bj - radius); j <= std::min(cols - 2, bj + radius); ++j) {
            double e = 0.0;
            for (int a = -1; a <= 1; ++a)
                for (int b = -1; b <= 1; ++b) e += frame(i + a, j + b) - col_median[static_cast<std::size_t>(j + b)];
            if (e > best) {
                best = e;
                sun_row = i;
                sun_col = j;
            }
        }
    AtmosphericParams p;
    p.x0 = sun_row;
    p.y0 = sun_col;
    const auto yc = static_cast<std::size_t>(std::clamp(static_cast<int>(sun_col), 0, cols - 1));
    p.theta1 = col_median[yc];
    const double first = col_median.front();
    const double last = col_median.back();
    const double slope = first > 0.0 && last > 0.0 ? std::log(last / first) / std::max(1, cols - 1) : 0.0;
    p.theta2 = std::abs(slope) > 1e-6 ? 1.0 / slope : 10.0 * cols;
    p.theta4 = 4.0;
    p.theta3 = std::max(best / 9.0, 1.0) * p.theta4;
    return p;
}

double atmosphere_cost(const AtmosphereVector& v, const KelvinGrid& frame, const LabelMask* use_mask) {
    double c = 0.0;
    for (int i = 0; i < frame.rows(); ++i)
        for (int j = 0; j < frame.cols(); ++j) {
            if (!used(use_mask, i, j)) continue;
            const double r = model_terms(v, i, j).value - frame(i, j);
            c += r * r;
        }
    return 0.5 * c;
}

AtmosphereVector atmosphere_cost_gradient(const AtmosphereVector& v, const KelvinGrid& frame,
                                          const LabelMask* use_mask) {
    AtmosphereVector g{};
    for (int i = 0; i < frame.rows(); ++i)
        for (int j = 0; j < frame.cols(); ++j) {
            if (!used(use_mask, i, j)) continue;
            const Terms t = model_terms(v, i, j);
            const double r = t.value - frame(i, j);
            for (int k = 0; k < 6; ++k) g[k] += r * t.grad[k];
        }
    return g;
}

AtmosphereFit fit_atmosphere(const KelvinGrid& frame, double sun_row, double sun_col,
                             const AtmosphereFitOptions& options, const LabelMask* use_mask) {
    using Mat6 = Eigen::Matrix<double, 6, 6>;
    using Vec6 = Eigen::Matrix<double, 6, 1>;

    const SunBound bound{sun_row, sun_col, options.sun_radius.value_or(-1.0), options.max_core.value_or(-1.0)};
    AtmosphereVector v = to_vector(options.initial.value_or(initial_guess(frame, sun_row, sun_col, bound.radius)));
    project(v, bound);
    double cost = atmosphere_cost(v, frame, use_mask);

    AtmosphereFit fit;
    fit.initial_cost = cost;
    double damping = 1e-3;

    int it = 0;
    bool stationary = false;
    for (; it < options.max_iterations && cost > options.cost_tolerance && !stationary; ++it) {
        Mat6 jtj = Mat6::Zero();
        Vec6 jtr = Vec6::Zero();
        for (int i = 0; i < frame.rows(); ++i)
            for (int j = 0; j < frame.cols(); ++j) {
                if (!used(use_mask, i, j)) continue;
                const Terms t = model_terms(v, i, j);
                const Eigen::Map<const Vec6> g(t.grad.data());
                jtj.selfadjointView<Eigen::Lower>().rankUpdate(g);
                jtr += (t.value - frame(i, j)) * g;
            }
        jtj = jtj.selfadjointView<Eigen::Lower>();

        bool improved = false;
        for (int tries = 0; tries < 30; ++tries) {
            Mat6 a = jtj;
            for (int k = 0; k < 6; ++k) a(k, k) += damping * std::max(jtj(k, k), 1e-12);
            const Vec6 step = a.ldlt().solve(-jtr);
            AtmosphereVector trial = v;
            for (int k = 0; k < 6; ++k) trial[k] += step[k];
            project(trial, bound);
            const double trial_cost =
                plausible(trial, frame.rows(), frame.cols()) ? atmosphere_cost(trial, frame, use_mask) : kInf;
            if (std::isfinite(trial_cost) && trial_cost < cost) {
                const double rel = (cost - trial_cost) / std::max(cost, 1e-300);
                v = trial;
                cost = trial_cost;
                damping = std::max(damping / 3.0, 1e-12);
                improved = true;
                stationary = rel < 1e-15;
                break;
            }
            damping *= 4.0;
        }
        if (!improved) stationary = true;
    }

    fit.params = from_vector(v);
    fit.cost = cost;
    fit.iterations = it;
    fit.converged = cost <= options.cost_tolerance || stationary;
    return fit;
}

AtmosphereRemoval remove_atmosphere(const KelvinGrid& t_prime, const AtmosphericParams& params) {
    AtmosphereRemoval out{KelvinGrid(t_prime.rows(), t_prime.cols()),
                          render_atmosphere(params, t_prime.rows(), t_prime.cols()), 0.0};
    double sum = 0.0;
    for (std::size_t k = 0; k < t_prime.size(); ++k) {
        out.delta_t[k] = t_prime[k] - out.background[k];
        sum += out.background[k];
    }
    out.tropopause_temp = sum / static_cast<double>(t_prime.size());
    return out;
}

}  // namespace skyseg
