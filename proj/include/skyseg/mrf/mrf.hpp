#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "skyseg/core/grid.hpp"
#include "skyseg/generative/gaussian.hpp"

namespace skyseg {

/// Omega1 couples each pixel with its 4 nearest neighbours, Omega2 with all 8.
enum class CliqueOrder { first, second };

CliqueOrder parse_clique_order(std::string_view s);
std::string_view to_string(CliqueOrder c);

struct MrfModel {
    std::array<GaussianClass, 2> classes;  // 0 = clear, 1 = cloud
    double beta = 1.0;
    CliqueOrder order = CliqueOrder::first;
    double gamma = 1.0;
};

/// Temperature schedule T_{t+1} = alpha * T_t.
struct AnnealSchedule {
    double t0 = 1.0;
    double alpha = 0.75;
    int t_max = 50;
    double sample_fraction = 0.2;
    std::uint64_t seed = 0;
};

enum class MrfInference { icm, sa };
MrfInference parse_inference(std::string_view s);
std::string_view to_string(MrfInference m);

/// Per-pixel negative log-likelihoods, column 0 = clear, column 1 = cloud.
Eigen::MatrixXd unary_terms(const MrfModel& model, const Eigen::MatrixXd& x);

/// Labelling energy
///   E = sum_i -log N(x_i; theta_{y_i}) - beta * sum_{cliques} s_i s_j + bias * #cloud,
/// with s = 2y - 1. Each neighbouring pair is counted once. `bias` shifts the
/// decision like the virtual prior does for the other models; it is zero at
/// lambda = 1.
double energy(const LabelMask& labels, const Eigen::MatrixXd& unary, const MrfModel& model, double bias = 0.0);

/// Local energy change of switching pixel k from clear to cloud.
double flip_delta(const LabelMask& labels, const Eigen::MatrixXd& unary, const MrfModel& model, int k,
                  double bias = 0.0);

/// One raster-order pass of in-place conditional-mode updates. Exact ties go
/// to cloud. Returns the number of pixels that changed.
int icm_sweep(LabelMask& labels, const Eigen::MatrixXd& unary, const MrfModel& model, double bias = 0.0);

/// Sweeps until nothing changes or `max_sweeps` passes. Returns sweeps run.
int icm(LabelMask& labels, const Eigen::MatrixXd& unary, const MrfModel& model, double bias = 0.0,
        int max_sweeps = 50);

/// The ceil(fraction * n) pixels whose two label choices are closest in local
/// energy, ordered by increasing margin (ties by pixel index).
std::vector<int> margin_sampling(const LabelMask& labels, const Eigen::MatrixXd& unary, const MrfModel& model,
                                 double fraction, double bias = 0.0);

/// Metropolis single-pixel flips over margin-sampled pixels, cooling after
/// every pass, then one settling ICM sweep. Returns accepted flips.
int anneal(LabelMask& labels, const Eigen::MatrixXd& unary, const MrfModel& model, const AnnealSchedule& schedule,
           double bias = 0.0);

/// Class densities from labelled pixels (GDA estimates plus gamma * I).
MrfModel fit_mrf_supervised(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y, double gamma, double beta,
                            CliqueOrder order);

/// Labels one frame: starts from the pixelwise decision, then runs ICM to a
/// fixpoint (at most 50 sweeps) or the annealing schedule.
LabelMask segment_mrf(const MrfModel& model, const Eigen::MatrixXd& x, int rows, int cols, MrfInference mode,
                      const std::optional<AnnealSchedule>& schedule, double bias = 0.0);

/// Posterior of cloud at each pixel given its neighbours' final labels.
Eigen::VectorXd conditional_posterior(const LabelMask& labels, const Eigen::MatrixXd& unary, const MrfModel& model);

struct UnsupervisedMrf {
    MrfModel model;
    LabelMask mask;
    int iterations = 0;
    int collapses = 0;
    bool converged = false;
};

struct UnsupervisedOptions {
    double gamma = 1.0;
    int max_outer = 50;
    int max_collapses = 3;
    /// Annealing replaces the ICM label update when set.
    std::optional<AnnealSchedule> schedule;
    double bias = 0.0;
};

/// Unsupervised segmentation of a single frame. Starts from k-means, then
/// alternates class re-estimation with one labelling pass until the mask stops
/// changing. Cloud is the component with the larger mean on column
/// `temperature_index`.
UnsupervisedMrf fit_icm_unsupervised(const Eigen::MatrixXd& x, int rows, int cols, double beta, CliqueOrder order,
                                     std::uint64_t seed, int temperature_index, const UnsupervisedOptions& options = {});

}  // namespace skyseg
