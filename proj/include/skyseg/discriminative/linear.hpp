#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace skyseg {

/// Explicit feature map of the inhomogeneous polynomial kernel (1 + x.x')^n
/// for n in {1, 2}. Layout for n = 2:
///   [1, sqrt2 x_1..sqrt2 x_d, x_1^2..x_d^2, sqrt2 x_j x_k (j < k, row-major)].
class PolyMap {
public:
    PolyMap() = default;
    PolyMap(int input_dim, int order);

    int input_dim() const { return d_; }
    int order() const { return n_; }
    /// Number of monomials, C(d + n, n).
    int output_dim() const { return out_; }

    Eigen::VectorXd operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    /// Row-wise map of an n x d sample matrix.
    Eigen::MatrixXd expand(const Eigen::MatrixXd& x) const;

private:
    int d_ = 0;
    int n_ = 1;
    int out_ = 1;
};

Eigen::VectorXd poly_expand(const Eigen::Ref<const Eigen::VectorXd>& x, int order);

enum class LinearFamily { rrc, svc, gpc };
std::string_view to_string(LinearFamily f);

struct LinearModel {
    LinearFamily family = LinearFamily::rrc;
    PolyMap map;
    Eigen::VectorXd w;  // over mapped space; w[0] multiplies the constant monomial
    double hyper = 1.0;  // gamma for RRC/GPC, C for SVC
    Eigen::MatrixXd sigma_n;  // GPC posterior covariance
    int iterations = 0;
    bool converged = true;

    /// Decision values w . phi(x) of raw feature rows.
    Eigen::VectorXd decision(const Eigen::MatrixXd& x) const;
    /// p(cloud | x) of raw feature rows.
    Eigen::VectorXd probabilities(const Eigen::MatrixXd& x) const;
};

/// Ridge regression on targets {-1, +1}: w = (Phi^T Phi + gamma I)^-1 Phi^T t.
/// Takes the mapped design matrix Phi. gamma = 0 is accepted only when the
/// normal matrix is non-singular.
LinearModel fit_rrc(const Eigen::MatrixXd& phi, std::span<const std::uint8_t> y, double gamma);

/// Ridge objective 0.5 * ||Phi w - t||^2 + 0.5 * gamma ||w||^2 and gradient.
double rrc_objective(const Eigen::MatrixXd& phi, std::span<const std::uint8_t> y, double gamma,
                     const Eigen::VectorXd& w, Eigen::VectorXd* gradient = nullptr);

struct NewtonOptions {
    int max_iterations = 100;
    double gradient_tolerance = 1e-8;  // relative to the initial gradient norm
};

/// L2-loss SVM in the primal: 0.5 ||w||^2 + C sum max(0, 1 - t_i w.phi_i)^2,
/// minimized by Newton steps on the generalized Hessian with backtracking.
/// Returns the best iterate with converged = false when out of iterations.
LinearModel fit_svc(const Eigen::MatrixXd& phi, std::span<const std::uint8_t> y, double c,
                    const NewtonOptions& options = {});

double svc_objective(const Eigen::MatrixXd& phi, std::span<const std::uint8_t> y, double c,
                     const Eigen::VectorXd& w, Eigen::VectorXd* gradient = nullptr);

/// Bayesian logistic regression with prior N(0, gamma I): Newton iterations
/// to the MAP weights, Laplace covariance Sigma_n = (Phi^T R Phi + I/gamma)^-1.
LinearModel fit_gpc(const Eigen::MatrixXd& phi, std::span<const std::uint8_t> y, double gamma,
                    const NewtonOptions& options = {}, std::vector<double>* log_posterior_trace = nullptr);

double gpc_log_posterior(const Eigen::MatrixXd& phi, std::span<const std::uint8_t> y, double gamma,
                         const Eigen::VectorXd& w, Eigen::VectorXd* gradient = nullptr);

/// Laplace approximation of log p(y | gamma).
double gpc_log_evidence(const Eigen::MatrixXd& phi, std::span<const std::uint8_t> y, double gamma);

/// Picks gamma by ascending the Laplace evidence in log gamma with a central
/// finite-difference gradient, then fits at that gamma.
LinearModel fit_gpc_evidence(const Eigen::MatrixXd& phi, std::span<const std::uint8_t> y, double gamma0,
                             int max_steps = 30);

/// Probit-style moderated sigmoid: sigma(mu / sqrt(1 + pi s2 / 8)).
double moderated_sigmoid(double mu, double s2);
double sigmoid(double a);

struct Prediction {
    double p_cloud;
    bool cloud;
};
Prediction predict(const LinearModel& model, const Eigen::Ref<const Eigen::VectorXd>& phi, double lambda);

}  // namespace skyseg
