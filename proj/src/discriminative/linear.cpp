#include "skyseg/discriminative/linear.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>

#include "skyseg/core/error.hpp"
#include "skyseg/models/decision.hpp"

namespace skyseg {

namespace {

const double kSqrt2 = std::sqrt(2.0);

Eigen::VectorXd signed_targets(std::span<const std::uint8_t> y) {
    Eigen::VectorXd t(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) t[static_cast<Eigen::Index>(i)] = y[i] ? 1.0 : -1.0;
    return t;
}

void check_design(const Eigen::MatrixXd& phi, std::span<const std::uint8_t> y, const char* who) {
    if (phi.rows() != static_cast<Eigen::Index>(y.size()))
        throw DataError(std::string(who) + ": label count does not match design rows");
    if (phi.rows() == 0) throw DataError(std::string(who) + ": no training samples");
}

PolyMap map_for_design(const Eigen::MatrixXd& phi) {
    // The model stores the map that produced phi; callers going through the
    // segmenter set it afterwards. Default to an identity-like linear map.
    return PolyMap(static_cast<int>(phi.cols()) - 1, 1);
}

// log(1 + exp(a)) without overflow.
double softplus(double a) { return a > 0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a)); }

}  // namespace

PolyMap::PolyMap(int input_dim, int order) : d_(input_dim), n_(order) {
    if (order != 1 && order != 2) throw ConfigError("polynomial map: order must be 1 or 2, got " + std::to_string(order));
    if (input_dim < 0) throw ConfigError("polynomial map: negative input dimension");
    out_ = order == 1 ? 1 + d_ : (d_ + 2) * (d_ + 1) / 2;
}

Eigen::VectorXd PolyMap::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != d_) throw DataError("polynomial map: input has the wrong dimension");
    Eigen::VectorXd phi(out_);
    phi[0] = 1.0;
    if (n_ == 1) {
        phi.tail(d_) = x;
        return phi;
    }
    int p = 1;
    for (int j = 0; j < d_; ++j) phi[p++] = kSqrt2 * x[j];
    for (int j = 0; j < d_; ++j) phi[p++] = x[j] * x[j];
    for (int j = 0; j < d_; ++j)
        for (int k = j + 1; k < d_; ++k) phi[p++] = kSqrt2 * x[j] * x[k];
    return phi;
}

Eigen::MatrixXd PolyMap::expand(const Eigen::MatrixXd& x) const {
    if (x.cols() != d_) throw DataError("polynomial map: input has the wrong dimension");
    Eigen::MatrixXd phi(x.rows(), out_);
    phi.col(0).setOnes();
    if (n_ == 1) {
        phi.rightCols(d_) = x;
        return phi;
    }
    int p = 1;
    for (int j = 0; j < d_; ++j) phi.col(p++) = kSqrt2 * x.col(j);
    for (int j = 0; j < d_; ++j) phi.col(p++) = x.col(j).array().square();
    for (int j = 0; j < d_; ++j)
        for (int k = j + 1; k < d_; ++k) phi.col(p++) = kSqrt2 * x.col(j).cwiseProduct(x.col(k));
    return phi;
}

Eigen::VectorXd poly_expand(const Eigen::Ref<const Eigen::VectorXd>& x, int order) {
    return PolyMap(static_cast<int>(x.size()), order)(x);
}

std::string_view to_string(LinearFamily f) {
    switch (f) {
        case LinearFamily::rrc: return "rrc";
        case LinearFamily::svc: return "svc";
        case LinearFamily::gpc: return "gpc";
    }
    return "?";
}

double sigmoid(double a) {
    if (a >= 0) return 1.0 / (1.0 + std::exp(-a));
    const double e = std::exp(a);
    return e / (1.0 + e);
}

double moderated_sigmoid(double mu, double s2) {
    return sigmoid(mu / std::sqrt(1.0 + std::numbers::pi * s2 / 8.0));
}

Eigen::VectorXd LinearModel::decision(const Eigen::MatrixXd& x) const { return map.expand(x) * w; }

Eigen::VectorXd LinearModel::probabilities(const Eigen::MatrixXd& x) const {
    const Eigen::MatrixXd phi = map.expand(x);
    const Eigen::VectorXd a = phi * w;
    Eigen::VectorXd p(a.size());
    if (family == LinearFamily::gpc && sigma_n.size() > 0) {
        const Eigen::VectorXd s2 = (phi * sigma_n).cwiseProduct(phi).rowwise().sum();
        for (Eigen::Index i = 0; i < a.size(); ++i) p[i] = moderated_sigmoid(a[i], s2[i]);
    } else {
        for (Eigen::Index i = 0; i < a.size(); ++i) p[i] = sigmoid(a[i]);
    }
    return p;
}

double rrc_objective(const Eigen::MatrixXd& phi, std::span<const std::uint8_t> y, double gamma,
                     const Eigen::VectorXd& w, Eigen::VectorXd* gradient) {
    const Eigen::VectorXd r = phi * w - signed_targets(y);
    if (gradient) *gradient = phi.transpose() * r + gamma * w;
    return 0.5 * r.squaredNorm() + 0.5 * gamma * w.squaredNorm();
}

LinearModel fit_rrc(const Eigen::MatrixXd& phi, std::span<const std::uint8_t> y, double gamma) {
    check_design(phi, y, "RRC");
    if (gamma < 0.0) throw ConfigError("RRC: gamma must be non-negative");
    Eigen::MatrixXd normal = phi.transpose() * phi;
    normal.diagonal().array() += gamma;
    const Eigen::VectorXd rhs = phi.transpose() * signed_targets(y);
    Eigen::LLT<Eigen::MatrixXd> llt(normal);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-14)
        throw ConfigError("RRC: normal matrix is singular; use gamma > 0");
    LinearModel m;
    m.family = LinearFamily::rrc;
    m.map = map_for_design(phi);
    m.hyper = gamma;
    m.w = llt.solve(rhs);
    return m;
}

double svc_objective(const Eigen::MatrixXd& phi, std::span<const std::uint8_t> y, double c,
                     const Eigen::VectorXd& w, Eigen::VectorXd* gradient) {
    const Eigen::VectorXd t = signed_targets(y);
    const Eigen::VectorXd slack = (1.0 - t.cwiseProduct(phi * w).array()).cwiseMax(0.0).matrix();
    if (gradient) *gradient = w - 2.0 * c * phi.transpose() * slack.cwiseProduct(t);
    return 0.5 * w.squaredNorm() + c * slack.squaredNorm();
}

LinearModel fit_svc(const Eigen::MatrixXd& phi, std::span<const std::uint8_t> y, double c,
                    const NewtonOptions& options) {
    check_design(phi, y, "SVC");
    if (!(c > 0.0)) throw ConfigError("SVC: C must be positive");
    const Eigen::Index dim = phi.cols();
    const Eigen::VectorXd t = signed_targets(y);
    LinearModel m;
    m.family = LinearFamily::svc;
    m.map = map_for_design(phi);
    m.hyper = c;
    m.w = Eigen::VectorXd::Zero(dim);
    m.converged = false;

    Eigen::VectorXd g;
    double f = svc_objective(phi, y, c, m.w, &g);
    const double g0 = std::max(1.0, g.norm());
    for (int it = 0; it < options.max_iterations; ++it) {
        if (g.norm() <= options.gradient_tolerance * g0) {
            m.converged = true;
            break;
        }
        // Generalized Hessian: I + 2C sum over active margins of phi phi^T.
        const Eigen::VectorXd margin = t.cwiseProduct(phi * m.w);
        std::vector<Eigen::Index> active;
        for (Eigen::Index i = 0; i < margin.size(); ++i)
            if (margin[i] < 1.0) active.push_back(i);
        Eigen::MatrixXd h = Eigen::MatrixXd::Identity(dim, dim);
        if (!active.empty()) {
            Eigen::MatrixXd pa(static_cast<Eigen::Index>(active.size()), dim);
            for (std::size_t r = 0; r < active.size(); ++r) pa.row(static_cast<Eigen::Index>(r)) = phi.row(active[r]);
            h.selfadjointView<Eigen::Lower>().rankUpdate(pa.transpose(), 2.0 * c);
            h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
        }
        const Eigen::VectorXd step = -h.llt().solve(g);
        // Backtracking (Armijo) line search.
        double s = 1.0;
        const double slope = g.dot(step);
        Eigen::VectorXd w_new, g_new;
        double f_new = f;
        for (int ls = 0; ls < 40; ++ls) {
            w_new = m.w + s * step;
            f_new = svc_objective(phi, y, c, w_new, &g_new);
            if (f_new <= f + 1e-4 * s * slope) break;
            s *= 0.5;
        }
        m.iterations = it + 1;
        if (!(f_new < f)) {
            // No further decrease is representable: we are at the optimum up
            // to rounding.
            m.converged = g.norm() <= 1e-6 * g0;
            break;
        }
        m.w = w_new;
        f = f_new;
        g = g_new;
    }
    if (!m.converged && g.norm() <= options.gradient_tolerance * g0) m.converged = true;
    return m;
}

double gpc_log_posterior(const Eigen::MatrixXd& phi, std::span<const std::uint8_t> y, double gamma,
                         const Eigen::VectorXd& w, Eigen::VectorXd* gradient) {
    const Eigen::VectorXd a = phi * w;
    double ll = 0.0;
    Eigen::VectorXd resid(a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        // y log s(a) + (1-y) log(1-s(a)) = y a - log(1 + e^a)
        const double yi = y[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
        ll += yi * a[i] - softplus(a[i]);
        resid[i] = yi - sigmoid(a[i]);
    }
    if (gradient) *gradient = phi.transpose() * resid - w / gamma;
    return ll - 0.5 * w.squaredNorm() / gamma;
}

namespace {

Eigen::MatrixXd gpc_precision(const Eigen::MatrixXd& phi, double gamma, const Eigen::VectorXd& w) {
    const Eigen::VectorXd a = phi * w;
    Eigen::VectorXd r(a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double s = sigmoid(a[i]);
        r[i] = s * (1.0 - s);
    }
    const Eigen::MatrixXd scaled = phi.array().colwise() * r.array().sqrt();
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(phi.cols(), phi.cols()) / gamma;
    h.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose());
    h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
    return h;
}

}  // namespace

LinearModel fit_gpc(const Eigen::MatrixXd& phi, std::span<const std::uint8_t> y, double gamma,
                    const NewtonOptions& options, std::vector<double>* trace) {
    check_design(phi, y, "GPC");
    if (!(gamma > 0.0)) throw ConfigError("GPC: gamma (prior variance) must be positive");
    LinearModel m;
    m.family = LinearFamily::gpc;
    m.map = map_for_design(phi);
    m.hyper = gamma;
    m.w = Eigen::VectorXd::Zero(phi.cols());
    m.converged = false;

    Eigen::VectorXd g;
    double lp = gpc_log_posterior(phi, y, gamma, m.w, &g);
    if (trace) trace->assign(1, lp);
    const double g0 = std::max(1.0, g.norm());
    for (int it = 0; it < options.max_iterations; ++it) {
        if (g.norm() <= options.gradient_tolerance * g0) {
            m.converged = true;
            break;
        }
        Eigen::LLT<Eigen::MatrixXd> llt(gpc_precision(phi, gamma, m.w));
        if (llt.info() != Eigen::Success) throw ConvergenceError("GPC: Hessian factorization failed");
        const Eigen::VectorXd step = llt.solve(g);  // ascent direction
        const double slope = g.dot(step);
        double s = 1.0;
        Eigen::VectorXd w_new, g_new;
        double lp_new = lp;
        for (int ls = 0; ls < 40; ++ls) {
            w_new = m.w + s * step;
            lp_new = gpc_log_posterior(phi, y, gamma, w_new, &g_new);
            if (lp_new >= lp + 1e-4 * s * slope) break;
            s *= 0.5;
        }
        m.iterations = it + 1;
        if (!(lp_new > lp)) {
            m.converged = g.norm() <= 1e-6 * g0;
            break;
        }
        m.w = w_new;
        lp = lp_new;
        g = g_new;
        if (trace) trace->push_back(lp);
    }
    if (!m.converged && g.norm() <= options.gradient_tolerance * g0) m.converged = true;
    Eigen::LLT<Eigen::MatrixXd> llt(gpc_precision(phi, gamma, m.w));
    if (llt.info() != Eigen::Success) throw ConvergenceError("GPC: posterior precision is not positive definite");
    m.sigma_n = llt.solve(Eigen::MatrixXd::Identity(phi.cols(), phi.cols()));
    return m;
}

double gpc_log_evidence(const Eigen::MatrixXd& phi, std::span<const std::uint8_t> y, double gamma) {
    const LinearModel m = fit_gpc(phi, y, gamma);
    const double lp = gpc_log_posterior(phi, y, gamma, m.w);
    Eigen::LLT<Eigen::MatrixXd> llt(gpc_precision(phi, gamma, m.w));
    const Eigen::MatrixXd& l = llt.matrixLLT();
    double log_det = 0.0;
    for (Eigen::Index k = 0; k < l.rows(); ++k) log_det += 2.0 * std::log(l(k, k));
    const double dim = static_cast<double>(phi.cols());
    // log p(y|w) + log N(w; 0, gamma I) + (D/2) log 2pi - 0.5 log det H
    return lp - 0.5 * dim * std::log(gamma) - 0.5 * log_det;
}

LinearModel fit_gpc_evidence(const Eigen::MatrixXd& phi, std::span<const std::uint8_t> y, double gamma0,
                             int max_steps) {
    if (!(gamma0 > 0.0)) throw ConfigError("GPC evidence: initial gamma must be positive");
    double u = std::log(gamma0);
    double e = gpc_log_evidence(phi, y, gamma0);
    double step = 1.0;
    const double h = 1e-3;
    for (int it = 0; it < max_steps && step > 1e-4; ++it) {
        const double grad =
            (gpc_log_evidence(phi, y, std::exp(u + h)) - gpc_log_evidence(phi, y, std::exp(u - h))) / (2.0 * h);
        if (std::abs(grad) < 1e-6) break;
        const double dir = grad > 0 ? 1.0 : -1.0;
        bool moved = false;
        while (step > 1e-4) {
            const double cand = u + dir * step;
            const double ec = gpc_log_evidence(phi, y, std::exp(cand));
            if (ec > e) {
                u = cand;
                e = ec;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }
    return fit_gpc(phi, y, std::exp(u));
}

Prediction predict(const LinearModel& model, const Eigen::Ref<const Eigen::VectorXd>& phi, double lambda) {
    if (phi.size() != model.w.size()) throw DataError("predict: mapped feature has the wrong dimension");
    const double a = model.w.dot(phi);
    double p = sigmoid(a);
    if (model.family == LinearFamily::gpc && model.sigma_n.size() > 0)
        p = moderated_sigmoid(a, phi.dot(model.sigma_n * phi));
    return {p, decide_cloud(p, lambda)};
}

}  // namespace skyseg
