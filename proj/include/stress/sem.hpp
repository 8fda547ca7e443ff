#pragma once

// Single-latent structural equation (measurement) model fitted by maximum
// likelihood:
//
//   Σ(θ) = φ λλᵀ + diag(ψ),  λ₁ ≡ 1
//   F_ML(θ) = ln|Σ| + tr(S Σ⁻¹) − ln|S| − p
//
// Variances are optimized on a shifted log scale (v = 1e-8 + eᵗ), so the
// search is unconstrained and never crosses the variance floor.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "stress/error.hpp"

namespace stress::sem {

inline constexpr double kVarianceFloor = 1e-8;

struct SampleMoments {
    long n = 0;
    Eigen::MatrixXd S;  // unbiased (n − 1) covariance of the indicator columns
};

inline SampleMoments moments(const Eigen::MatrixXd& data) {
    SampleMoments m;
    m.n = data.rows();
    if (m.n < 2) fail("TooFewObservations", "need at least 2 observations", "data");
    const Eigen::RowVectorXd mean = data.colwise().mean();
    const Eigen::MatrixXd centered = data.rowwise() - mean;
    m.S = centered.transpose() * centered / static_cast<double>(m.n - 1);
    return m;
}

struct PathModel {
    std::string latent = "Fused";
    std::vector<std::string> indicators;
};

// Natural parameters.
struct Estimates {
    Eigen::VectorXd loadings;   // λ, p entries, λ₁ = 1
    Eigen::VectorXd residuals;  // ψ, p entries
    double latent_variance = 1.0;
};

inline Eigen::MatrixXd implied_covariance(const Estimates& e) {
    Eigen::MatrixXd sigma = e.latent_variance * e.loadings * e.loadings.transpose();
    sigma.diagonal() += e.residuals;
    return sigma;
}

struct ObjectiveValue {
    double value = std::numeric_limits<double>::infinity();
    bool feasible = false;
    Eigen::MatrixXd G;  // ∂F/∂Σ = Σ⁻¹ − Σ⁻¹ S Σ⁻¹
};

inline double log_det_spd(const Eigen::MatrixXd& m, bool& ok) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    ok = llt.info() == Eigen::Success;
    if (!ok) return 0.0;
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

inline ObjectiveValue objective(const Estimates& e, const Eigen::MatrixXd& S, double log_det_s) {
    ObjectiveValue out;
    const Eigen::MatrixXd sigma = implied_covariance(e);
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) return out;
    const double ld = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(S.rows(), S.rows()));
    const Eigen::MatrixXd inv_s = inv * S;
    out.value = ld + inv_s.trace() - log_det_s - static_cast<double>(S.rows());
    out.G = inv - inv_s * inv;
    out.feasible = std::isfinite(out.value);
    return out;
}

// Gradient in natural free parameters (λ₂..λ_p, ψ₁..ψ_p, φ).
inline Eigen::VectorXd natural_gradient(const Estimates& e, const Eigen::MatrixXd& G) {
    const auto p = e.loadings.size();
    Eigen::VectorXd g(2 * p);
    const Eigen::VectorXd Gl = G * e.loadings;
    for (Eigen::Index j = 1; j < p; ++j) g(j - 1) = 2.0 * e.latent_variance * Gl(j);
    for (Eigen::Index j = 0; j < p; ++j) g(p - 1 + j) = G(j, j);
    g(2 * p - 1) = e.loadings.dot(Gl);
    return g;
}

// Free natural parameter vector <-> Estimates.
inline Eigen::VectorXd pack_natural(const Estimates& e) {
    const auto p = e.loadings.size();
    Eigen::VectorXd x(2 * p);
    x.head(p - 1) = e.loadings.tail(p - 1);
    x.segment(p - 1, p) = e.residuals;
    x(2 * p - 1) = e.latent_variance;
    return x;
}

inline Estimates unpack_natural(const Eigen::VectorXd& x) {
    const auto p = x.size() / 2;
    Estimates e;
    e.loadings.resize(p);
    e.loadings(0) = 1.0;
    e.loadings.tail(p - 1) = x.head(p - 1);
    e.residuals = x.segment(p - 1, p);
    e.latent_variance = x(2 * p - 1);
    return e;
}

// Optimizer coordinates: loadings as-is, variances as t with v = floor + eᵗ.
inline Estimates from_search(const Eigen::VectorXd& theta) {
    const auto p = theta.size() / 2;
    Eigen::VectorXd x = theta;
    for (Eigen::Index i = p - 1; i < 2 * p; ++i) x(i) = kVarianceFloor + std::exp(theta(i));
    return unpack_natural(x);
}

inline Eigen::VectorXd to_search(const Estimates& e) {
    Eigen::VectorXd theta = pack_natural(e);
    const auto p = e.loadings.size();
    for (Eigen::Index i = p - 1; i < 2 * p; ++i) theta(i) = std::log(std::max(theta(i) - kVarianceFloor, 1e-300));
    return theta;
}

inline Eigen::VectorXd search_gradient(const Eigen::VectorXd& theta, const Estimates& e, const Eigen::MatrixXd& G) {
    Eigen::VectorXd g = natural_gradient(e, G);
    const auto p = e.loadings.size();
    for (Eigen::Index i = p - 1; i < 2 * p; ++i) g(i) *= std::exp(theta(i));
    return g;
}

struct FitOptions {
    int max_iterations = 500;
    double gradient_tolerance = 1e-6;
    double step_tolerance = 1e-10;
    bool throw_on_boundary = true;  // also covers a singular information matrix
};

struct SemFit {
    PathModel model;
    long n = 0;
    Estimates estimates;
    // Standard errors, z and Wald p per free parameter; the fixed λ₁ has NaN.
    Eigen::VectorXd se_loadings, z_loadings, p_loadings;
    Eigen::VectorXd se_residuals;
    double se_latent_variance = 0.0;
    double objective = 0.0;
    double gradient_norm = 0.0;  // ∞-norm of the natural-parameter gradient
    bool converged = false;
    bool identified = false;  // observed information is positive definite
    int iterations = 0;
    std::vector<std::string> boundary;  // parameters pinned near the variance floor
};

// Two-sided Wald test against a standard normal reference.
inline double wald_p(double estimate, double se) {
    if (!(se > 0.0)) fail("NonpositiveSE", "standard error must be positive", "se");
    return std::erfc(std::abs(estimate / se) / std::sqrt(2.0));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

namespace detail {

inline Estimates starting_values(const Eigen::MatrixXd& S) {
    const auto p = S.rows();
    Estimates e;
    e.latent_variance = std::max(0.5 * S(0, 0), 1e-4);
    e.loadings.resize(p);
    e.loadings(0) = 1.0;
    for (Eigen::Index j = 1; j < p; ++j) e.loadings(j) = S(0, j) / e.latent_variance;
    e.residuals.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double common = e.latent_variance * e.loadings(j) * e.loadings(j);
        e.residuals(j) = std::max(S(j, j) - common, 0.1 * S(j, j));
    }
    return e;
}

// Central differences of the analytic natural gradient.
inline Eigen::MatrixXd natural_hessian(const Estimates& at, const Eigen::MatrixXd& S, double log_det_s) {
    const Eigen::VectorXd x0 = pack_natural(at);
    const auto m = x0.size();
    Eigen::MatrixXd H(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double h = 1e-5 * std::max(1.0, std::abs(x0(i)));
        Eigen::VectorXd xp = x0, xm = x0;
        xp(i) += h;
        xm(i) -= h;
        const auto ep = unpack_natural(xp), em = unpack_natural(xm);
        const auto op = objective(ep, S, log_det_s), om = objective(em, S, log_det_s);
        if (!op.feasible || !om.feasible) return Eigen::MatrixXd::Constant(m, m, std::numeric_limits<double>::quiet_NaN());
        H.col(i) = (natural_gradient(ep, op.G) - natural_gradient(em, om.G)) / (2.0 * h);
    }
    return 0.5 * (H + H.transpose());
}

}  // namespace detail

inline SemFit fit_sem(const SampleMoments& mom, const PathModel& model, const FitOptions& opt = {}) {
    const Eigen::MatrixXd& S = mom.S;
    const auto p = S.rows();
    if (p < 3) fail("TooFewIndicators", "a single-latent model needs at least 3 indicators", "indicators");
    if (!model.indicators.empty() && static_cast<Eigen::Index>(model.indicators.size()) != p)
        fail("InvalidArgument", "indicator names do not match the data columns", "indicators");
    if (mom.n <= 2 * p) fail("TooFewObservations", "observations must exceed the free parameters", "data");
    bool ok = false;
    const double log_det_s = log_det_spd(S, ok);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> s_eig(S, Eigen::EigenvaluesOnly);
    // Relative test: exact collinearity can survive Cholesky through rounding.
    if (!ok || !(s_eig.eigenvalues().minCoeff() > 1e-12 * s_eig.eigenvalues().maxCoeff()))
        fail("NotPositiveDefinite", "sample covariance is not positive definite", "data");

    SemFit fit;
    fit.model = model;
    if (fit.model.indicators.empty())
        for (Eigen::Index j = 0; j < p; ++j) fit.model.indicators.push_back("x" + std::to_string(j + 1));
    fit.n = mom.n;

    // BFGS with Armijo backtracking in search coordinates.
    Eigen::VectorXd theta = to_search(detail::starting_values(S));
    auto est = from_search(theta);
    auto obj = objective(est, S, log_det_s);
    if (!obj.feasible) fail("NotPositiveDefinite", "starting covariance is not positive definite", "data");
    Eigen::VectorXd g = search_gradient(theta, est, obj.G);
    Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(2 * p, 2 * p);
    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        if (g.lpNorm<Eigen::Infinity>() < 1e-10) break;
        Eigen::VectorXd dir = -Hinv * g;
        if (dir.dot(g) >= 0.0) {
            Hinv.setIdentity();
            dir = -g;
        }
        double step = 1.0;
        Eigen::VectorXd next;
        ObjectiveValue next_obj;
        Estimates next_est;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
            next = theta + step * dir;
            next_est = from_search(next);
            next_obj = objective(next_est, S, log_det_s);
            if (next_obj.feasible && next_obj.value <= obj.value + 1e-4 * step * g.dot(dir)) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        const Eigen::VectorXd next_g = search_gradient(next, next_est, next_obj.G);
        const Eigen::VectorXd s = next - theta;
        const Eigen::VectorXd y = next_g - g;
        const double sy = s.dot(y);
        if (sy > 1e-12) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2 * p, 2 * p);
            Hinv = (I - rho * s * y.transpose()) * Hinv * (I - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        theta = next;
        est = next_est;
        obj = next_obj;
        g = next_g;
        if (s.lpNorm<Eigen::Infinity>() < opt.step_tolerance) break;
    }

    // Newton polish in natural coordinates when the solution is interior.
    auto interior = [&](const Estimates& e) {
        return e.latent_variance > 1e-6 && (e.residuals.array() > 1e-6).all();
    };
    for (int k = 0; k < 20 && it < opt.max_iterations && interior(est); ++k) {
        Eigen::VectorXd gn = natural_gradient(est, obj.G);
        if (gn.lpNorm<Eigen::Infinity>() < 1e-12) break;
        const Eigen::MatrixXd H = detail::natural_hessian(est, S, log_det_s);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
        Eigen::VectorXd x = pack_natural(est);
        Eigen::VectorXd delta = ldlt.solve(gn);
        bool improved = false;
        for (double step = 1.0; step > 1e-4; step *= 0.5) {
            const auto cand = unpack_natural(x - step * delta);
            if (!interior(cand)) continue;
            const auto co = objective(cand, S, log_det_s);
            if (co.feasible && co.value <= obj.value + 1e-14) {
                const double gnew = natural_gradient(cand, co.G).lpNorm<Eigen::Infinity>();
                if (gnew < gn.lpNorm<Eigen::Infinity>()) {
                    est = cand;
                    obj = co;
                    improved = true;
                    break;
                }
            }
        }
        if (!improved) break;
        ++it;
    }

    fit.estimates = est;
    fit.objective = obj.value;
    fit.iterations = it;
    const Eigen::VectorXd gn = natural_gradient(est, obj.G);
    const Eigen::VectorXd gs = search_gradient(to_search(est), est, obj.G);
    fit.gradient_norm = gn.lpNorm<Eigen::Infinity>();
    fit.converged = gs.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance || fit.gradient_norm < opt.gradient_tolerance;

    // Variances near the floor relative to the data scale.
    const double scale = S.diagonal().maxCoeff();
    for (Eigen::Index j = 0; j < p; ++j)
        if (est.residuals(j) < 1e-6 * scale) fit.boundary.push_back("psi_" + fit.model.indicators[j]);
    if (est.latent_variance < 1e-6 * scale) fit.boundary.push_back("phi_" + fit.model.latent);

    // Observed information: Hessian of (n − 1)/2 · F_ML in natural parameters.
    const auto nan = std::numeric_limits<double>::quiet_NaN();
    fit.se_loadings = Eigen::VectorXd::Constant(p, nan);
    fit.z_loadings = Eigen::VectorXd::Constant(p, nan);
    fit.p_loadings = Eigen::VectorXd::Constant(p, nan);
    fit.se_residuals = Eigen::VectorXd::Constant(p, nan);
    fit.se_latent_variance = nan;
    const Eigen::MatrixXd info = 0.5 * static_cast<double>(mom.n - 1) * detail::natural_hessian(est, S, log_det_s);
    if (info.allFinite()) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info, Eigen::EigenvaluesOnly);
        const auto& ev = eig.eigenvalues();
        fit.identified = eig.info() == Eigen::Success && ev.minCoeff() > 1e-10 * ev.maxCoeff() && ev.minCoeff() > 0.0;
        if (fit.identified) {
            const Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(2 * p, 2 * p));
            for (Eigen::Index j = 1; j < p; ++j) {
                const double v = cov(j - 1, j - 1);
                if (v > 0.0) {
                    fit.se_loadings(j) = std::sqrt(v);
                    fit.z_loadings(j) = est.loadings(j) / fit.se_loadings(j);
                    fit.p_loadings(j) = wald_p(est.loadings(j), fit.se_loadings(j));
                }
            }
            for (Eigen::Index j = 0; j < p; ++j)
                if (cov(p - 1 + j, p - 1 + j) > 0.0) fit.se_residuals(j) = std::sqrt(cov(p - 1 + j, p - 1 + j));
            if (cov(2 * p - 1, 2 * p - 1) > 0.0) fit.se_latent_variance = std::sqrt(cov(2 * p - 1, 2 * p - 1));
        }
    }

    if (!fit.boundary.empty() && opt.throw_on_boundary)
        fail("BoundaryVariance", fit.boundary.front() + " is pinned at the variance floor", fit.boundary.front());
    if (fit.converged && !fit.identified && opt.throw_on_boundary)
        fail("NotIdentified", "information matrix is singular at the optimum; standard errors are undefined", "data");
    if (!fit.converged)
        fail("NoConvergence", "no optimum after " + std::to_string(fit.iterations) + " iterations (gradient " +
                                  std::to_string(fit.gradient_norm) + ")", "max_iterations");
    return fit;
}

inline SemFit fit_sem(const Eigen::MatrixXd& data, const PathModel& model, const FitOptions& opt = {}) {
    return fit_sem(moments(data), model, opt);
}

struct RankedSensor {
    std::string id;
    double loading = 0.0;
    double weight = 0.0;  // loading for positive loadings, else 0
    bool flagged = false;  // negative loading
};

// Positive loadings first, descending; ties keep the declared order.
// Negative loadings follow, flagged, with zero weight.
inline std::vector<RankedSensor> rank_sensors(const SemFit& fit) {
    if (!fit.converged) fail("UnconvergedFit", "cannot rank sensors from an unconverged fit", "fit");
    std::vector<RankedSensor> out;
    for (std::size_t j = 0; j < fit.model.indicators.size(); ++j) {
        const double l = fit.estimates.loadings(static_cast<Eigen::Index>(j));
        out.push_back({fit.model.indicators[j], l, l > 0.0 ? l : 0.0, l < 0.0});
    }
    std::stable_sort(out.begin(), out.end(), [](const RankedSensor& a, const RankedSensor& b) {
        if (a.flagged != b.flagged) return !a.flagged;
        return a.loading > b.loading;
    });
    return out;
}

inline std::map<std::string, double> sensor_weights(const std::vector<RankedSensor>& ranked) {
    std::map<std::string, double> w;
    for (const auto& r : ranked) w[r.id] = r.weight;
    return w;
}

inline nlohmann::json to_json(const SemFit& fit) {
    auto num = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::json arcs = nlohmann::json::array();
    const auto p = fit.estimates.loadings.size();
    for (Eigen::Index j = 0; j < p; ++j)
        arcs.push_back({{"from", fit.model.latent},
                        {"to", fit.model.indicators[j]},
                        {"estimate", fit.estimates.loadings(j)},
                        {"se", num(fit.se_loadings(j))},
                        {"z", num(fit.z_loadings(j))},
                        {"p_value", num(fit.p_loadings(j))},
                        {"fixed", j == 0}});
    nlohmann::json residuals = nlohmann::json::object();
    for (Eigen::Index j = 0; j < p; ++j)
        residuals[fit.model.indicators[j]] = {{"estimate", fit.estimates.residuals(j)}, {"se", num(fit.se_residuals(j))}};
    nlohmann::json ranking = nlohmann::json::array();
    if (fit.converged)
        for (const auto& r : rank_sensors(fit))
            ranking.push_back({{"id", r.id}, {"loading", r.loading}, {"weight", r.weight}, {"flagged", r.flagged}});
    return {{"latent", fit.model.latent},
            {"indicators", fit.model.indicators},
            {"n", fit.n},
            {"arcs", arcs},
            {"residual_variances", residuals},
            {"latent_variance", {{"estimate", fit.estimates.latent_variance}, {"se", num(fit.se_latent_variance)}}},
            {"objective", fit.objective},
            {"gradient_norm", fit.gradient_norm},
            {"converged", fit.converged},
            {"identified", fit.identified},
            {"iterations", fit.iterations},
            {"boundary", fit.boundary},
            {"ranking", ranking}};
}

}  // namespace stress::sem
