#include <gtest/gtest.h>

#include <random>

#include "stress/sem.hpp"

using namespace stress;
using namespace stress::sem;

namespace {

// x_j = λ_j η + ε_j with η ~ N(0, φ), ε_j ~ N(0, ψ_j).
Eigen::MatrixXd one_factor_data(const std::vector<double>& lambda, double phi, const std::vector<double>& psi, long n,
                                std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    const auto p = static_cast<Eigen::Index>(lambda.size());
    Eigen::MatrixXd X(n, p);
    for (long i = 0; i < n; ++i) {
        const double eta = std::sqrt(phi) * d(rng);
        for (Eigen::Index j = 0; j < p; ++j) X(i, j) = lambda[j] * eta + std::sqrt(psi[j]) * d(rng);
    }
    return X;
}

Estimates random_estimates(std::mt19937_64& rng, int p) {
    std::uniform_real_distribution<double> u(0.2, 2.0), l(-1.5, 1.5);
    Estimates e;
    e.loadings.resize(p);
    e.loadings(0) = 1.0;
    for (int j = 1; j < p; ++j) e.loadings(j) = l(rng);
    e.residuals.resize(p);
    for (int j = 0; j < p; ++j) e.residuals(j) = u(rng);
    e.latent_variance = u(rng);
    return e;
}

double log_det(const Eigen::MatrixXd& m) {
    bool ok = false;
    const double v = log_det_spd(m, ok);
    EXPECT_TRUE(ok);
    return v;
}

}  // namespace

TEST(Fit, RecoversReferenceLoadings) {
    auto X = one_factor_data({1.0, 1.372, 1.925}, 1.0, {0.3, 0.3, 0.3}, 10000, 7);
    auto fit = fit_sem(X, {"Fused", {"ACC", "ECG", "RESP"}});
    EXPECT_TRUE(fit.converged);
    EXPECT_TRUE(fit.identified);
    EXPECT_EQ(fit.estimates.loadings(0), 1.0);
    EXPECT_NEAR(fit.estimates.loadings(1), 1.372, 0.05);
    EXPECT_NEAR(fit.estimates.loadings(2), 1.925, 0.05);
    EXPECT_NEAR(fit.estimates.latent_variance, 1.0, 0.1);
    EXPECT_LT(fit.gradient_norm, 1e-6);
    EXPECT_TRUE(std::isnan(fit.se_loadings(0)));
    for (int j = 1; j < 3; ++j) {
        EXPECT_GT(fit.se_loadings(j), 0.0);
        EXPECT_LT(fit.p_loadings(j), 1e-6);
        EXPECT_GE(fit.p_loadings(j), 0.0);
    }
    for (int j = 0; j < 3; ++j) EXPECT_GT(fit.se_residuals(j), 0.0);
    EXPECT_GT(fit.se_latent_variance, 0.0);
}

TEST(Fit, SixIndicatorRecovery) {
    const std::vector<double> lambda{1.0, 0.8, 1.5, -0.6, 1.2, 0.4};
    auto X = one_factor_data(lambda, 0.8, {0.5, 0.4, 0.6, 0.3, 0.5, 0.7}, 20000, 3);
    auto fit = fit_sem(X, {});
    EXPECT_EQ(fit.model.indicators.size(), 6u);
    EXPECT_LT(fit.gradient_norm, 1e-6);
    for (int j = 0; j < 6; ++j) EXPECT_NEAR(fit.estimates.loadings(j), lambda[j], 0.06);
    EXPECT_GT(fit.objective, 0.0);
}

TEST(Fit, SaturatedThreeIndicatorsReachZero) {
    // Three indicators are just identified: Σ(θ̂) reproduces S.
    auto X = one_factor_data({1.0, 0.7, 1.3}, 1.5, {0.4, 0.9, 0.2}, 500, 11);
    auto mom = moments(X);
    auto fit = fit_sem(mom, {});
    EXPECT_NEAR(fit.objective, 0.0, 1e-6);
    EXPECT_LT((implied_covariance(fit.estimates) - mom.S).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Objective, NonnegativeAtRandomPoints) {
    std::mt19937_64 rng(1);
    auto mom = moments(one_factor_data({1.0, 0.5, 1.1, 0.9}, 1.0, {0.5, 0.5, 0.5, 0.5}, 300, 2));
    const double lds = log_det(mom.S);
    for (int trial = 0; trial < 200; ++trial) {
        auto o = objective(random_estimates(rng, 4), mom.S, lds);
        ASSERT_TRUE(o.feasible);
        EXPECT_GE(o.value, -1e-12);
    }
    // Zero exactly when Σ = S.
    Estimates e = random_estimates(rng, 4);
    const Eigen::MatrixXd sigma = implied_covariance(e);
    EXPECT_NEAR(objective(e, sigma, log_det(sigma)).value, 0.0, 1e-12);
}

TEST(Objective, AnalyticGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(4);
    auto mom = moments(one_factor_data({1.0, 1.2, 0.7, 1.6, 0.3}, 1.0, {0.5, 0.6, 0.5, 0.4, 0.8}, 400, 5));
    const double lds = log_det(mom.S);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto e = random_estimates(rng, 5);
        const auto x = pack_natural(e);
        const auto g = natural_gradient(e, objective(e, mom.S, lds).G);
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double h = 1e-6;
            Eigen::VectorXd xp = x, xm = x;
            xp(i) += h;
            xm(i) -= h;
            const double fd = (objective(unpack_natural(xp), mom.S, lds).value - objective(unpack_natural(xm), mom.S, lds).value) / (2 * h);
            worst = std::max(worst, std::abs(g(i) - fd) / std::max({std::abs(g(i)), std::abs(fd), 1e-3}));
        }
        // Chain rule through the search coordinates.
        const auto theta = to_search(e);
        const auto gs = search_gradient(theta, e, objective(e, mom.S, lds).G);
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
            const double h = 1e-6;
            Eigen::VectorXd tp = theta, tm = theta;
            tp(i) += h;
            tm(i) -= h;
            const double fd = (objective(from_search(tp), mom.S, lds).value - objective(from_search(tm), mom.S, lds).value) / (2 * h);
            worst = std::max(worst, std::abs(gs(i) - fd) / std::max({std::abs(gs(i)), std::abs(fd), 1e-3}));
        }
    }
    EXPECT_LT(worst, 1e-5);
}

TEST(Fit, ScaleConsistency) {
    auto X = one_factor_data({1.0, 0.9, 1.4, 0.6}, 1.2, {0.5, 0.3, 0.6, 0.4}, 3000, 9);
    const auto base = fit_sem(X, {});
    for (int j = 1; j < 4; ++j) {
        for (double c : {0.25, 3.0}) {
            Eigen::MatrixXd Y = X;
            Y.col(j) *= c;
            const auto f = fit_sem(Y, {});
            for (int k = 0; k < 4; ++k) {
                const double expect = base.estimates.loadings(k) * (k == j ? c : 1.0);
                EXPECT_NEAR(f.estimates.loadings(k), expect, 1e-4) << "column " << j << " scale " << c;
            }
            EXPECT_NEAR(f.objective, base.objective, 1e-8);
        }
    }
}

TEST(Fit, IndependentIndicatorsNeverLookSignificant) {
    // With no shared variance the model sits on a flat ridge. Each fit must either
    // raise a diagnostic or return loadings indistinguishable from zero.
    int raised = 0, clean = 0;
    for (int p : {3, 4, 6})
        for (std::uint64_t seed = 0; seed < 6; ++seed) {
            std::vector<double> lam(p, 0.0), psi(p, 1.0);
            auto X = one_factor_data(lam, 1.0, psi, 5000, 100 + seed);
            try {
                auto fit = fit_sem(X, {});
                ++clean;
                EXPECT_TRUE(fit.identified);
                EXPECT_TRUE(fit.boundary.empty());
                for (int j = 1; j < p; ++j) EXPECT_LT(std::abs(fit.z_loadings(j)), 3.0) << "p=" << p << " seed=" << seed;
            } catch (const Error& e) {
                ++raised;
                EXPECT_TRUE(e.code() == "BoundaryVariance" || e.code() == "NotIdentified" || e.code() == "NoConvergence")
                    << e.what();
            }
        }
    EXPECT_EQ(raised + clean, 18);
    EXPECT_GT(raised, 0);
}

TEST(Fit, BoundaryIsReportedWhenNotThrowing) {
    // φ pinned: the first indicator carries only noise while the others share a factor
    // that it does not load on, forcing a variance to the floor.
    auto X = one_factor_data({0.0, 1.0, 1.0}, 1.0, {1.0, 0.2, 0.2}, 4000, 3);
    FitOptions opt;
    opt.throw_on_boundary = false;
    try {
        auto fit = fit_sem(X, {}, opt);
        EXPECT_TRUE(!fit.boundary.empty() || !fit.identified);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "NoConvergence");
    }
}

TEST(Fit, InputErrors) {
    auto code = [](auto f) {
        try {
            f();
        } catch (const Error& e) {
            return e.code();
        }
        return std::string("none");
    };
    auto X = one_factor_data({1.0, 1.0, 1.0}, 1.0, {0.5, 0.5, 0.5}, 200, 1);
    EXPECT_EQ(code([&] { fit_sem(Eigen::MatrixXd(X.leftCols(2)), {}); }), "TooFewIndicators");
    Eigen::MatrixXd dup(200, 3);
    dup << X.col(0), X.col(0), X.col(1);
    EXPECT_EQ(code([&] { fit_sem(dup, {}); }), "NotPositiveDefinite");
    EXPECT_EQ(code([&] { fit_sem(Eigen::MatrixXd(X.topRows(6)), {}); }), "TooFewObservations");
    EXPECT_EQ(code([&] { fit_sem(X, {"Fused", {"a", "b"}}); }), "InvalidArgument");
    FitOptions few;
    few.max_iterations = 1;
    EXPECT_EQ(code([&] { fit_sem(X, {}, few); }), "NoConvergence");
}

TEST(Wald, NormalReference) {
    EXPECT_NEAR(wald_p(1.959964, 1.0), 0.05, 1e-4);
    EXPECT_EQ(wald_p(0.0, 2.0), 1.0);
    // 2 (1 − Φ(6)), Φ from a high-precision table
    EXPECT_NEAR(wald_p(3.0, 0.5), 1.973175290075e-9, 1e-15);
    EXPECT_NEAR(wald_p(-3.0, 0.5), wald_p(3.0, 0.5), 1e-20);
    EXPECT_NEAR(normal_cdf(1.959964), 0.975, 1e-7);
    EXPECT_THROW(wald_p(1.0, 0.0), Error);
    EXPECT_THROW(wald_p(1.0, -1.0), Error);
}

TEST(Rank, OrderTiesAndNegatives) {
    SemFit fit;
    fit.converged = true;
    fit.model.indicators = {"ACC", "ECG", "RESP"};
    fit.estimates.loadings = Eigen::Vector3d(1.0, 1.372, 1.925);
    auto r = rank_sensors(fit);
    EXPECT_EQ(r[0].id, "RESP");
    EXPECT_EQ(r[1].id, "ECG");
    EXPECT_EQ(r[2].id, "ACC");
    auto w = sensor_weights(r);
    EXPECT_EQ(w.at("ECG"), 1.372);

    fit.estimates.loadings = Eigen::Vector3d(1.0, 1.0, 1.0);
    r = rank_sensors(fit);
    EXPECT_EQ(r[0].id, "ACC");
    EXPECT_EQ(r[1].id, "ECG");
    EXPECT_EQ(r[2].id, "RESP");

    fit.model.indicators = {"ACC", "ECG", "EDA", "RESP"};
    fit.estimates.loadings = Eigen::Vector4d(1.0, -2.0, 0.5, -0.1);
    r = rank_sensors(fit);
    EXPECT_EQ(r[0].id, "ACC");
    EXPECT_EQ(r[1].id, "EDA");
    EXPECT_TRUE(r[2].flagged && r[3].flagged);
    EXPECT_EQ(r[2].weight, 0.0);
    EXPECT_EQ(r[3].id, "ECG");

    fit.converged = false;
    EXPECT_THROW(rank_sensors(fit), Error);
}

TEST(Report, ArcTable) {
    auto X = one_factor_data({1.0, 1.372, 1.925}, 1.0, {0.3, 0.3, 0.3}, 2000, 8);
    auto fit = fit_sem(X, {"Fused", {"ACC", "ECG", "RESP"}});
    auto j = to_json(fit);
    ASSERT_EQ(j["arcs"].size(), 3u);
    EXPECT_TRUE(j["arcs"][0]["fixed"].get<bool>());
    EXPECT_TRUE(j["arcs"][0]["se"].is_null());
    EXPECT_EQ(j["arcs"][2]["to"], "RESP");
    EXPECT_DOUBLE_EQ(j["arcs"][2]["estimate"].get<double>(), fit.estimates.loadings(2));
    EXPECT_EQ(j["ranking"][0]["id"], "RESP");
}
