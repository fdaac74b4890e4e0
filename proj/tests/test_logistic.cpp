#include <gtest/gtest.h>

#include <Eigen/LU>
#include <cmath>
#include <random>

#include "qrl/logistic.hpp"
#include "qrl/simulation.hpp"

using namespace qrl;

TEST(Logistic, InterceptOnlyMatchesLogitOfMean) {
    const std::size_t n = 10'000;
    std::mt19937_64 eng(3);
    std::bernoulli_distribution b(0.3);
    std::vector<int> y(n);
    double ones = 0;
    for (auto& v : y) ones += (v = b(eng));
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n), 1);
    const auto fit = fit_logistic(x, y);
    ASSERT_TRUE(fit.converged);
    const double p = ones / static_cast<double>(n);
    EXPECT_NEAR(fit.coefficients(0), std::log(p / (1 - p)), 1e-8);
}

TEST(Logistic, RecoversPropensityCoefficients) {
    DGPConfig cfg;
    cfg.n = 100'000;
    cfg.seed = 17;
    const auto d = generate(cfg).dataset;
    const auto x = design_matrix(d, scenario_specs(Scenario::CC).propensity);
    const auto a = treatment_vector(d);
    const auto fit = fit_logistic(x, a);
    ASSERT_TRUE(fit.converged);
    const auto state = logistic_likelihood(x, a, fit.coefficients);
    const Eigen::MatrixXd cov = state.information.inverse();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double se = std::sqrt(cov(j, j));
        EXPECT_NEAR(fit.coefficients(j), dgp::kPropensity[j], 3 * se) << "coefficient " << j;
    }
}

TEST(Logistic, AgreesWithGridSearch) {
    Eigen::MatrixXd x(6, 2);
    x << 1, -1.5, 1, -0.4, 1, 0.3, 1, 0.9, 1, 1.6, 1, -0.8;
    const std::vector<int> y{0, 1, 0, 1, 1, 0};
    const auto fit = fit_logistic(x, y);
    ASSERT_TRUE(fit.converged);
    // Concave likelihood: a 1e-2 pass over [-5, 5]^2, then 1e-3 around its best.
    double best = -INFINITY, b0 = 0, b1 = 0;
    auto scan = [&](double lo0, double lo1, int steps, double h) {
        for (int i = 0; i <= steps; ++i) {
            for (int j = 0; j <= steps; ++j) {
                const double c0 = lo0 + i * h, c1 = lo1 + j * h;
                double ll = 0;
                for (int r = 0; r < 6; ++r) {
                    const double eta = c0 + c1 * x(r, 1);
                    ll += y[static_cast<std::size_t>(r)] * eta - log1pexp(eta);
                }
                if (ll > best) best = ll, b0 = c0, b1 = c1;
            }
        }
    };
    scan(-5, -5, 1000, 1e-2);
    scan(b0 - 0.02, b1 - 0.02, 40, 1e-3);
    EXPECT_NEAR(fit.coefficients(0), b0, 2e-3);
    EXPECT_NEAR(fit.coefficients(1), b1, 2e-3);
    EXPECT_GE(fit.log_likelihood, best - 1e-12);
}

TEST(Logistic, SeparationIsReported) {
    Eigen::MatrixXd x(4, 2);
    x << 1, -2, 1, -1, 1, 1, 1, 2;
    const std::vector<int> y{0, 0, 1, 1};
    const auto fit = fit_logistic(x, y);
    EXPECT_TRUE(fit.separated);
    EXPECT_FALSE(fit.converged);
}

TEST(Logistic, SingleClassThrows) {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 1);
    const std::vector<int> y{1, 1, 1};
    EXPECT_THROW(fit_logistic(x, y), EstimationError);
}
