#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "qrl/simulation.hpp"

using namespace qrl;

namespace {

double halton(std::size_t i, std::size_t base) {
    double f = 1.0, r = 0.0;
    for (std::size_t k = i; k > 0; k /= base) {
        f /= static_cast<double>(base);
        r += f * static_cast<double>(k % base);
    }
    return r;
}

// Residual-quantile truth by quasi-Monte Carlo over covariates and bisection
// on the closed-form conditional residual distributions.
class AnalyticTruth {
public:
    AnalyticTruth(const DGPConfig& cfg, double t0, std::size_t points = 1 << 16) : cfg_(cfg), t0_(t0) {
        Eigen::Matrix3d sigma = Eigen::Matrix3d::Constant(cfg.rho);
        sigma.diagonal().setOnes();
        const Eigen::Matrix3d l = sigma.llt().matrixL();
        const boost::math::normal_distribution<double> nd;
        for (std::size_t i = 1; i <= points; ++i) {
            const Eigen::Vector3d z(boost::math::quantile(nd, halton(i, 2)), boost::math::quantile(nd, halton(i, 3)),
                                    boost::math::quantile(nd, halton(i, 5)));
            const Eigen::Vector3d x = l * z;
            const double base = dgp::kEventIntercept + dgp::kEventX1 * x(0) + dgp::kEventX2 * x(1) +
                                dgp::kEventX1Sq * x(0) * x(0);
            for (int a = 0; a < 2; ++a) {
                lambda_[a].push_back(std::exp(base + cfg.beta_t * a));
                at_t0_[a].push_back(std::exp(-lambda_[a].back() * std::pow(t0, cfg.nu)));
            }
        }
    }

    double quantile(int arm, double tau, bool always) const {
        const auto& lam = lambda_[arm];
        auto cdf = [&](double r) {
            double num = 0, den = 0;
            for (std::size_t i = 0; i < lam.size(); ++i) {
                const double s0 = at_t0_[0][i], s1 = at_t0_[1][i];
                const double sa = arm ? s1 : s0;
                double w, f;
                if (cfg_.variant == DgpVariant::Copula) {
                    w = always ? std::min(s0, s1) : sa;
                    f = 1.0 - std::exp(-lam[i] * std::pow(r, cfg_.nu));
                } else {
                    w = always ? s0 * s1 : sa;
                    f = 1.0 - std::exp(-lam[i] * (std::pow(t0_ + r, cfg_.nu) - std::pow(t0_, cfg_.nu)));
                }
                num += w * f;
                den += w;
            }
            return num / den;
        };
        double lo = 0.0, hi = 20.0;
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            (cdf(mid) < tau ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

private:
    DGPConfig cfg_;
    double t0_;
    std::vector<double> lambda_[2], at_t0_[2];
};

double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double t = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == t) ++i;
        while (j < b.size() && b[j] == t) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / static_cast<double>(a.size()) -
                                 static_cast<double>(j) / static_cast<double>(b.size())));
    }
    return d;
}

StudyConfig small_study() {
    StudyConfig cfg;
    cfg.ns = {300};
    cfg.beta_ts = {0.0, -0.5};
    cfg.scenarios = {Scenario::CC, Scenario::II};
    cfg.methods = {Method::KM, Method::IW, Method::DR, Method::PS};
    cfg.taus = {0.3, 0.5};
    cfg.replications = 12;
    cfg.bootstrap_B = 10;
    cfg.truth_samples = 20000;
    cfg.seed = 21;
    return cfg;
}

}  // namespace

TEST(Simulation, ObservedDataFollowLatentOutcomes) {
    DGPConfig cfg;
    cfg.n = 5000;
    cfg.beta_t = -0.5;
    const auto g = generate(cfg);
    std::size_t treated = 0, events = 0;
    for (std::size_t i = 0; i < cfg.n; ++i) {
        const auto& r = g.dataset[i];
        const auto& l = g.latent[i];
        const double t = r.treatment ? l.t1_time : l.t0_time;
        EXPECT_EQ(r.follow_up, std::min(t, l.censor));
        EXPECT_EQ(r.event, t <= l.censor ? 1 : 0);
        EXPECT_EQ(l.s0, l.t0_time > cfg.t0 ? 1 : 0);
        treated += static_cast<std::size_t>(r.treatment);
        events += static_cast<std::size_t>(r.event);
    }
    EXPECT_GT(treated, cfg.n / 5);
    EXPECT_LT(treated, cfg.n * 4 / 5);
    EXPECT_GT(events, cfg.n / 5);
    EXPECT_LT(events, cfg.n);
}

TEST(Simulation, SameSeedSameData) {
    DGPConfig cfg;
    cfg.n = 200;
    cfg.seed = 5;
    const auto a = generate(cfg), b = generate(cfg);
    for (std::size_t i = 0; i < cfg.n; ++i) EXPECT_EQ(a.dataset[i].follow_up, b.dataset[i].follow_up);
    cfg.seed = 6;
    EXPECT_NE(generate(cfg).dataset[0].follow_up, a.dataset[0].follow_up);
}

TEST(Simulation, CovariateCorrelation) {
    DGPConfig cfg;
    cfg.n = 1'000'000;
    cfg.seed = 2;
    const auto d = generate(cfg).dataset;
    Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& r : d.records()) {
        const Eigen::Vector3d x(r.covariates[0], r.covariates[1], r.covariates[2]);
        mean += x;
        m += x * x.transpose();
    }
    const double n = static_cast<double>(cfg.n);
    mean /= n;
    const Eigen::Matrix3d cov = m / n - mean * mean.transpose();
    for (int j = 0; j < 3; ++j) {
        EXPECT_NEAR(mean(j), 0.0, 0.005);
        EXPECT_NEAR(cov(j, j), 1.0, 0.005);
        for (int k = j + 1; k < 3; ++k)
            EXPECT_NEAR(cov(j, k) / std::sqrt(cov(j, j) * cov(k, k)), 0.2, 0.005);
    }
}

TEST(Simulation, MonotoneSurvivalOnlyUnderTheCopula) {
    DGPConfig cfg;
    cfg.n = 100'000;
    cfg.beta_t = -0.5;
    auto violations = [&](DgpVariant v) {
        cfg.variant = v;
        std::size_t bad = 0;
        for (const auto& l : generate(cfg).latent) bad += (l.s0 == 1 && l.s1 == 0) ? 1 : 0;
        return bad;
    };
    EXPECT_EQ(violations(DgpVariant::Copula), 0u);
    EXPECT_GT(violations(DgpVariant::Independent), 0u);
}

TEST(Simulation, ArmsShareADistributionWithoutEffect) {
    DGPConfig cfg;
    cfg.n = 100'000;
    cfg.beta_t = 0.0;
    cfg.seed = 1;
    std::vector<double> t0s;
    for (const auto& l : generate(cfg).latent) t0s.push_back(l.t0_time);
    cfg.seed = 2;
    std::vector<double> t1s;
    for (const auto& l : generate(cfg).latent) t1s.push_back(l.t1_time);
    EXPECT_LT(ks_statistic(t0s, t1s), 1.628 * std::sqrt(2.0 / static_cast<double>(cfg.n)));
}

TEST(Simulation, NullEffectHasZeroTruth) {
    DGPConfig cfg;
    cfg.beta_t = 0.0;
    const double taus[] = {0.3, 0.5};
    for (const auto& tv : true_values(cfg, taus, 0.5, 2'000'000)) {
        EXPECT_NEAR(tv.osqc, 0.0, 0.005);
        EXPECT_NEAR(tv.psqc, 0.0, 0.005);
    }
}

TEST(Simulation, TruthMatchesSemiAnalyticOracle) {
    const double taus[] = {0.3, 0.5};
    for (auto variant : {DgpVariant::Copula, DgpVariant::Independent}) {
        for (double t0 : {0.3, 0.7}) {
            DGPConfig cfg;
            cfg.beta_t = -0.5;
            cfg.variant = variant;
            cfg.t0 = t0;
            cfg.seed = 4;
            const AnalyticTruth oracle(cfg, t0);
            for (const auto& tv : true_values(cfg, taus, t0, 2'000'000)) {
                const auto label = to_string(variant) + " t0=" + std::to_string(t0) + " tau=" + std::to_string(tv.tau);
                EXPECT_NEAR(tv.q1, oracle.quantile(1, tv.tau, false), 0.005) << label;
                EXPECT_NEAR(tv.q0, oracle.quantile(0, tv.tau, false), 0.005) << label;
                EXPECT_NEAR(tv.q1_ps, oracle.quantile(1, tv.tau, true), 0.005) << label;
                EXPECT_NEAR(tv.q0_ps, oracle.quantile(0, tv.tau, true), 0.005) << label;
            }
        }
    }
}

TEST(Simulation, TruthNeedsEnoughSamples) {
    EXPECT_THROW(true_values(DGPConfig{}, 0.5, 0.5, 9999), ValidationError);
}

TEST(Simulation, StudyIsReproducibleAcrossThreadCounts) {
    auto cfg = small_study();
    const auto a = run_study(cfg);
    cfg.threads = 3;
    const auto b = run_study(cfg);
    ASSERT_EQ(a.cells.size(), 2u * 2u * 2u * 4u);
    ASSERT_EQ(a.cells.size(), b.cells.size());
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        EXPECT_EQ(a.cells[i].estimates, b.cells[i].estimates);
        EXPECT_EQ(a.cells[i].mean_bootstrap_se, b.cells[i].mean_bootstrap_se);
        EXPECT_EQ(a.cells[i].coverage, b.cells[i].coverage);
    }
}

TEST(Simulation, StudyPairsScenariosOnCommonData) {
    const auto r = run_study(small_study());
    // KM ignores the models, so both scenarios see identical KM estimates.
    std::vector<const CellResult*> km;
    for (const auto& c : r.cells)
        if (c.method == Method::KM && c.tau == 0.3 && c.beta_t == 0.0) km.push_back(&c);
    ASSERT_EQ(km.size(), 2u);
    EXPECT_EQ(km[0]->estimates, km[1]->estimates);
    for (const auto& c : r.cells) {
        EXPECT_EQ(c.estimates.size() + c.failures, c.replications);
        EXPECT_EQ(c.truth_is_osqc_fallback, false);
    }
}

TEST(Simulation, NaiveKmIsUnbiasedWithoutConfoundingOrCensoring) {
    StudyConfig cfg;
    cfg.ns = {500};
    cfg.beta_ts = {-0.5};
    cfg.randomized = true;
    cfg.censoring_log_rate_offset = -50.0;
    cfg.scenarios = {Scenario::CC};
    cfg.methods = {Method::KM};
    cfg.replications = 200;
    cfg.truth_samples = 2'000'000;
    cfg.seed = 13;
    const auto& c = run_study(cfg).cells.at(0);
    EXPECT_LT(std::abs(c.bias), 3.0 * c.mc_se_bias) << "bias " << c.bias << " mcse " << c.mc_se_bias;
}

TEST(Simulation, WeightedEstimatorsUnbiasedUnderNullWithCorrectModels) {
    StudyConfig cfg;
    cfg.ns = {500};
    cfg.beta_ts = {0.0};
    cfg.scenarios = {Scenario::CC};
    cfg.methods = {Method::IW, Method::DR, Method::PS};
    cfg.replications = 200;
    cfg.truth_samples = 2'000'000;
    cfg.seed = 14;
    for (const auto& c : run_study(cfg).cells) {
        EXPECT_EQ(c.failures, 0u);
        EXPECT_LT(std::abs(c.bias), 3.0 * c.mc_se_bias)
            << to_string(c.method) << " bias " << c.bias << " mcse " << c.mc_se_bias;
    }
}
