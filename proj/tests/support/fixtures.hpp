#pragma once

// Hand-set nuisance evaluators, random small datasets, and brute-force oracles
// shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "qrl/estimators.hpp"
#include "qrl/random.hpp"

namespace qrl::testing {

// Nuisance values supplied directly instead of fitted.
struct FixtureNuisance {
    std::vector<double> e1;  // P(A = 1 | X_i)
    std::function<double(std::size_t, int, double)> g;   // G_a(t | X_i), P(C >= t)
    std::function<double(std::size_t, int, double)> mu;  // empty: no outcome model

    std::size_t size() const { return e1.size(); }
    double propensity(std::size_t i, int a) const { return a == 1 ? e1[i] : 1.0 - e1[i]; }
    double censoring_survival(std::size_t i, int a, double t) const { return g(i, a, t); }
    double outcome_survival(std::size_t i, int a, double t) const { return mu ? mu(i, a, t) : 0.0; }
    bool has_outcome() const { return static_cast<bool>(mu); }
};

inline Dataset make_dataset(const std::vector<int>& arm, const std::vector<double>& y,
                            const std::vector<int>& event) {
    std::vector<SurvivalRecord> r;
    for (std::size_t i = 0; i < y.size(); ++i) r.push_back({{0.0}, arm[i], y[i], event[i]});
    return Dataset(std::move(r), {"x"});
}

struct RandomFixture {
    Dataset data;
    FixtureNuisance nuis;
    double t0 = 0.0;
};

// Tie-free continuous times, both arms present, survivors in arm 1, random
// propensities in [0.1, 0.9], record-specific exponential G and mu.
inline RandomFixture random_fixture(std::uint64_t seed, std::size_t n, bool with_outcome = true) {
    auto eng = substream(seed, {0xF1C7});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::exponential_distribution<double> ex(1.0);
    while (true) {
        std::vector<SurvivalRecord> recs;
        std::vector<double> e1, gr, mr;
        for (std::size_t i = 0; i < n; ++i) {
            SurvivalRecord r;
            r.covariates = {u(eng)};
            r.treatment = u(eng) < 0.5 ? 1 : 0;
            r.follow_up = ex(eng);
            r.event = u(eng) < 0.7 ? 1 : 0;
            recs.push_back(r);
            e1.push_back(0.1 + 0.8 * u(eng));
            gr.push_back(0.8 * u(eng));
            mr.push_back(0.2 + 1.5 * u(eng));
        }
        RandomFixture f{Dataset(recs, {"x"}), {}, 0.05 + 0.3 * u(eng)};
        if (f.data.arm_size(0) == 0 || f.data.arm_size(1) == 0) continue;
        bool survivors = false;
        for (const auto& r : f.data.records()) survivors |= r.treatment == 1 && r.follow_up > f.t0;
        if (!survivors) continue;
        f.nuis.e1 = e1;
        f.nuis.g = [gr](std::size_t i, int a, double t) { return std::exp(-gr[i] * (a + 1) * 0.5 * t); };
        if (with_outcome)
            f.nuis.mu = [mr](std::size_t i, int a, double t) { return std::exp(-mr[i] * (a ? 0.8 : 1.0) * t); };
        return f;
    }
}

// Smallest grid point in [0, hi] (step h) where f >= 0; NaN if none.
template <class F>
double dense_scan_root(F&& f, double hi, double h) {
    const auto steps = static_cast<std::size_t>(std::ceil(hi / h));
    for (std::size_t k = 0; k <= steps; ++k) {
        const double theta = std::min(hi, static_cast<double>(k) * h);
        if (f(theta) >= 0.0) return theta;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

// Direct weighted-CDF inversion of the IW equation: survivors of arm a carry
// mass w/(e G(t0)); events carry w/(e G(Y)). The estimate is the smallest
// event residual where cumulative event mass reaches tau times total mass.
template <class N>
std::optional<double> weighted_cdf_quantile(const Dataset& data, const N& nuis, int arm, double t0,
                                            double tau, const std::vector<double>* w = nullptr) {
    double total = 0.0;
    std::vector<std::pair<double, double>> ev;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& r = data[i];
        if (r.treatment != arm || !(r.follow_up > t0)) continue;
        const double wi = (w ? (*w)[i] : 1.0) / std::max(nuis.propensity(i, arm), kWeightFloor);
        total += wi / std::max(nuis.censoring_survival(i, arm, t0), kWeightFloor);
        if (r.event)
            ev.emplace_back(r.follow_up - t0,
                            wi / std::max(nuis.censoring_survival(i, arm, r.follow_up), kWeightFloor));
    }
    if (total <= 0.0) return std::nullopt;
    if (tau * total <= 0.0) return 0.0;
    std::sort(ev.begin(), ev.end());
    double cum = 0.0;
    for (std::size_t k = 0; k < ev.size(); ++k) {
        cum += ev[k].second;
        if (k + 1 < ev.size() && ev[k + 1].first == ev[k].first) continue;
        if (cum >= tau * total * (1.0 - 1e-10)) return ev[k].first;
    }
    return std::nullopt;
}

// Central finite-difference gradient.
template <class F>
Eigen::VectorXd finite_difference(F&& f, const Eigen::VectorXd& x, double h) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        Eigen::VectorXd up = x, dn = x;
        up(j) += h;
        dn(j) -= h;
        g(j) = (f(up) - f(dn)) / (2.0 * h);
    }
    return g;
}

inline double max_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < analytic.size(); ++j) {
        const double scale = std::max(std::abs(numeric(j)), 1e-8);
        worst = std::max(worst, std::abs(analytic(j) - numeric(j)) / scale);
    }
    return worst;
}

}  // namespace qrl::testing
