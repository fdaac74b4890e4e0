#pragma once

// The three nuisance functions behind the weighted estimating equations:
//   propensity   e_a(x)   = P(A = a | X = x)          logistic regression
//   censoring    G_a(t|x) = P(C >= t | A = a, X = x)  Cox on 1 - Delta, stratified by A
//   outcome      mu_a(t|x)= P(T >= t | A = a, X = x)  Cox on Delta, stratified by A
// All survival functions are evaluated left-continuously.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <optional>
#include <string>
#include <vector>

#include "qrl/cox.hpp"
#include "qrl/dataset.hpp"
#include "qrl/logistic.hpp"

namespace qrl {

// Lower clamp applied to e_a and G_a (and the selection-weight denominator)
// before division.
inline constexpr double kWeightFloor = 1e-6;

// Anything the estimators can draw nuisance values from. Indices refer to
// records of the dataset the evaluator was built for.
template <class N>
concept NuisanceEvaluator = requires(const N& n, std::size_t i, int a, double t) {
    { n.size() } -> std::convertible_to<std::size_t>;
    { n.propensity(i, a) } -> std::convertible_to<double>;
    { n.censoring_survival(i, a, t) } -> std::convertible_to<double>;
    { n.outcome_survival(i, a, t) } -> std::convertible_to<double>;
    { n.has_outcome() } -> std::convertible_to<bool>;
};

struct ModelSpecs {
    FormulaSpec propensity;
    FormulaSpec outcome;
    FormulaSpec censoring;
};

// A fitted Cox model with its linear predictors on the fitting data.
struct CoxComponent {
    CoxFit fit;
    Eigen::VectorXd lp;
};

struct LogisticComponent {
    LogisticFit fit;
    Eigen::VectorXd lp;
};

inline LogisticComponent fit_propensity(const Dataset& data, const FormulaSpec& spec,
                                        const NewtonOptions& opt = {}) {
    const Eigen::MatrixXd x = design_matrix(data, spec);
    std::vector<int> a(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) a[i] = data[i].treatment;
    LogisticComponent c{fit_logistic(x, a, opt), {}};
    c.lp = x * c.fit.coefficients;
    return c;
}

// `censoring = true` fits the censoring distribution (indicator 1 - Delta).
inline CoxComponent fit_survival_model(const Dataset& data, const FormulaSpec& spec, bool censoring,
                                       const NewtonOptions& opt = {}) {
    const Eigen::MatrixXd x = design_matrix(data, spec);
    const auto n = data.size();
    std::vector<double> y(n);
    std::vector<int> d(n), s(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = data[i].follow_up;
        d[i] = censoring ? 1 - data[i].event : data[i].event;
        s[i] = data[i].treatment;
    }
    CoxComponent c{fit_cox(x, y, d, s, opt), {}};
    c.lp = x * c.fit.coefficients;
    return c;
}

class NuisanceSet {
public:
    NuisanceSet(std::vector<int> arms, LogisticComponent propensity, CoxComponent censoring,
                std::optional<CoxComponent> outcome)
        : arms_(std::move(arms)),
          propensity_(std::move(propensity)),
          censoring_(std::move(censoring)),
          outcome_(std::move(outcome)) {
        for (int a = 0; a < 2; ++a) {
            cens_base_[a] = find_stratum(censoring_.fit, a);
            if (outcome_) out_base_[a] = find_stratum(outcome_->fit, a);
        }
    }

    std::size_t size() const noexcept { return arms_.size(); }
    bool has_outcome() const noexcept { return outcome_.has_value(); }

    double propensity(std::size_t i, int a) const {
        const double p1 = 1.0 / (1.0 + std::exp(-propensity_.lp(static_cast<Eigen::Index>(i))));
        return a == 1 ? p1 : 1.0 - p1;
    }
    double censoring_survival(std::size_t i, int a, double t) const {
        return survival(censoring_.fit, cens_base_[a], censoring_.lp(static_cast<Eigen::Index>(i)), t);
    }
    double outcome_survival(std::size_t i, int a, double t) const {
        if (!outcome_) return 0.0;
        return survival(outcome_->fit, out_base_[a], outcome_->lp(static_cast<Eigen::Index>(i)), t);
    }

    // Factored outcome model: mu_a(t|x_i) = exp(-H_a(t-) r_i).
    double outcome_cumulative_hazard(int a, double t) const {
        if (!outcome_ || out_base_[a] < 0) throw EstimationError("no outcome model for this arm");
        return outcome_->fit.baseline[static_cast<std::size_t>(out_base_[a])].before(t);
    }
    double outcome_relative_risk(std::size_t i) const {
        return std::exp(outcome_->lp(static_cast<Eigen::Index>(i)));
    }

    const LogisticFit& propensity_fit() const noexcept { return propensity_.fit; }
    const CoxFit& censoring_fit() const noexcept { return censoring_.fit; }
    const CoxFit* outcome_fit() const noexcept { return outcome_ ? &outcome_->fit : nullptr; }

    // Empty when every fit converged; otherwise the failing components.
    std::string degraded_component() const {
        std::string s;
        auto add = [&](const char* name) { s += s.empty() ? name : std::string(",") + name; };
        if (!propensity_.fit.converged) add("propensity");
        if (!censoring_.fit.converged) add("censoring");
        if (outcome_ && !outcome_->fit.converged) add("outcome");
        return s;
    }
    bool degraded() const { return !degraded_component().empty(); }

private:
    static int find_stratum(const CoxFit& fit, int a) {
        auto it = std::lower_bound(fit.strata.begin(), fit.strata.end(), a);
        if (it == fit.strata.end() || *it != a) return -1;
        return static_cast<int>(it - fit.strata.begin());
    }
    static double survival(const CoxFit& fit, int stratum, double lp, double t) {
        if (stratum < 0) throw EstimationError("survival model has no stratum for this arm");
        const double h = fit.baseline[static_cast<std::size_t>(stratum)].before(t);
        return h == 0.0 ? 1.0 : std::exp(-h * std::exp(lp));
    }

    std::vector<int> arms_;
    LogisticComponent propensity_;
    CoxComponent censoring_;
    std::optional<CoxComponent> outcome_;
    int cens_base_[2] = {-1, -1};
    int out_base_[2] = {-1, -1};
};

inline std::vector<int> treatment_vector(const Dataset& data) {
    std::vector<int> a(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) a[i] = data[i].treatment;
    return a;
}

// Fits all three models on `data`. The outcome model is skipped when not
// needed (KM / IW only).
inline NuisanceSet fit_nuisances(const Dataset& data, const ModelSpecs& specs, bool with_outcome = true,
                                 const NewtonOptions& opt = {}) {
    auto ps = fit_propensity(data, specs.propensity, opt);
    auto cens = fit_survival_model(data, specs.censoring, true, opt);
    std::optional<CoxComponent> out;
    if (with_outcome) out = fit_survival_model(data, specs.outcome, false, opt);
    return NuisanceSet(treatment_vector(data), std::move(ps), std::move(cens), std::move(out));
}

}  // namespace qrl
