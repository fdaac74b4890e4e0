#pragma once

// Weighted estimating equations for the tau-quantile of residual lifetime
// T_a - t0 among landmark survivors, and their generalized-inverse solution.
//
//   U_IW(theta) = 1/n sum_i w_i I(A_i=a)/e_a(X_i)
//                 * [ I(t0 < Y_i <= t0+theta, D_i=1)/G_a(Y_i|X_i)
//                     - tau I(Y_i > t0)/G_a(t0|X_i) ]
//   U_DR(theta) = U_IW(theta) - 1/n sum_i (I(A_i=a) - e_a(X_i))/e_a(X_i)
//                 * [ mu_a(t0|X_i) - mu_a(t0+theta|X_i) - tau mu_a(t0|X_i) ]
//
// w_i is 1 except for the principal-score estimator, where treated records
// carry pi_0(X_i)/pi_1(X_i).

#include <algorithm>
#include <cmath>
#include <concepts>
#include <optional>
#include <span>
#include <vector>

#include "qrl/dataset.hpp"
#include "qrl/estimand.hpp"
#include "qrl/kaplan_meier.hpp"
#include "qrl/nuisance.hpp"

namespace qrl {

struct SelectionWeights {
    std::vector<double> weights;  // one per record
    std::size_t clamped = 0;
};

// Evaluators that expose mu_a(t|x_i) = exp(-H_a(t-) r_i) in factored form get
// a vectorized augmentation path.
template <class N>
concept FactoredOutcome = requires(const N& n, std::size_t i, int a, double t) {
    { n.outcome_cumulative_hazard(a, t) } -> std::convertible_to<double>;
    { n.outcome_relative_risk(i) } -> std::convertible_to<double>;
};

namespace detail {

inline double clamp_floor(double v, std::size_t& count) {
    if (v < kWeightFloor) {
        ++count;
        return kWeightFloor;
    }
    return v;
}

}  // namespace detail

// {0} plus the sorted distinct event residuals Y_i - t0 of the arm.
inline std::vector<double> residual_candidates(const Dataset& data, const EstimandSpec& spec) {
    std::vector<double> c{0.0};
    for (const auto& r : data.records())
        if (r.treatment == spec.arm && r.event == 1 && r.follow_up > spec.t0)
            c.push_back(r.follow_up - spec.t0);
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    return c;
}

// Smallest candidate with evaluator(theta) >= -tolerance; not identifiable
// if there is none.
template <class F>
    requires std::invocable<F&, double>
QuantileEstimate solve_quantile(F&& evaluator, std::span<const double> candidates,
                                double tolerance = 0.0) {
    QuantileEstimate q;
    for (double theta : candidates) {
        ++q.candidates_scanned;
        if (evaluator(theta) >= -tolerance) {
            q.theta = theta;
            return q;
        }
    }
    return q;
}

template <class F>
    requires std::invocable<F&, double>
QuantileEstimate solve_quantile(F&& evaluator, const Dataset& data, const EstimandSpec& spec,
                                double tolerance = 0.0) {
    const auto c = residual_candidates(data, spec);
    return solve_quantile(std::forward<F>(evaluator), std::span<const double>(c), tolerance);
}

template <NuisanceEvaluator N>
SelectionWeights selection_weights(const Dataset& data, const N& nuis, double t0) {
    if (!nuis.has_outcome())
        throw EstimationError("selection weights need a fitted outcome model");
    SelectionWeights w;
    w.weights.assign(data.size(), 1.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i].treatment != 1) continue;
        const double pi0 = nuis.outcome_survival(i, 0, t0);
        const double pi1 = detail::clamp_floor(nuis.outcome_survival(i, 1, t0), w.clamped);
        w.weights[i] = pi0 / pi1;
    }
    return w;
}

// U_IW or U_DR for one arm, with per-record nuisance values precomputed.
template <NuisanceEvaluator N>
class EstimatingFunction {
public:
    EstimatingFunction(const Dataset& data, const N& nuis, const EstimandSpec& spec, bool augmented,
                       const SelectionWeights* extra = nullptr)
        : nuis_(&nuis), spec_(spec), n_(static_cast<double>(data.size())), augmented_(augmented) {
        spec.validate();
        if (nuis.size() != data.size())
            throw EstimationError("nuisance set does not match dataset size");
        if (augmented && !nuis.has_outcome())
            throw EstimationError("augmented estimating function needs an outcome model");
        const int a = spec.arm;

        double survivor_mass = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto& r = data[i];
            if (r.treatment != a || !(r.follow_up > spec.t0)) continue;
            const double w = extra ? extra->weights[i] : 1.0;
            const double e = detail::clamp_floor(nuis.propensity(i, a), clamped_);
            Survivor s;
            s.coef = w / e;
            s.residual = r.follow_up - spec.t0;
            s.at_t0 = 1.0 / detail::clamp_floor(nuis.censoring_survival(i, a, spec.t0), clamped_);
            s.event = r.event == 1
                          ? 1.0 / detail::clamp_floor(nuis.censoring_survival(i, a, r.follow_up),
                                                      clamped_)
                          : 0.0;
            survivor_mass += std::abs(s.coef * s.at_t0);
            survivors_.push_back(s);
        }
        tolerance_ = 1e-10 * spec.tau * survivor_mass / n_;

        if (augmented) {
            multiplier_.resize(data.size());
            mu_t0_.resize(data.size());
            for (std::size_t i = 0; i < data.size(); ++i) {
                const double e = detail::clamp_floor(nuis.propensity(i, a), clamped_);
                multiplier_[i] = ((data[i].treatment == a ? 1.0 : 0.0) - e) / e;
                mu_t0_[i] = nuis.outcome_survival(i, a, spec.t0);
            }
            if constexpr (FactoredOutcome<N>) {
                risk_.resize(data.size());
                for (std::size_t i = 0; i < data.size(); ++i) risk_[i] = nuis.outcome_relative_risk(i);
            }
        }
    }

    double iw_part(double theta) const {
        double s = 0.0;
        for (const auto& v : survivors_)
            s += v.coef * ((v.residual <= theta ? v.event : 0.0) - spec_.tau * v.at_t0);
        return s / n_;
    }

    double augmentation(double theta) const {
        if (!augmented_) return 0.0;
        const int a = spec_.arm;
        const double t = spec_.t0 + theta;
        double s = 0.0;
        if constexpr (FactoredOutcome<N>) {
            const double h = nuis_->outcome_cumulative_hazard(a, t);
            for (std::size_t i = 0; i < multiplier_.size(); ++i) {
                const double mu = h == 0.0 ? 1.0 : std::exp(-h * risk_[i]);
                s += multiplier_[i] * ((mu_t0_[i] - mu) - spec_.tau * mu_t0_[i]);
            }
        } else {
            for (std::size_t i = 0; i < multiplier_.size(); ++i) {
                const double mu = nuis_->outcome_survival(i, a, t);
                s += multiplier_[i] * ((mu_t0_[i] - mu) - spec_.tau * mu_t0_[i]);
            }
        }
        return s / n_;
    }

    double operator()(double theta) const { return iw_part(theta) - augmentation(theta); }

    bool has_survivors() const noexcept { return !survivors_.empty(); }
    std::size_t clamped() const noexcept { return clamped_; }
    // Relative slack for "U >= 0" so that exact crossings survive rounding.
    double tolerance() const noexcept { return tolerance_; }

private:
    struct Survivor {
        double coef;      // w_i / e_a(X_i)
        double residual;  // Y_i - t0
        double event;     // D_i / G_a(Y_i|X_i)
        double at_t0;     // 1 / G_a(t0|X_i)
    };

    const N* nuis_;
    EstimandSpec spec_;
    double n_;
    bool augmented_;
    std::vector<Survivor> survivors_;
    std::vector<double> multiplier_, mu_t0_, risk_;
    std::size_t clamped_ = 0;
    double tolerance_ = 0.0;
};

template <NuisanceEvaluator N>
double u_iw(double theta, const EstimandSpec& spec, const Dataset& data, const N& nuis,
            const SelectionWeights* extra = nullptr) {
    return EstimatingFunction<N>(data, nuis, spec, false, extra)(theta);
}

template <NuisanceEvaluator N>
double u_dr(double theta, const EstimandSpec& spec, const Dataset& data, const N& nuis) {
    return EstimatingFunction<N>(data, nuis, spec, true)(theta);
}

template <NuisanceEvaluator N>
QuantileEstimate solve_estimating_function(const EstimatingFunction<N>& f, const Dataset& data,
                                           const EstimandSpec& spec) {
    QuantileEstimate q;
    if (f.has_survivors()) q = solve_quantile(f, data, spec, f.tolerance());
    q.clamped_weights = f.clamped();
    return q;
}

// One arm's quantile with the method named in `spec`. `weights` is used by PS
// only and computed on demand when null.
template <NuisanceEvaluator N>
QuantileEstimate estimate_quantile(const Dataset& data, const N& nuis, const EstimandSpec& spec,
                                   const SelectionWeights* weights = nullptr) {
    spec.validate();
    switch (spec.method) {
        case Method::KM: return km_residual_quantile(data, spec.arm, spec.tau, spec.t0);
        case Method::IW:
            return solve_estimating_function(EstimatingFunction<N>(data, nuis, spec, false), data,
                                             spec);
        case Method::DR:
            return solve_estimating_function(EstimatingFunction<N>(data, nuis, spec, true), data,
                                             spec);
        case Method::PS: {
            std::optional<SelectionWeights> own;
            if (!weights) weights = &own.emplace(selection_weights(data, nuis, spec.t0));
            auto q = solve_estimating_function(EstimatingFunction<N>(data, nuis, spec, false, weights),
                                               data, spec);
            q.clamped_weights += weights->clamped;
            return q;
        }
    }
    return {};
}

inline DeltaEstimate combine_arms(QuantileEstimate q1, QuantileEstimate q0) {
    DeltaEstimate d;
    d.q1 = std::move(q1);
    d.q0 = std::move(q0);
    if (d.q1.identifiable() && d.q0.identifiable()) d.delta = *d.q1.theta - *d.q0.theta;
    return d;
}

// q_1 - q_0 with nuisances already fitted on `data`.
template <NuisanceEvaluator N>
DeltaEstimate estimate_delta(const Dataset& data, const N& nuis, double t0, double tau, Method method,
                             const SelectionWeights* weights = nullptr) {
    std::optional<SelectionWeights> own;
    if (method == Method::PS && !weights) weights = &own.emplace(selection_weights(data, nuis, t0));
    auto arm = [&](int a) {
        return estimate_quantile(data, nuis, EstimandSpec{a, t0, tau, method}, weights);
    };
    auto q1 = arm(1);
    auto q0 = arm(0);
    return combine_arms(std::move(q1), std::move(q0));
}

inline bool needs_outcome(Method m) { return m == Method::DR || m == Method::PS; }

// Fits the nuisance models once on the full data, then solves both arms.
inline DeltaEstimate estimate_delta(const Dataset& data, double t0, double tau, Method method,
                                    const ModelSpecs& specs) {
    if (data.arm_size(0) == 0 || data.arm_size(1) == 0)
        throw EstimationError("both treatment arms must be present");
    if (method == Method::KM) {
        auto q1 = km_residual_quantile(data, 1, tau, t0);
        auto q0 = km_residual_quantile(data, 0, tau, t0);
        return combine_arms(std::move(q1), std::move(q0));
    }
    const auto nuis = fit_nuisances(data, specs, needs_outcome(method));
    auto d = estimate_delta(data, nuis, t0, tau, method);
    d.degraded_component = nuis.degraded_component();
    d.nuisance_degraded = !d.degraded_component.empty();
    return d;
}

}  // namespace qrl
