#pragma once

// Stratified Cox proportional hazards model: Breslow-ties partial likelihood
// maximized by Newton-Raphson, with a per-stratum Breslow baseline.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "qrl/error.hpp"
#include "qrl/newton.hpp"

namespace qrl {

// Right-continuous step function of cumulative hazard, zero before the
// first jump.
struct CumulativeHazard {
    std::vector<double> times;   // distinct event times, ascending
    std::vector<double> values;  // value from times[k] onward

    // Lambda(t-): value strictly before t.
    double before(double t) const {
        auto it = std::lower_bound(times.begin(), times.end(), t);
        if (it == times.begin()) return 0.0;
        return values[static_cast<std::size_t>(it - times.begin()) - 1];
    }
    // Lambda(t): value at t, including a jump at t.
    double at(double t) const {
        auto it = std::upper_bound(times.begin(), times.end(), t);
        if (it == times.begin()) return 0.0;
        return values[static_cast<std::size_t>(it - times.begin()) - 1];
    }
};

struct CoxFit {
    Eigen::VectorXd coefficients;  // log hazard ratios; zero for dropped columns
    std::vector<bool> dropped;     // constant columns excluded from the fit
    std::vector<int> strata;       // sorted stratum labels
    std::vector<CumulativeHazard> baseline;
    bool converged = false;
    int iterations = 0;
    double log_partial_likelihood = 0.0;

    std::size_t stratum_index(int label) const {
        auto it = std::lower_bound(strata.begin(), strata.end(), label);
        if (it == strata.end() || *it != label)
            throw EstimationError("unknown stratum " + std::to_string(label));
        return static_cast<std::size_t>(it - strata.begin());
    }

    const CumulativeHazard& baseline_for(int label) const { return baseline[stratum_index(label)]; }

    double linear_predictor(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        return x.dot(coefficients);
    }

    // exp(-Lambda0(t-) exp(x'beta)): P(T >= t | x) under the fitted model.
    // Flat beyond the last event time of the stratum.
    double survival_at(double t, const Eigen::Ref<const Eigen::RowVectorXd>& x, int stratum) const {
        return std::exp(-baseline_for(stratum).before(t) * std::exp(linear_predictor(x)));
    }
};

namespace detail {

struct CoxData {
    Eigen::MatrixXd x;                 // centered, dropped columns removed
    std::vector<std::vector<std::size_t>> order;  // per stratum, time descending
    std::span<const double> times;
    std::span<const int> events;
};

inline LikelihoodState cox_likelihood(const CoxData& d, const Eigen::VectorXd& beta) {
    const auto p = d.x.cols();
    LikelihoodState s;
    s.score = Eigen::VectorXd::Zero(p);
    s.information = Eigen::MatrixXd::Zero(p, p);
    const Eigen::VectorXd eta = d.x * beta;
    const double shift = eta.size() ? eta.maxCoeff() : 0.0;

    Eigen::VectorXd s1(p), xsum(p);
    Eigen::MatrixXd s2(p, p);
    for (const auto& ord : d.order) {
        double s0 = 0.0;
        s1.setZero();
        s2.setZero();
        std::size_t k = 0;
        while (k < ord.size()) {
            const double t = d.times[ord[k]];
            std::size_t dcount = 0;
            double eta_sum = 0.0;
            xsum.setZero();
            for (; k < ord.size() && d.times[ord[k]] == t; ++k) {
                const auto i = ord[k];
                const auto ii = static_cast<Eigen::Index>(i);
                const double r = std::exp(eta(ii) - shift);
                s0 += r;
                s1.noalias() += r * d.x.row(ii).transpose();
                s2.noalias() += r * d.x.row(ii).transpose() * d.x.row(ii);
                if (d.events[i]) {
                    ++dcount;
                    eta_sum += eta(ii);
                    xsum += d.x.row(ii).transpose();
                }
            }
            if (dcount == 0) continue;
            const double dd = static_cast<double>(dcount);
            const Eigen::VectorXd mean = s1 / s0;
            s.log_likelihood += eta_sum - dd * (std::log(s0) + shift);
            s.score += xsum - dd * mean;
            s.information += dd * (s2 / s0 - mean * mean.transpose());
        }
    }
    return s;
}

}  // namespace detail

// Log partial likelihood with its score and information at `beta` (raw
// design, no centering or column dropping).
inline LikelihoodState cox_partial_likelihood(const Eigen::MatrixXd& design,
                                              std::span<const double> times,
                                              std::span<const int> events,
                                              std::span<const int> strata,
                                              const Eigen::VectorXd& beta) {
    std::vector<int> labels(strata.begin(), strata.end());
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    detail::CoxData d{design, std::vector<std::vector<std::size_t>>(labels.size()), times, events};
    for (std::size_t i = 0; i < times.size(); ++i) {
        auto s = static_cast<std::size_t>(
            std::lower_bound(labels.begin(), labels.end(), strata[i]) - labels.begin());
        d.order[s].push_back(i);
    }
    for (auto& o : d.order)
        std::stable_sort(o.begin(), o.end(), [&](auto a, auto b) { return times[a] > times[b]; });
    return detail::cox_likelihood(d, beta);
}

inline CoxFit fit_cox(const Eigen::MatrixXd& design, std::span<const double> times,
                      std::span<const int> events, std::span<const int> strata,
                      const NewtonOptions& opt = {}) {
    const auto n = times.size();
    if (static_cast<std::size_t>(design.rows()) != n || events.size() != n || strata.size() != n)
        throw std::invalid_argument("fit_cox: inputs differ in length");
    if (std::none_of(events.begin(), events.end(), [](int e) { return e == 1; }))
        throw EstimationError("fit_cox: no events");

    CoxFit fit;
    fit.strata.assign(strata.begin(), strata.end());
    std::sort(fit.strata.begin(), fit.strata.end());
    fit.strata.erase(std::unique(fit.strata.begin(), fit.strata.end()), fit.strata.end());

    // Center, and drop columns with no variation.
    const auto p = design.cols();
    const Eigen::RowVectorXd means = design.colwise().mean();
    fit.dropped.assign(static_cast<std::size_t>(p), false);
    std::vector<Eigen::Index> kept;
    for (Eigen::Index j = 0; j < p; ++j) {
        const double range = design.col(j).maxCoeff() - design.col(j).minCoeff();
        const double mag = std::max(1.0, design.col(j).cwiseAbs().maxCoeff());
        if (range <= 1e-12 * mag)
            fit.dropped[static_cast<std::size_t>(j)] = true;
        else
            kept.push_back(j);
    }
    detail::CoxData d;
    d.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kept.size()));
    for (std::size_t k = 0; k < kept.size(); ++k)
        d.x.col(static_cast<Eigen::Index>(k)) = design.col(kept[k]).array() - means(kept[k]);
    d.times = times;
    d.events = events;
    d.order.resize(fit.strata.size());
    for (std::size_t i = 0; i < n; ++i) d.order[fit.stratum_index(strata[i])].push_back(i);
    for (auto& o : d.order)
        std::stable_sort(o.begin(), o.end(), [&](auto a, auto b) { return times[a] > times[b]; });

    auto objective = [&](const Eigen::VectorXd& b) { return detail::cox_likelihood(d, b); };
    auto res = maximize_newton(objective, Eigen::VectorXd::Zero(d.x.cols()), opt);

    fit.coefficients = Eigen::VectorXd::Zero(p);
    for (std::size_t k = 0; k < kept.size(); ++k)
        fit.coefficients(kept[k]) = res.beta(static_cast<Eigen::Index>(k));
    fit.converged = res.converged;
    fit.iterations = res.iterations;
    fit.log_partial_likelihood = res.state.log_likelihood;

    // Breslow: dLambda0(t) = d(t) / sum_{risk} exp(x'beta), on the raw scale.
    // exp(x'beta) = exp(xc'beta) * exp(mean'beta).
    const Eigen::VectorXd eta_c = d.x * res.beta;
    const double mean_lp = means.dot(fit.coefficients);
    const double shift = eta_c.size() ? eta_c.maxCoeff() : 0.0;
    fit.baseline.resize(fit.strata.size());
    for (std::size_t s = 0; s < d.order.size(); ++s) {
        const auto& ord = d.order[s];
        std::vector<std::pair<double, double>> jumps;  // (time, increment), descending time
        double s0 = 0.0;
        std::size_t k = 0;
        while (k < ord.size()) {
            const double t = times[ord[k]];
            std::size_t dcount = 0;
            for (; k < ord.size() && times[ord[k]] == t; ++k) {
                s0 += std::exp(eta_c(static_cast<Eigen::Index>(ord[k])) - shift);
                dcount += events[ord[k]] ? 1 : 0;
            }
            if (dcount)
                jumps.emplace_back(t, static_cast<double>(dcount) / s0 *
                                          std::exp(-shift - mean_lp));
        }
        auto& bl = fit.baseline[s];
        double cum = 0.0;
        for (auto it = jumps.rbegin(); it != jumps.rend(); ++it) {
            cum += it->second;
            bl.times.push_back(it->first);
            bl.values.push_back(cum);
        }
    }
    return fit;
}

}  // namespace qrl
