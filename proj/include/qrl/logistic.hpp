#pragma once

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <stdexcept>

#include "qrl/error.hpp"
#include "qrl/newton.hpp"

namespace qrl {

struct LogisticFit {
    Eigen::VectorXd coefficients;  // log-odds scale, one per design column
    bool converged = false;
    bool separated = false;
    int iterations = 0;
    double log_likelihood = 0.0;

    double probability(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        return 1.0 / (1.0 + std::exp(-x.dot(coefficients)));
    }
};

// log(1 + e^eta) without overflow.
inline double log1pexp(double eta) {
    return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

inline LikelihoodState logistic_likelihood(const Eigen::MatrixXd& design, std::span<const int> labels,
                                           const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = design * beta;
    const auto p = design.cols();
    LikelihoodState s;
    s.score = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd w(design.rows());
    Eigen::VectorXd resid(design.rows());
    for (Eigen::Index i = 0; i < design.rows(); ++i) {
        const double e = eta(i);
        const double y = labels[static_cast<std::size_t>(i)];
        s.log_likelihood += y * e - log1pexp(e);
        const double pi = 1.0 / (1.0 + std::exp(-e));
        resid(i) = y - pi;
        w(i) = pi * (1.0 - pi);
    }
    s.score = design.transpose() * resid;
    s.information = design.transpose() * w.asDiagonal() * design;
    return s;
}

// Bernoulli maximum likelihood by Newton-Raphson with step-halving.
inline LogisticFit fit_logistic(const Eigen::MatrixXd& design, std::span<const int> labels,
                                const NewtonOptions& opt = {}) {
    if (static_cast<std::size_t>(design.rows()) != labels.size())
        throw std::invalid_argument("fit_logistic: design rows and labels differ in length");
    bool has0 = false, has1 = false;
    for (int y : labels) (y == 1 ? has1 : has0) = true;
    if (!has0 || !has1) throw EstimationError("fit_logistic: labels must contain both classes");

    auto objective = [&](const Eigen::VectorXd& b) { return logistic_likelihood(design, labels, b); };
    auto res = maximize_newton(objective, Eigen::VectorXd::Zero(design.cols()), opt);

    LogisticFit fit;
    fit.coefficients = res.beta;
    fit.iterations = res.iterations;
    fit.log_likelihood = res.state.log_likelihood;
    fit.converged = res.converged;

    // Complete separation: every label is predicted with near certainty.
    const Eigen::VectorXd eta = design * res.beta;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double y = labels[static_cast<std::size_t>(i)];
        const double p = 1.0 / (1.0 + std::exp(-eta(i)));
        worst = std::max(worst, std::abs(y - p));
    }
    if (worst < 1e-6) {
        fit.separated = true;
        fit.converged = false;
    }
    return fit;
}

}  // namespace qrl
