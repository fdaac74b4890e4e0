#pragma once

// Damped Newton-Raphson for concave log-likelihoods.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <concepts>

namespace qrl {

struct NewtonOptions {
    double tolerance = 1e-8;  // on max |score component|
    int max_iterations = 100;
    int max_halvings = 20;
    // Declared stationary when the full Newton step is this small even if the
    // score tolerance cannot be met in floating point (very large n).
    double step_tolerance = 1e-12;
};

struct LikelihoodState {
    double log_likelihood = 0.0;
    Eigen::VectorXd score;
    Eigen::MatrixXd information;  // negative Hessian
};

struct NewtonResult {
    Eigen::VectorXd beta;
    LikelihoodState state;
    bool converged = false;
    bool singular = false;
    int iterations = 0;
};

// `objective(beta)` returns the log-likelihood with its score and information.
template <class Objective>
    requires std::invocable<Objective&, const Eigen::VectorXd&>
NewtonResult maximize_newton(Objective&& objective, Eigen::VectorXd beta,
                             const NewtonOptions& opt = {}) {
    NewtonResult res;
    LikelihoodState cur = objective(beta);
    res.beta = beta;
    res.state = cur;
    if (beta.size() == 0) {
        res.converged = true;
        return res;
    }

    for (int it = 0; it < opt.max_iterations; ++it) {
        res.iterations = it;
        if (cur.score.cwiseAbs().maxCoeff() < opt.tolerance) {
            res.converged = true;
            break;
        }
        Eigen::LLT<Eigen::MatrixXd> llt(cur.information);
        if (llt.info() != Eigen::Success) {
            res.singular = true;
            break;
        }
        Eigen::VectorXd step = llt.solve(cur.score);
        if (!step.allFinite()) {
            res.singular = true;
            break;
        }

        // Near the optimum the change in log-likelihood is below rounding.
        const double floor = cur.log_likelihood - 1e-12 * (1.0 + std::abs(cur.log_likelihood));
        auto worse = [&](const LikelihoodState& s) {
            return !std::isfinite(s.log_likelihood) || s.log_likelihood < floor;
        };
        double scale = 1.0;
        Eigen::VectorXd trial = beta + step;
        LikelihoodState next = objective(trial);
        int halvings = 0;
        while (worse(next) && halvings < opt.max_halvings) {
            scale *= 0.5;
            trial = beta + scale * step;
            next = objective(trial);
            ++halvings;
        }
        if (worse(next)) break;

        beta = std::move(trial);
        cur = std::move(next);
        res.beta = beta;
        res.state = cur;
        res.iterations = it + 1;
        if (step.cwiseAbs().maxCoeff() * scale < opt.step_tolerance) {
            res.converged = true;
            break;
        }
    }
    if (!res.converged && !res.singular && cur.score.cwiseAbs().maxCoeff() < opt.tolerance)
        res.converged = true;
    return res;
}

}  // namespace qrl
