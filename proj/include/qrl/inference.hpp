#pragma once

// Nonparametric bootstrap for the quantile contrast: resample subjects, refit
// every nuisance model, re-solve both arms.

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "qrl/estimators.hpp"
#include "qrl/parallel.hpp"
#include "qrl/random.hpp"

namespace qrl {

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
    bool contains(double v) const noexcept { return lower <= v && v <= upper; }
};

struct BootstrapOptions {
    std::size_t replicates = 1000;
    double alpha = 0.05;
    std::uint64_t seed = 1;
    unsigned threads = 1;
};

struct BootstrapResult {
    DeltaEstimate point;
    double se = 0.0;
    Interval wald_ci;
    Interval percentile_ci;
    std::size_t replicates_used = 0;
    std::size_t replicates_failed = 0;
    std::size_t replicates_requested = 0;  // B
    std::uint64_t seed = 0;
    double alpha = 0.05;
    bool unreliable = false;  // fewer than half the replicates usable
};

inline double normal_quantile(double p) {
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline std::vector<std::size_t> resample_indices(std::size_t n, Engine& eng) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = pick(eng);
    return idx;
}

// Replicate b draws n indices with replacement from substream (seed, b) and
// evaluates stat(indices); nullopt marks a failed replicate.
template <class Statistic>
std::vector<std::optional<double>> bootstrap_replicates(std::size_t n, const BootstrapOptions& opt,
                                                        Statistic&& stat) {
    std::vector<std::optional<double>> out(opt.replicates);
    parallel_for(opt.replicates, opt.threads, [&](std::size_t b) {
        auto eng = substream(opt.seed, {b});
        const auto idx = resample_indices(n, eng);
        try {
            out[b] = stat(idx);
        } catch (const Error&) {
            out[b] = std::nullopt;
        }
    });
    return out;
}

struct ReplicateSummary {
    double se = 0.0;
    Interval percentile;
    std::size_t used = 0;
    std::size_t failed = 0;
};

inline ReplicateSummary summarize_replicates(const std::vector<std::optional<double>>& reps,
                                             double alpha) {
    ReplicateSummary s;
    std::vector<double> v;
    for (const auto& r : reps)
        if (r)
            v.push_back(*r);
        else
            ++s.failed;
    s.used = v.size();
    if (v.empty()) return s;
    if (v.size() > 1) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        s.se = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    std::sort(v.begin(), v.end());
    const double m = static_cast<double>(v.size());
    auto order_stat = [&](double p) {
        const double k = std::ceil(m * p - 1e-9) - 1.0;
        return v[static_cast<std::size_t>(std::clamp(k, 0.0, m - 1.0))];
    };
    s.percentile = {order_stat(alpha / 2.0), order_stat(1.0 - alpha / 2.0)};
    return s;
}

inline Interval wald_interval(double point, double se, double alpha) {
    const double z = normal_quantile(1.0 - alpha / 2.0);
    return {point - z * se, point + z * se};
}

inline BootstrapResult bootstrap_delta(const Dataset& data, double t0, double tau, Method method,
                                       const ModelSpecs& specs, const BootstrapOptions& opt = {}) {
    if (opt.replicates < 2) throw ValidationError("bootstrap needs at least 2 replicates");
    if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");

    BootstrapResult res;
    res.point = estimate_delta(data, t0, tau, method, specs);
    if (!res.point.identifiable())
        throw EstimationError("full-sample estimate is not identifiable; bootstrap skipped");

    const auto reps = bootstrap_replicates(data.size(), opt, [&](const std::vector<std::size_t>& idx)
                                                                  -> std::optional<double> {
        const auto sample = data.subset(idx);
        const auto d = estimate_delta(sample, t0, tau, method, specs);
        if (d.nuisance_degraded || !d.identifiable()) return std::nullopt;
        return d.delta;
    });
    const auto s = summarize_replicates(reps, opt.alpha);
    res.se = s.se;
    res.percentile_ci = s.percentile;
    res.replicates_used = s.used;
    res.replicates_failed = s.failed;
    res.replicates_requested = opt.replicates;
    res.seed = opt.seed;
    res.alpha = opt.alpha;
    res.wald_ci = wald_interval(*res.point.delta, res.se, opt.alpha);
    res.unreliable = 2 * s.used < opt.replicates;
    if (s.used == 0) res.percentile_ci = {*res.point.delta, *res.point.delta};
    return res;
}

}  // namespace qrl
