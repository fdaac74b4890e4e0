#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "qrl/dataset.hpp"
#include "qrl/error.hpp"
#include "qrl/estimand.hpp"

namespace qrl {

// Product-limit survival curve. Jumps only at event times; subjects censored
// at an event time stay in that time's risk set.
class KMCurve {
public:
    KMCurve() = default;
    KMCurve(std::vector<double> times, std::vector<double> survival)
        : times_(std::move(times)), surv_(std::move(survival)) {}

    // S(t), right-continuous.
    double survival(double t) const {
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        if (it == times_.begin()) return 1.0;
        return surv_[static_cast<std::size_t>(it - times_.begin()) - 1];
    }
    // S(t-).
    double survival_before(double t) const {
        auto it = std::lower_bound(times_.begin(), times_.end(), t);
        if (it == times_.begin()) return 1.0;
        return surv_[static_cast<std::size_t>(it - times_.begin()) - 1];
    }

    const std::vector<double>& jump_times() const noexcept { return times_; }
    const std::vector<double>& values() const noexcept { return surv_; }

private:
    std::vector<double> times_;
    std::vector<double> surv_;
};

inline KMCurve fit_km(std::span<const double> times, std::span<const int> events) {
    if (times.empty()) throw EstimationError("fit_km: empty input");
    if (times.size() != events.size()) throw std::invalid_argument("fit_km: length mismatch");
    std::vector<std::size_t> ord(times.size());
    std::iota(ord.begin(), ord.end(), 0);
    std::stable_sort(ord.begin(), ord.end(), [&](auto a, auto b) { return times[a] < times[b]; });

    std::vector<double> jt, sv;
    double s = 1.0;
    std::size_t at_risk = times.size();
    std::size_t k = 0;
    while (k < ord.size()) {
        const double t = times[ord[k]];
        std::size_t d = 0, m = 0;
        for (; k < ord.size() && times[ord[k]] == t; ++k, ++m) d += events[ord[k]] ? 1 : 0;
        if (d) {
            s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
            jt.push_back(t);
            sv.push_back(s);
        }
        at_risk -= m;
    }
    return KMCurve(std::move(jt), std::move(sv));
}

// Smallest jump point r of a residual-time curve with 1 - S(r) >= tau.
inline QuantileEstimate km_residual_quantile(const KMCurve& residual_curve, double tau) {
    constexpr double slack = 1e-12;
    QuantileEstimate q;
    const auto& t = residual_curve.jump_times();
    const auto& s = residual_curve.values();
    for (std::size_t k = 0; k < t.size(); ++k) {
        ++q.candidates_scanned;
        if (1.0 - s[k] >= tau - slack) {
            q.theta = t[k];
            return q;
        }
    }
    return q;
}

// Naive landmark estimate: KM of Y - t0 among arm records with Y > t0.
inline QuantileEstimate km_residual_quantile(const Dataset& data, int arm, double tau, double t0) {
    std::vector<double> r;
    std::vector<int> d;
    for (const auto& rec : data.records()) {
        if (rec.treatment != arm || !(rec.follow_up > t0)) continue;
        r.push_back(rec.follow_up - t0);
        d.push_back(rec.event);
    }
    if (r.empty()) throw EstimationError("no landmark survivors in arm " + std::to_string(arm));
    return km_residual_quantile(fit_km(r, d), tau);
}

}  // namespace qrl
