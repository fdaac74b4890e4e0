#pragma once

// Machine-readable outputs: JSON for estimates, truth and study reports, CSV
// for the per-cell simulation table. All numeric output is deterministic.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qrl/inference.hpp"
#include "qrl/simulation.hpp"

namespace qrl {

inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::ordered_json;

namespace detail {

inline Json optional_number(const std::optional<double>& v) {
    if (v && std::isfinite(*v)) return *v;
    return nullptr;
}

inline Json interval_json(const Interval& ci) { return Json::array({ci.lower, ci.upper}); }

template <class T, class F>
Json array_of(const std::vector<T>& xs, F&& f) {
    Json a = Json::array();
    for (const auto& x : xs) a.push_back(f(x));
    return a;
}

}  // namespace detail

inline Json to_json(const QuantileEstimate& q) {
    Json j;
    j["theta"] = detail::optional_number(q.theta);
    j["identifiable"] = q.identifiable();
    j["candidates_scanned"] = q.candidates_scanned;
    j["clamped_weights"] = q.clamped_weights;
    return j;
}

inline Json to_json(const DeltaEstimate& d) {
    Json j;
    j["delta"] = detail::optional_number(d.delta);
    j["identifiable"] = d.identifiable();
    j["q1"] = to_json(d.q1);
    j["q0"] = to_json(d.q0);
    j["nuisance_degraded"] = d.nuisance_degraded;
    j["degraded_component"] = d.degraded_component.empty() ? Json(nullptr) : Json(d.degraded_component);
    return j;
}

inline Json to_json(const BootstrapResult& b) {
    Json j;
    j["B"] = b.replicates_requested;
    j["replicates_used"] = b.replicates_used;
    j["replicates_failed"] = b.replicates_failed;
    j["seed"] = b.seed;
    j["alpha"] = b.alpha;
    j["se"] = b.se;
    j["wald_ci"] = detail::interval_json(b.wald_ci);
    j["percentile_ci"] = detail::interval_json(b.percentile_ci);
    j["unreliable"] = b.unreliable;
    return j;
}

inline Json to_json(const FormulaSpec& f) {
    Json j;
    j["intercept"] = f.intercept;
    j["terms"] = detail::array_of(f.terms, [](const Term& t) { return t.to_string(); });
    return j;
}

inline Json to_json(const ModelSpecs& s) {
    Json j;
    j["propensity"] = to_json(s.propensity);
    j["outcome"] = to_json(s.outcome);
    j["censoring"] = to_json(s.censoring);
    return j;
}

inline Json to_json(const TruthValues& t) {
    Json j;
    j["tau"] = t.tau;
    j["t0"] = t.t0;
    j["osqc"] = t.osqc;
    j["psqc"] = t.psqc;
    j["q1"] = t.q1;
    j["q0"] = t.q0;
    j["q1_ps"] = t.q1_ps;
    j["q0_ps"] = t.q0_ps;
    j["mc_samples"] = t.mc_samples;
    return j;
}

inline Json to_json(const StudyConfig& c) {
    Json dgp;
    dgp["n"] = c.ns;
    dgp["beta_t"] = c.beta_ts;
    dgp["rho"] = c.rho;
    dgp["nu"] = c.nu;
    dgp["variant"] = to_string(c.variant);
    dgp["censoring_offset"] = c.censoring_log_rate_offset;
    dgp["randomized"] = c.randomized;
    Json grid;
    grid["scenarios"] = detail::array_of(c.scenarios, [](Scenario s) { return to_string(s); });
    grid["methods"] = detail::array_of(c.methods, [](Method m) { return to_string(m); });
    grid["taus"] = c.taus;
    grid["t0s"] = c.t0s;
    Json mc;
    mc["replications"] = c.replications;
    mc["bootstrap_B"] = c.bootstrap_B;
    mc["alpha"] = c.alpha;
    mc["seed"] = c.seed;
    mc["truth_samples"] = c.truth_samples;
    Json j;
    j["dgp"] = std::move(dgp);
    j["grid"] = std::move(grid);
    j["mc"] = std::move(mc);
    return j;
}

inline Json to_json(const CellResult& c) {
    Json j;
    j["scenario"] = to_string(c.scenario);
    j["method"] = to_string(c.method);
    j["n"] = c.n;
    j["beta_t"] = c.beta_t;
    j["tau"] = c.tau;
    j["t0"] = c.t0;
    j["truth"] = c.truth;
    j["truth_is_osqc_fallback"] = c.truth_is_osqc_fallback;
    j["mean_estimate"] = c.mean_estimate;
    j["bias"] = c.bias;
    j["empirical_se"] = c.empirical_se;
    j["mc_se_bias"] = c.mc_se_bias;
    j["mean_bootstrap_se"] = detail::optional_number(c.mean_bootstrap_se);
    j["coverage"] = detail::optional_number(c.coverage);
    j["replications"] = c.replications;
    j["failures"] = c.failures;
    j["flagged"] = c.flagged;
    j["estimates"] = c.estimates;
    return j;
}

inline Json to_json(const SimulationReport& r) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["config"] = to_json(r.config);
    j["truths"] = detail::array_of(r.truths, [](const TruthEntry& t) {
        Json e = to_json(t.values);
        e["beta_t"] = t.beta_t;
        return e;
    });
    j["cells"] = detail::array_of(r.cells, [](const CellResult& c) { return to_json(c); });
    return j;
}

namespace detail {

inline std::string fmt(double v) {
    if (!std::isfinite(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace detail

inline void write_report_csv(std::ostream& out, const SimulationReport& r) {
    out << "scenario,method,n,beta_t,tau,t0,truth,truth_is_osqc_fallback,mean_estimate,bias,"
           "empirical_se,mc_se_bias,mean_bootstrap_se,coverage,replications,failures,flagged\n";
    for (const auto& c : r.cells) {
        using detail::fmt;
        out << to_string(c.scenario) << ',' << to_string(c.method) << ',' << c.n << ','
            << fmt(c.beta_t) << ',' << fmt(c.tau) << ',' << fmt(c.t0) << ',' << fmt(c.truth) << ','
            << (c.truth_is_osqc_fallback ? 1 : 0) << ',' << fmt(c.mean_estimate) << ','
            << fmt(c.bias) << ',' << fmt(c.empirical_se) << ',' << fmt(c.mc_se_bias) << ','
            << fmt(c.mean_bootstrap_se) << ',' << fmt(c.coverage) << ',' << c.replications << ','
            << c.failures << ',' << (c.flagged ? 1 : 0) << '\n';
    }
}

}  // namespace qrl
