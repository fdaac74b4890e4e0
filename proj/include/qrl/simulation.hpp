#pragma once

// Data-generating processes for the simulation study, the Monte Carlo truth
// for both contrasts, and the scenario-grid runner.
//
// Copula variant: a shared U_pre decides survival to t0 in both arms
// (monotone when beta_t <= 0); survivors get a fresh per-arm U_post for the
// residual, so the residual is independent of the latent stratum given X.
// Independent variant: T0 and T1 are independent Weibull draws given X.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "qrl/dataset.hpp"
#include "qrl/estimators.hpp"
#include "qrl/inference.hpp"
#include "qrl/parallel.hpp"
#include "qrl/random.hpp"

namespace qrl {

enum class DgpVariant { Copula, Independent };

inline std::string to_string(DgpVariant v) {
    return v == DgpVariant::Copula ? "copula" : "independent";
}

inline DgpVariant parse_variant(std::string_view s) {
    if (s == "copula") return DgpVariant::Copula;
    if (s == "independent") return DgpVariant::Independent;
    throw ParseError("unknown DGP variant '" + std::string(s) + "' (expected copula or independent)");
}

// Fixed coefficients of the generating models (covariates x1, x2, x3).
namespace dgp {
// logit P(A=1|X) = -0.5 + 0.5 x1 + 0.5 x2 - 0.2 x3 + 1.0 x1^2
inline constexpr double kPropensity[5] = {-0.5, 0.5, 0.5, -0.2, 1.0};
// log lambda_T = -1.0 + beta_t a + 0.5 x1 + 0.2 x2 + 1.0 x1^2
inline constexpr double kEventIntercept = -1.0;
inline constexpr double kEventX1 = 0.5;
inline constexpr double kEventX2 = 0.2;
inline constexpr double kEventX1Sq = 1.0;
// log lambda_C = -0.5 - 1.0 a + 0.1 x3 + 0.1 x1 x3
inline constexpr double kCensorIntercept = -0.5;
inline constexpr double kCensorA = -1.0;
inline constexpr double kCensorX3 = 0.1;
inline constexpr double kCensorX1X3 = 0.1;
}  // namespace dgp

struct DGPConfig {
    std::size_t n = 500;
    double beta_t = 0.0;
    double rho = 0.2;
    double nu = 1.5;
    double t0 = 0.5;
    DgpVariant variant = DgpVariant::Copula;
    std::uint64_t seed = 1;
    // Added to log lambda_C; large negative values switch censoring off.
    double censoring_log_rate_offset = 0.0;
    // Treatment by fair coin instead of the confounded logistic model.
    bool randomized = false;

    void validate() const {
        if (n < 1) throw ValidationError("dgp: n must be >= 1");
        if (!(nu > 0.0)) throw ValidationError("dgp: nu must be > 0");
        if (!(rho > -1.0 && rho < 1.0)) throw ValidationError("dgp: rho must lie in (-1, 1)");
        if (!(t0 > 0.0)) throw ValidationError("dgp: t0 must be > 0");
    }
};

struct LatentOutcome {
    double t0_time = 0.0;  // T_0
    double t1_time = 0.0;  // T_1
    double censor = 0.0;   // C
    int s0 = 0;            // I(T_0 > t0)
    int s1 = 0;            // I(T_1 > t0)
};

struct GeneratedSample {
    Dataset dataset;
    std::vector<LatentOutcome> latent;
};

namespace detail {

class SubjectSampler {
public:
    explicit SubjectSampler(const DGPConfig& cfg) : cfg_(cfg) {
        Eigen::Matrix3d sigma = Eigen::Matrix3d::Constant(cfg.rho);
        sigma.diagonal().setOnes();
        chol_ = sigma.llt().matrixL();
    }

    Eigen::Vector3d covariates(Engine& eng) {
        Eigen::Vector3d z;
        for (int k = 0; k < 3; ++k) z(k) = normal_(eng);
        return chol_ * z;
    }

    double event_log_rate(const Eigen::Vector3d& x, int a) const {
        return dgp::kEventIntercept + cfg_.beta_t * a + dgp::kEventX1 * x(0) + dgp::kEventX2 * x(1) +
               dgp::kEventX1Sq * x(0) * x(0);
    }

    double weibull(double u, double log_rate) const {
        return std::pow(-std::log(u) / std::exp(log_rate), 1.0 / cfg_.nu);
    }

    // (T_0, T_1)
    std::pair<double, double> potential_times(const Eigen::Vector3d& x, Engine& eng) {
        const double lr0 = event_log_rate(x, 0);
        const double lr1 = event_log_rate(x, 1);
        if (cfg_.variant == DgpVariant::Independent) {
            const double u0 = uniform_open0(eng);
            const double u1 = uniform_open0(eng);
            return {weibull(u0, lr0), weibull(u1, lr1)};
        }
        const double pre = uniform_open0(eng);
        const double post0 = uniform_open0(eng);
        const double post1 = uniform_open0(eng);
        auto stage = [&](double lr, double post) {
            const double t = weibull(pre, lr);
            return t <= cfg_.t0 ? t : cfg_.t0 + weibull(post, lr);
        };
        return {stage(lr0, post0), stage(lr1, post1)};
    }

    int treatment(const Eigen::Vector3d& x, Engine& eng) {
        const double u = std::generate_canonical<double, 53>(eng);
        if (cfg_.randomized) return u < 0.5 ? 1 : 0;
        const double* b = dgp::kPropensity;
        const double eta = b[0] + b[1] * x(0) + b[2] * x(1) + b[3] * x(2) + b[4] * x(0) * x(0);
        return u < 1.0 / (1.0 + std::exp(-eta)) ? 1 : 0;
    }

    double censoring(const Eigen::Vector3d& x, int a, Engine& eng) {
        const double lr = dgp::kCensorIntercept + cfg_.censoring_log_rate_offset + dgp::kCensorA * a +
                          dgp::kCensorX3 * x(2) + dgp::kCensorX1X3 * x(0) * x(2);
        return -std::log(uniform_open0(eng)) / std::exp(lr);
    }

private:
    DGPConfig cfg_;
    Eigen::Matrix3d chol_;
    std::normal_distribution<double> normal_;
};

}  // namespace detail

inline GeneratedSample generate(const DGPConfig& cfg) {
    cfg.validate();
    auto eng = substream(cfg.seed, {});
    detail::SubjectSampler sampler(cfg);
    std::vector<SurvivalRecord> records;
    std::vector<LatentOutcome> latent;
    records.reserve(cfg.n);
    latent.reserve(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        const auto x = sampler.covariates(eng);
        const int a = sampler.treatment(x, eng);
        const auto [t0_time, t1_time] = sampler.potential_times(x, eng);
        const double c = sampler.censoring(x, a, eng);
        const double t = a == 1 ? t1_time : t0_time;
        records.push_back({{x(0), x(1), x(2)}, a, std::min(t, c), t <= c ? 1 : 0});
        latent.push_back({t0_time, t1_time, c, t0_time > cfg.t0 ? 1 : 0, t1_time > cfg.t0 ? 1 : 0});
    }
    return {Dataset(std::move(records), {"x1", "x2", "x3"}), std::move(latent)};
}

// ---------------------------------------------------------------------------
// Monte Carlo truth
// ---------------------------------------------------------------------------

struct TruthValues {
    double tau = 0.0;
    double t0 = 0.0;
    double q0 = 0.0, q1 = 0.0;        // observed-survivor quantiles
    double q0_ps = 0.0, q1_ps = 0.0;  // always-survivor quantiles
    double osqc = 0.0;                // q1 - q0
    double psqc = 0.0;                // q1_ps - q0_ps
    std::size_t mc_samples = 0;
};

// Inf-based empirical quantile: smallest value with ECDF >= tau.
inline double empirical_quantile(std::vector<double>& v, double tau) {
    if (v.empty()) throw EstimationError("empirical_quantile: empty sample");
    const double k = std::ceil(tau * static_cast<double>(v.size()) - 1e-9) - 1.0;
    const auto idx = static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(v.size() - 1)));
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(idx), v.end());
    return v[idx];
}

// Simulates uncensored latent outcomes; the DGP split point is cfg.t0 and the
// landmark of the estimand is `t0`.
inline std::vector<TruthValues> true_values(const DGPConfig& cfg, std::span<const double> taus, double t0,
                                            std::size_t mc_samples) {
    cfg.validate();
    if (mc_samples < 10000) throw ValidationError("truth needs at least 10^4 Monte Carlo samples");
    auto eng = substream(cfg.seed, {0x7275746855ULL});
    detail::SubjectSampler sampler(cfg);
    std::vector<double> r0, r1, r0ps, r1ps;
    for (std::size_t i = 0; i < mc_samples; ++i) {
        const auto x = sampler.covariates(eng);
        const auto [t0_time, t1_time] = sampler.potential_times(x, eng);
        const bool s0 = t0_time > t0, s1 = t1_time > t0;
        if (s0) r0.push_back(t0_time - t0);
        if (s1) r1.push_back(t1_time - t0);
        if (s0 && s1) {
            r0ps.push_back(t0_time - t0);
            r1ps.push_back(t1_time - t0);
        }
    }
    if (r0.empty() || r1.empty() || r0ps.empty())
        throw EstimationError("truth: no landmark survivors in the Monte Carlo sample");
    std::vector<TruthValues> out;
    for (double tau : taus) {
        TruthValues tv;
        tv.tau = tau;
        tv.t0 = t0;
        tv.mc_samples = mc_samples;
        tv.q0 = empirical_quantile(r0, tau);
        tv.q1 = empirical_quantile(r1, tau);
        tv.q0_ps = empirical_quantile(r0ps, tau);
        tv.q1_ps = empirical_quantile(r1ps, tau);
        tv.osqc = tv.q1 - tv.q0;
        tv.psqc = tv.q1_ps - tv.q0_ps;
        out.push_back(tv);
    }
    return out;
}

inline TruthValues true_values(const DGPConfig& cfg, double tau, double t0, std::size_t mc_samples) {
    const double taus[] = {tau};
    return true_values(cfg, taus, t0, mc_samples).front();
}

// ---------------------------------------------------------------------------
// Scenario grid
// ---------------------------------------------------------------------------

enum class Scenario { CC, CI, IC, II };

inline std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::CC: return "CC";
        case Scenario::CI: return "CI";
        case Scenario::IC: return "IC";
        case Scenario::II: return "II";
    }
    return "?";
}

inline Scenario parse_scenario(std::string_view s) {
    if (s == "CC") return Scenario::CC;
    if (s == "CI") return Scenario::CI;
    if (s == "IC") return Scenario::IC;
    if (s == "II") return Scenario::II;
    throw ParseError("unknown scenario '" + std::string(s) + "' (expected CC, CI, IC or II)");
}

// First letter: propensity model; second: outcome model. C = includes x1^2,
// I = omits it. The censoring model always carries the x1:x3 interaction.
inline ModelSpecs scenario_specs(Scenario s) {
    const bool ps_ok = s == Scenario::CC || s == Scenario::CI;
    const bool out_ok = s == Scenario::CC || s == Scenario::IC;
    ModelSpecs m;
    m.propensity = parse_terms(ps_ok ? "x1,x2,x3,x1^2" : "x1,x2,x3", true);
    m.outcome = parse_terms(out_ok ? "x1,x2,x3,x1^2" : "x1,x2,x3", false);
    m.censoring = parse_terms("x1,x2,x3,x1:x3", false);
    return m;
}

struct StudyConfig {
    std::vector<std::size_t> ns{500};
    std::vector<double> beta_ts{0.0};
    double rho = 0.2;
    double nu = 1.5;
    DgpVariant variant = DgpVariant::Copula;
    double censoring_log_rate_offset = 0.0;
    bool randomized = false;

    std::vector<Scenario> scenarios{Scenario::CC, Scenario::CI, Scenario::IC, Scenario::II};
    std::vector<Method> methods{Method::KM, Method::IW, Method::DR, Method::PS};
    std::vector<double> taus{0.3};
    std::vector<double> t0s{0.5};

    std::size_t replications = 100;
    std::size_t bootstrap_B = 0;  // 0: no bootstrap, coverage not reported
    double alpha = 0.05;
    std::uint64_t seed = 1;
    std::size_t truth_samples = 10'000'000;
    unsigned threads = 1;

    void validate() const {
        auto nonempty = [](bool ok, const char* what) {
            if (!ok) throw ValidationError(std::string("study: ") + what + " must not be empty");
        };
        nonempty(!ns.empty(), "dgp.n");
        nonempty(!beta_ts.empty(), "dgp.beta_t");
        nonempty(!scenarios.empty(), "grid.scenarios");
        nonempty(!methods.empty(), "grid.methods");
        nonempty(!taus.empty(), "grid.taus");
        nonempty(!t0s.empty(), "grid.t0s");
        if (replications < 1) throw ValidationError("study: mc.replications must be >= 1");
        if (bootstrap_B == 1) throw ValidationError("study: mc.bootstrap_B must be 0 or >= 2");
        if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("study: mc.alpha must lie in (0, 1)");
        for (double tau : taus)
            if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("study: taus must lie in (0, 1)");
        for (auto n : ns) DGPConfig{n, 0.0, rho, nu}.validate();
        for (double t : t0s) DGPConfig{1, 0.0, rho, nu, t}.validate();
    }
};

struct CellResult {
    Scenario scenario = Scenario::CC;
    Method method = Method::DR;
    std::size_t n = 0;
    double beta_t = 0.0;
    double tau = 0.0;
    double t0 = 0.0;
    double truth = 0.0;
    bool truth_is_osqc_fallback = false;  // PS truth unavailable, OSQC used
    double mean_estimate = 0.0;
    double bias = 0.0;
    double empirical_se = 0.0;
    double mc_se_bias = 0.0;  // empirical_se / sqrt(successful replications)
    std::optional<double> mean_bootstrap_se;
    std::optional<double> coverage;
    std::size_t replications = 0;
    std::size_t failures = 0;
    bool flagged = false;  // more than 10% failed replications
    std::vector<double> estimates;
};

struct TruthEntry {
    double beta_t = 0.0;
    TruthValues values;
};

struct SimulationReport {
    StudyConfig config;
    std::vector<TruthEntry> truths;
    std::vector<CellResult> cells;
};

namespace detail {

// Every (tau, scenario, method) estimate from one dataset, sharing fits
// across scenarios that use the same model formula.
class GridEvaluator {
public:
    GridEvaluator(const StudyConfig& cfg, double t0) : cfg_(cfg), t0_(t0) {
        for (auto s : cfg.scenarios) specs_.push_back(scenario_specs(s));
        for (auto m : cfg.methods) {
            if (m != Method::KM) need_nuisance_ = true;
            if (needs_outcome(m)) need_outcome_ = true;
        }
    }

    std::size_t slots() const { return cfg_.taus.size() * cfg_.scenarios.size() * cfg_.methods.size(); }
    std::size_t slot(std::size_t tau, std::size_t sc, std::size_t m) const {
        return (tau * cfg_.scenarios.size() + sc) * cfg_.methods.size() + m;
    }

    std::vector<std::optional<double>> operator()(const Dataset& data) const {
        std::vector<std::optional<double>> out(slots());
        if (data.arm_size(0) == 0 || data.arm_size(1) == 0) return out;

        // KM ignores the nuisance models; one value per tau.
        std::vector<std::optional<double>> km(cfg_.taus.size());
        for (std::size_t k = 0; k < cfg_.taus.size(); ++k) {
            try {
                km[k] = combine_arms(km_residual_quantile(data, 1, cfg_.taus[k], t0_),
                                     km_residual_quantile(data, 0, cfg_.taus[k], t0_))
                            .delta;
            } catch (const Error&) {
            }
        }

        std::map<std::string, std::optional<LogisticComponent>> ps_cache;
        std::map<std::string, std::optional<CoxComponent>> cox_cache;
        auto ps = [&](const FormulaSpec& f) -> const std::optional<LogisticComponent>& {
            auto [it, fresh] = ps_cache.try_emplace(f.to_string());
            if (fresh) try {
                    auto c = fit_propensity(data, f);
                    if (c.fit.converged) it->second = std::move(c);
                } catch (const Error&) {
                }
            return it->second;
        };
        auto cox = [&](const FormulaSpec& f, bool censoring) -> const std::optional<CoxComponent>& {
            auto [it, fresh] = cox_cache.try_emplace((censoring ? "C|" : "T|") + f.to_string());
            if (fresh) try {
                    auto c = fit_survival_model(data, f, censoring);
                    if (c.fit.converged) it->second = std::move(c);
                } catch (const Error&) {
                }
            return it->second;
        };

        const auto arms = treatment_vector(data);
        for (std::size_t sc = 0; sc < specs_.size(); ++sc) {
            std::optional<NuisanceSet> nuis;
            std::optional<SelectionWeights> weights;
            if (need_nuisance_) {
                const auto& p = ps(specs_[sc].propensity);
                const auto& c = cox(specs_[sc].censoring, true);
                std::optional<CoxComponent> o;
                if (need_outcome_) o = cox(specs_[sc].outcome, false);
                if (p && c && (!need_outcome_ || o)) {
                    nuis.emplace(arms, *p, *c, std::move(o));
                    if (need_outcome_) weights = selection_weights(data, *nuis, t0_);
                }
            }
            for (std::size_t k = 0; k < cfg_.taus.size(); ++k) {
                for (std::size_t m = 0; m < cfg_.methods.size(); ++m) {
                    const auto method = cfg_.methods[m];
                    auto& dst = out[slot(k, sc, m)];
                    if (method == Method::KM) {
                        dst = km[k];
                        continue;
                    }
                    if (!nuis) continue;
                    try {
                        dst = estimate_delta(data, *nuis, t0_, cfg_.taus[k], method,
                                             weights ? &*weights : nullptr)
                                  .delta;
                    } catch (const Error&) {
                    }
                }
            }
        }
        return out;
    }

private:
    const StudyConfig& cfg_;
    double t0_;
    std::vector<ModelSpecs> specs_;
    bool need_nuisance_ = false;
    bool need_outcome_ = false;
};

struct ReplicationOutput {
    std::vector<std::optional<double>> estimates;
    std::vector<std::optional<double>> boot_se;
};

}  // namespace detail

inline SimulationReport run_study(const StudyConfig& cfg) {
    cfg.validate();
    SimulationReport report;
    report.config = cfg;
    const double z = normal_quantile(1.0 - cfg.alpha / 2.0);

    // Truth per (beta_t, t0): one Monte Carlo sample serves every tau.
    std::map<std::pair<double, double>, std::vector<TruthValues>> truth;
    for (std::size_t bi = 0; bi < cfg.beta_ts.size(); ++bi) {
        for (std::size_t ti = 0; ti < cfg.t0s.size(); ++ti) {
            DGPConfig d;
            d.beta_t = cfg.beta_ts[bi];
            d.rho = cfg.rho;
            d.nu = cfg.nu;
            d.t0 = cfg.t0s[ti];
            d.variant = cfg.variant;
            d.seed = derive_seed(cfg.seed, {0xC0FFEEULL, bi, ti});
            auto tv = true_values(d, cfg.taus, d.t0, cfg.truth_samples);
            for (const auto& v : tv) report.truths.push_back({d.beta_t, v});
            truth[{d.beta_t, d.t0}] = std::move(tv);
        }
    }

    std::size_t data_cell = 0;
    for (auto n : cfg.ns) {
        for (double beta_t : cfg.beta_ts) {
            for (double t0 : cfg.t0s) {
                const std::size_t cell_id = data_cell++;
                detail::GridEvaluator eval(cfg, t0);
                const auto slots = eval.slots();
                std::vector<detail::ReplicationOutput> reps(cfg.replications);

                parallel_for(cfg.replications, cfg.threads, [&](std::size_t r) {
                    DGPConfig d;
                    d.n = n;
                    d.beta_t = beta_t;
                    d.rho = cfg.rho;
                    d.nu = cfg.nu;
                    d.t0 = t0;
                    d.variant = cfg.variant;
                    d.censoring_log_rate_offset = cfg.censoring_log_rate_offset;
                    d.randomized = cfg.randomized;
                    d.seed = derive_seed(cfg.seed, {cell_id, r});
                    const auto sample = generate(d);
                    auto& out = reps[r];
                    out.estimates = eval(sample.dataset);
                    out.boot_se.assign(slots, std::nullopt);
                    if (cfg.bootstrap_B == 0) return;

                    std::vector<std::vector<std::optional<double>>> per_slot(
                        slots, std::vector<std::optional<double>>(cfg.bootstrap_B));
                    for (std::size_t b = 0; b < cfg.bootstrap_B; ++b) {
                        auto eng = substream(cfg.seed, {cell_id, r, b, 0xB00757ULL});
                        const auto resampled =
                            sample.dataset.subset(resample_indices(sample.dataset.size(), eng));
                        const auto est = eval(resampled);
                        for (std::size_t s = 0; s < slots; ++s) per_slot[s][b] = est[s];
                    }
                    for (std::size_t s = 0; s < slots; ++s) {
                        const auto sum = summarize_replicates(per_slot[s], cfg.alpha);
                        if (sum.used >= 2 && 2 * sum.used >= cfg.bootstrap_B) out.boot_se[s] = sum.se;
                    }
                });

                for (std::size_t k = 0; k < cfg.taus.size(); ++k) {
                    const auto& tv = truth.at({beta_t, t0})[k];
                    for (std::size_t sc = 0; sc < cfg.scenarios.size(); ++sc) {
                        for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
                            const auto s = eval.slot(k, sc, m);
                            CellResult c;
                            c.scenario = cfg.scenarios[sc];
                            c.method = cfg.methods[m];
                            c.n = n;
                            c.beta_t = beta_t;
                            c.tau = cfg.taus[k];
                            c.t0 = t0;
                            if (c.method == Method::PS) {
                                c.truth_is_osqc_fallback = cfg.variant == DgpVariant::Independent;
                                c.truth = c.truth_is_osqc_fallback ? tv.osqc : tv.psqc;
                            } else {
                                c.truth = tv.osqc;
                            }
                            c.replications = cfg.replications;
                            double se_sum = 0.0;
                            std::size_t se_count = 0, covered = 0;
                            for (const auto& rep : reps) {
                                const auto& e = rep.estimates[s];
                                if (!e) {
                                    ++c.failures;
                                    continue;
                                }
                                c.estimates.push_back(*e);
                                if (const auto& se = rep.boot_se[s]) {
                                    se_sum += *se;
                                    ++se_count;
                                    if (std::abs(*e - c.truth) <= z * *se) ++covered;
                                }
                            }
                            const auto ok = c.estimates.size();
                            if (ok > 0) {
                                double mean = 0.0;
                                for (double e : c.estimates) mean += e;
                                mean /= static_cast<double>(ok);
                                c.mean_estimate = mean;
                                c.bias = mean - c.truth;
                                if (ok > 1) {
                                    double ss = 0.0;
                                    for (double e : c.estimates) ss += (e - mean) * (e - mean);
                                    c.empirical_se = std::sqrt(ss / static_cast<double>(ok - 1));
                                }
                                c.mc_se_bias = c.empirical_se / std::sqrt(static_cast<double>(ok));
                            }
                            if (se_count > 0) {
                                c.mean_bootstrap_se = se_sum / static_cast<double>(se_count);
                                c.coverage =
                                    static_cast<double>(covered) / static_cast<double>(se_count);
                            }
                            c.flagged = 10 * c.failures > cfg.replications;
                            report.cells.push_back(std::move(c));
                        }
                    }
                }
            }
        }
    }
    return report;
}

}  // namespace qrl
