// qrl: estimate, simulate, truth and generate subcommands.
//
// Exit codes: 0 success, 1 internal error, 2 input error, 3 some estimand not
// identifiable, 4 bootstrap inference unreliable.

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qrl/report.hpp"
#include "qrl/study_config.hpp"

#ifndef QRL_VERSION
#define QRL_VERSION "0.0.0"
#endif

namespace {

enum Exit : int { kOk = 0, kInternal = 1, kInput = 2, kNotIdentifiable = 3, kUnreliable = 4 };

using qrl::Json;
using Clock = std::chrono::steady_clock;

struct EstimateArgs {
    std::string data;
    std::string time_col = "y", event_col = "d", treat_col = "a";
    std::vector<std::string> covariates;
    std::vector<double> t0s, taus;
    std::vector<std::string> methods{"dr"};
    std::size_t boot = 1000;
    double alpha = 0.05;
    std::uint64_t seed = 1;
    unsigned threads = qrl::default_threads();
    std::optional<std::string> ps_terms, outcome_terms, cens_terms;
    std::string out;
};

struct SimulateArgs {
    std::string config;
    std::string out_prefix;
    std::optional<std::uint64_t> seed;
    unsigned threads = qrl::default_threads();
};

struct TruthArgs {
    double beta_t = -0.5;
    std::vector<double> t0s{0.5};
    std::vector<double> taus{0.3};
    std::string variant = "copula";
    double rho = 0.2, nu = 1.5;
    std::size_t samples = 10'000'000;
    std::uint64_t seed = 1;
    std::string out;
};

struct GenerateArgs {
    std::size_t n = 500;
    double beta_t = 0.0;
    double rho = 0.2, nu = 1.5, t0 = 0.5;
    std::string variant = "copula";
    double censoring_offset = 0.0;
    bool randomized = false;
    std::uint64_t seed = 1;
    std::string out;
};

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw qrl::SchemaError("cannot write '" + path + "'");
    f << text;
    if (!f) throw qrl::Error("write failed for '" + path + "'");
}

std::string manifest_path(const std::string& out) {
    const std::string ext = ".json";
    if (out.size() > ext.size() && out.compare(out.size() - ext.size(), ext.size(), ext) == 0)
        return out.substr(0, out.size() - ext.size()) + ".manifest.json";
    return out + ".manifest.json";
}

Json manifest(const std::string& command, Json config, std::uint64_t seed, Clock::time_point start,
              const std::vector<std::string>& warnings) {
    Json m;
    m["schema_version"] = qrl::kSchemaVersion;
    m["command"] = command;
    m["version"] = QRL_VERSION;
    m["seed"] = seed;
    m["config"] = std::move(config);
    m["duration_seconds"] = std::chrono::duration<double>(Clock::now() - start).count();
    m["warnings"] = warnings;
    return m;
}

// Result to --out (manifest beside it) or to stdout (manifest to stderr).
void emit(const std::string& out, const Json& result, const Json& man) {
    if (out.empty()) {
        std::cout << result.dump(2) << '\n';
        std::cerr << man.dump(2) << '\n';
        return;
    }
    write_file(out, result.dump(2) + "\n");
    write_file(manifest_path(out), man.dump(2) + "\n");
}

qrl::FormulaSpec formula_or_default(const std::optional<std::string>& terms, bool intercept,
                                    const qrl::Dataset& data) {
    if (terms) return qrl::parse_terms(*terms, intercept);
    qrl::FormulaSpec f;
    f.intercept = intercept;
    for (const auto& name : data.covariate_names()) f.terms.push_back(qrl::Term::covariate(name));
    return f;
}

int run_estimate(const EstimateArgs& a, const std::string& command) {
    const auto start = Clock::now();
    qrl::CsvSchema schema;
    schema.time_col = a.time_col;
    schema.event_col = a.event_col;
    schema.treat_col = a.treat_col;
    if (!a.covariates.empty()) schema.covariates = a.covariates;
    const auto data = qrl::ingest_csv(a.data, schema);

    qrl::ModelSpecs specs;
    specs.propensity = formula_or_default(a.ps_terms, true, data);
    specs.outcome = formula_or_default(a.outcome_terms, false, data);
    specs.censoring = formula_or_default(a.cens_terms, false, data);
    qrl::validate_formula(specs.propensity, data.covariate_names());
    qrl::validate_formula(specs.outcome, data.covariate_names());
    qrl::validate_formula(specs.censoring, data.covariate_names());

    std::vector<qrl::Method> methods;
    for (const auto& m : a.methods) methods.push_back(qrl::parse_method(m));
    for (double t0 : a.t0s) qrl::EstimandSpec{1, t0, 0.5}.validate();
    for (double tau : a.taus) qrl::EstimandSpec{1, 1.0, tau}.validate();
    if (a.boot == 1) throw qrl::ValidationError("--boot must be 0 or >= 2");
    if (!(a.alpha > 0.0 && a.alpha < 1.0)) throw qrl::ValidationError("--alpha must lie in (0, 1)");

    qrl::BootstrapOptions bopt;
    bopt.replicates = a.boot;
    bopt.alpha = a.alpha;
    bopt.seed = a.seed;
    bopt.threads = a.threads;

    bool all_identifiable = true, any_unreliable = false;
    std::vector<std::string> warnings;
    Json results = Json::array();
    for (auto method : methods) {
        for (double t0 : a.t0s) {
            for (double tau : a.taus) {
                Json r;
                r["method"] = qrl::to_string(method);
                r["t0"] = t0;
                r["tau"] = tau;
                const auto label = qrl::to_string(method) + " t0=" + qrl::detail::fmt(t0) +
                                   " tau=" + qrl::detail::fmt(tau);
                qrl::DeltaEstimate point;
                try {
                    point = qrl::estimate_delta(data, t0, tau, method, specs);
                } catch (const qrl::EstimationError& err) {
                    all_identifiable = false;
                    warnings.push_back(label + ": " + err.what());
                    r["estimate"] = nullptr;
                    r["error"] = err.what();
                    r["bootstrap"] = nullptr;
                    results.push_back(std::move(r));
                    continue;
                }
                r["estimate"] = qrl::to_json(point);
                if (point.nuisance_degraded)
                    warnings.push_back(label + ": nuisance fit did not converge (" +
                                       point.degraded_component + ")");
                if (const auto clamps = point.q1.clamped_weights + point.q0.clamped_weights)
                    warnings.push_back(label + ": " + std::to_string(clamps) + " clamped weight evaluations");
                if (!point.identifiable()) {
                    all_identifiable = false;
                    warnings.push_back(label + ": not identifiable");
                    r["bootstrap"] = nullptr;
                } else if (a.boot == 0) {
                    r["bootstrap"] = nullptr;
                } else {
                    const auto b = qrl::bootstrap_delta(data, t0, tau, method, specs, bopt);
                    r["bootstrap"] = qrl::to_json(b);
                    if (b.replicates_failed > 0)
                        warnings.push_back(label + ": " + std::to_string(b.replicates_failed) +
                                           " bootstrap replicates failed");
                    if (b.unreliable) {
                        any_unreliable = true;
                        warnings.push_back(label + ": bootstrap inference unreliable");
                    }
                }
                results.push_back(std::move(r));
            }
        }
    }

    Json config;
    config["data"] = a.data;
    config["time_col"] = a.time_col;
    config["event_col"] = a.event_col;
    config["treat_col"] = a.treat_col;
    config["covariates"] = data.covariate_names();
    config["t0"] = a.t0s;
    config["tau"] = a.taus;
    config["method"] = a.methods;
    config["boot"] = a.boot;
    config["alpha"] = a.alpha;
    config["threads"] = a.threads;
    config["models"] = qrl::to_json(specs);

    Json result;
    result["schema_version"] = qrl::kSchemaVersion;
    result["n"] = data.size();
    result["n_treated"] = data.arm_size(1);
    result["n_control"] = data.arm_size(0);
    result["models"] = qrl::to_json(specs);
    result["results"] = std::move(results);
    emit(a.out, result, manifest(command, std::move(config), a.seed, start, warnings));

    if (!all_identifiable) return kNotIdentifiable;
    if (any_unreliable) return kUnreliable;
    return kOk;
}

int run_simulate(const SimulateArgs& a, const std::string& command) {
    const auto start = Clock::now();
    auto cfg = qrl::load_study_config(a.config);
    if (a.seed) cfg.seed = *a.seed;
    cfg.threads = a.threads;
    const auto report = qrl::run_study(cfg);

    std::ostringstream csv;
    qrl::write_report_csv(csv, report);
    write_file(a.out_prefix + ".csv", csv.str());
    write_file(a.out_prefix + ".json", qrl::to_json(report).dump(2) + "\n");

    std::vector<std::string> warnings;
    for (const auto& c : report.cells) {
        const auto label = qrl::to_string(c.scenario) + "/" + qrl::to_string(c.method) +
                           " n=" + std::to_string(c.n) + " beta_t=" + qrl::detail::fmt(c.beta_t) +
                           " tau=" + qrl::detail::fmt(c.tau) + " t0=" + qrl::detail::fmt(c.t0);
        if (c.failures > 0)
            warnings.push_back(label + ": " + std::to_string(c.failures) + " failed replications" +
                               (c.flagged ? " (flagged)" : ""));
        if (c.truth_is_osqc_fallback) warnings.push_back(label + ": PS scored against OSQC");
    }
    Json config = qrl::to_json(cfg);
    config["threads"] = cfg.threads;
    config["config_file"] = a.config;
    write_file(a.out_prefix + ".manifest.json",
               manifest(command, std::move(config), cfg.seed, start, warnings).dump(2) + "\n");
    return kOk;
}

int run_truth(const TruthArgs& a, const std::string& command) {
    const auto start = Clock::now();
    Json cells = Json::array();
    for (double t0 : a.t0s) {
        qrl::DGPConfig d;
        d.beta_t = a.beta_t;
        d.rho = a.rho;
        d.nu = a.nu;
        d.t0 = t0;
        d.variant = qrl::parse_variant(a.variant);
        d.seed = a.seed;
        for (double tau : a.taus) qrl::EstimandSpec{1, t0, tau}.validate();
        for (const auto& tv : qrl::true_values(d, a.taus, t0, a.samples)) cells.push_back(qrl::to_json(tv));
    }
    Json result;
    result["schema_version"] = qrl::kSchemaVersion;
    result["beta_t"] = a.beta_t;
    result["variant"] = a.variant;
    result["rho"] = a.rho;
    result["nu"] = a.nu;
    result["samples"] = a.samples;
    result["seed"] = a.seed;
    result["truth"] = std::move(cells);

    Json config;
    config["beta_t"] = a.beta_t;
    config["t0"] = a.t0s;
    config["tau"] = a.taus;
    config["variant"] = a.variant;
    config["rho"] = a.rho;
    config["nu"] = a.nu;
    config["samples"] = a.samples;
    emit(a.out, result, manifest(command, std::move(config), a.seed, start, {}));
    return kOk;
}

int run_generate(const GenerateArgs& a) {
    qrl::DGPConfig d;
    d.n = a.n;
    d.beta_t = a.beta_t;
    d.rho = a.rho;
    d.nu = a.nu;
    d.t0 = a.t0;
    d.variant = qrl::parse_variant(a.variant);
    d.seed = a.seed;
    d.censoring_log_rate_offset = a.censoring_offset;
    d.randomized = a.randomized;
    const auto sample = qrl::generate(d);
    std::ostringstream csv;
    qrl::write_csv(csv, sample.dataset);
    if (a.out.empty())
        std::cout << csv.str();
    else
        write_file(a.out, csv.str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Causal quantile residual lifetime estimation"};
    app.set_version_flag("--version", QRL_VERSION);
    app.require_subcommand(1);

    std::string command;
    for (int i = 0; i < argc; ++i) command += (i ? " " : "") + std::string(argv[i]);

    EstimateArgs est;
    auto* e = app.add_subcommand("estimate", "Estimate OSQC/PSQC contrasts from a CSV file");
    e->add_option("--data", est.data, "Input CSV with a header row")->required();
    e->add_option("--time-col", est.time_col, "Follow-up time column")->capture_default_str();
    e->add_option("--event-col", est.event_col, "Event indicator column")->capture_default_str();
    e->add_option("--treat-col", est.treat_col, "Treatment column")->capture_default_str();
    e->add_option("--covariates", est.covariates, "Covariate columns (default: all others)")->delimiter(',');
    e->add_option("--t0", est.t0s, "Landmark time(s)")->delimiter(',')->required();
    e->add_option("--tau", est.taus, "Quantile level(s)")->delimiter(',')->required();
    e->add_option("--method", est.methods, "km, iw, dr, ps")->delimiter(',')->capture_default_str();
    e->add_option("--boot", est.boot, "Bootstrap replicates (0 disables)")->capture_default_str();
    e->add_option("--alpha", est.alpha, "1 - confidence level")->capture_default_str();
    e->add_option("--seed", est.seed, "Bootstrap seed")->capture_default_str();
    e->add_option("--threads", est.threads, "Worker threads (default QRL_THREADS or 1)")->check(CLI::PositiveNumber);
    e->add_option("--ps-terms", est.ps_terms, "Propensity terms, e.g. x1,x2,x1^2");
    e->add_option("--outcome-terms", est.outcome_terms, "Outcome Cox terms");
    e->add_option("--cens-terms", est.cens_terms, "Censoring Cox terms, e.g. x1,x3,x1:x3");
    e->add_option("--out", est.out, "Result JSON path (default stdout)");

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Run a simulation study from a config file");
    s->add_option("--config", sim.config, "Study config (INI)")->required();
    s->add_option("--out-prefix", sim.out_prefix, "Writes PREFIX.csv, PREFIX.json, PREFIX.manifest.json")
        ->required();
    s->add_option("--seed", sim.seed, "Override mc.seed");
    s->add_option("--threads", sim.threads, "Worker threads (default QRL_THREADS or 1)")->check(CLI::PositiveNumber);

    TruthArgs tr;
    auto* t = app.add_subcommand("truth", "Monte Carlo OSQC/PSQC for the simulation design");
    t->add_option("--beta-t", tr.beta_t, "Treatment effect on log hazard")->capture_default_str();
    t->add_option("--t0", tr.t0s, "Landmark time(s)")->delimiter(',')->capture_default_str();
    t->add_option("--tau", tr.taus, "Quantile level(s)")->delimiter(',')->capture_default_str();
    t->add_option("--variant", tr.variant, "copula or independent")->capture_default_str();
    t->add_option("--rho", tr.rho, "Covariate correlation")->capture_default_str();
    t->add_option("--nu", tr.nu, "Weibull shape")->capture_default_str();
    t->add_option("--samples", tr.samples, "Monte Carlo samples (>= 10000)")->capture_default_str();
    t->add_option("--seed", tr.seed, "Seed")->capture_default_str();
    t->add_option("--out", tr.out, "Result JSON path (default stdout)");

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Write one simulated dataset as CSV (x1,x2,x3,a,y,d)");
    g->add_option("--n", gen.n, "Sample size")->capture_default_str()->check(CLI::PositiveNumber);
    g->add_option("--beta-t", gen.beta_t, "Treatment effect on log hazard")->capture_default_str();
    g->add_option("--rho", gen.rho, "Covariate correlation")->capture_default_str();
    g->add_option("--nu", gen.nu, "Weibull shape")->capture_default_str();
    g->add_option("--t0", gen.t0, "Landmark used by the copula construction")->capture_default_str();
    g->add_option("--variant", gen.variant, "copula or independent")->capture_default_str();
    g->add_option("--censoring-offset", gen.censoring_offset, "Added to the censoring log rate")
        ->capture_default_str();
    g->add_flag("--randomized", gen.randomized, "Assign treatment by fair coin");
    g->add_option("--seed", gen.seed, "Seed")->capture_default_str();
    g->add_option("--out", gen.out, "CSV path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int rc = app.exit(err);
        return rc == 0 ? kOk : kInput;
    }

    try {
        if (e->parsed()) return run_estimate(est, command);
        if (s->parsed()) return run_simulate(sim, command);
        if (t->parsed()) return run_truth(tr, command);
        if (g->parsed()) return run_generate(gen);
    } catch (const qrl::SchemaError& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kInput;
    } catch (const qrl::ParseError& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kInput;
    } catch (const qrl::ValidationError& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kInput;
    } catch (const qrl::Error& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kInternal;
    } catch (const std::exception& err) {
        std::cerr << "internal error: " << err.what() << '\n';
        return kInternal;
    }
    return kInternal;
}
