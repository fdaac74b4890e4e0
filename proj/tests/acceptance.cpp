// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qrl/simulation.hpp"
#include "support/properties.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using qrl::Method;
using qrl::Scenario;
using qrl::testing::Verdict;

namespace {

struct Check {
    Verdict verdict;
    std::ostringstream notes;

    void expect(bool ok, const std::string& what) {
        notes << (notes.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [miss]");
        if (!ok) verdict.fail(what);
    }
};

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", x);
    return buf;
}

bool within(double x, double centre, double tol) { return std::abs(x - centre) <= tol; }

const qrl::CellResult& cell(const qrl::SimulationReport& r, Scenario s, Method m, std::size_t n) {
    for (const auto& c : r.cells)
        if (c.scenario == s && c.method == m && c.n == n) return c;
    throw std::runtime_error("missing cell " + qrl::to_string(s) + "/" + qrl::to_string(m));
}

qrl::SimulationReport study(std::size_t n, double beta_t, std::vector<Scenario> scenarios,
                            std::vector<Method> methods, std::size_t reps, std::size_t B,
                            qrl::DgpVariant variant = qrl::DgpVariant::Copula) {
    qrl::StudyConfig cfg;
    cfg.ns = {n};
    cfg.beta_ts = {beta_t};
    cfg.variant = variant;
    cfg.scenarios = std::move(scenarios);
    cfg.methods = std::move(methods);
    cfg.taus = {0.3};
    cfg.t0s = {0.5};
    cfg.replications = reps;
    cfg.bootstrap_B = B;
    cfg.truth_samples = 10'000'000;
    cfg.threads = std::max(1u, std::thread::hardware_concurrency());
    return qrl::run_study(cfg);
}

struct Shared {
    double copula_psqc = std::nan("");  // beta_t = -0.5, t0 = 0.5, tau = 0.3
    double dr_se_500 = std::nan("");
    double dr_se_2000 = std::nan("");
};

Check truth_oracle(Shared& shared) {
    Check c;
    const auto dir = fs::temp_directory_path() / "qrl_acceptance_truth";
    fs::create_directories(dir);
    const auto out = (dir / "truth.json").string();
    const int rc = qrl::testing::run_command(std::string(QRL_CLI_PATH) +
                                             " truth --beta-t -0.5 --t0 0.3,0.5,0.7 --tau 0.3,0.5"
                                             " --samples 10000000 --out " + out);
    if (rc != 0) {
        c.expect(false, "truth command exit " + std::to_string(rc));
        return c;
    }
    const std::map<std::pair<double, double>, std::pair<double, double>> expected{
        {{0.5, 0.3}, {0.22, 0.27}}, {{0.5, 0.5}, {0.39, 0.45}}, {{0.3, 0.3}, {0.20, 0.25}},
        {{0.3, 0.5}, {0.37, 0.43}}, {{0.7, 0.3}, {0.23, 0.29}}, {{0.7, 0.5}, {0.40, 0.47}}};
    std::size_t seen = 0;
    const auto doc = json::parse(qrl::testing::slurp(out));
    for (const auto& t : doc.at("truth")) {
        const double t0 = t["t0"], tau = t["tau"], osqc = t["osqc"], psqc = t["psqc"];
        for (const auto& [key, val] : expected) {
            if (!(within(key.first, t0, 1e-12) && within(key.second, tau, 1e-12))) continue;
            ++seen;
            const std::string at = "t0=" + num(t0) + " tau=" + num(tau);
            c.expect(within(osqc, val.first, 0.01), at + " OSQC " + num(osqc));
            c.expect(within(psqc, val.second, 0.01), at + " PSQC " + num(psqc));
            if (key == std::pair{0.5, 0.3}) shared.copula_psqc = psqc;
        }
    }
    c.expect(seen == expected.size(), std::to_string(seen) + " cells reported");
    fs::remove_all(dir);
    return c;
}

Check desk_scale_table(Shared& shared) {
    Check c;
    const auto r = study(500, 0.0, {Scenario::CC, Scenario::CI, Scenario::IC, Scenario::II},
                         {Method::KM, Method::IW, Method::DR, Method::PS}, 500, 200);
    for (Scenario s : {Scenario::CC, Scenario::CI, Scenario::IC}) {
        const auto& dr = cell(r, s, Method::DR, 500);
        c.expect(within(dr.bias, -0.01, 0.03), qrl::to_string(s) + " DR bias " + num(dr.bias));
        const double cov = dr.coverage.value_or(-1.0);
        c.expect(cov >= 0.91 && cov <= 0.98, qrl::to_string(s) + " DR coverage " + num(cov));
    }
    for (Scenario s : {Scenario::IC, Scenario::II}) {
        const auto& iw = cell(r, s, Method::IW, 500);
        c.expect(within(iw.bias, -0.18, 0.03), qrl::to_string(s) + " IW bias " + num(iw.bias));
    }
    const auto& km = cell(r, Scenario::CC, Method::KM, 500);
    c.expect(within(km.bias, -0.39, 0.05), "CC KM bias " + num(km.bias));
    shared.dr_se_500 = cell(r, Scenario::CC, Method::DR, 500).empirical_se;
    return c;
}

Check bias_order(Shared& shared) {
    Check c;
    const auto r = study(2000, 0.0, {Scenario::CC, Scenario::CI, Scenario::IC}, {Method::IW, Method::DR}, 200, 0);
    for (Scenario s : {Scenario::CC, Scenario::CI, Scenario::IC}) {
        const auto& dr = cell(r, s, Method::DR, 2000);
        c.expect(std::abs(dr.bias) < 0.03, qrl::to_string(s) + " DR bias " + num(dr.bias));
    }
    const auto& iw = cell(r, Scenario::IC, Method::IW, 2000);
    c.expect(iw.bias >= -0.23 && iw.bias <= -0.12, "IC IW bias " + num(iw.bias));
    shared.dr_se_2000 = cell(r, Scenario::CC, Method::DR, 2000).empirical_se;
    return c;
}

Check root_n_scaling(const Shared& shared) {
    Check c;
    const double ratio = shared.dr_se_2000 / shared.dr_se_500;
    c.expect(ratio >= 0.4 && ratio <= 0.6, "CC DR SE " + num(shared.dr_se_2000) + "/" + num(shared.dr_se_500) +
                                               " = " + num(ratio));
    return c;
}

Check ps_dr_decomposition() {
    Check c;
    const auto r = study(2000, -0.5, {Scenario::CC}, {Method::DR, Method::PS}, 200, 0);
    const auto& truth = r.truths.at(0).values;
    const auto& dr = cell(r, Scenario::CC, Method::DR, 2000);
    const auto& ps = cell(r, Scenario::CC, Method::PS, 2000);
    c.expect(within(dr.mean_estimate, truth.osqc, 0.03), "DR mean " + num(dr.mean_estimate) + " vs OSQC " +
                                                             num(truth.osqc));
    c.expect(within(ps.mean_estimate, truth.psqc, 0.03), "PS mean " + num(ps.mean_estimate) + " vs PSQC " +
                                                             num(truth.psqc));
    const double gap = ps.mean_estimate - dr.mean_estimate;
    c.expect(within(gap, truth.psqc - truth.osqc, 0.03),
             "PS-DR gap " + num(gap) + " vs " + num(truth.psqc - truth.osqc));
    return c;
}

Check assumption_violation(const Shared& shared) {
    Check c;
    const auto r = study(2000, -0.5, {Scenario::CC}, {Method::IW, Method::DR, Method::PS}, 200, 0,
                         qrl::DgpVariant::Independent);
    const double osqc = r.truths.at(0).values.osqc;
    for (Method m : {Method::IW, Method::DR}) {
        const auto& e = cell(r, Scenario::CC, m, 2000);
        c.expect(within(e.mean_estimate, osqc, 0.03),
                 qrl::to_string(m) + " mean " + num(e.mean_estimate) + " vs OSQC " + num(osqc));
    }
    const auto& ps = cell(r, Scenario::CC, Method::PS, 2000);
    const double gap = std::abs(ps.mean_estimate - shared.copula_psqc);
    c.expect(gap > 3.0 * ps.mc_se_bias, "PS mean " + num(ps.mean_estimate) + " vs copula PSQC " +
                                            num(shared.copula_psqc) + " (" + num(gap / ps.mc_se_bias) + " SE)");
    return c;
}

Check property_suite() {
    Check c;
    using namespace qrl::testing;
    const std::vector<std::pair<std::string, std::function<Verdict()>>> checks{
        {"monotone", [] { return check_uiw_monotone(1000); }},
        {"DR=IW", [] { return check_dr_equals_iw_zero_outcome(1000); }},
        {"PS=IW", [] { return check_ps_equals_iw_unit_weights(1000); }},
        {"rescaling", [] { return check_rescaling_invariance(1000); }},
        {"dense scan", [] { return check_dense_scan(100); }},
        {"scores", [] { return check_score_finite_differences(100); }},
        {"IPCW", [] { return check_ipcw_identity(1000); }},
        {"copula order", [] { return check_copula_monotonicity(100'000); }},
        {"determinism", [] {
             const auto dir = fs::temp_directory_path() / "qrl_acceptance_cli";
             fs::remove_all(dir);
             fs::create_directories(dir);
             auto v = check_cli_determinism(QRL_CLI_PATH, dir.string());
             fs::remove_all(dir);
             return v;
         }},
    };
    for (const auto& [name, run] : checks) {
        const auto v = run();
        c.expect(v.ok, name + (v.ok ? "" : " (" + v.detail + ")"));
    }
    return c;
}

}  // namespace

int main() {
    Shared shared;
    const std::vector<std::pair<std::string, std::function<Check()>>> criteria{
        {"1 truth oracle", [&] { return truth_oracle(shared); }},
        {"2 desk-scale table", [&] { return desk_scale_table(shared); }},
        {"3 bias order at N=2000", [&] { return bias_order(shared); }},
        {"4 root-n scaling", [&] { return root_n_scaling(shared); }},
        {"5 PS vs DR decomposition", [] { return ps_dr_decomposition(); }},
        {"6 assumption violation", [&] { return assumption_violation(shared); }},
        {"7 property suite", [] { return property_suite(); }},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Check c;
        try {
            c = run();
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failed += !c.verdict.ok;
        std::printf("criterion %s: %s (%.0fs) %s\n", name.c_str(), c.verdict.ok ? "PASS" : "FAIL", secs,
                    c.notes.str().c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
