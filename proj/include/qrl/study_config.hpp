#pragma once

// Study configuration file: INI sections [dgp], [grid] and [mc]. Lists are
// comma separated. Unknown sections or keys are rejected; every error names
// the offending key path.
//
//   [dgp]
//   n = 500, 2000
//   beta_t = 0
//   rho = 0.2
//   nu = 1.5
//   t0 = 0.5
//   variant = copula
//   censoring_offset = 0
//   randomized = false
//   [grid]
//   scenarios = CC, CI, IC, II
//   methods = KM, IW, DR, PS
//   taus = 0.3
//   [mc]
//   replications = 500
//   bootstrap_B = 200
//   alpha = 0.05
//   seed = 1
//   truth_samples = 10000000

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "qrl/simulation.hpp"

namespace qrl {

namespace detail {

inline std::uint64_t parse_count(const std::string& text, const std::string& path) {
    std::uint64_t v = 0;
    const auto t = trim(text);
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || p != t.data() + t.size() || t.empty())
        throw ParseError("config: " + path + ": expected a nonnegative integer, got '" + text + "'");
    return v;
}

inline double parse_real(const std::string& text, const std::string& path) {
    if (auto v = parse_double(trim(text))) return *v;
    throw ParseError("config: " + path + ": expected a number, got '" + text + "'");
}

inline bool parse_flag(const std::string& text, const std::string& path) {
    const auto t = trim(text);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    throw ParseError("config: " + path + ": expected true or false, got '" + text + "'");
}

template <class F>
auto parse_list(const std::string& text, const std::string& path, F&& item) {
    std::vector<decltype(item(std::string(), path))> out;
    for (const auto& tok : split(text, ',')) {
        if (tok.empty()) throw ParseError("config: " + path + ": empty list element");
        out.push_back(item(tok, path));
    }
    return out;
}

// Wraps a parser of library enums so its error names the key path.
template <class F>
auto with_path(F&& f) {
    return [f](const std::string& tok, const std::string& path) {
        try {
            return f(tok);
        } catch (const Error& e) {
            throw ParseError("config: " + path + ": " + e.what());
        }
    };
}

}  // namespace detail

inline StudyConfig parse_study_config(std::istream& in) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ParseError("config: line " + std::to_string(e.line()) + ": " + e.message());
    }

    StudyConfig cfg;
    std::optional<double> dgp_t0;
    bool grid_t0s = false;
    using Setter = std::function<void(const std::string&, const std::string&)>;
    const std::map<std::string, std::map<std::string, Setter>> keys{
        {"dgp",
         {{"n",
           [&](const std::string& v, const std::string& p) {
               cfg.ns = detail::parse_list(v, p, [](const std::string& t, const std::string& q) {
                   return static_cast<std::size_t>(detail::parse_count(t, q));
               });
           }},
          {"beta_t", [&](const std::string& v, const std::string& p) {
               cfg.beta_ts = detail::parse_list(v, p, detail::parse_real);
           }},
          {"rho", [&](const std::string& v, const std::string& p) { cfg.rho = detail::parse_real(v, p); }},
          {"nu", [&](const std::string& v, const std::string& p) { cfg.nu = detail::parse_real(v, p); }},
          {"t0", [&](const std::string& v, const std::string& p) { dgp_t0 = detail::parse_real(v, p); }},
          {"variant",
           [&](const std::string& v, const std::string& p) {
               cfg.variant = detail::with_path([](const std::string& t) { return parse_variant(t); })(
                   detail::trim(v), p);
           }},
          {"censoring_offset",
           [&](const std::string& v, const std::string& p) {
               cfg.censoring_log_rate_offset = detail::parse_real(v, p);
           }},
          {"randomized",
           [&](const std::string& v, const std::string& p) { cfg.randomized = detail::parse_flag(v, p); }}}},
        {"grid",
         {{"scenarios",
           [&](const std::string& v, const std::string& p) {
               cfg.scenarios = detail::parse_list(
                   v, p, detail::with_path([](const std::string& t) { return parse_scenario(t); }));
           }},
          {"methods",
           [&](const std::string& v, const std::string& p) {
               cfg.methods = detail::parse_list(
                   v, p, detail::with_path([](const std::string& t) { return parse_method(t); }));
           }},
          {"taus", [&](const std::string& v, const std::string& p) {
               cfg.taus = detail::parse_list(v, p, detail::parse_real);
           }},
          {"t0s",
           [&](const std::string& v, const std::string& p) {
               cfg.t0s = detail::parse_list(v, p, detail::parse_real);
               grid_t0s = true;
           }}}},
        {"mc",
         {{"replications",
           [&](const std::string& v, const std::string& p) { cfg.replications = detail::parse_count(v, p); }},
          {"bootstrap_B",
           [&](const std::string& v, const std::string& p) { cfg.bootstrap_B = detail::parse_count(v, p); }},
          {"alpha", [&](const std::string& v, const std::string& p) { cfg.alpha = detail::parse_real(v, p); }},
          {"seed", [&](const std::string& v, const std::string& p) { cfg.seed = detail::parse_count(v, p); }},
          {"truth_samples",
           [&](const std::string& v, const std::string& p) {
               cfg.truth_samples = detail::parse_count(v, p);
           }}}}};

    for (const auto& [section, body] : tree) {
        auto sec = keys.find(section);
        if (sec == keys.end()) {
            if (body.empty()) throw SchemaError("config: " + section + ": key outside any section");
            throw SchemaError("config: " + section + ": unknown section");
        }
        for (const auto& [key, value] : body) {
            const auto path = section + "." + key;
            auto setter = sec->second.find(key);
            if (setter == sec->second.end()) throw SchemaError("config: " + path + ": unknown key");
            setter->second(value.data(), path);
        }
    }
    if (dgp_t0) {
        if (grid_t0s) throw SchemaError("config: dgp.t0: give the landmark in dgp.t0 or grid.t0s, not both");
        cfg.t0s = {*dgp_t0};
    }
    try {
        cfg.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    return cfg;
}

inline StudyConfig load_study_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open config file '" + path + "'");
    return parse_study_config(in);
}

}  // namespace qrl
