#pragma once

#include <cctype>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "qrl/error.hpp"

namespace qrl {

enum class Method { KM, IW, DR, PS };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::KM: return "KM";
        case Method::IW: return "IW";
        case Method::DR: return "DR";
        case Method::PS: return "PS";
    }
    return "?";
}

inline Method parse_method(std::string_view s) {
    std::string u;
    for (char c : s) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (u == "KM") return Method::KM;
    if (u == "IW") return Method::IW;
    if (u == "DR") return Method::DR;
    if (u == "PS") return Method::PS;
    throw ParseError("unknown method '" + std::string(s) + "' (expected km, iw, dr or ps)");
}

// q_a(tau; t0) for one arm.
struct EstimandSpec {
    int arm = 1;
    double t0 = 1.0;
    double tau = 0.5;
    Method method = Method::DR;

    void validate() const {
        if (arm != 0 && arm != 1) throw ValidationError("arm must be 0 or 1");
        if (!(t0 > 0.0)) throw ValidationError("landmark t0 must be > 0");
        if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("tau must lie in (0, 1)");
    }
};

struct QuantileEstimate {
    std::optional<double> theta;  // empty: not identifiable
    std::size_t candidates_scanned = 0;
    std::size_t clamped_weights = 0;

    bool identifiable() const noexcept { return theta.has_value(); }
};

struct DeltaEstimate {
    QuantileEstimate q1;
    QuantileEstimate q0;
    std::optional<double> delta;
    bool nuisance_degraded = false;
    std::string degraded_component;  // empty when all nuisance fits converged

    bool identifiable() const noexcept { return delta.has_value(); }
};

}  // namespace qrl
