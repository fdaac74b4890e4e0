#pragma once

// Observed survival data O = (X, A, Y, Delta), CSV ingestion, and design
// matrices built from a restricted formula grammar (main effects, squares,
// pairwise products).

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qrl/error.hpp"

namespace qrl {

struct SurvivalRecord {
    std::vector<double> covariates;
    int treatment = 0;       // 0 or 1
    double follow_up = 0.0;  // Y = min(T, C)
    int event = 0;           // 1 = event observed, 0 = censored
};

class Dataset {
public:
    Dataset() = default;

    Dataset(std::vector<SurvivalRecord> records, std::vector<std::string> covariate_names)
        : records_(std::move(records)), names_(std::move(covariate_names)) {
        validate();
    }

    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    std::size_t num_covariates() const noexcept { return names_.size(); }

    const SurvivalRecord& operator[](std::size_t i) const { return records_[i]; }
    const std::vector<SurvivalRecord>& records() const noexcept { return records_; }
    const std::vector<std::string>& covariate_names() const noexcept { return names_; }

    std::optional<std::size_t> covariate_index(std::string_view name) const {
        auto it = std::find(names_.begin(), names_.end(), name);
        if (it == names_.end()) return std::nullopt;
        return static_cast<std::size_t>(it - names_.begin());
    }

    std::size_t arm_size(int arm) const {
        return static_cast<std::size_t>(std::count_if(
            records_.begin(), records_.end(), [arm](const auto& r) { return r.treatment == arm; }));
    }

    // Rows in the given order; indices may repeat (bootstrap resamples).
    Dataset subset(const std::vector<std::size_t>& indices) const {
        Dataset out;
        out.names_ = names_;
        out.records_.reserve(indices.size());
        for (auto i : indices) out.records_.push_back(records_.at(i));
        return out;
    }

private:
    void validate() const {
        if (records_.empty()) throw ValidationError("dataset is empty");
        for (std::size_t i = 0; i < records_.size(); ++i) {
            const auto& r = records_[i];
            const auto row = i + 1;
            if (r.covariates.size() != names_.size())
                throw ValidationError("row " + std::to_string(row) + ": expected " +
                                          std::to_string(names_.size()) + " covariates, got " +
                                          std::to_string(r.covariates.size()),
                                      row);
            if (!(r.follow_up >= 0.0) || !std::isfinite(r.follow_up))
                throw ValidationError("row " + std::to_string(row) + ": follow-up time must be >= 0",
                                      row);
            if (r.treatment != 0 && r.treatment != 1)
                throw ValidationError("row " + std::to_string(row) + ": treatment must be 0 or 1", row);
            if (r.event != 0 && r.event != 1)
                throw ValidationError("row " + std::to_string(row) + ": event must be 0 or 1", row);
            for (double x : r.covariates)
                if (!std::isfinite(x))
                    throw ValidationError("row " + std::to_string(row) + ": non-finite covariate",
                                          row);
        }
    }

    std::vector<SurvivalRecord> records_;
    std::vector<std::string> names_;
};

// ---------------------------------------------------------------------------
// Formula terms
// ---------------------------------------------------------------------------

struct Term {
    enum class Kind { Covariate, Square, Interaction };
    Kind kind = Kind::Covariate;
    std::string first;
    std::string second;  // Interaction only

    static Term covariate(std::string name) { return {Kind::Covariate, std::move(name), {}}; }
    static Term square(std::string name) { return {Kind::Square, std::move(name), {}}; }
    static Term interaction(std::string a, std::string b) {
        return {Kind::Interaction, std::move(a), std::move(b)};
    }

    std::string to_string() const {
        switch (kind) {
            case Kind::Covariate: return first;
            case Kind::Square: return first + "^2";
            case Kind::Interaction: return first + ":" + second;
        }
        return first;
    }

    // x1:x3 and x3:x1 are the same column.
    bool same_as(const Term& o) const {
        if (kind != o.kind) return false;
        if (kind == Kind::Interaction)
            return (first == o.first && second == o.second) ||
                   (first == o.second && second == o.first);
        return first == o.first;
    }
};

struct FormulaSpec {
    std::vector<Term> terms;
    bool intercept = false;

    std::string to_string() const {
        std::string s = intercept ? "1" : "0";
        for (const auto& t : terms) s += "," + t.to_string();
        return s;
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    double v = 0.0;
    auto* first = s.data();
    auto* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || p != last || first == last) return std::nullopt;
    return v;
}

}  // namespace detail

// Parses "x1,x1^2,x1:x3" (whitespace tolerated). An empty string gives no terms.
inline FormulaSpec parse_terms(std::string_view text, bool intercept) {
    FormulaSpec spec;
    spec.intercept = intercept;
    if (detail::trim(text).empty()) return spec;
    for (const auto& tok : detail::split(text, ',')) {
        if (tok.empty()) throw SchemaError("empty term in formula '" + std::string(text) + "'");
        Term t;
        if (auto c = tok.find(':'); c != std::string::npos) {
            t = Term::interaction(detail::trim(tok.substr(0, c)), detail::trim(tok.substr(c + 1)));
            if (t.first.empty() || t.second.empty() || t.second.find(':') != std::string::npos)
                throw SchemaError("malformed interaction term '" + tok + "'");
        } else if (tok.size() > 2 && tok.substr(tok.size() - 2) == "^2") {
            t = Term::square(detail::trim(tok.substr(0, tok.size() - 2)));
        } else if (tok.find('^') != std::string::npos) {
            throw SchemaError("only squares are supported, got '" + tok + "'");
        } else {
            t = Term::covariate(tok);
        }
        spec.terms.push_back(std::move(t));
    }
    return spec;
}

inline void validate_formula(const FormulaSpec& spec, const std::vector<std::string>& names) {
    auto known = [&](const std::string& n) {
        if (std::find(names.begin(), names.end(), n) == names.end())
            throw SchemaError("unknown covariate '" + n + "' in formula");
    };
    for (std::size_t i = 0; i < spec.terms.size(); ++i) {
        const auto& t = spec.terms[i];
        known(t.first);
        if (t.kind == Term::Kind::Interaction) known(t.second);
        for (std::size_t j = 0; j < i; ++j)
            if (spec.terms[j].same_as(t))
                throw SchemaError("duplicate term '" + t.to_string() + "' in formula");
    }
}

// Columns: intercept (if flagged), then terms in spec order.
inline Eigen::MatrixXd design_matrix(const Dataset& data, const FormulaSpec& spec) {
    validate_formula(spec, data.covariate_names());
    struct Col {
        Term::Kind kind;
        std::size_t a, b;
    };
    std::vector<Col> cols;
    cols.reserve(spec.terms.size());
    for (const auto& t : spec.terms) {
        Col c{t.kind, *data.covariate_index(t.first), 0};
        if (t.kind == Term::Kind::Interaction) c.b = *data.covariate_index(t.second);
        cols.push_back(c);
    }
    const auto n = static_cast<Eigen::Index>(data.size());
    const auto off = spec.intercept ? 1 : 0;
    Eigen::MatrixXd m(n, static_cast<Eigen::Index>(cols.size()) + off);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& x = data[static_cast<std::size_t>(i)].covariates;
        if (off) m(i, 0) = 1.0;
        for (std::size_t k = 0; k < cols.size(); ++k) {
            const auto& c = cols[k];
            double v = x[c.a];
            if (c.kind == Term::Kind::Square) v *= v;
            if (c.kind == Term::Kind::Interaction) v *= x[c.b];
            m(i, static_cast<Eigen::Index>(k) + off) = v;
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

struct CsvSchema {
    std::string time_col = "y";
    std::string event_col = "d";
    std::string treat_col = "a";
    // When unset, every column not mapped above is a covariate.
    std::optional<std::vector<std::string>> covariates;
};

inline Dataset read_csv(std::istream& in, const CsvSchema& schema) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("missing header row", 0);
    const auto header = detail::split(line, ',');

    auto column = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw SchemaError("column '" + name + "' not found in header");
        return static_cast<std::size_t>(it - header.begin());
    };
    const auto ti = column(schema.time_col);
    const auto ei = column(schema.event_col);
    const auto ai = column(schema.treat_col);

    std::vector<std::string> names;
    std::vector<std::size_t> cov_cols;
    if (schema.covariates) {
        for (const auto& c : *schema.covariates) {
            cov_cols.push_back(column(c));
            names.push_back(c);
        }
    } else {
        for (std::size_t j = 0; j < header.size(); ++j) {
            if (j == ti || j == ei || j == ai) continue;
            cov_cols.push_back(j);
            names.push_back(header[j]);
        }
    }

    std::vector<SurvivalRecord> records;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++row;
        const auto cells = detail::split(line, ',');
        if (cells.size() != header.size())
            throw ParseError("row " + std::to_string(row) + ": expected " +
                                 std::to_string(header.size()) + " fields, got " +
                                 std::to_string(cells.size()),
                             row);
        auto num = [&](std::size_t j) {
            auto v = detail::parse_double(cells[j]);
            if (!v)
                throw ParseError("row " + std::to_string(row) + ", column '" + header[j] +
                                     "': cannot parse '" + cells[j] + "'",
                                 row);
            return *v;
        };
        auto binary = [&](std::size_t j) {
            double v = num(j);
            if (v != 0.0 && v != 1.0)
                throw ValidationError("row " + std::to_string(row) + ", column '" + header[j] +
                                          "': expected 0 or 1",
                                      row);
            return static_cast<int>(v);
        };
        SurvivalRecord r;
        r.follow_up = num(ti);
        if (r.follow_up < 0.0)
            throw ValidationError("row " + std::to_string(row) + ": negative follow-up time", row);
        r.event = binary(ei);
        r.treatment = binary(ai);
        r.covariates.reserve(cov_cols.size());
        for (auto j : cov_cols) r.covariates.push_back(num(j));
        records.push_back(std::move(r));
    }
    return Dataset(std::move(records), std::move(names));
}

inline Dataset ingest_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open data file '" + path + "'");
    return read_csv(in, schema);
}

inline void write_csv(std::ostream& out, const Dataset& data, const CsvSchema& schema = {}) {
    for (const auto& n : data.covariate_names()) out << n << ',';
    out << schema.treat_col << ',' << schema.time_col << ',' << schema.event_col << '\n';
    out.precision(17);
    for (const auto& r : data.records()) {
        for (double x : r.covariates) out << x << ',';
        out << r.treatment << ',' << r.follow_up << ',' << r.event << '\n';
    }
}

}  // namespace qrl
