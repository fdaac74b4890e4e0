#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qrl {

// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Column mapping or formula term references something that does not exist.
class SchemaError : public Error {
public:
    using Error::Error;
};

// A cell or configuration value could not be parsed. `row` is 1-based over
// data rows (the header is row 0); npos when not row-specific.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t row = npos) : Error(what), row_(row) {}
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

// Parsed fine but violates a data invariant (negative time, non-binary flag).
class ValidationError : public Error {
public:
    ValidationError(const std::string& what, std::size_t row = ParseError::npos)
        : Error(what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

// Model fitting or estimation could not proceed (no events, empty arm, ...).
class EstimationError : public Error {
public:
    using Error::Error;
};

}  // namespace qrl
