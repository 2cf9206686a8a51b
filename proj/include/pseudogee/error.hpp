#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pgee {

enum class ErrorKind {
    invalid_input,
    not_positive_definite,
    singular_design,
    overflow,
    line_search_failure,
    degenerate_variance,
    shape,
    schema,
    parse,
    precondition,
    config,
    empty_report,
};

// Stable, kebab-case names; these appear verbatim in CLI error objects.
constexpr std::string_view kind_name(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::not_positive_definite: return "not-positive-definite";
    case ErrorKind::singular_design: return "singular-design";
    case ErrorKind::overflow: return "overflow";
    case ErrorKind::line_search_failure: return "line-search-failure";
    case ErrorKind::degenerate_variance: return "degenerate-variance";
    case ErrorKind::shape: return "shape";
    case ErrorKind::schema: return "schema";
    case ErrorKind::parse: return "parse";
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::config: return "config";
    case ErrorKind::empty_report: return "empty-report";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& detail)
        : std::runtime_error(detail), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class NotPositiveDefinite : public Error {
public:
    NotPositiveDefinite(double lambda_min, const std::string& detail)
        : Error(ErrorKind::not_positive_definite, detail), lambda_min_(lambda_min) {}

    double lambda_min() const noexcept { return lambda_min_; }

private:
    double lambda_min_;
};

}  // namespace pgee
