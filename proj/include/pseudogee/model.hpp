#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "pseudogee/matkernel.hpp"

namespace pgee {

// -------------------------------------------------------------------------
// Canonical links: variance equals the derivative of the mean function.
// -------------------------------------------------------------------------

enum class LinkKind { identity, log, logit, probit };

std::string_view link_name(LinkKind kind);
std::optional<LinkKind> parse_link(std::string_view name);

struct LinkValues {
    double mu = 0.0;
    double d1 = 0.0;  // variance σ²
    double d2 = 0.0;
    double d3 = 0.0;
};

/// μ(θ) and its first three derivatives. The log link throws an overflow error
/// for |θ| > 700; logit and probit saturate with d1 floored at the smallest
/// positive normal double.
LinkValues link_eval(LinkKind kind, double theta);

/// Standard normal distribution function, via erfc.
double normal_cdf(double x);
double normal_pdf(double x);
/// Inverse of normal_cdf on (0, 1).
double normal_quantile(double p);

// -------------------------------------------------------------------------
// Data
// -------------------------------------------------------------------------

struct Subject {
    Matrix x;  // m x p design
    Vector y;  // m responses

    friend bool operator==(const Subject&, const Subject&) = default;
};

/// n subjects with m observations each. Subject order is the filtration order
/// under which residuals are assumed to be martingale differences; every
/// estimator iterates subjects in stored order.
class LongitudinalDataset {
public:
    LongitudinalDataset(std::size_t m, std::size_t p, std::vector<Subject> subjects);

    std::size_t n() const noexcept { return subjects_.size(); }
    std::size_t m() const noexcept { return m_; }
    std::size_t p() const noexcept { return p_; }

    const Subject& subject(std::size_t i) const { return subjects_[i]; }
    const std::vector<Subject>& subjects() const noexcept { return subjects_; }

    /// First `count` subjects in stored order.
    LongitudinalDataset prefix(std::size_t count) const;

    friend bool operator==(const LongitudinalDataset&, const LongitudinalDataset&) = default;

private:
    std::size_t m_;
    std::size_t p_;
    std::vector<Subject> subjects_;
};

struct SubjectEval {
    Vector theta;
    Vector mu;
    Vector var;  // diagonal of A_i
    Vector eps;  // y_i - mu_i
};

struct ModelEval {
    std::vector<SubjectEval> subjects;
};

ModelEval eval_model(const LongitudinalDataset& data, LinkKind family, std::span<const double> beta);

/// Σ_i X_iᵀ A_i X_i.
SymMatrix independence_information(const LongitudinalDataset& data, const ModelEval& ev);

}  // namespace pgee
