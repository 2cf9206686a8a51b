#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "pseudogee/matkernel.hpp"
#include "pseudogee/model.hpp"

namespace pgee {

struct SolverOptions {
    int max_iter = 50;
    double grad_tol = 1e-8;
    double step_tol = 1e-10;
    int step_halving_max = 20;
};

/// R̃ = (1/n) Σ A_i^{-1/2} ε_i ε_iᵀ A_i^{-1/2}, evaluated at `computed_at_beta`.
/// Not rescaled to unit diagonal.
struct CorrelationEstimate {
    SymMatrix r_tilde;
    Vector computed_at_beta;
    std::size_t n_used = 0;
};

enum class FitMethod { independence, pseudo_likelihood };

struct IterationRecord {
    Vector beta;
    double gnorm = 0.0;
};

struct FitResult {
    Vector beta_hat;
    bool converged = false;
    int iterations = 0;
    double final_gnorm = 0.0;
    std::vector<IterationRecord> trace;  // starting point first
    FitMethod method = FitMethod::independence;
    std::optional<SymMatrix> cov_beta;
    std::optional<CorrelationEstimate> correlation_used;
    /// Set by two_step_fit when R̃ was not invertible and the independence
    /// fit is returned in place of the pseudo-likelihood root.
    bool fallback = false;
};

/// grad_tol scale: 1 + ‖Σ_i X_iᵀ y_i‖.
double convergence_scale(const LongitudinalDataset& data);

/// g(β) = Σ X_iᵀ ε_i(β).
Vector independence_score(const LongitudinalDataset& data, LinkKind family, std::span<const double> beta);

/// g̃(β) = Σ X_iᵀ A_i^{1/2} R⁻¹ A_i^{-1/2} ε_i(β), with R⁻¹ supplied.
Vector pseudo_score(const LongitudinalDataset& data, LinkKind family, const SymMatrix& r_inv,
                    std::span<const double> beta);

/// H̃(β) = Σ X_iᵀ A_i^{1/2} R⁻¹ A_i^{1/2} X_i.
SymMatrix pseudo_information(const LongitudinalDataset& data, const ModelEval& ev, const SymMatrix& r_inv);

FitResult gee_independence_fit(const LongitudinalDataset& data, LinkKind family,
                               std::span<const double> beta_init, const SolverOptions& opts = {});

CorrelationEstimate estimate_correlation(const LongitudinalDataset& data, LinkKind family,
                                         std::span<const double> beta);

FitResult pseudo_likelihood_fit(const LongitudinalDataset& data, LinkKind family,
                                const CorrelationEstimate& corr, std::span<const double> beta_init,
                                const SolverOptions& opts = {});

/// Independence fit from β = 0, R̃ at that root, then the pseudo-likelihood
/// root from there. Attaches R̃ and the sandwich covariance.
FitResult two_step_fit(const LongitudinalDataset& data, LinkKind family, const SolverOptions& opts = {});

struct SandwichResult {
    SymMatrix m_hat;
    SymMatrix h_tilde;
    SymMatrix cov_beta;
};

SandwichResult sandwich_covariance(const LongitudinalDataset& data, LinkKind family,
                                   std::span<const double> beta_hat, const CorrelationEstimate& corr);

/// Identity working correlation, as used for the independence sandwich.
CorrelationEstimate identity_correlation(std::size_t m, std::span<const double> beta);

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
};

std::vector<Interval> wald_intervals(const FitResult& fit, double level);

}  // namespace pgee
