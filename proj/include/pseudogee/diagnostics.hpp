#pragma once

#include <optional>
#include <vector>

#include "pseudogee/matkernel.hpp"
#include "pseudogee/model.hpp"

namespace pgee {

/// Finite-n regularity quantities at a given β and correlation matrix R.
/// Conditions in the asymptotic theory are limits; these are the raw numbers
/// whose trends stand in for them.
struct DiagnosticsReport {
    std::size_t n = 0;
    SymMatrix H_indep;
    SymMatrix H_general;
    double lambda_min_H_indep = 0.0;
    double lambda_min_H_general = 0.0;
    double gamma0_indep = 0.0;
    double pi_n = 0.0;
    double tau_tilde_n = 0.0;
    double gamma0 = 0.0;
    double gamma_tilde = 0.0;
    double gamma_D = 0.0;
    std::optional<double> c_n;
    double k2 = 0.0;
    double k3 = 0.0;
    double sqrt_n_times_gamma0_indep = 0.0;
    double pi2_gamma_tilde = 0.0;
    double sqrt_n_pi_gamma_tilde = 0.0;
    double lambda_min_H_over_tau = 0.0;
    double det_R = 0.0;
    double lambda_min_R = 0.0;
    double max_variance = 0.0;  // d_n = max σ²_ij
    // Oracle mode only (true R̄ supplied).
    std::optional<double> tau_n_oracle;
    std::optional<double> lambda_min_Rbar;
};

DiagnosticsReport design_diagnostics(const LongitudinalDataset& data, LinkKind family,
                                     std::span<const double> beta, const SymMatrix& r,
                                     const std::optional<SymMatrix>& m_hat = std::nullopt,
                                     const std::optional<SymMatrix>& r_bar = std::nullopt);

struct SmoothnessMaxima {
    double k2 = 0.0;
    double k3 = 0.0;
};

/// k2, k3 maximized over the centre and 2p probes at ±r·τ̃^{1/2} along the
/// H^{-1/2} eigendirections: a finite surrogate for the supremum over the
/// H-ellipsoid of radius r. Without R the independence ball (H_indep, τ̃ = m)
/// is used.
SmoothnessMaxima smoothness_maxima(const LongitudinalDataset& data, LinkKind family,
                                   std::span<const double> beta_center, double radius_r,
                                   const std::optional<SymMatrix>& r = std::nullopt);

/// Closed forms for p = 2 with x_ij = (a_ij, b_ij).
struct Example1 {
    double u = 0.0;
    double v = 0.0;
    double w = 0.0;
    double d = 0.0;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    double sin2_theta = 0.0;
    double gamma0_bound = 0.0;
};

Example1 example1_closed_form(const LongitudinalDataset& data, LinkKind family, std::span<const double> beta);

/// Closed forms for a single categorical covariate coded by basis vectors.
struct Example2 {
    Vector nu;
    double nu_min = 0.0;
};

Example2 example2_closed_form(const LongitudinalDataset& data, LinkKind family, std::span<const double> beta);

struct TrendOptions {
    double det_floor = 1e-6;
};

struct TrendReport {
    std::vector<DiagnosticsReport> reports;
    std::vector<double> det_R;  // per prefix
    // Trend verdicts over consecutive grid points; all vacuously true for a
    // single-point grid.
    bool lambda_min_H_indep_increasing = true;
    bool lambda_min_H_over_tau_increasing = true;
    bool pi2_gamma_tilde_decreasing = true;
    bool sqrt_n_pi_gamma_tilde_decreasing = true;
    bool sqrt_n_gamma0_indep_decreasing = true;
    bool det_R_above_floor = true;

    /// True when any of the growth or decay surrogates fails.
    bool flagged() const;
};

/// Reports on subject prefixes of the sizes in n_grid (stored order). When R
/// is supplied it is used at every prefix; otherwise R̃ is re-estimated on
/// each prefix at β.
TrendReport condition_trend_report(const LongitudinalDataset& data, LinkKind family,
                                   std::span<const double> beta, const std::optional<SymMatrix>& r,
                                   std::span<const std::size_t> n_grid, const TrendOptions& opts = {});

}  // namespace pgee
