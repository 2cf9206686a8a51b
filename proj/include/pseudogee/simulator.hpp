#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "pseudogee/estimator.hpp"
#include "pseudogee/matkernel.hpp"
#include "pseudogee/model.hpp"

namespace pgee {

// -------------------------------------------------------------------------
// Randomness
// -------------------------------------------------------------------------

/// splitmix64 finalizer applied to (base ^ golden * (index + 1)).
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index);

/// Seeded stream; every draw derives from one 64-bit engine so that the same
/// seed reproduces the same data on any platform.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on the open interval (0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal by inversion of the normal CDF.
    double normal();
    /// Unbiased integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);

private:
    std::mt19937_64 engine_;
};

// -------------------------------------------------------------------------
// Configuration
// -------------------------------------------------------------------------

struct IidUniformDesign {
    double lo = -1.0;
    double hi = 1.0;
    bool intercept = false;  // first column fixed at 1
};

struct GridDesign {
    double lo = -1.0;
    double hi = 1.0;
    std::size_t levels = 5;
};

/// One covariate with p levels coded by e_1..e_p.
struct CategoricalDesign {};

using DesignSpec = std::variant<IidUniformDesign, GridDesign, CategoricalDesign>;

struct Exchangeable {
    double rho = 0.0;
};
struct Ar1 {
    double rho = 0.0;
};
struct CustomCorrelation {
    SymMatrix r_bar;
};

using CorrelationSpec = std::variant<Exchangeable, Ar1, CustomCorrelation>;

enum class SubjectDependence { independent, sign_modulated };

struct SimConfig {
    std::size_t n = 100;
    std::size_t m = 3;
    std::size_t p = 2;
    LinkKind family = LinkKind::identity;
    Vector beta0;
    DesignSpec design = IidUniformDesign{};
    CorrelationSpec correlation = Exchangeable{};
    SubjectDependence subject_dependence = SubjectDependence::independent;
    std::size_t replications = 100;
    std::uint64_t base_seed = 1;
    double ci_level = 0.95;
    /// Multiplies Gaussian residuals; 0 gives noiseless data.
    double noise_scale = 1.0;
    SolverOptions solver;
};

/// Throws config errors; returns non-fatal warnings.
std::vector<std::string> validate_config(const SimConfig& cfg);

SymMatrix correlation_matrix(const CorrelationSpec& spec, std::size_t m);

// -------------------------------------------------------------------------
// Generators
// -------------------------------------------------------------------------

/// Level index (0-based) of each of `cells` cells, assigned cyclically.
std::vector<std::size_t> cyclic_levels(std::size_t cells, std::size_t p);

/// Designs only (responses zero).
std::vector<Matrix> make_design(const SimConfig& cfg, std::uint64_t seed);

LongitudinalDataset gen_gaussian(const std::vector<Matrix>& design, std::span<const double> beta0,
                                 const SymMatrix& r_bar, SubjectDependence dependence,
                                 std::uint64_t seed, double noise_scale = 1.0);

/// Latent Gaussian copula with N(0, R̄) mapped through Φ and the inverse
/// Poisson (log link) or Bernoulli (logit link) CDF.
LongitudinalDataset gen_discrete(const std::vector<Matrix>& design, std::span<const double> beta0,
                                 LinkKind family, const SymMatrix& r_bar, std::uint64_t seed);

/// Smallest k with P(Poisson(mean) <= k) >= u.
std::int64_t poisson_quantile(double mean, double u);

/// Dispatches on cfg.family.
LongitudinalDataset generate(const SimConfig& cfg, const std::vector<Matrix>& design, std::uint64_t seed);

// -------------------------------------------------------------------------
// Monte Carlo
// -------------------------------------------------------------------------

struct ReplicateRecord {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    bool converged = false;
    bool fallback = false;
    std::string error;  // empty unless the fit threw
    Vector beta_hat;
    Vector beta_indep;
    Vector stderr_;
    std::vector<int> covered;
    std::optional<Vector> z;  // Ĉov^{-1/2}(β̂ - β₀), when Ĉov is PD
    double rtilde_mean_abs_error = 0.0;
    double rtilde_max_abs_error = 0.0;
    std::optional<double> tau_n_oracle;
};

struct MCReport {
    std::size_t replications = 0;
    std::size_t failures = 0;
    std::size_t fallbacks = 0;
    std::size_t successes = 0;
    Vector bias;
    Vector variance;
    Vector rmse;
    Vector coverage;
    Vector variance_indep;
    Vector efficiency_ratio;  // two-step variance / independence variance
    double median_error_norm = 0.0;
    std::size_t z_count = 0;
    std::optional<double> z_within_1_96;
    std::optional<double> ks_distance;
    double rtilde_mean_abs_error = 0.0;
    double rtilde_mean_max_abs_error = 0.0;
    double rtilde_max_abs_error = 0.0;
    double lambda_min_Rbar = 0.0;
    std::optional<double> tau_n_oracle_mean;
    double failure_fraction = 0.0;
    std::vector<std::string> warnings;
    std::vector<ReplicateRecord> records;
};

ReplicateRecord run_replicate(const SimConfig& cfg, const std::vector<Matrix>& design,
                              const SymMatrix& r_bar, std::size_t index);

/// Replicates run on `workers` threads; the report is identical for any
/// worker count.
MCReport monte_carlo_run(const SimConfig& cfg, std::size_t workers = 1);

/// Kolmogorov–Smirnov distance of a sample to the standard normal.
double ks_distance_normal(std::vector<double> sample);

}  // namespace pgee
