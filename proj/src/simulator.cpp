#include "pseudogee/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "pseudogee/error.hpp"

namespace pgee {

// -------------------------------------------------------------------------
// Randomness
// -------------------------------------------------------------------------

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base ^ (0x9E3779B97F4A7C15ULL * (index + 1));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double RandomStream::uniform() {
    // 53 random bits, centred in their bucket so 0 and 1 are never returned.
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomStream::normal() { return normal_quantile(uniform()); }

std::uint64_t RandomStream::below(std::uint64_t bound) {
    if (bound == 0) throw Error(ErrorKind::invalid_input, "below: bound must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % bound;
}

// -------------------------------------------------------------------------
// Configuration
// -------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kDesignStream = 0xD1B54A32D192ED03ULL;

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorKind::config, msg); }

double max_off_diagonal(const SymMatrix& r) {
    double best = 0.0;
    for (std::size_t j = 0; j < r.dim(); ++j)
        for (std::size_t k = 0; k < r.dim(); ++k)
            if (j != k) best = std::max(best, r(j, k));
    return best;
}

}  // namespace

SymMatrix correlation_matrix(const CorrelationSpec& spec, std::size_t m) {
    return std::visit(
        Overloaded{
            [m](const Exchangeable& e) {
                const double lo = m > 1 ? -1.0 / static_cast<double>(m - 1) : -1.0;
                if (!(e.rho > lo && e.rho < 1.0)) {
                    std::ostringstream msg;
                    msg << "exchangeable rho " << e.rho << " outside (" << lo << ", 1)";
                    config_error(msg.str());
                }
                SymMatrix r(m, e.rho);
                for (std::size_t j = 0; j < m; ++j) r.set(j, j, 1.0);
                return r;
            },
            [m](const Ar1& a) {
                if (!(std::abs(a.rho) < 1.0)) config_error("ar1 requires |rho| < 1");
                SymMatrix r(m);
                for (std::size_t j = 0; j < m; ++j)
                    for (std::size_t k = j; k < m; ++k)
                        r.set(j, k, std::pow(a.rho, static_cast<double>(k - j)));
                return r;
            },
            [m](const CustomCorrelation& c) {
                if (c.r_bar.dim() != m) config_error("custom correlation must be m x m");
                if (!c.r_bar.finite()) config_error("custom correlation has non-finite entries");
                for (std::size_t j = 0; j < m; ++j)
                    if (std::abs(c.r_bar(j, j) - 1.0) > 1e-12)
                        config_error("custom correlation must have unit diagonal");
                if (!(sym_eigen(c.r_bar).values.front() > pd_tolerance(c.r_bar)))
                    config_error("custom correlation is not positive definite");
                return c.r_bar;
            },
        },
        spec);
}

std::vector<std::string> validate_config(const SimConfig& cfg) {
    if (cfg.n == 0 || cfg.m == 0 || cfg.p == 0) config_error("n, m, p must be at least 1");
    if (cfg.beta0.size() != cfg.p) config_error("beta0 length differs from p");
    for (double b : cfg.beta0)
        if (!std::isfinite(b)) config_error("beta0 has a non-finite entry");
    if (cfg.replications == 0) config_error("replications must be at least 1");
    if (!(cfg.ci_level > 0.0 && cfg.ci_level < 1.0)) config_error("ci_level must lie in (0, 1)");
    if (!(cfg.noise_scale >= 0.0) || !std::isfinite(cfg.noise_scale))
        config_error("noise_scale must be finite and nonnegative");
    if (cfg.family == LinkKind::probit) config_error("no response generator exists for the probit link");
    if (cfg.family != LinkKind::identity && cfg.subject_dependence != SubjectDependence::independent)
        config_error("sign_modulated dependence is only available for the identity link");
    if (cfg.family != LinkKind::identity && cfg.noise_scale != 1.0)
        config_error("noise_scale applies to the identity link only");

    std::visit(Overloaded{
                   [](const IidUniformDesign& d) {
                       if (!(d.lo < d.hi)) config_error("iid_uniform requires lo < hi");
                   },
                   [](const GridDesign& d) {
                       if (!(d.lo < d.hi) || d.levels < 2)
                           config_error("grid requires lo < hi and at least 2 levels");
                   },
                   [](const CategoricalDesign&) {},
               },
               cfg.design);
    if (const auto* d = std::get_if<IidUniformDesign>(&cfg.design); d && d->intercept && cfg.p < 1)
        config_error("intercept requires p >= 1");

    const SymMatrix r_bar = correlation_matrix(cfg.correlation, cfg.m);

    std::vector<std::string> warnings;
    if (cfg.family == LinkKind::logit && max_off_diagonal(r_bar) > 0.95) {
        const std::vector<Matrix> design = make_design(cfg, mix_seed(cfg.base_seed, kDesignStream));
        bool extreme = false;
        for (const Matrix& x : design)
            for (std::size_t j = 0; j < cfg.m; ++j) {
                const double mu = link_eval(LinkKind::logit, dot(x.row(j), cfg.beta0)).mu;
                if (mu < 0.05 || mu > 0.95) extreme = true;
            }
        if (extreme) {
            warnings.push_back(
                "latent correlation above 0.95 with extreme Bernoulli means: attainable response "
                "correlation is bounded well below the latent value");
        }
    }
    return warnings;
}

// -------------------------------------------------------------------------
// Designs
// -------------------------------------------------------------------------

std::vector<std::size_t> cyclic_levels(std::size_t cells, std::size_t p) {
    std::vector<std::size_t> out(cells);
    for (std::size_t c = 0; c < cells; ++c) out[c] = c % p;
    return out;
}

std::vector<Matrix> make_design(const SimConfig& cfg, std::uint64_t seed) {
    RandomStream rng(seed);
    const std::size_t n = cfg.n;
    const std::size_t m = cfg.m;
    const std::size_t p = cfg.p;
    std::vector<Matrix> out(n, Matrix(m, p));

    std::visit(Overloaded{
                   [&](const IidUniformDesign& d) {
                       for (Matrix& x : out)
                           for (std::size_t j = 0; j < m; ++j)
                               for (std::size_t a = 0; a < p; ++a)
                                   x(j, a) = (d.intercept && a == 0) ? 1.0 : rng.uniform(d.lo, d.hi);
                   },
                   [&](const GridDesign& d) {
                       // Cell c enumerates the lattice levels^p in mixed radix.
                       const double step = (d.hi - d.lo) / static_cast<double>(d.levels - 1);
                       for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < m; ++j) {
                               std::size_t c = i * m + j;
                               for (std::size_t a = 0; a < p; ++a) {
                                   out[i](j, a) = d.lo + step * static_cast<double>(c % d.levels);
                                   c /= d.levels;
                               }
                           }
                   },
                   [&](const CategoricalDesign&) {
                       std::vector<std::size_t> levels = cyclic_levels(n * m, p);
                       for (std::size_t c = levels.size(); c > 1; --c) {
                           std::swap(levels[c - 1], levels[rng.below(c)]);
                       }
                       for (std::size_t c = 0; c < levels.size(); ++c) out[c / m](c % m, levels[c]) = 1.0;
                   },
               },
               cfg.design);
    return out;
}

// -------------------------------------------------------------------------
// Responses
// -------------------------------------------------------------------------

namespace {

void check_design(const std::vector<Matrix>& design, std::span<const double> beta0) {
    if (design.empty()) throw Error(ErrorKind::shape, "design has no subjects");
    for (const Matrix& x : design)
        if (x.rows() != design.front().rows() || x.cols() != beta0.size())
            throw Error(ErrorKind::shape, "design matrices disagree with beta0 or each other");
}

Vector correlated_normal(RandomStream& rng, const Matrix& chol) {
    const std::size_t m = chol.rows();
    Vector z(m);
    for (double& v : z) v = rng.normal();
    return chol * z;
}

}  // namespace

LongitudinalDataset gen_gaussian(const std::vector<Matrix>& design, std::span<const double> beta0,
                                 const SymMatrix& r_bar, SubjectDependence dependence,
                                 std::uint64_t seed, double noise_scale) {
    check_design(design, beta0);
    const std::size_t m = design.front().rows();
    if (r_bar.dim() != m) throw Error(ErrorKind::shape, "correlation is not m x m");
    const Matrix chol = cholesky_lower(r_bar);
    RandomStream rng(seed);

    std::vector<Subject> subjects;
    subjects.reserve(design.size());
    double running = 0.0;  // Σ of first residual components of earlier subjects
    for (const Matrix& x : design) {
        Vector eps = correlated_normal(rng, chol);
        const double sign =
            (dependence == SubjectDependence::sign_modulated && running < 0.0) ? -1.0 : 1.0;
        Vector y(m);
        for (std::size_t j = 0; j < m; ++j) {
            eps[j] *= sign * noise_scale;
            y[j] = dot(x.row(j), beta0) + eps[j];
        }
        running += eps[0];
        subjects.push_back({x, std::move(y)});
    }
    return LongitudinalDataset(m, beta0.size(), std::move(subjects));
}

std::int64_t poisson_quantile(double mean, double u) {
    if (!(mean > 0.0) || !std::isfinite(mean)) throw Error(ErrorKind::invalid_input, "poisson mean must be positive");
    if (!(u > 0.0 && u < 1.0)) throw Error(ErrorKind::invalid_input, "poisson quantile needs u in (0, 1)");
    // Sequential CDF search from the log-space mass at zero.
    double pmf = std::exp(-mean);
    double cdf = pmf;
    std::int64_t k = 0;
    const double cap = mean + 40.0 * std::sqrt(mean) + 100.0;
    while (cdf < u && static_cast<double>(k) < cap) {
        ++k;
        pmf *= mean / static_cast<double>(k);
        cdf += pmf;
    }
    return k;
}

LongitudinalDataset gen_discrete(const std::vector<Matrix>& design, std::span<const double> beta0,
                                 LinkKind family, const SymMatrix& r_bar, std::uint64_t seed) {
    if (family != LinkKind::log && family != LinkKind::logit) {
        throw Error(ErrorKind::config, "gen_discrete supports the log and logit links only");
    }
    check_design(design, beta0);
    const std::size_t m = design.front().rows();
    if (r_bar.dim() != m) throw Error(ErrorKind::shape, "correlation is not m x m");
    const Matrix chol = cholesky_lower(r_bar);
    RandomStream rng(seed);

    std::vector<Subject> subjects;
    subjects.reserve(design.size());
    for (const Matrix& x : design) {
        const Vector latent = correlated_normal(rng, chol);
        Vector y(m);
        for (std::size_t j = 0; j < m; ++j) {
            const double theta = dot(x.row(j), beta0);
            const double u = normal_cdf(latent[j]);
            if (family == LinkKind::log) {
                y[j] = static_cast<double>(poisson_quantile(link_eval(LinkKind::log, theta).mu, u));
            } else {
                // P(Y = 0) = 1 - μ(θ) = μ(-θ).
                const double q0 = link_eval(LinkKind::logit, -theta).mu;
                y[j] = u > q0 ? 1.0 : 0.0;
            }
        }
        subjects.push_back({x, std::move(y)});
    }
    return LongitudinalDataset(m, beta0.size(), std::move(subjects));
}

LongitudinalDataset generate(const SimConfig& cfg, const std::vector<Matrix>& design, std::uint64_t seed) {
    const SymMatrix r_bar = correlation_matrix(cfg.correlation, cfg.m);
    if (cfg.family == LinkKind::identity) {
        return gen_gaussian(design, cfg.beta0, r_bar, cfg.subject_dependence, seed, cfg.noise_scale);
    }
    return gen_discrete(design, cfg.beta0, cfg.family, r_bar, seed);
}

// -------------------------------------------------------------------------
// Monte Carlo
// -------------------------------------------------------------------------

double ks_distance_normal(std::vector<double> sample) {
    if (sample.empty()) throw Error(ErrorKind::invalid_input, "ks distance of an empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = normal_cdf(sample[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

ReplicateRecord run_replicate(const SimConfig& cfg, const std::vector<Matrix>& design,
                              const SymMatrix& r_bar, std::size_t index) {
    ReplicateRecord rec;
    rec.index = index;
    rec.seed = mix_seed(cfg.base_seed, index);
    const std::size_t p = cfg.p;
    try {
        const LongitudinalDataset data = generate(cfg, design, rec.seed);

        // R̃ at the true parameter against the generator's R̄.
        const CorrelationEstimate oracle = estimate_correlation(data, cfg.family, cfg.beta0);
        double sum = 0.0;
        for (std::size_t j = 0; j < cfg.m; ++j)
            for (std::size_t k = 0; k < cfg.m; ++k) {
                const double e = std::abs(oracle.r_tilde(j, k) - r_bar(j, k));
                sum += e;
                rec.rtilde_max_abs_error = std::max(rec.rtilde_max_abs_error, e);
            }
        rec.rtilde_mean_abs_error = sum / static_cast<double>(cfg.m * cfg.m);

        const FitResult indep = gee_independence_fit(data, cfg.family, Vector(p, 0.0), cfg.solver);
        rec.beta_indep = indep.beta_hat;

        const FitResult fit = two_step_fit(data, cfg.family, cfg.solver);
        rec.converged = fit.converged && indep.converged;
        rec.fallback = fit.fallback;
        rec.beta_hat = fit.beta_hat;
        if (!rec.converged || !fit.cov_beta) return rec;

        const SymMatrix& cov = *fit.cov_beta;
        for (std::size_t a = 0; a < p; ++a) rec.stderr_.push_back(std::sqrt(std::max(0.0, cov(a, a))));
        const std::vector<Interval> ci = wald_intervals(fit, cfg.ci_level);
        for (std::size_t a = 0; a < p; ++a) {
            // Degenerate (zero-width) intervals are judged with a rounding slack.
            const double slack = 1e-12 * (1.0 + std::abs(cfg.beta0[a]));
            rec.covered.push_back(ci[a].lower - slack <= cfg.beta0[a] && cfg.beta0[a] <= ci[a].upper + slack);
        }
        try {
            const SqrtPair roots = sym_sqrt_pair(cov);
            Vector diff(p);
            for (std::size_t a = 0; a < p; ++a) diff[a] = fit.beta_hat[a] - cfg.beta0[a];
            rec.z = roots.inv_root * diff;
        } catch (const NotPositiveDefinite&) {
        }
        if (!fit.fallback && fit.correlation_used) {
            const SqrtPair r_roots = sym_sqrt_pair(fit.correlation_used->r_tilde);
            rec.tau_n_oracle = sym_eigen(congruence(r_roots.inv_root.matrix(), r_bar)).values.back();
        }
    } catch (const Error& e) {
        rec.converged = false;
        rec.error = std::string(kind_name(e.kind())) + ": " + e.what();
    }
    return rec;
}

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size() / 2;
    return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

Vector sample_variance(const std::vector<Vector>& rows, std::size_t p) {
    Vector mean(p, 0.0), var(p, 0.0);
    if (rows.size() < 2) return var;
    for (const Vector& r : rows)
        for (std::size_t a = 0; a < p; ++a) mean[a] += r[a];
    for (double& v : mean) v /= static_cast<double>(rows.size());
    for (const Vector& r : rows)
        for (std::size_t a = 0; a < p; ++a) var[a] += (r[a] - mean[a]) * (r[a] - mean[a]);
    for (double& v : var) v /= static_cast<double>(rows.size() - 1);
    return var;
}

}  // namespace

MCReport monte_carlo_run(const SimConfig& cfg, std::size_t workers) {
    MCReport rep;
    rep.warnings = validate_config(cfg);
    const SymMatrix r_bar = correlation_matrix(cfg.correlation, cfg.m);
    const std::vector<Matrix> design = make_design(cfg, mix_seed(cfg.base_seed, kDesignStream));

    rep.replications = cfg.replications;
    rep.records.resize(cfg.replications);
    workers = std::clamp<std::size_t>(workers, 1, cfg.replications);
    if (workers == 1) {
        for (std::size_t r = 0; r < cfg.replications; ++r) rep.records[r] = run_replicate(cfg, design, r_bar, r);
    } else {
        // Strided assignment; each slot is written by exactly one worker.
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t r = w; r < cfg.replications; r += workers)
                    rep.records[r] = run_replicate(cfg, design, r_bar, r);
            });
        }
    }

    const std::size_t p = cfg.p;
    std::vector<Vector> two_step, indep;
    std::vector<double> error_norms, z_pool, tau;
    rep.coverage.assign(p, 0.0);
    double rt_mean = 0.0, rt_max_mean = 0.0;
    std::size_t rt_count = 0;
    for (const ReplicateRecord& rec : rep.records) {
        if (rec.error.empty()) {
            rt_mean += rec.rtilde_mean_abs_error;
            rt_max_mean += rec.rtilde_max_abs_error;
            rep.rtilde_max_abs_error = std::max(rep.rtilde_max_abs_error, rec.rtilde_max_abs_error);
            ++rt_count;
        }
        if (!rec.converged || rec.covered.empty()) {
            ++rep.failures;
            continue;
        }
        if (rec.fallback) ++rep.fallbacks;
        two_step.push_back(rec.beta_hat);
        indep.push_back(rec.beta_indep);
        Vector diff(p);
        for (std::size_t a = 0; a < p; ++a) {
            diff[a] = rec.beta_hat[a] - cfg.beta0[a];
            rep.coverage[a] += rec.covered[a];
        }
        error_norms.push_back(norm2(diff));
        if (rec.z) z_pool.insert(z_pool.end(), rec.z->begin(), rec.z->end());
        if (rec.tau_n_oracle) tau.push_back(*rec.tau_n_oracle);
    }
    rep.successes = two_step.size();
    rep.failure_fraction = static_cast<double>(rep.failures) / static_cast<double>(cfg.replications);
    if (rep.successes == 0) throw Error(ErrorKind::empty_report, "no replicate produced a converged fit");

    const double s = static_cast<double>(rep.successes);
    rep.bias.assign(p, 0.0);
    rep.rmse.assign(p, 0.0);
    for (const Vector& b : two_step)
        for (std::size_t a = 0; a < p; ++a) {
            const double d = b[a] - cfg.beta0[a];
            rep.bias[a] += d;
            rep.rmse[a] += d * d;
        }
    for (std::size_t a = 0; a < p; ++a) {
        rep.bias[a] /= s;
        rep.rmse[a] = std::sqrt(rep.rmse[a] / s);
        rep.coverage[a] /= s;
    }
    rep.variance = sample_variance(two_step, p);
    rep.variance_indep = sample_variance(indep, p);
    rep.efficiency_ratio.assign(p, 0.0);
    for (std::size_t a = 0; a < p; ++a)
        rep.efficiency_ratio[a] = rep.variance_indep[a] > 0.0 ? rep.variance[a] / rep.variance_indep[a] : 0.0;
    rep.median_error_norm = median(error_norms);

    rep.z_count = z_pool.size();
    if (!z_pool.empty()) {
        const double within = static_cast<double>(
            std::count_if(z_pool.begin(), z_pool.end(), [](double z) { return std::abs(z) <= 1.959964; }));
        rep.z_within_1_96 = within / static_cast<double>(z_pool.size());
        rep.ks_distance = ks_distance_normal(z_pool);
    }
    if (rt_count > 0) {
        rep.rtilde_mean_abs_error = rt_mean / static_cast<double>(rt_count);
        rep.rtilde_mean_max_abs_error = rt_max_mean / static_cast<double>(rt_count);
    }
    rep.lambda_min_Rbar = sym_eigen(r_bar).values.front();
    if (!tau.empty()) {
        double t = 0.0;
        for (double v : tau) t += v;
        rep.tau_n_oracle_mean = t / static_cast<double>(tau.size());
    }
    return rep;
}

}  // namespace pgee
