#include "pseudogee/estimator.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "pseudogee/error.hpp"

namespace pgee {

namespace {

/// Score and step matrix at one β. The step matrix is only built when the
/// solver needs it.
struct EstimatingSystem {
    std::function<Vector(std::span<const double>)> score;
    std::function<SymMatrix(std::span<const double>)> information;
};

bool is_overflow(const Error& e) { return e.kind() == ErrorKind::overflow; }

Vector add_scaled(std::span<const double> a, double c, std::span<const double> b) {
    Vector out(a.begin(), a.end());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += c * b[k];
    return out;
}

SymMatrix require_full_rank(const SymMatrix& h) {
    const double lmin = sym_eigen(h).values.front();
    if (!(lmin > pd_tolerance(h))) {
        std::ostringstream msg;
        msg << "design is rank deficient (lambda_min(H) = " << lmin << ")";
        throw Error(ErrorKind::singular_design, msg.str());
    }
    return h;
}

/// Damped Newton / Fisher scoring: β ← β + t H(β)⁻¹ g(β), t halved while ‖g‖
/// fails to decrease or the link overflows.
FitResult solve(const EstimatingSystem& sys, const LongitudinalDataset& data,
                std::span<const double> beta_init, const SolverOptions& opts, FitMethod method) {
    if (opts.max_iter <= 0 || !(opts.grad_tol > 0.0) || !(opts.step_tol > 0.0) ||
        opts.step_halving_max <= 0) {
        throw Error(ErrorKind::precondition, "solver options must be strictly positive");
    }
    if (beta_init.size() != data.p()) throw Error(ErrorKind::shape, "beta_init length differs from p");

    const double tol = opts.grad_tol * convergence_scale(data);

    FitResult res;
    res.method = method;
    Vector beta(beta_init.begin(), beta_init.end());
    Vector g = sys.score(beta);
    double gnorm = norm2(g);
    if (!std::isfinite(gnorm)) throw Error(ErrorKind::overflow, "score is not finite at the starting value");
    res.trace.push_back({beta, gnorm});

    for (int iter = 0; iter < opts.max_iter; ++iter) {
        if (gnorm <= tol) {
            res.converged = true;
            break;
        }
        SymMatrix h = sys.information(beta);
        Vector step;
        try {
            step = solve_spd(h, g);
        } catch (const NotPositiveDefinite& e) {
            throw Error(ErrorKind::singular_design,
                        std::string("step matrix is singular: ") + e.what());
        }

        double t = 1.0;
        bool accepted = false;
        Vector candidate;
        Vector g_candidate;
        for (int halving = 0; halving <= opts.step_halving_max; ++halving, t *= 0.5) {
            candidate = add_scaled(beta, t, step);
            try {
                g_candidate = sys.score(candidate);
            } catch (const Error& e) {
                if (is_overflow(e)) continue;
                throw;
            }
            const double cand_norm = norm2(g_candidate);
            if (std::isfinite(cand_norm) && cand_norm < gnorm) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            std::ostringstream msg;
            msg << "step halving exhausted at iteration " << iter + 1 << " (|g| = " << gnorm << ")";
            throw Error(ErrorKind::line_search_failure, msg.str());
        }

        const double moved = t * norm2(step);
        beta = std::move(candidate);
        g = std::move(g_candidate);
        gnorm = norm2(g);
        res.iterations = iter + 1;
        res.trace.push_back({beta, gnorm});

        if (gnorm <= tol) {
            res.converged = true;
            break;
        }
        if (moved <= opts.step_tol * (1.0 + norm2(beta))) break;
    }

    res.beta_hat = std::move(beta);
    res.final_gnorm = gnorm;
    return res;
}

/// Whitened residual A^{-1/2} ε for one subject.
Vector standardized_residual(const SubjectEval& ev) {
    Vector r(ev.eps.size());
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = ev.eps[j] / std::sqrt(ev.var[j]);
    return r;
}

/// u_i = X_iᵀ A_i^{1/2} R⁻¹ A_i^{-1/2} ε_i.
Vector subject_pseudo_score(const Matrix& x, const SubjectEval& ev, const SymMatrix& r_inv) {
    const Vector w = r_inv * standardized_residual(ev);
    Vector u(x.cols(), 0.0);
    for (std::size_t j = 0; j < x.rows(); ++j) {
        const double c = std::sqrt(ev.var[j]) * w[j];
        for (std::size_t a = 0; a < x.cols(); ++a) u[a] += x(j, a) * c;
    }
    return u;
}

}  // namespace

double convergence_scale(const LongitudinalDataset& data) {
    Vector s(data.p(), 0.0);
    for (const Subject& sub : data.subjects())
        for (std::size_t j = 0; j < data.m(); ++j)
            for (std::size_t a = 0; a < data.p(); ++a) s[a] += sub.x(j, a) * sub.y[j];
    return 1.0 + norm2(s);
}

Vector independence_score(const LongitudinalDataset& data, LinkKind family, std::span<const double> beta) {
    const ModelEval ev = eval_model(data, family, beta);
    Vector g(data.p(), 0.0);
    for (std::size_t i = 0; i < data.n(); ++i) {
        const Matrix& x = data.subject(i).x;
        const Vector& eps = ev.subjects[i].eps;
        for (std::size_t j = 0; j < data.m(); ++j)
            for (std::size_t a = 0; a < data.p(); ++a) g[a] += x(j, a) * eps[j];
    }
    return g;
}

Vector pseudo_score(const LongitudinalDataset& data, LinkKind family, const SymMatrix& r_inv,
                    std::span<const double> beta) {
    const ModelEval ev = eval_model(data, family, beta);
    Vector g(data.p(), 0.0);
    for (std::size_t i = 0; i < data.n(); ++i) {
        const Vector u = subject_pseudo_score(data.subject(i).x, ev.subjects[i], r_inv);
        for (std::size_t a = 0; a < data.p(); ++a) g[a] += u[a];
    }
    return g;
}

SymMatrix pseudo_information(const LongitudinalDataset& data, const ModelEval& ev, const SymMatrix& r_inv) {
    const std::size_t p = data.p();
    const std::size_t m = data.m();
    Matrix h(p, p);
    Matrix d(m, p);
    for (std::size_t i = 0; i < data.n(); ++i) {
        const Matrix& x = data.subject(i).x;
        for (std::size_t j = 0; j < m; ++j) {
            const double s = std::sqrt(ev.subjects[i].var[j]);
            for (std::size_t a = 0; a < p; ++a) d(j, a) = s * x(j, a);
        }
        const Matrix rd = r_inv.matrix() * d;
        for (std::size_t a = 0; a < p; ++a)
            for (std::size_t b = a; b < p; ++b) {
                double acc = 0.0;
                for (std::size_t j = 0; j < m; ++j) acc += d(j, a) * rd(j, b);
                h(a, b) += acc;
            }
    }
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < a; ++b) h(a, b) = h(b, a);
    return SymMatrix(h);
}

FitResult gee_independence_fit(const LongitudinalDataset& data, LinkKind family,
                               std::span<const double> beta_init, const SolverOptions& opts) {
    require_full_rank(independence_information(data, eval_model(data, family, beta_init)));
    EstimatingSystem sys{
        [&](std::span<const double> b) { return independence_score(data, family, b); },
        [&](std::span<const double> b) {
            return independence_information(data, eval_model(data, family, b));
        }};
    return solve(sys, data, beta_init, opts, FitMethod::independence);
}

CorrelationEstimate estimate_correlation(const LongitudinalDataset& data, LinkKind family,
                                         std::span<const double> beta) {
    const ModelEval ev = eval_model(data, family, beta);
    const std::size_t m = data.m();
    Matrix acc(m, m);
    for (std::size_t i = 0; i < data.n(); ++i) {
        const SubjectEval& s = ev.subjects[i];
        for (std::size_t j = 0; j < m; ++j) {
            if (!(s.var[j] > 0.0) || !std::isfinite(s.var[j])) {
                std::ostringstream msg;
                msg << "degenerate variance " << s.var[j] << " at subject " << i << ", time " << j + 1;
                throw Error(ErrorKind::degenerate_variance, msg.str());
            }
        }
        const Vector r = standardized_residual(s);
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t k = j; k < m; ++k) acc(j, k) += r[j] * r[k];
    }
    const double inv_n = 1.0 / static_cast<double>(data.n());
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = j; k < m; ++k) {
            acc(j, k) *= inv_n;
            acc(k, j) = acc(j, k);
        }
    return {SymMatrix(acc), Vector(beta.begin(), beta.end()), data.n()};
}

FitResult pseudo_likelihood_fit(const LongitudinalDataset& data, LinkKind family,
                                const CorrelationEstimate& corr, std::span<const double> beta_init,
                                const SolverOptions& opts) {
    if (corr.r_tilde.dim() != data.m()) throw Error(ErrorKind::shape, "correlation matrix is not m x m");
    const SymMatrix r_inv = sym_inverse(corr.r_tilde);
    require_full_rank(pseudo_information(data, eval_model(data, family, beta_init), r_inv));
    EstimatingSystem sys{
        [&](std::span<const double> b) { return pseudo_score(data, family, r_inv, b); },
        [&](std::span<const double> b) {
            return pseudo_information(data, eval_model(data, family, b), r_inv);
        }};
    FitResult res = solve(sys, data, beta_init, opts, FitMethod::pseudo_likelihood);
    res.correlation_used = corr;
    return res;
}

CorrelationEstimate identity_correlation(std::size_t m, std::span<const double> beta) {
    return {SymMatrix::identity(m), Vector(beta.begin(), beta.end()), 0};
}

FitResult two_step_fit(const LongitudinalDataset& data, LinkKind family, const SolverOptions& opts) {
    const Vector zero(data.p(), 0.0);
    FitResult indep = gee_independence_fit(data, family, zero, opts);
    if (!indep.converged) return indep;

    CorrelationEstimate corr = estimate_correlation(data, family, indep.beta_hat);
    FitResult fit;
    try {
        fit = pseudo_likelihood_fit(data, family, corr, indep.beta_hat, opts);
    } catch (const NotPositiveDefinite&) {
        // R̃ not invertible: hand back the independence fit, flagged.
        indep.fallback = true;
        indep.correlation_used = corr;
        indep.cov_beta =
            sandwich_covariance(data, family, indep.beta_hat, identity_correlation(data.m(), indep.beta_hat))
                .cov_beta;
        return indep;
    }
    if (fit.converged) {
        fit.cov_beta = sandwich_covariance(data, family, fit.beta_hat, corr).cov_beta;
    }
    return fit;
}

SandwichResult sandwich_covariance(const LongitudinalDataset& data, LinkKind family,
                                   std::span<const double> beta_hat, const CorrelationEstimate& corr) {
    const ModelEval ev = eval_model(data, family, beta_hat);
    const SymMatrix r_inv = sym_inverse(corr.r_tilde);
    const std::size_t p = data.p();

    Matrix meat(p, p);
    for (std::size_t i = 0; i < data.n(); ++i) {
        const Vector u = subject_pseudo_score(data.subject(i).x, ev.subjects[i], r_inv);
        for (std::size_t a = 0; a < p; ++a)
            for (std::size_t b = a; b < p; ++b) meat(a, b) += u[a] * u[b];
    }
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < a; ++b) meat(a, b) = meat(b, a);

    SandwichResult out;
    out.m_hat = SymMatrix(meat);
    out.h_tilde = pseudo_information(data, ev, r_inv);
    const SymMatrix h_inv = sym_inverse(out.h_tilde);
    out.cov_beta = congruence(h_inv.matrix(), out.m_hat);
    return out;
}

std::vector<Interval> wald_intervals(const FitResult& fit, double level) {
    if (!fit.cov_beta) throw Error(ErrorKind::precondition, "wald_intervals: fit carries no covariance");
    if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::precondition, "level must lie in (0, 1)");
    const double z = normal_quantile(0.5 * (1.0 + level));
    std::vector<Interval> out;
    out.reserve(fit.beta_hat.size());
    for (std::size_t k = 0; k < fit.beta_hat.size(); ++k) {
        const double se = std::sqrt(std::max(0.0, (*fit.cov_beta)(k, k)));
        out.push_back({fit.beta_hat[k] - z * se, fit.beta_hat[k] + z * se});
    }
    return out;
}

}  // namespace pgee
