#include "pseudogee/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pseudogee/error.hpp"
#include "pseudogee/estimator.hpp"

namespace pgee {

namespace {

double max_leverage(const LongitudinalDataset& data, const SymMatrix& h_inv) {
    double best = 0.0;
    for (const Subject& s : data.subjects())
        for (std::size_t j = 0; j < data.m(); ++j) {
            const auto x = s.x.row(j);
            best = std::max(best, dot(x, h_inv * x));
        }
    return best;
}

double lambda_max(const SymMatrix& s) { return sym_eigen(s).values.back(); }

SmoothnessMaxima ratios_at(const LongitudinalDataset& data, LinkKind family, std::span<const double> beta) {
    SmoothnessMaxima out;
    for (const Subject& s : data.subjects())
        for (std::size_t j = 0; j < data.m(); ++j) {
            const LinkValues lv = link_eval(family, dot(s.x.row(j), beta));
            out.k2 = std::max(out.k2, std::abs(lv.d2 / lv.d1));
            out.k3 = std::max(out.k3, std::abs(lv.d3 / lv.d1));
        }
    return out;
}

bool strictly_increasing(const std::vector<double>& v) {
    for (std::size_t k = 1; k < v.size(); ++k)
        if (!(v[k] > v[k - 1])) return false;
    return true;
}

bool strictly_decreasing(const std::vector<double>& v) {
    for (std::size_t k = 1; k < v.size(); ++k)
        if (!(v[k] < v[k - 1])) return false;
    return true;
}

}  // namespace

DiagnosticsReport design_diagnostics(const LongitudinalDataset& data, LinkKind family,
                                     std::span<const double> beta, const SymMatrix& r,
                                     const std::optional<SymMatrix>& m_hat,
                                     const std::optional<SymMatrix>& r_bar) {
    if (r.dim() != data.m()) throw Error(ErrorKind::shape, "correlation matrix is not m x m");
    const ModelEval ev = eval_model(data, family, beta);
    const double n = static_cast<double>(data.n());
    const double m = static_cast<double>(data.m());

    DiagnosticsReport rep;
    rep.n = data.n();

    const EigenDecomposition r_eig = sym_eigen(r);
    rep.lambda_min_R = r_eig.values.front();
    rep.det_R = 1.0;
    for (double v : r_eig.values) rep.det_R *= v;
    const SymMatrix r_inv = sym_inverse(r);  // throws NotPositiveDefinite
    // Eigenvalues of R⁻¹ are reciprocals of those of R.
    const double lmax_r_inv = 1.0 / r_eig.values.front();
    const double lmin_r_inv = 1.0 / r_eig.values.back();

    rep.H_indep = independence_information(data, ev);
    rep.H_general = pseudo_information(data, ev, r_inv);
    rep.lambda_min_H_indep = sym_eigen(rep.H_indep).values.front();
    rep.lambda_min_H_general = sym_eigen(rep.H_general).values.front();

    const SymMatrix h_indep_inv = sym_inverse(rep.H_indep);
    const SqrtPair h_roots = sym_sqrt_pair(rep.H_general);
    const SymMatrix h_inv = sym_inverse(rep.H_general);

    rep.gamma0_indep = max_leverage(data, h_indep_inv);
    rep.pi_n = lmax_r_inv / lmin_r_inv;
    rep.tau_tilde_n = m * lmax_r_inv;
    rep.gamma0 = max_leverage(data, h_inv);
    rep.gamma_tilde = rep.tau_tilde_n * rep.gamma0;

    for (const SubjectEval& s : ev.subjects)
        for (double v : s.var) rep.max_variance = std::max(rep.max_variance, v);

    // γ^(D) = max_i λ_max(H^{-1/2} X_iᵀ A_i^{1/2} R⁻¹ A_i^{1/2} X_i H^{-1/2}).
    const std::size_t p = data.p();
    for (std::size_t i = 0; i < data.n(); ++i) {
        const LongitudinalDataset one(data.m(), p, {data.subject(i)});
        ModelEval one_ev;
        one_ev.subjects.push_back(ev.subjects[i]);
        const SymMatrix hi = pseudo_information(one, one_ev, r_inv);
        rep.gamma_D = std::max(rep.gamma_D, lambda_max(congruence(h_roots.inv_root.matrix(), hi)));
    }

    if (m_hat) {
        // λ_max(M⁻¹H) = λ_max(M^{-1/2} H M^{-1/2}).
        const SqrtPair m_roots = sym_sqrt_pair(*m_hat);
        rep.c_n = lambda_max(congruence(m_roots.inv_root.matrix(), rep.H_general));
    }

    const SmoothnessMaxima k = ratios_at(data, family, beta);
    rep.k2 = k.k2;
    rep.k3 = k.k3;

    rep.sqrt_n_times_gamma0_indep = std::sqrt(n) * rep.gamma0_indep;
    rep.pi2_gamma_tilde = rep.pi_n * rep.pi_n * rep.gamma_tilde;
    rep.sqrt_n_pi_gamma_tilde = std::sqrt(n) * rep.pi_n * rep.gamma_tilde;
    rep.lambda_min_H_over_tau = rep.lambda_min_H_general / rep.tau_tilde_n;

    if (r_bar) {
        if (r_bar->dim() != data.m()) throw Error(ErrorKind::shape, "oracle correlation is not m x m");
        // λ_max(R⁻¹R̄) = λ_max(R^{-1/2} R̄ R^{-1/2}); R̄_i = R̄ for every subject.
        const SqrtPair r_roots = sym_sqrt_pair(r);
        rep.tau_n_oracle = lambda_max(congruence(r_roots.inv_root.matrix(), *r_bar));
        rep.lambda_min_Rbar = sym_eigen(*r_bar).values.front();
    }
    return rep;
}

SmoothnessMaxima smoothness_maxima(const LongitudinalDataset& data, LinkKind family,
                                   std::span<const double> beta_center, double radius_r,
                                   const std::optional<SymMatrix>& r) {
    if (!(radius_r >= 0.0)) throw Error(ErrorKind::precondition, "radius must be nonnegative");
    const ModelEval ev = eval_model(data, family, beta_center);

    SymMatrix h;
    double tau;
    if (r) {
        const SymMatrix r_inv = sym_inverse(*r);
        h = pseudo_information(data, ev, r_inv);
        tau = static_cast<double>(data.m()) / sym_eigen(*r).values.front();
    } else {
        h = independence_information(data, ev);
        tau = static_cast<double>(data.m());
    }
    const EigenDecomposition eig = sym_eigen(h);
    if (!(eig.values.front() > pd_tolerance(h))) {
        throw NotPositiveDefinite(eig.values.front(), "smoothness_maxima: information matrix is singular");
    }

    auto probe = [&](std::span<const double> b) {
        try {
            return ratios_at(data, family, b);
        } catch (const Error& e) {
            std::ostringstream msg;
            msg << e.what() << " at probe beta = (";
            for (std::size_t k = 0; k < b.size(); ++k) msg << (k ? ", " : "") << b[k];
            msg << ")";
            throw Error(e.kind(), msg.str());
        }
    };

    SmoothnessMaxima out = probe(beta_center);
    const std::size_t p = data.p();
    const double reach = radius_r * std::sqrt(tau);
    for (std::size_t k = 0; k < p; ++k) {
        // H^{-1/2} v_k = v_k / sqrt(λ_k).
        const double scale = reach / std::sqrt(eig.values[k]);
        for (double sign : {1.0, -1.0}) {
            Vector b(beta_center.begin(), beta_center.end());
            for (std::size_t a = 0; a < p; ++a) b[a] += sign * scale * eig.vectors(a, k);
            const SmoothnessMaxima at = probe(b);
            out.k2 = std::max(out.k2, at.k2);
            out.k3 = std::max(out.k3, at.k3);
        }
    }
    return out;
}

Example1 example1_closed_form(const LongitudinalDataset& data, LinkKind family, std::span<const double> beta) {
    if (data.p() != 2) throw Error(ErrorKind::shape, "example1 closed form requires p = 2");
    const ModelEval ev = eval_model(data, family, beta);
    Example1 e;
    for (std::size_t i = 0; i < data.n(); ++i) {
        const Matrix& x = data.subject(i).x;
        for (std::size_t j = 0; j < data.m(); ++j) {
            const double s2 = ev.subjects[i].var[j];
            const double a = x(j, 0);
            const double b = x(j, 1);
            e.u += s2 * a * a;
            e.v += s2 * b * b;
            e.w += s2 * a * b;
        }
    }
    e.d = std::sqrt((e.u - e.v) * (e.u - e.v) + 4.0 * e.w * e.w);
    e.lambda_max = 0.5 * (e.u + e.v + e.d);
    e.lambda_min = 0.5 * (e.u + e.v - e.d);
    e.sin2_theta = (e.u * e.v - e.w * e.w) / (e.u * e.v);
    const double su = std::sqrt(e.u);
    const double sv = std::sqrt(e.v);
    for (const Subject& s : data.subjects())
        for (std::size_t j = 0; j < data.m(); ++j) {
            const double t = s.x(j, 0) / su + s.x(j, 1) / sv;
            e.gamma0_bound = std::max(e.gamma0_bound, t * t);
        }
    return e;
}

Example2 example2_closed_form(const LongitudinalDataset& data, LinkKind family, std::span<const double> beta) {
    const std::size_t p = data.p();
    // Level of each cell; rejects anything that is not a standard basis vector.
    std::vector<std::vector<std::size_t>> level(data.n(), std::vector<std::size_t>(data.m()));
    for (std::size_t i = 0; i < data.n(); ++i) {
        const Matrix& x = data.subject(i).x;
        for (std::size_t j = 0; j < data.m(); ++j) {
            std::size_t ones = 0;
            std::size_t zeros = 0;
            for (std::size_t a = 0; a < p; ++a) {
                if (x(j, a) == 1.0) {
                    ++ones;
                    level[i][j] = a;
                } else if (x(j, a) == 0.0) {
                    ++zeros;
                }
            }
            if (ones != 1 || zeros != p - 1) {
                std::ostringstream msg;
                msg << "cell (subject " << i << ", time " << j + 1 << ") is not a standard basis vector";
                throw Error(ErrorKind::shape, msg.str());
            }
        }
    }

    const ModelEval ev = eval_model(data, family, beta);
    Example2 out{Vector(p, 0.0), 0.0};
    for (std::size_t i = 0; i < data.n(); ++i)
        for (std::size_t j = 0; j < data.m(); ++j) out.nu[level[i][j]] += ev.subjects[i].var[j];
    out.nu_min = *std::min_element(out.nu.begin(), out.nu.end());

    const SymMatrix h = independence_information(data, ev);
    if (!(h == SymMatrix::diagonal(out.nu))) {
        throw Error(ErrorKind::invalid_input, "example2: H_indep differs from diag(nu)");
    }
    return out;
}

bool TrendReport::flagged() const {
    return !(lambda_min_H_indep_increasing && lambda_min_H_over_tau_increasing &&
             pi2_gamma_tilde_decreasing && sqrt_n_pi_gamma_tilde_decreasing &&
             sqrt_n_gamma0_indep_decreasing && det_R_above_floor);
}

TrendReport condition_trend_report(const LongitudinalDataset& data, LinkKind family,
                                   std::span<const double> beta, const std::optional<SymMatrix>& r,
                                   std::span<const std::size_t> n_grid, const TrendOptions& opts) {
    if (n_grid.empty()) throw Error(ErrorKind::precondition, "n_grid is empty");
    for (std::size_t k = 0; k < n_grid.size(); ++k) {
        if (n_grid[k] == 0 || n_grid[k] > data.n() || (k > 0 && n_grid[k] <= n_grid[k - 1])) {
            throw Error(ErrorKind::precondition, "n_grid must be increasing with values in [1, n]");
        }
    }

    TrendReport out;
    for (std::size_t size : n_grid) {
        const LongitudinalDataset sub = data.prefix(size);
        const SymMatrix rk = r ? *r : estimate_correlation(sub, family, beta).r_tilde;
        const MatrixStats st = matrix_stats(rk);
        out.det_R.push_back(st.det);
        if (!(st.det >= opts.det_floor)) out.det_R_above_floor = false;
        out.reports.push_back(design_diagnostics(sub, family, beta, rk));
    }

    auto series = [&](double DiagnosticsReport::*field) {
        std::vector<double> v;
        for (const DiagnosticsReport& rep : out.reports) v.push_back(rep.*field);
        return v;
    };
    out.lambda_min_H_indep_increasing = strictly_increasing(series(&DiagnosticsReport::lambda_min_H_indep));
    out.lambda_min_H_over_tau_increasing =
        strictly_increasing(series(&DiagnosticsReport::lambda_min_H_over_tau));
    out.pi2_gamma_tilde_decreasing = strictly_decreasing(series(&DiagnosticsReport::pi2_gamma_tilde));
    out.sqrt_n_pi_gamma_tilde_decreasing =
        strictly_decreasing(series(&DiagnosticsReport::sqrt_n_pi_gamma_tilde));
    out.sqrt_n_gamma0_indep_decreasing =
        strictly_decreasing(series(&DiagnosticsReport::sqrt_n_times_gamma0_indep));
    return out;
}

}  // namespace pgee
