#include <doctest.h>

#include <cmath>
#include <random>

#include "pseudogee/diagnostics.hpp"
#include "pseudogee/error.hpp"
#include "pseudogee/estimator.hpp"
#include "pseudogee/simulator.hpp"

using namespace pgee;

namespace {

LongitudinalDataset gaussian_data(std::size_t n, std::size_t m, double rho, std::uint64_t seed,
                                  std::size_t p = 2) {
    SimConfig cfg;
    cfg.n = n;
    cfg.m = m;
    cfg.p = p;
    cfg.family = LinkKind::identity;
    cfg.beta0 = Vector(p, 0.0);
    cfg.beta0[0] = 0.5;
    cfg.design = IidUniformDesign{-1.0, 1.0, true};
    cfg.correlation = Exchangeable{rho};
    return generate(cfg, make_design(cfg, seed), mix_seed(seed, 1));
}

LongitudinalDataset with_binary_response(const LongitudinalDataset& d) {
    std::vector<Subject> s = d.subjects();
    for (Subject& sub : s)
        for (double& y : sub.y) y = y > 0.3 ? 1.0 : 0.0;
    return LongitudinalDataset(d.m(), d.p(), s);
}

double lambda_min_of(const Matrix& a) { return sym_eigen(SymMatrix(a)).values.front(); }

/// Two-level basis design; level 2 appears only among the first `frozen_after` subjects.
LongitudinalDataset frozen_level_design(std::size_t n, std::size_t frozen_after) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z;
    std::vector<Subject> subjects;
    for (std::size_t i = 0; i < n; ++i) {
        Subject s{Matrix(2, 2), Vector(2)};
        for (std::size_t j = 0; j < 2; ++j) {
            const std::size_t level = (i < frozen_after && j == 1) ? 1 : 0;
            s.x(j, level) = 1.0;
            s.y[j] = z(rng);
        }
        subjects.push_back(s);
    }
    return LongitudinalDataset(2, 2, std::move(subjects));
}

}  // namespace

TEST_CASE("design_diagnostics examples") {
    SUBCASE("identity correlation, m = 3") {
        const auto d = gaussian_data(50, 3, 0.3, 1);
        const auto rep = design_diagnostics(d, LinkKind::identity, Vector{0.5, 0.0}, SymMatrix::identity(3));
        CHECK(rep.pi_n == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(rep.tau_tilde_n == doctest::Approx(3.0).epsilon(1e-14));
        CHECK_FALSE(rep.c_n);
        CHECK(rep.k2 == 0.0);
        CHECK(rep.det_R == doctest::Approx(1.0));
    }
    SUBCASE("single subject, identity design") {
        const LongitudinalDataset d(2, 2, {Subject{Matrix::identity(2), Vector{0.3, -0.1}}});
        const auto rep = design_diagnostics(d, LinkKind::identity, Vector{0.0, 0.0}, SymMatrix::identity(2));
        CHECK(max_abs_diff(rep.H_indep.matrix(), Matrix::identity(2)) < 1e-15);
        CHECK(rep.gamma0_indep == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("gamma_D bounded by d_n times gamma_tilde, n = 200") {
        for (std::uint64_t seed = 10; seed < 15; ++seed) {
            const auto d = with_binary_response(gaussian_data(200, 4, 0.5, seed, 3));
            const Vector beta{0.2, -0.4, 0.3};
            const auto r = estimate_correlation(d, LinkKind::logit, beta).r_tilde;
            const auto rep = design_diagnostics(d, LinkKind::logit, beta, r);
            double dn = 0.0;
            const ModelEval ev = eval_model(d, LinkKind::logit, beta);
            for (const auto& s : ev.subjects)
                for (double v : s.var) dn = std::max(dn, v);
            CHECK(rep.max_variance == dn);
            CHECK(rep.gamma_D > 0.0);
            CHECK(rep.gamma_D <= dn * rep.gamma_tilde * (1.0 + 1e-9));
        }
    }
    SUBCASE("c_n present with M_hat, and equals lambda_max(M^-1 H) by a direct oracle") {
        const auto d = gaussian_data(100, 3, 0.4, 3);
        const FitResult fit = two_step_fit(d, LinkKind::identity);
        const auto s = sandwich_covariance(d, LinkKind::identity, fit.beta_hat, *fit.correlation_used);
        const auto rep = design_diagnostics(d, LinkKind::identity, fit.beta_hat, fit.correlation_used->r_tilde,
                                            s.m_hat);
        REQUIRE(rep.c_n);
        // Largest root of det(H - c M) = 0 for 2x2: quadratic in c.
        const Matrix& h = rep.H_general.matrix();
        const Matrix& m = s.m_hat.matrix();
        const double qa = m(0, 0) * m(1, 1) - m(0, 1) * m(0, 1);
        const double qb = -(h(0, 0) * m(1, 1) + h(1, 1) * m(0, 0) - 2.0 * h(0, 1) * m(0, 1));
        const double qc = h(0, 0) * h(1, 1) - h(0, 1) * h(0, 1);
        const double root = (-qb + std::sqrt(qb * qb - 4.0 * qa * qc)) / (2.0 * qa);
        CHECK(*rep.c_n == doctest::Approx(root).epsilon(1e-9));
    }
    SUBCASE("oracle mode") {
        const auto d = gaussian_data(60, 3, 0.4, 4);
        const SymMatrix rbar = correlation_matrix(Exchangeable{0.4}, 3);
        const auto rep = design_diagnostics(d, LinkKind::identity, Vector{0.5, 0.0}, SymMatrix::identity(3),
                                            std::nullopt, rbar);
        REQUIRE(rep.tau_n_oracle);
        CHECK(*rep.tau_n_oracle == doctest::Approx(1.8).epsilon(1e-12));  // 1 + 2·0.4
        CHECK(*rep.lambda_min_Rbar == doctest::Approx(0.6).epsilon(1e-12));
    }
    SUBCASE("singular R") {
        const auto d = gaussian_data(20, 2, 0.4, 4);
        CHECK_THROWS_AS(design_diagnostics(d, LinkKind::identity, Vector{0.0, 0.0}, SymMatrix{{1, 1}, {1, 1}}),
                        NotPositiveDefinite);
    }
}

TEST_CASE("design_diagnostics invariants") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.6, 0.6);
    for (int trial = 0; trial < 20; ++trial) {
        const auto d = with_binary_response(gaussian_data(40, 4, 0.5, 100 + trial, 3));
        const Vector beta{u(rng), u(rng), u(rng)};
        const SymMatrix r = estimate_correlation(d, LinkKind::logit, beta).r_tilde;
        const auto rep = design_diagnostics(d, LinkKind::logit, beta, r);

        CHECK(rep.pi_n >= 1.0);
        CHECK(rep.gamma0_indep > 0.0);
        CHECK(std::isfinite(rep.gamma0_indep));
        CHECK(rep.gamma_tilde == rep.tau_tilde_n * rep.gamma0);
        if (r.trace() <= 2.0 * 4.0) CHECK(rep.tau_tilde_n >= 0.5);

        // π is invariant under R -> cR.
        for (double c : {0.3, 2.0, 17.0}) {
            const auto scaled = design_diagnostics(d, LinkKind::logit, beta, c * r);
            CHECK(scaled.pi_n == doctest::Approx(rep.pi_n).epsilon(1e-12));
        }

        // Bound chain: H_indep/(2m) ≼ H_general ≼ (τ̃/m) H_indep when |R_jk| ≤ 2.
        if (max_abs(r.matrix()) <= 2.0) {
            const Matrix& hi = rep.H_indep.matrix();
            const Matrix& hg = rep.H_general.matrix();
            const double tr = rep.H_general.trace();
            CHECK(lambda_min_of(hg - (1.0 / 8.0) * hi) >= -1e-9 * tr);
            CHECK(lambda_min_of((rep.tau_tilde_n / 4.0) * hi - hg) >= -1e-9 * tr);
        }
    }
}

TEST_CASE("smoothness maxima") {
    const auto d = gaussian_data(30, 3, 0.3, 2);
    SUBCASE("identity link") {
        const auto k = smoothness_maxima(d, LinkKind::identity, Vector{0.5, 0.0}, 1.0);
        CHECK(k.k2 == 0.0);
        CHECK(k.k3 == 0.0);
    }
    SUBCASE("log link") {
        const auto k = smoothness_maxima(d, LinkKind::log, Vector{0.1, 0.2}, 2.0);
        CHECK(k.k2 == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(k.k3 == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("logit over theta in [-2, 2] against a dense grid") {
        std::vector<Subject> subjects;
        for (int i = 0; i <= 40; ++i) subjects.push_back({Matrix{{-2.0 + 0.1 * i}}, Vector{0.0}});
        const LongitudinalDataset cells(1, 1, subjects);
        const auto k = smoothness_maxima(cells, LinkKind::logit, Vector{1.0}, 0.0);
        double g2 = 0.0, g3 = 0.0;
        for (int t = 0; t < 1000; ++t) {
            const double theta = -2.0 + 4.0 * t / 999.0;
            const double mu = 1.0 / (1.0 + std::exp(-theta));
            g2 = std::max(g2, std::abs(1.0 - 2.0 * mu));
            g3 = std::max(g3, std::abs(1.0 - 6.0 * mu * (1.0 - mu)));
        }
        CHECK(std::abs(k.k2 - g2) < 1e-3);
        CHECK(std::abs(k.k3 - g3) < 1e-3);
    }
    SUBCASE("probes sit inside the ellipsoid: never above a dense sup, never below the centre") {
        const auto b = with_binary_response(d);
        const Vector centre{0.3, -0.5};
        const double r = 0.8;
        const auto k = smoothness_maxima(b, LinkKind::logit, centre, r);
        const auto c0 = smoothness_maxima(b, LinkKind::logit, centre, 0.0);
        CHECK(k.k2 >= c0.k2);
        CHECK(k.k3 >= c0.k3);

        // Dense polar grid over {β : (β-c)ᵀH(β-c) ≤ r²m}.
        const SymMatrix h = independence_information(b, eval_model(b, LinkKind::logit, centre));
        const auto e = sym_eigen(h);
        const double reach = r * std::sqrt(3.0);
        double s2 = 0.0, s3 = 0.0;
        for (int ring = 0; ring <= 20; ++ring)
            for (int a = 0; a < 360; ++a) {
                const double rad = reach * ring / 20.0;
                const double ang = 2.0 * M_PI * a / 360.0;
                const double c1 = rad * std::cos(ang) / std::sqrt(e.values[0]);
                const double c2 = rad * std::sin(ang) / std::sqrt(e.values[1]);
                const Vector beta{centre[0] + c1 * e.vectors(0, 0) + c2 * e.vectors(0, 1),
                                  centre[1] + c1 * e.vectors(1, 0) + c2 * e.vectors(1, 1)};
                const auto at = smoothness_maxima(b, LinkKind::logit, beta, 0.0);
                s2 = std::max(s2, at.k2);
                s3 = std::max(s3, at.k3);
            }
        CHECK(k.k2 <= s2 + 1e-12);
        CHECK(k.k3 <= s3 + 1e-12);
        CHECK(k.k2 >= 0.9 * s2);
    }
    SUBCASE("overflow at a probe names the probe") {
        std::vector<Subject> subjects;
        for (int i = 0; i < 3; ++i) subjects.push_back({Matrix{{100.0 * (i + 1)}}, Vector{1.0}});
        const LongitudinalDataset big(1, 1, subjects);
        try {
            smoothness_maxima(big, LinkKind::log, Vector{0.001}, 1e6);
            FAIL("expected overflow");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::overflow);
            CHECK(std::string(e.what()).find("probe beta") != std::string::npos);
        }
    }
    SUBCASE("negative radius") {
        CHECK_THROWS_AS(smoothness_maxima(d, LinkKind::identity, Vector{0.0, 0.0}, -1.0), Error);
    }
}

TEST_CASE("example 1 closed form") {
    SUBCASE("orthonormal weighted design") {
        const LongitudinalDataset d(2, 2, {Subject{Matrix::identity(2), Vector{0.0, 0.0}}});
        const auto e = example1_closed_form(d, LinkKind::identity, Vector{0.0, 0.0});
        CHECK(e.lambda_min == 1.0);
        CHECK(e.lambda_max == 1.0);
        CHECK(e.sin2_theta == 1.0);
    }
    SUBCASE("u = 4, v = 1, w = 1") {
        // Rows (√3, 0) and (1, 1).
        const LongitudinalDataset d(2, 2, {Subject{Matrix{{std::sqrt(3.0), 0.0}, {1.0, 1.0}}, Vector{0.0, 0.0}}});
        const auto e = example1_closed_form(d, LinkKind::identity, Vector{0.0, 0.0});
        CHECK(e.u == doctest::Approx(4.0).epsilon(1e-15));
        CHECK(e.v == 1.0);
        CHECK(e.w == 1.0);
        CHECK(e.d == doctest::Approx(std::sqrt(13.0)).epsilon(1e-15));
        CHECK(e.lambda_max == doctest::Approx(4.302776).epsilon(1e-6));
        CHECK(e.sin2_theta == doctest::Approx(0.75).epsilon(1e-15));
    }
    SUBCASE("agrees with the eigensolver on random datasets") {
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            auto d = gaussian_data(5 + seed % 20, 3, 0.2, 500 + seed);
            const LinkKind kind = seed % 2 ? LinkKind::logit : LinkKind::identity;
            if (kind == LinkKind::logit) d = with_binary_response(d);
            const Vector beta{0.1, -0.3};
            const auto e = example1_closed_form(d, kind, beta);
            const auto st = matrix_stats(independence_information(d, eval_model(d, kind, beta)));
            CHECK(e.lambda_min == doctest::Approx(st.lambda_min).epsilon(1e-10));
            CHECK(e.lambda_max == doctest::Approx(st.lambda_max).epsilon(1e-10));
            CHECK(e.sin2_theta * e.u * e.v == doctest::Approx(st.det).epsilon(1e-9));
        }
    }
    SUBCASE("p = 3 rejected") {
        const auto d = gaussian_data(5, 2, 0.2, 1, 3);
        try {
            example1_closed_form(d, LinkKind::identity, Vector{0.0, 0.0, 0.0});
            FAIL("expected shape error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::shape);
        }
    }
}

TEST_CASE("example 2 closed form") {
    SUBCASE("all cells at level 1") {
        std::vector<Subject> s(4, Subject{Matrix{{1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}}, Vector{0.0, 0.0}});
        const auto e = example2_closed_form(LongitudinalDataset(2, 3, s), LinkKind::identity, Vector{0, 0, 0});
        CHECK(e.nu == Vector{8.0, 0.0, 0.0});
        CHECK(e.nu_min == 0.0);
    }
    SUBCASE("balanced two-level design") {
        std::vector<Subject> s(10, Subject{Matrix{{1.0, 0.0}, {0.0, 1.0}}, Vector{0.0, 0.0}});
        const auto e = example2_closed_form(LongitudinalDataset(2, 2, s), LinkKind::identity, Vector{0, 0});
        CHECK(e.nu == Vector{10.0, 10.0});
    }
    SUBCASE("logit at zero") {
        SimConfig cfg;
        cfg.n = 30;
        cfg.m = 3;
        cfg.p = 3;
        cfg.design = CategoricalDesign{};
        const auto design = make_design(cfg, 9);
        std::vector<Subject> s;
        Vector count(3, 0.0);
        for (const Matrix& x : design) {
            s.push_back({x, Vector{1.0, 0.0, 1.0}});
            for (std::size_t j = 0; j < 3; ++j)
                for (std::size_t a = 0; a < 3; ++a) count[a] += x(j, a);
        }
        const LongitudinalDataset d(3, 3, s);
        const auto e = example2_closed_form(d, LinkKind::logit, Vector{0, 0, 0});
        for (std::size_t a = 0; a < 3; ++a) CHECK(e.nu[a] == 0.25 * count[a]);
        // Generic path to 1e-10.
        const auto st = matrix_stats(independence_information(d, eval_model(d, LinkKind::logit, Vector{0, 0, 0})));
        CHECK(e.nu_min == doctest::Approx(st.lambda_min).epsilon(1e-10));
    }
    SUBCASE("non-basis cell named") {
        const LongitudinalDataset d(2, 2, {Subject{Matrix{{1.0, 0.0}, {0.5, 0.5}}, Vector{0.0, 0.0}}});
        try {
            example2_closed_form(d, LinkKind::identity, Vector{0, 0});
            FAIL("expected shape error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::shape);
            CHECK(std::string(e.what()).find("subject 0, time 2") != std::string::npos);
        }
    }
}

TEST_CASE("condition trend report") {
    SUBCASE("i.i.d. bounded design on {100, 400, 1600}") {
        const auto d = gaussian_data(1600, 3, 0.5, 77);
        const std::size_t grid[] = {100, 400, 1600};
        const auto tr = condition_trend_report(d, LinkKind::identity, Vector{0.5, 0.0}, std::nullopt, grid);
        REQUIRE(tr.reports.size() == 3);
        for (std::size_t k = 1; k < 3; ++k) {
            const double growth = tr.reports[k].lambda_min_H_indep / tr.reports[k - 1].lambda_min_H_indep;
            CHECK(growth >= 3.0);
            CHECK(growth <= 5.0);
        }
        CHECK(tr.lambda_min_H_over_tau_increasing);
        CHECK(tr.sqrt_n_pi_gamma_tilde_decreasing);
        CHECK(tr.det_R_above_floor);
        CHECK_FALSE(tr.flagged());
    }
    SUBCASE("single-point grid") {
        const auto d = gaussian_data(50, 3, 0.5, 78);
        const std::size_t grid[] = {50};
        const auto tr = condition_trend_report(d, LinkKind::identity, Vector{0.5, 0.0}, SymMatrix::identity(3), grid);
        CHECK(tr.reports.size() == 1);
        CHECK_FALSE(tr.flagged());
    }
    SUBCASE("frozen level stalls nu_min and is flagged") {
        const auto d = frozen_level_design(1600, 100);
        const std::size_t grid[] = {100, 400, 1600};
        for (const auto& r : {std::optional<SymMatrix>(SymMatrix::identity(2)), std::optional<SymMatrix>()}) {
            const auto tr = condition_trend_report(d, LinkKind::identity, Vector{0.0, 0.0}, r, grid);
            CHECK_FALSE(tr.lambda_min_H_indep_increasing);
            CHECK(tr.flagged());
            const auto e = example2_closed_form(d, LinkKind::identity, Vector{0.0, 0.0});
            CHECK(e.nu_min == 100.0);
        }
    }
    SUBCASE("low det(R) is flagged") {
        const auto d = gaussian_data(100, 2, 0.5, 79);
        const std::size_t grid[] = {50, 100};
        const SymMatrix tiny = SymMatrix::diagonal(Vector{1e-4, 1e-4});
        const auto tr = condition_trend_report(d, LinkKind::identity, Vector{0.5, 0.0}, tiny, grid);
        CHECK_FALSE(tr.det_R_above_floor);
        CHECK(tr.flagged());
        TrendOptions loose;
        loose.det_floor = 1e-9;
        CHECK(condition_trend_report(d, LinkKind::identity, Vector{0.5, 0.0}, tiny, grid, loose).det_R_above_floor);
    }
    SUBCASE("bad grids") {
        const auto d = gaussian_data(50, 2, 0.5, 80);
        const std::size_t desc[] = {40, 20};
        const std::size_t big[] = {60};
        CHECK_THROWS_AS(condition_trend_report(d, LinkKind::identity, Vector{0, 0}, std::nullopt, desc), Error);
        CHECK_THROWS_AS(condition_trend_report(d, LinkKind::identity, Vector{0, 0}, std::nullopt, big), Error);
    }
}
