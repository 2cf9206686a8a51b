// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include <unistd.h>

#include "pseudogee/cli.hpp"
#include "pseudogee/diagnostics.hpp"
#include "pseudogee/estimator.hpp"
#include "pseudogee/io.hpp"
#include "pseudogee/simulator.hpp"

using namespace pgee;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;
};

std::size_t worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

SimConfig gaussian_config(std::size_t n, std::size_t m, double rho, std::size_t reps, std::uint64_t seed) {
    SimConfig cfg;
    cfg.n = n;
    cfg.m = m;
    cfg.p = 2;
    cfg.family = LinkKind::identity;
    cfg.beta0 = {0.5, -1.0};
    cfg.design = IidUniformDesign{-1.0, 1.0, false};
    cfg.correlation = Exchangeable{rho};
    cfg.replications = reps;
    cfg.base_seed = seed;
    return cfg;
}

Verdict ac1_ols() {
    const SimConfig cfg = gaussian_config(30, 3, 0.5, 1, 101);
    const auto d = generate(cfg, make_design(cfg, 101), 102);
    // Normal equations by Cramer's rule on the stacked 2x2 system.
    double a = 0, b = 0, c = 0, r0 = 0, r1 = 0;
    for (const Subject& s : d.subjects())
        for (std::size_t j = 0; j < 3; ++j) {
            a += s.x(j, 0) * s.x(j, 0);
            b += s.x(j, 0) * s.x(j, 1);
            c += s.x(j, 1) * s.x(j, 1);
            r0 += s.x(j, 0) * s.y[j];
            r1 += s.x(j, 1) * s.y[j];
        }
    const double det = a * c - b * b;
    const double ols[2] = {(c * r0 - b * r1) / det, (a * r1 - b * r0) / det};
    const FitResult fit = gee_independence_fit(d, LinkKind::identity, Vector{0.0, 0.0});
    const double err = std::max(std::abs(fit.beta_hat[0] - ols[0]), std::abs(fit.beta_hat[1] - ols[1]));
    return {fit.converged && err <= 1e-8, "max coordinate error " + fmt(err)};
}

Verdict ac2_derivatives() {
    const double h = 1e-4;
    double worst_fd = 0.0, worst_probit = 0.0;
    bool pass = true;
    for (LinkKind kind : {LinkKind::identity, LinkKind::log, LinkKind::logit, LinkKind::probit}) {
        for (int k = 0; k <= 60; ++k) {
            const double t = -3.0 + 0.1 * k;
            const LinkValues c = link_eval(kind, t), up = link_eval(kind, t + h), dn = link_eval(kind, t - h);
            const double pairs[3][2] = {{(up.mu - dn.mu) / (2 * h), c.d1},
                                        {(up.d1 - dn.d1) / (2 * h), c.d2},
                                        {(up.d2 - dn.d2) / (2 * h), c.d3}};
            for (const auto& pr : pairs) {
                const double rel = std::abs(pr[0] - pr[1]) / std::max(std::abs(pr[1]), 1e-3);
                worst_fd = std::max(worst_fd, rel);
                pass = pass && rel <= 1e-6;
            }
            if (kind == LinkKind::probit) {
                const double phi = std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI);
                const double e = std::max({std::abs(c.d1 - phi), std::abs(c.d2 + t * phi),
                                           std::abs(c.d3 - (t * t - 1.0) * phi)});
                worst_probit = std::max(worst_probit, e);
                pass = pass && e <= 1e-10;
            }
        }
    }
    return {pass, "worst fd relative " + fmt(worst_fd) + ", probit closed-form " + fmt(worst_probit)};
}

Verdict ac3_collapse() {
    double worst = 0.0;
    bool pass = true;
    for (LinkKind kind : {LinkKind::identity, LinkKind::logit, LinkKind::log}) {
        SimConfig cfg = gaussian_config(80, 3, 0.4, 1, 103);
        cfg.family = kind;
        cfg.beta0 = {0.3, -0.4};
        const auto d = generate(cfg, make_design(cfg, 103), 104);
        const Vector start{0.0, 0.0};
        const FitResult a = gee_independence_fit(d, kind, start);
        const FitResult b = pseudo_likelihood_fit(d, kind, identity_correlation(3, start), start);
        if (a.trace.size() != b.trace.size()) return {false, "iterate counts differ"};
        for (std::size_t t = 0; t < a.trace.size(); ++t)
            for (std::size_t k = 0; k < 2; ++k) worst = std::max(worst, std::abs(a.trace[t].beta[k] - b.trace[t].beta[k]));
        pass = pass && a.converged;
    }
    return {pass && worst <= 1e-12, "max iterate difference " + fmt(worst)};
}

Verdict ac4_rtilde() {
    const MCReport rep = monte_carlo_run(gaussian_config(2000, 4, 0.5, 50, 104), worker_count());
    const bool pass = rep.rtilde_mean_abs_error < 0.03 && rep.rtilde_max_abs_error < 0.12;
    return {pass, "mean |R~ - R| " + fmt(rep.rtilde_mean_abs_error) + ", max " + fmt(rep.rtilde_max_abs_error)};
}

Verdict ac5_root_n() {
    std::vector<double> med;
    std::string detail = "median error";
    bool pass = true;
    for (std::size_t n : {50, 200, 800}) {
        const MCReport rep = monte_carlo_run(gaussian_config(n, 4, 0.6, 200, 105), worker_count());
        med.push_back(rep.median_error_norm);
        detail += " n=" + std::to_string(n) + ":" + fmt(rep.median_error_norm);
        pass = pass && rep.failure_fraction <= 0.02;
        detail += " (fail " + fmt(rep.failure_fraction) + ")";
    }
    for (std::size_t k = 1; k < med.size(); ++k) {
        const double f = med[k - 1] / med[k];
        detail += ", factor " + fmt(f);
        pass = pass && f >= 1.6 && f <= 2.6;
    }
    return {pass, detail};
}

Verdict ac6_normality() {
    bool pass = true;
    std::string detail;
    for (SubjectDependence dep : {SubjectDependence::independent, SubjectDependence::sign_modulated}) {
        SimConfig cfg = gaussian_config(400, 4, 0.5, 500, 106);
        cfg.subject_dependence = dep;
        const MCReport rep = monte_carlo_run(cfg, worker_count());
        const double within = rep.z_within_1_96.value_or(0.0);
        const double ks = rep.ks_distance.value_or(1.0);
        bool ok = rep.failure_fraction <= 0.02 && within >= 0.93 && within <= 0.97 && ks < 0.06;
        for (double c : rep.coverage) ok = ok && c >= 0.92 && c <= 0.975;
        pass = pass && ok;
        detail += std::string(dep == SubjectDependence::independent ? "independent" : "sign_modulated") +
                  ": coverage (" + fmt(rep.coverage[0]) + ", " + fmt(rep.coverage[1]) + ") |z|<=1.96 " +
                  fmt(within) + " KS " + fmt(ks) + (dep == SubjectDependence::independent ? "; " : "");
    }
    return {pass, detail};
}

Verdict ac7_efficiency() {
    const MCReport rep = monte_carlo_run(gaussian_config(400, 4, 0.7, 300, 107), worker_count());
    bool pass = rep.failure_fraction <= 0.02;
    for (double r : rep.efficiency_ratio) pass = pass && r <= 0.95;
    return {pass, "variance ratios (" + fmt(rep.efficiency_ratio[0]) + ", " + fmt(rep.efficiency_ratio[1]) + ")"};
}

Verdict ac8_poisson() {
    SimConfig cfg = gaussian_config(400, 4, 0.4, 300, 108);
    cfg.family = LinkKind::log;
    cfg.design = IidUniformDesign{-1.0, 1.0, true};
    cfg.beta0 = {0.5, 0.3};
    const MCReport rep = monte_carlo_run(cfg, worker_count());
    bool pass = rep.failure_fraction <= 0.02;
    for (double c : rep.coverage) pass = pass && c >= 0.91 && c <= 0.98;
    return {pass, "coverage (" + fmt(rep.coverage[0]) + ", " + fmt(rep.coverage[1]) + ")"};
}

Verdict ac9_closed_forms() {
    double worst1 = 0.0, worst2 = 0.0;
    bool offdiag_zero = true;
    std::mt19937_64 rng(109);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 5 + trial % 40;
        std::vector<Subject> subjects;
        for (std::size_t i = 0; i < n; ++i) {
            Subject s{Matrix(3, 2), Vector(3, 0.0)};
            for (std::size_t j = 0; j < 3; ++j) {
                s.x(j, 0) = u(rng);
                s.x(j, 1) = 2.0 * u(rng);
            }
            subjects.push_back(s);
        }
        const LongitudinalDataset d(3, 2, subjects);
        const LinkKind kind = trial % 3 == 0 ? LinkKind::identity : trial % 3 == 1 ? LinkKind::logit : LinkKind::log;
        const Vector beta{u(rng), u(rng)};
        const Example1 e = example1_closed_form(d, kind, beta);
        const MatrixStats st = matrix_stats(independence_information(d, eval_model(d, kind, beta)));
        worst1 = std::max({worst1, std::abs(e.lambda_min - st.lambda_min) / st.lambda_min,
                           std::abs(e.lambda_max - st.lambda_max) / st.lambda_max,
                           std::abs(e.sin2_theta * e.u * e.v - st.det) / st.det});

        // Categorical design with p = 3 levels.
        SimConfig cfg;
        cfg.n = n;
        cfg.m = 3;
        cfg.p = 3;
        cfg.design = CategoricalDesign{};
        std::vector<Subject> cat;
        for (const Matrix& x : make_design(cfg, 200 + trial)) cat.push_back({x, Vector(3, 0.0)});
        const LongitudinalDataset dc(3, 3, cat);
        const Vector b3{u(rng), u(rng), u(rng)};
        const Example2 e2 = example2_closed_form(dc, kind, b3);
        const SymMatrix h = independence_information(dc, eval_model(dc, kind, b3));
        for (std::size_t a = 0; a < 3; ++a)
            for (std::size_t c = 0; c < 3; ++c) {
                if (a == c) worst2 = std::max(worst2, std::abs(h(a, a) - e2.nu[a]) / std::max(1.0, e2.nu[a]));
                else offdiag_zero = offdiag_zero && h(a, c) == 0.0;
            }
    }
    return {worst1 <= 1e-10 && worst2 <= 1e-12 && offdiag_zero,
            "example1 worst relative " + fmt(worst1) + ", example2 worst " + fmt(worst2) +
                (offdiag_zero ? ", off-diagonals exactly 0" : ", NONZERO off-diagonal")};
}

Verdict ac10_trends() {
    const SimConfig cfg = gaussian_config(1600, 3, 0.5, 1, 110);
    const auto d = generate(cfg, make_design(cfg, 110), 111);
    const std::size_t grid[] = {100, 400, 1600};
    const TrendReport tr = condition_trend_report(d, LinkKind::identity, cfg.beta0, std::nullopt, grid);

    // Level 2 appears only among the first 100 subjects.
    std::vector<Subject> frozen;
    std::mt19937_64 rng(112);
    std::normal_distribution<double> z;
    for (std::size_t i = 0; i < 1600; ++i) {
        Subject s{Matrix(2, 2), Vector{z(rng), z(rng)}};
        s.x(0, 0) = 1.0;
        s.x(1, i < 100 ? 1 : 0) = 1.0;
        frozen.push_back(s);
    }
    const LongitudinalDataset df(2, 2, frozen);
    const TrendReport tf = condition_trend_report(df, LinkKind::identity, Vector{0.0, 0.0}, std::nullopt, grid);

    std::string detail = "lambda_min(H)/tau";
    for (const auto& r : tr.reports) detail += " " + fmt(r.lambda_min_H_over_tau);
    detail += "; sqrt(n)*pi*gamma~";
    for (const auto& r : tr.reports) detail += " " + fmt(r.sqrt_n_pi_gamma_tilde);
    detail += tf.flagged() ? "; frozen level flagged" : "; frozen level NOT flagged";
    return {tr.lambda_min_H_over_tau_increasing && tr.sqrt_n_pi_gamma_tilde_decreasing && tf.flagged(), detail};
}

std::string run_simulate(const std::string& config_path, const std::string& workers) {
    std::ostringstream out, err;
    const int code = cli::run({"simulate", "--config", config_path, "--workers", workers}, out, err);
    return std::to_string(code) + "\n" + out.str();
}

Verdict ac11_determinism() {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / ("pseudogee_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const std::vector<std::string> configs = {
        R"({"n": 60, "m": 3, "p": 2, "family": "identity", "beta0": [0.5, -1.0],
            "correlation": {"type": "exchangeable", "rho": 0.5}, "replications": 40, "base_seed": 7,
            "subject_dependence": "sign_modulated"})",
        R"({"n": 80, "m": 4, "p": 2, "family": "logit", "beta0": [0.2, 0.8],
            "design": {"type": "iid_uniform", "intercept": true},
            "correlation": {"type": "ar1", "rho": 0.5}, "replications": 30, "base_seed": 8})",
        R"({"n": 60, "m": 3, "p": 3, "family": "log", "beta0": [0.1, 0.2, 0.3],
            "design": {"type": "categorical"},
            "correlation": {"type": "exchangeable", "rho": 0.3}, "replications": 30, "base_seed": 9})",
    };
    bool pass = true;
    for (std::size_t k = 0; k < configs.size(); ++k) {
        const fs::path path = dir / ("config" + std::to_string(k) + ".json");
        std::ofstream(path) << configs[k];
        const std::string a = run_simulate(path.string(), "1");
        const std::string b = run_simulate(path.string(), "1");
        const std::string c = run_simulate(path.string(), "4");
        pass = pass && a.size() > 100 && a == b && a == c && a[0] == '0';
    }
    fs::remove_all(dir);
    return {pass, std::to_string(configs.size()) + " configs, repeat and workers=4 byte-identical"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"AC1 OLS oracle", ac1_ols},
        {"AC2 derivative suite", ac2_derivatives},
        {"AC3 identity-correlation collapse", ac3_collapse},
        {"AC4 correlation estimate consistency", ac4_rtilde},
        {"AC5 root-n consistency", ac5_root_n},
        {"AC6 normality and coverage", ac6_normality},
        {"AC7 efficiency", ac7_efficiency},
        {"AC8 Poisson coverage", ac8_poisson},
        {"AC9 closed-form oracles", ac9_closed_forms},
        {"AC10 condition trends", ac10_trends},
        {"AC11 determinism", ac11_determinism},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %s: %s [%.1fs]\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str(), secs);
        std::fflush(stdout);
        failures += !v.pass;
    }
    return failures == 0 ? 0 : 1;
}
