#include "pseudogee/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "pseudogee/diagnostics.hpp"
#include "pseudogee/error.hpp"
#include "pseudogee/estimator.hpp"
#include "pseudogee/io.hpp"
#include "pseudogee/simulator.hpp"

namespace pgee::cli {

using io::Json;

namespace {

void report_error(std::ostream& err, std::string_view kind, const std::string& detail) {
    err << io::dump(Json{{"error", kind}, {"detail", detail}});
}

void emit(const CliConfig& cfg, const std::string& text, std::ostream& out) {
    if (cfg.out_path.empty()) {
        out << text;
        return;
    }
    std::ofstream f(cfg.out_path, std::ios::binary);
    if (!f) throw Error(ErrorKind::invalid_input, "cannot write " + cfg.out_path);
    f << text;
}

LongitudinalDataset load_dataset(const CliConfig& cfg) {
    io::ParsedDataset parsed = io::parse_dataset_csv_file(cfg.data_path);
    if (!cfg.shuffle_seed) return std::move(parsed.data);
    std::vector<Subject> subjects = parsed.data.subjects();
    RandomStream rng(*cfg.shuffle_seed);
    for (std::size_t c = subjects.size(); c > 1; --c) std::swap(subjects[c - 1], subjects[rng.below(c)]);
    return LongitudinalDataset(parsed.data.m(), parsed.data.p(), std::move(subjects));
}

Json optional_matrix(const std::optional<SymMatrix>& m) {
    return m ? io::to_json(*m) : Json(nullptr);
}

std::vector<std::size_t> default_grid(std::size_t n) {
    std::vector<std::size_t> grid;
    for (std::size_t size : {n / 16, n / 4, n})
        if (size >= 10 && (grid.empty() || size > grid.back())) grid.push_back(size);
    if (grid.empty()) grid.push_back(n);
    return grid;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const Error& e) {
        report_error(err, kind_name(e.kind()), e.what());
    } catch (const std::exception& e) {
        report_error(err, "internal", e.what());
    }
    return kError;
}

}  // namespace

int cmd_fit(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const LongitudinalDataset data = load_dataset(cfg);
        FitResult fit;
        if (cfg.method == Method::two_step) {
            fit = two_step_fit(data, cfg.link);
        } else {
            fit = gee_independence_fit(data, cfg.link, Vector(data.p(), 0.0));
            if (fit.converged) {
                fit.cov_beta = sandwich_covariance(data, cfg.link, fit.beta_hat,
                                                   identity_correlation(data.m(), fit.beta_hat))
                                   .cov_beta;
            }
        }

        Json stderr_json = nullptr;
        Json ci_json = nullptr;
        if (fit.cov_beta) {
            stderr_json = Json::array();
            for (std::size_t k = 0; k < data.p(); ++k)
                stderr_json.push_back(std::sqrt(std::max(0.0, (*fit.cov_beta)(k, k))));
            ci_json = Json::array();
            for (const Interval& iv : wald_intervals(fit, cfg.ci_level))
                ci_json.push_back(Json::array({iv.lower, iv.upper}));
        }
        const bool two_step = cfg.method == Method::two_step;
        const Json doc{
            {"beta_hat", fit.beta_hat},
            {"cov_beta", optional_matrix(fit.cov_beta)},
            {"stderr", stderr_json},
            {"wald_ci", ci_json},
            {"ci_level", cfg.ci_level},
            {"converged", fit.converged},
            {"iterations", fit.iterations},
            {"final_gnorm", fit.final_gnorm},
            {"method", two_step ? "two-step" : "independence"},
            {"R_tilde", two_step && fit.correlation_used ? io::to_json(fit.correlation_used->r_tilde)
                                                         : Json(nullptr)},
            {"fallback_flag", fit.fallback},
        };
        emit(cfg, io::dump(doc), out);
        return fit.converged ? kSuccess : kWarning;
    });
}

int cmd_diagnose(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const LongitudinalDataset data = load_dataset(cfg);
        Vector beta;
        std::string source = "supplied";
        if (cfg.beta) {
            if (cfg.beta->size() != data.p()) throw Error(ErrorKind::shape, "--beta length differs from p");
            beta = *cfg.beta;
        } else {
            const FitResult prelim = gee_independence_fit(data, cfg.link, Vector(data.p(), 0.0));
            if (!prelim.converged) {
                throw Error(ErrorKind::precondition, "preliminary independence fit did not converge");
            }
            beta = prelim.beta_hat;
            source = "independence-fit";
        }

        const CorrelationEstimate corr = estimate_correlation(data, cfg.link, beta);
        std::optional<SymMatrix> m_hat;
        try {
            const SymMatrix mh = sandwich_covariance(data, cfg.link, beta, corr).m_hat;
            if (sym_eigen(mh).values.front() > pd_tolerance(mh)) m_hat = mh;
        } catch (const NotPositiveDefinite&) {
        }
        const DiagnosticsReport rep = design_diagnostics(data, cfg.link, beta, corr.r_tilde, m_hat);
        const SmoothnessMaxima k = smoothness_maxima(data, cfg.link, beta, cfg.radius, corr.r_tilde);

        Json ex1 = nullptr;
        if (data.p() == 2) ex1 = io::to_json(example1_closed_form(data, cfg.link, beta));
        Json ex2 = nullptr;
        try {
            ex2 = io::to_json(example2_closed_form(data, cfg.link, beta));
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::shape) throw;
        }

        const std::vector<std::size_t> grid = cfg.grid.empty() ? default_grid(data.n()) : cfg.grid;
        const TrendReport trend =
            condition_trend_report(data, cfg.link, beta, std::nullopt, grid, TrendOptions{cfg.det_floor});
        Json rows = Json::array();
        for (const DiagnosticsReport& r : trend.reports) rows.push_back(io::to_json(r));

        const Json doc{
            {"beta", beta},
            {"beta_source", source},
            {"R_tilde", io::to_json(corr.r_tilde)},
            {"report", io::to_json(rep)},
            {"smoothness", Json{{"radius", cfg.radius}, {"k2", k.k2}, {"k3", k.k3}}},
            {"example1", ex1},
            {"example2", ex2},
            {"grid", grid},
            {"trend", rows},
            {"trend_det_R", trend.det_R},
            {"trend_flags",
             Json{{"lambda_min_H_indep_increasing", trend.lambda_min_H_indep_increasing},
                  {"lambda_min_H_over_tau_increasing", trend.lambda_min_H_over_tau_increasing},
                  {"pi2_gamma_tilde_decreasing", trend.pi2_gamma_tilde_decreasing},
                  {"sqrt_n_pi_gamma_tilde_decreasing", trend.sqrt_n_pi_gamma_tilde_decreasing},
                  {"sqrt_n_gamma0_indep_decreasing", trend.sqrt_n_gamma0_indep_decreasing},
                  {"det_R_above_floor", trend.det_R_above_floor},
                  {"det_floor", cfg.det_floor},
                  {"flagged", trend.flagged()}}},
        };
        emit(cfg, io::dump(doc), out);
        return kSuccess;
    });
}

int cmd_simulate(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        std::ifstream in(cfg.sim_config_path);
        if (!in) throw Error(ErrorKind::config, "cannot open " + cfg.sim_config_path);
        Json j;
        try {
            j = Json::parse(in);
        } catch (const Json::parse_error& e) {
            throw Error(ErrorKind::config, std::string("invalid JSON: ") + e.what());
        }
        SimConfig sim = io::sim_config_from_json(j);
        if (cfg.seed) sim.base_seed = *cfg.seed;

        const MCReport rep = monte_carlo_run(sim, cfg.workers);
        emit(cfg, io::dump(io::to_json(rep)), out);
        if (!cfg.dump_csv_path.empty()) {
            std::ofstream f(cfg.dump_csv_path, std::ios::binary);
            if (!f) throw Error(ErrorKind::invalid_input, "cannot write " + cfg.dump_csv_path);
            io::write_replicates_csv(f, rep, sim.p);
        }
        return rep.failure_fraction <= 0.02 ? kSuccess : kWarning;
    });
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CliConfig cfg;
    CLI::App app{"Two-step pseudo-likelihood GEE for longitudinal marginal models", "pseudogee"};
    app.require_subcommand(1);

    std::string link = "identity";
    std::string method = "two-step";
    std::string beta_text;

    auto add_data_opts = [&](CLI::App* sub) {
        sub->add_option("--data", cfg.data_path, "Long-format CSV: subject,time,y,x1,...,xp")->required();
        sub->add_option("--link", link, "identity | log | logit | probit");
        sub->add_option("--out", cfg.out_path, "Output JSON path (default: stdout)");
        sub->add_option("--shuffle-subjects", cfg.shuffle_seed, "Permute subject order with this seed");
    };

    CLI::App* fit = app.add_subcommand("fit", "Fit the marginal model");
    add_data_opts(fit);
    fit->add_option("--method", method, "independence | two-step");
    fit->add_option("--ci-level", cfg.ci_level, "Wald interval level");

    CLI::App* diag = app.add_subcommand("diagnose", "Regularity diagnostics at a given beta");
    add_data_opts(diag);
    diag->add_option("--beta", beta_text, "Comma-separated beta (default: independence fit)");
    diag->add_option("--grid", cfg.grid, "Increasing subject-prefix sizes")->delimiter(',');
    diag->add_option("--det-floor", cfg.det_floor, "Floor for det(R) in the trend check");
    diag->add_option("--radius", cfg.radius, "Radius r for the smoothness maxima probes");

    CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo verification run");
    sim->add_option("--config", cfg.sim_config_path, "Simulation config JSON")->required();
    sim->add_option("--out", cfg.out_path, "Output JSON path (default: stdout)");
    sim->add_option("--seed", cfg.seed, "Override base_seed");
    sim->add_option("--workers", cfg.workers, "Parallel replicate workers")->check(CLI::PositiveNumber);
    sim->add_option("--dump-csv", cfg.dump_csv_path, "Per-replicate CSV output");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kSuccess;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kSuccess;
    } catch (const CLI::ParseError& e) {
        report_error(err, "config", e.what());
        return kError;
    }

    const auto parsed_link = parse_link(link);
    if (!parsed_link) {
        report_error(err, "config", "unknown link '" + link + "'");
        return kError;
    }
    cfg.link = *parsed_link;
    if (method == "independence") {
        cfg.method = Method::independence;
    } else if (method == "two-step") {
        cfg.method = Method::two_step;
    } else {
        report_error(err, "config", "unknown method '" + method + "'");
        return kError;
    }
    if (!(cfg.ci_level > 0.0 && cfg.ci_level < 1.0)) {
        report_error(err, "config", "--ci-level must lie in (0, 1)");
        return kError;
    }
    if (!beta_text.empty()) {
        Vector beta;
        std::stringstream ss(beta_text);
        std::string tok;
        try {
            while (std::getline(ss, tok, ',')) beta.push_back(std::stod(tok));
        } catch (const std::exception&) {
            report_error(err, "config", "--beta must be comma-separated numbers");
            return kError;
        }
        cfg.beta = beta;
    }

    if (fit->parsed()) {
        cfg.subcommand = Subcommand::fit;
        return cmd_fit(cfg, out, err);
    }
    if (diag->parsed()) {
        cfg.subcommand = Subcommand::diagnose;
        return cmd_diagnose(cfg, out, err);
    }
    cfg.subcommand = Subcommand::simulate;
    return cmd_simulate(cfg, out, err);
}

}  // namespace pgee::cli
