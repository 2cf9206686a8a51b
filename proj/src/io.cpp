#include "pseudogee/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "pseudogee/error.hpp"

namespace pgee::io {

namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    for (std::string& f : out) {
        const auto b = f.find_first_not_of(" \t");
        const auto e = f.find_last_not_of(" \t");
        f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
    }
    return out;
}

double parse_number(const std::string& s, std::size_t row, std::size_t col) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (s.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
        std::ostringstream msg;
        msg << "row " << row << ", column " << col + 1 << ": cannot parse '" << s << "' as a number";
        throw Error(ErrorKind::parse, msg.str());
    }
    return v;
}

}  // namespace

ParsedDataset parse_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::schema, "empty CSV input");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const std::vector<std::string> header = split_fields(line);
    if (header.size() < 4 || header[0] != "subject" || header[1] != "time" || header[2] != "y") {
        throw Error(ErrorKind::schema, "header must be subject,time,y,x1,...,xp");
    }
    const std::size_t p = header.size() - 3;
    for (std::size_t k = 0; k < p; ++k) {
        if (header[3 + k] != "x" + std::to_string(k + 1)) {
            throw Error(ErrorKind::schema, "covariate column " + std::to_string(k + 4) + " must be named x" +
                                               std::to_string(k + 1));
        }
    }

    struct Row {
        std::size_t time;
        double y;
        Vector x;
    };
    std::vector<std::string> order;
    std::unordered_map<std::string, std::map<std::size_t, Row>> rows;
    std::size_t max_time = 0;
    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::vector<std::string> f = split_fields(line);
        if (f.size() != header.size()) {
            std::ostringstream msg;
            msg << "row " << row_no << " has " << f.size() << " fields, expected " << header.size();
            throw Error(ErrorKind::parse, msg.str());
        }
        const std::string& id = f[0];
        if (id.empty()) throw Error(ErrorKind::parse, "row " + std::to_string(row_no) + ": empty subject id");

        const double t = parse_number(f[1], row_no, 1);
        if (t < 1.0 || t != std::floor(t) || t > 1e9) {
            std::ostringstream msg;
            msg << "row " << row_no << ": time must be a positive integer, got '" << f[1] << "'";
            throw Error(ErrorKind::schema, msg.str());
        }
        const auto time = static_cast<std::size_t>(t);
        Row r{time, parse_number(f[2], row_no, 2), Vector(p)};
        for (std::size_t k = 0; k < p; ++k) r.x[k] = parse_number(f[3 + k], row_no, 3 + k);

        auto [it, fresh] = rows.try_emplace(id);
        if (fresh) order.push_back(id);
        if (!it->second.emplace(time, std::move(r)).second) {
            std::ostringstream msg;
            msg << "subject " << id << " has duplicate time " << time;
            throw Error(ErrorKind::schema, msg.str());
        }
        max_time = std::max(max_time, time);
    }
    if (order.empty()) throw Error(ErrorKind::schema, "CSV has no data rows");

    const std::size_t m = max_time;
    std::vector<Subject> subjects;
    subjects.reserve(order.size());
    for (const std::string& id : order) {
        const auto& by_time = rows.at(id);
        if (by_time.size() != m) {
            std::ostringstream msg;
            msg << "subject " << id << " has " << by_time.size() << " rows, expected " << m;
            throw Error(ErrorKind::schema, msg.str());
        }
        Subject s{Matrix(m, p), Vector(m)};
        std::size_t j = 0;
        for (const auto& [time, r] : by_time) {
            // m distinct times in 1..m are exactly 1..m.
            s.y[j] = r.y;
            for (std::size_t k = 0; k < p; ++k) s.x(j, k) = r.x[k];
            ++j;
        }
        subjects.push_back(std::move(s));
    }
    return {LongitudinalDataset(m, p, std::move(subjects)), order};
}

ParsedDataset parse_dataset_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::parse, "cannot open " + path);
    return parse_dataset_csv(in);
}

void write_dataset_csv(std::ostream& out, const LongitudinalDataset& data,
                       const std::vector<std::string>& subject_ids) {
    out << "subject,time,y";
    for (std::size_t k = 0; k < data.p(); ++k) out << ",x" << k + 1;
    out << "\n";
    for (std::size_t i = 0; i < data.n(); ++i) {
        const std::string id = subject_ids.empty() ? std::to_string(i + 1) : subject_ids.at(i);
        const Subject& s = data.subject(i);
        for (std::size_t j = 0; j < data.m(); ++j) {
            out << id << "," << j + 1 << "," << format_double(s.y[j]);
            for (std::size_t k = 0; k < data.p(); ++k) out << "," << format_double(s.x(j, k));
            out << "\n";
        }
    }
}

// -------------------------------------------------------------------------
// JSON
// -------------------------------------------------------------------------

namespace {

void dump_into(const Json& j, std::string& out) {
    switch (j.type()) {
    case Json::value_t::object: {
        out.push_back('{');
        bool first = true;
        for (auto it = j.begin(); it != j.end(); ++it) {  // std::map order: sorted
            if (!first) out.push_back(',');
            first = false;
            out += Json(it.key()).dump();
            out.push_back(':');
            dump_into(it.value(), out);
        }
        out.push_back('}');
        break;
    }
    case Json::value_t::array: {
        out.push_back('[');
        for (std::size_t k = 0; k < j.size(); ++k) {
            if (k) out.push_back(',');
            dump_into(j[k], out);
        }
        out.push_back(']');
        break;
    }
    case Json::value_t::number_float: {
        const double v = j.get<double>();
        out += std::isfinite(v) ? format_double(v) : "null";
        break;
    }
    default:
        out += j.dump();
    }
}

template <class T>
Json optional_json(const std::optional<T>& v) {
    return v ? Json(*v) : Json(nullptr);
}

}  // namespace

std::string dump(const Json& j) {
    std::string out;
    dump_into(j, out);
    out.push_back('\n');
    return out;
}

Json to_json(const Matrix& m) {
    Json rows = Json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Json to_json(const SymMatrix& m) { return to_json(m.matrix()); }

Json to_json(const DiagnosticsReport& rep) {
    return Json{
        {"n", rep.n},
        {"H_indep", to_json(rep.H_indep)},
        {"H_general", to_json(rep.H_general)},
        {"lambda_min_H_indep", rep.lambda_min_H_indep},
        {"lambda_min_H_general", rep.lambda_min_H_general},
        {"gamma0_indep", rep.gamma0_indep},
        {"pi_n", rep.pi_n},
        {"tau_tilde_n", rep.tau_tilde_n},
        {"gamma0", rep.gamma0},
        {"gamma_tilde", rep.gamma_tilde},
        {"gamma_D", rep.gamma_D},
        {"c_n", optional_json(rep.c_n)},
        {"k2", rep.k2},
        {"k3", rep.k3},
        {"sqrt_n_times_gamma0_indep", rep.sqrt_n_times_gamma0_indep},
        {"pi2_gamma_tilde", rep.pi2_gamma_tilde},
        {"sqrt_n_pi_gamma_tilde", rep.sqrt_n_pi_gamma_tilde},
        {"lambda_min_H_over_tau", rep.lambda_min_H_over_tau},
        {"det_R", rep.det_R},
        {"lambda_min_R", rep.lambda_min_R},
        {"max_variance", rep.max_variance},
        {"tau_n_oracle", optional_json(rep.tau_n_oracle)},
        {"lambda_min_Rbar", optional_json(rep.lambda_min_Rbar)},
    };
}

Json to_json(const Example1& e) {
    return Json{{"u", e.u},
                {"v", e.v},
                {"w", e.w},
                {"d", e.d},
                {"lambda_min", e.lambda_min},
                {"lambda_max", e.lambda_max},
                {"sin2_theta", e.sin2_theta},
                {"gamma0_bound", e.gamma0_bound}};
}

Json to_json(const Example2& e) { return Json{{"nu", e.nu}, {"nu_min", e.nu_min}}; }

Json to_json(const MCReport& rep) {
    Json records = Json::array();
    for (const ReplicateRecord& r : rep.records) {
        records.push_back(Json{
            {"index", r.index},
            {"seed", r.seed},
            {"converged", r.converged},
            {"fallback", r.fallback},
            {"error", r.error.empty() ? Json(nullptr) : Json(r.error)},
            {"beta_hat", r.beta_hat},
            {"beta_indep", r.beta_indep},
            {"stderr", r.stderr_},
            {"covered", r.covered},
            {"z", optional_json(r.z)},
            {"rtilde_mean_abs_error", r.rtilde_mean_abs_error},
            {"rtilde_max_abs_error", r.rtilde_max_abs_error},
        });
    }
    return Json{
        {"replications", rep.replications},
        {"failures", rep.failures},
        {"fallbacks", rep.fallbacks},
        {"successes", rep.successes},
        {"failure_fraction", rep.failure_fraction},
        {"bias", rep.bias},
        {"variance", rep.variance},
        {"rmse", rep.rmse},
        {"coverage", rep.coverage},
        {"variance_indep", rep.variance_indep},
        {"efficiency_ratio", rep.efficiency_ratio},
        {"median_error_norm", rep.median_error_norm},
        {"z_count", rep.z_count},
        {"z_within_1_96", optional_json(rep.z_within_1_96)},
        {"ks_distance", optional_json(rep.ks_distance)},
        {"rtilde_mean_abs_error", rep.rtilde_mean_abs_error},
        {"rtilde_mean_max_abs_error", rep.rtilde_mean_max_abs_error},
        {"rtilde_max_abs_error", rep.rtilde_max_abs_error},
        {"lambda_min_Rbar", rep.lambda_min_Rbar},
        {"tau_n_oracle_mean", optional_json(rep.tau_n_oracle_mean)},
        {"warnings", rep.warnings},
        {"records", std::move(records)},
    };
}

// -------------------------------------------------------------------------
// Simulation config
// -------------------------------------------------------------------------

namespace {

[[noreturn]] void schema_error(const std::string& msg) { throw Error(ErrorKind::config, msg); }

template <class T>
T required(const Json& j, const char* key) {
    if (!j.contains(key)) schema_error(std::string("missing key '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception&) {
        schema_error(std::string("key '") + key + "' has the wrong type");
    }
}

template <class T>
T optional_key(const Json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception&) {
        schema_error(std::string("key '") + key + "' has the wrong type");
    }
}

}  // namespace

SimConfig sim_config_from_json(const Json& j) {
    if (!j.is_object()) schema_error("simulation config must be a JSON object");
    SimConfig cfg;
    cfg.n = required<std::size_t>(j, "n");
    cfg.m = required<std::size_t>(j, "m");
    cfg.p = required<std::size_t>(j, "p");
    const auto family = parse_link(required<std::string>(j, "family"));
    if (!family) schema_error("unknown family");
    cfg.family = *family;
    cfg.beta0 = required<Vector>(j, "beta0");

    const Json design = optional_key<Json>(j, "design", Json{{"type", "iid_uniform"}});
    const std::string dtype = required<std::string>(design, "type");
    if (dtype == "iid_uniform") {
        cfg.design = IidUniformDesign{optional_key(design, "lo", -1.0), optional_key(design, "hi", 1.0),
                                      optional_key(design, "intercept", false)};
    } else if (dtype == "grid") {
        cfg.design = GridDesign{optional_key(design, "lo", -1.0), optional_key(design, "hi", 1.0),
                                optional_key<std::size_t>(design, "levels", 5)};
    } else if (dtype == "categorical") {
        cfg.design = CategoricalDesign{};
    } else {
        schema_error("unknown design type '" + dtype + "'");
    }

    const Json corr = required<Json>(j, "correlation");
    const std::string ctype = required<std::string>(corr, "type");
    if (ctype == "exchangeable") {
        cfg.correlation = Exchangeable{required<double>(corr, "rho")};
    } else if (ctype == "ar1") {
        cfg.correlation = Ar1{required<double>(corr, "rho")};
    } else if (ctype == "custom") {
        const auto rows = required<std::vector<std::vector<double>>>(corr, "matrix");
        Matrix mtx(rows.size(), rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != rows.size()) schema_error("custom correlation must be square");
            for (std::size_t c = 0; c < rows.size(); ++c) mtx(r, c) = rows[r][c];
        }
        if (max_abs_diff(mtx, mtx.transpose()) != 0.0) schema_error("custom correlation must be symmetric");
        cfg.correlation = CustomCorrelation{SymMatrix(mtx)};
    } else {
        schema_error("unknown correlation type '" + ctype + "'");
    }

    const std::string dep = optional_key<std::string>(j, "subject_dependence", "independent");
    if (dep == "independent") {
        cfg.subject_dependence = SubjectDependence::independent;
    } else if (dep == "sign_modulated") {
        cfg.subject_dependence = SubjectDependence::sign_modulated;
    } else {
        schema_error("unknown subject_dependence '" + dep + "'");
    }

    cfg.replications = required<std::size_t>(j, "replications");
    cfg.base_seed = required<std::uint64_t>(j, "base_seed");
    cfg.ci_level = optional_key(j, "ci_level", 0.95);
    cfg.noise_scale = optional_key(j, "noise_scale", 1.0);
    if (j.contains("solver")) {
        const Json& s = j.at("solver");
        cfg.solver.max_iter = optional_key(s, "max_iter", cfg.solver.max_iter);
        cfg.solver.grad_tol = optional_key(s, "grad_tol", cfg.solver.grad_tol);
        cfg.solver.step_tol = optional_key(s, "step_tol", cfg.solver.step_tol);
        cfg.solver.step_halving_max = optional_key(s, "step_halving_max", cfg.solver.step_halving_max);
    }
    validate_config(cfg);
    return cfg;
}

void write_replicates_csv(std::ostream& out, const MCReport& rep, std::size_t p) {
    out << "index,seed,converged";
    for (std::size_t a = 0; a < p; ++a) out << ",beta_hat" << a + 1;
    for (std::size_t a = 0; a < p; ++a) out << ",z" << a + 1;
    for (std::size_t a = 0; a < p; ++a) out << ",covered" << a + 1;
    out << "\n";
    for (const ReplicateRecord& r : rep.records) {
        out << r.index << "," << r.seed << "," << (r.converged ? 1 : 0);
        for (std::size_t a = 0; a < p; ++a)
            out << "," << (a < r.beta_hat.size() ? format_double(r.beta_hat[a]) : "");
        for (std::size_t a = 0; a < p; ++a) out << "," << (r.z ? format_double((*r.z)[a]) : "");
        for (std::size_t a = 0; a < p; ++a) out << "," << (a < r.covered.size() ? std::to_string(r.covered[a]) : "");
        out << "\n";
    }
}

}  // namespace pgee::io
