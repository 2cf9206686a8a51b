#include "pseudogee/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "pseudogee/error.hpp"

namespace pgee {

std::string_view link_name(LinkKind kind) {
    switch (kind) {
    case LinkKind::identity: return "identity";
    case LinkKind::log: return "log";
    case LinkKind::logit: return "logit";
    case LinkKind::probit: return "probit";
    }
    return "identity";
}

std::optional<LinkKind> parse_link(std::string_view name) {
    for (LinkKind k : {LinkKind::identity, LinkKind::log, LinkKind::logit, LinkKind::probit}) {
        if (link_name(k) == name) return k;
    }
    return std::nullopt;
}

// -------------------------------------------------------------------------
// Normal distribution helpers
// -------------------------------------------------------------------------

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -std::numeric_limits<double>::infinity();
        if (p == 1.0) return std::numeric_limits<double>::infinity();
        throw Error(ErrorKind::invalid_input, "normal_quantile: probability outside [0, 1]");
    }
    // Acklam's rational approximation (relative error ~1e-9), then one Halley
    // step against normal_cdf.
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    const double pdf = normal_pdf(x);
    if (pdf > 0.0) {
        // Upper-tail residual avoids cancellation for p near 1.
        const double e = p > 0.5 ? (0.5 * std::erfc(x / std::numbers::sqrt2)) - (1.0 - p)
                                 : normal_cdf(x) - p;
        const double u = (p > 0.5 ? -e : e) / pdf;
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

// -------------------------------------------------------------------------
// Links
// -------------------------------------------------------------------------

namespace {

constexpr double kTiny = std::numeric_limits<double>::min();
constexpr double kLogOverflow = 700.0;

LinkValues logit_values(double theta) {
    // μ and 1-μ each computed without cancellation.
    const double e = std::exp(-std::abs(theta));
    const double big = 1.0 / (1.0 + e);
    const double small = e / (1.0 + e);
    const double mu = theta >= 0.0 ? big : small;
    const double one_minus_mu = theta >= 0.0 ? small : big;
    // log μ̇ = -|θ| - 2 log(1 + e^{-|θ|})
    const double d1 = std::max(std::exp(-std::abs(theta) - 2.0 * std::log1p(e)), kTiny);
    return {mu, d1, d1 * (one_minus_mu - mu), d1 * (1.0 - 6.0 * d1)};
}

LinkValues probit_values(double theta) {
    const double phi = std::max(normal_pdf(theta), kTiny);
    return {normal_cdf(theta), phi, -theta * phi, (theta * theta - 1.0) * phi};
}

}  // namespace

LinkValues link_eval(LinkKind kind, double theta) {
    if (!std::isfinite(theta)) {
        throw Error(ErrorKind::invalid_input, "link_eval: non-finite linear predictor");
    }
    switch (kind) {
    case LinkKind::identity:
        return {theta, 1.0, 0.0, 0.0};
    case LinkKind::log: {
        if (std::abs(theta) > kLogOverflow) {
            std::ostringstream msg;
            msg << "log link overflow at theta = " << theta;
            throw Error(ErrorKind::overflow, msg.str());
        }
        const double e = std::exp(theta);
        return {e, e, e, e};
    }
    case LinkKind::logit:
        return logit_values(theta);
    case LinkKind::probit:
        return probit_values(theta);
    }
    return {};
}

// -------------------------------------------------------------------------
// Dataset
// -------------------------------------------------------------------------

LongitudinalDataset::LongitudinalDataset(std::size_t m, std::size_t p, std::vector<Subject> subjects)
    : m_(m), p_(p), subjects_(std::move(subjects)) {
    if (m_ == 0 || p_ == 0 || subjects_.empty()) {
        throw Error(ErrorKind::shape, "dataset requires n >= 1, m >= 1, p >= 1");
    }
    for (std::size_t i = 0; i < subjects_.size(); ++i) {
        const Subject& s = subjects_[i];
        if (s.x.rows() != m_ || s.x.cols() != p_ || s.y.size() != m_) {
            std::ostringstream msg;
            msg << "subject " << i << " has design " << s.x.rows() << "x" << s.x.cols()
                << " and " << s.y.size() << " responses, expected " << m_ << "x" << p_;
            throw Error(ErrorKind::shape, msg.str());
        }
        for (double v : s.x.data()) {
            if (!std::isfinite(v)) {
                throw Error(ErrorKind::invalid_input,
                            "subject " + std::to_string(i) + " has a non-finite covariate");
            }
        }
        for (double v : s.y) {
            if (!std::isfinite(v)) {
                throw Error(ErrorKind::invalid_input,
                            "subject " + std::to_string(i) + " has a non-finite response");
            }
        }
    }
}

LongitudinalDataset LongitudinalDataset::prefix(std::size_t count) const {
    if (count == 0 || count > n()) {
        throw Error(ErrorKind::precondition, "prefix size must be in [1, n]");
    }
    return LongitudinalDataset(m_, p_, {subjects_.begin(), subjects_.begin() + count});
}

ModelEval eval_model(const LongitudinalDataset& data, LinkKind family, std::span<const double> beta) {
    if (beta.size() != data.p()) throw Error(ErrorKind::shape, "beta length differs from p");
    for (double b : beta) {
        if (!std::isfinite(b)) throw Error(ErrorKind::invalid_input, "beta has a non-finite entry");
    }
    ModelEval out;
    out.subjects.reserve(data.n());
    const std::size_t m = data.m();
    for (std::size_t i = 0; i < data.n(); ++i) {
        const Subject& s = data.subject(i);
        SubjectEval ev{Vector(m), Vector(m), Vector(m), Vector(m)};
        for (std::size_t j = 0; j < m; ++j) {
            const double theta = dot(s.x.row(j), beta);
            LinkValues lv;
            try {
                lv = link_eval(family, theta);
            } catch (const Error& e) {
                std::ostringstream msg;
                msg << e.what() << " (subject " << i << ", time " << j + 1 << ")";
                throw Error(e.kind(), msg.str());
            }
            ev.theta[j] = theta;
            ev.mu[j] = lv.mu;
            ev.var[j] = lv.d1;
            ev.eps[j] = s.y[j] - lv.mu;
        }
        out.subjects.push_back(std::move(ev));
    }
    return out;
}

SymMatrix independence_information(const LongitudinalDataset& data, const ModelEval& ev) {
    const std::size_t p = data.p();
    Matrix h(p, p);
    for (std::size_t i = 0; i < data.n(); ++i) {
        const Matrix& x = data.subject(i).x;
        const Vector& var = ev.subjects[i].var;
        for (std::size_t j = 0; j < data.m(); ++j) {
            for (std::size_t a = 0; a < p; ++a) {
                const double wa = var[j] * x(j, a);
                for (std::size_t b = a; b < p; ++b) h(a, b) += wa * x(j, b);
            }
        }
    }
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < a; ++b) h(a, b) = h(b, a);
    return SymMatrix(h);
}

}  // namespace pgee
