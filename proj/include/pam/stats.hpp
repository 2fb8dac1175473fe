#pragma once
// Small statistics toolbox: moment accumulation, Monte Carlo estimates with
// standard errors, weighted least squares, and log-domain means for
// quantities that live at exponential scales.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace pam {

// A Monte Carlo estimate.  `log_value` carries log(value) computed in a
// shifted domain so it stays finite even when `value` under/overflows.
struct Estimate {
    double value = 0;
    double stderror = 0;
    long replicas = 0;
    double log_value = -std::numeric_limits<double>::infinity();
    std::uint64_t seed = 0;
    std::string spec_digest;
};

struct Moments {
    long n = 0;
    double mean = 0;
    double m2 = 0; // sum of squared deviations (Welford)

    void add(double x) {
        ++n;
        double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
    double stderror() const { return n > 0 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
};

inline Estimate estimate_from(const Moments& m) {
    Estimate e;
    e.value = m.mean;
    e.stderror = m.stderror();
    e.replicas = m.n;
    e.log_value = m.mean > 0 ? std::log(m.mean) : -std::numeric_limits<double>::infinity();
    return e;
}

inline Estimate estimate_from(const std::vector<double>& xs) {
    Moments m;
    for (double x : xs) m.add(x);
    return estimate_from(m);
}

inline double median_of(std::vector<double> xs) {
    if (xs.empty()) throw std::invalid_argument("median of empty sample");
    std::size_t mid = xs.size() / 2;
    std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid), xs.end());
    double hi = xs[mid];
    if (xs.size() % 2 == 1) return hi;
    double lo = *std::max_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

// Mean and stderr of exp(l_i) given the logs l_i, accumulated around the
// maximum so the result is meaningful even when exp(l_i) underflows.
// Returns value/stderr in linear scale plus a finite log of the mean.
inline Estimate estimate_from_logs(const std::vector<double>& logs) {
    if (logs.empty()) throw std::invalid_argument("estimate_from_logs: empty sample");
    double M = -std::numeric_limits<double>::infinity();
    for (double l : logs) M = std::max(M, l);
    Estimate e;
    e.replicas = static_cast<long>(logs.size());
    if (!std::isfinite(M)) { // all samples are exactly zero
        e.value = 0; e.stderror = 0; e.log_value = M;
        return e;
    }
    Moments m;
    for (double l : logs) m.add(std::exp(l - M));
    e.log_value = M + std::log(m.mean);
    e.value = std::exp(e.log_value);
    e.stderror = std::exp(M) * m.stderror();
    return e;
}

struct LineFit {
    double slope = 0;
    double intercept = 0;
    double slope_stderr = 0;
    double intercept_stderr = 0;
    long points = 0;
};

// Weighted least squares y = a + b x with known per-point standard errors.
// slope_stderr is the usual 1/sqrt(sum w (x - xbar_w)^2) propagation.
inline LineFit weighted_line_fit(const std::vector<double>& x, const std::vector<double>& y,
                                 const std::vector<double>& sigma) {
    if (x.size() != y.size() || x.size() != sigma.size() || x.size() < 2)
        throw std::invalid_argument("weighted_line_fit: need >= 2 points with matching sigmas");
    double sw = 0, swx = 0, swy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double s = sigma[i] > 0 ? sigma[i] : 1e-300;
        double w = 1.0 / (s * s);
        sw += w; swx += w * x[i]; swy += w * y[i];
    }
    double xbar = swx / sw, ybar = swy / sw;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double s = sigma[i] > 0 ? sigma[i] : 1e-300;
        double w = 1.0 / (s * s);
        sxx += w * (x[i] - xbar) * (x[i] - xbar);
        sxy += w * (x[i] - xbar) * (y[i] - ybar);
    }
    if (sxx <= 0) throw std::invalid_argument("weighted_line_fit: degenerate x values");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = ybar - f.slope * xbar;
    f.slope_stderr = std::sqrt(1.0 / sxx);
    f.intercept_stderr = std::sqrt(1.0 / sw + xbar * xbar / sxx);
    f.points = static_cast<long>(x.size());
    return f;
}

// Two-sample z score for means given each side's standard error.
inline double z_mean_difference(double m1, double se1, double m2, double se2) {
    return (m1 - m2) / std::sqrt(se1 * se1 + se2 * se2);
}

// Approximate z score for equality of variances via log-variance
// (Var log s^2 ~ 2/(n-1) under normality).
inline double z_variance_ratio(double v1, long n1, double v2, long n2) {
    if (v1 <= 0 || v2 <= 0) throw std::invalid_argument("z_variance_ratio: nonpositive variance");
    double se = std::sqrt(2.0 / static_cast<double>(n1 - 1) + 2.0 / static_cast<double>(n2 - 1));
    return (std::log(v1) - std::log(v2)) / se;
}

} // namespace pam
