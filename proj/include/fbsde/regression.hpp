#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "fbsde/errors.hpp"

namespace fbsde {

/// Result of a least-squares Monte Carlo conditional-expectation fit.
struct RegressionFit {
    std::vector<double> fitted;       // per-path fitted values
    std::vector<double> coeffs;       // basis weights (empty on mean fallback)
    std::vector<double> normal_inv;   // (B'B + ridge)^-1, k x k row-major
    double residual_var = 0.0;        // unbiased residual variance
    double condition_estimate = 1.0;  // diag-ratio proxy from the Cholesky
    double fallback_mean = 0.0;       // ensemble mean, used when degenerate
    std::size_t n_obs = 0;
    bool mean_fallback = false;

    /// OLS standard error of the fitted value at feature row x.
    double fitted_se(std::span<const double> x) const {
        if (mean_fallback || normal_inv.empty())
            return std::sqrt(residual_var /
                             static_cast<double>(std::max<std::size_t>(1, n_obs)));
        const std::size_t k = x.size();
        double quad = 0.0;
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
                quad += x[i] * normal_inv[i * k + j] * x[j];
        return std::sqrt(std::max(0.0, residual_var * quad));
    }

    /// Drop the per-path fitted values (they dominate memory on large
    /// ensembles once copied into the solution arrays).
    void shrink() {
        fitted.clear();
        fitted.shrink_to_fit();
    }
};

namespace detail {

/// In-place Cholesky of a k x k SPD matrix (row-major lower factor).
/// Returns false if a pivot degenerates.
inline bool cholesky(std::vector<double>& m, std::size_t k) {
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = m[i * k + j];
            for (std::size_t p = 0; p < j; ++p)
                s -= m[i * k + p] * m[j * k + p];
            if (i == j) {
                if (s <= 0.0 || !std::isfinite(s)) return false;
                m[i * k + i] = std::sqrt(s);
            } else {
                m[i * k + j] = s / m[j * k + j];
            }
        }
    }
    return true;
}

inline void cholesky_solve(const std::vector<double>& chol, std::size_t k,
                           std::vector<double>& rhs) {
    for (std::size_t i = 0; i < k; ++i) {
        double s = rhs[i];
        for (std::size_t j = 0; j < i; ++j) s -= chol[i * k + j] * rhs[j];
        rhs[i] = s / chol[i * k + i];
    }
    for (std::size_t ii = k; ii-- > 0;) {
        double s = rhs[ii];
        for (std::size_t j = ii + 1; j < k; ++j) s -= chol[j * k + ii] * rhs[j];
        rhs[ii] = s / chol[ii * k + ii];
    }
}

}  // namespace detail

inline constexpr double kRegressionRidge = 1e-10;

/// Ordinary least squares of targets on the feature matrix (n rows, k
/// columns, row-major) via ridge-stabilized normal equations. Accumulation
/// runs in fixed path order, so results are reproducible. Falls back to the
/// ensemble mean when the normal matrix is degenerate beyond the ridge.
inline RegressionFit regress_conditional(std::span<const double> targets,
                                         std::span<const double> features,
                                         std::size_t k) {
    const std::size_t n = targets.size();
    if (k == 0 || features.size() != n * k)
        throw ConfigError("regress_conditional: feature matrix shape mismatch");
    if (n < 10 * k)
        throw ConfigError(
            "regress_conditional: need n_paths >= 10 x basis size");

    RegressionFit fit;
    std::vector<double> gram(k * k, 0.0);
    std::vector<double> rhs(k, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const double* x = features.data() + r * k;
        for (std::size_t i = 0; i < k; ++i) {
            rhs[i] += x[i] * targets[r];
            for (std::size_t j = 0; j <= i; ++j)
                gram[i * k + j] += x[i] * x[j];
        }
    }
    double diag_max = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < i; ++j) gram[j * k + i] = gram[i * k + j];
        diag_max = std::max(diag_max, gram[i * k + i]);
    }
    const double ridge = kRegressionRidge * std::max(1.0, diag_max);
    for (std::size_t i = 0; i < k; ++i) gram[i * k + i] += ridge;

    std::vector<double> chol = gram;
    double mean = 0.0;
    for (double t : targets) mean += t;
    mean /= static_cast<double>(n);
    fit.fallback_mean = mean;
    fit.n_obs = n;

    if (diag_max == 0.0 || !detail::cholesky(chol, k)) {
        fit.mean_fallback = true;
        fit.fitted.assign(n, mean);
        double ss = 0.0;
        for (double t : targets) ss += (t - mean) * (t - mean);
        fit.residual_var = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
        fit.condition_estimate = std::numeric_limits<double>::infinity();
        return fit;
    }

    double dmin = chol[0], dmax = chol[0];
    for (std::size_t i = 0; i < k; ++i) {
        dmin = std::min(dmin, chol[i * k + i]);
        dmax = std::max(dmax, chol[i * k + i]);
    }
    fit.condition_estimate = (dmax / dmin) * (dmax / dmin);

    fit.coeffs = rhs;
    detail::cholesky_solve(chol, k, fit.coeffs);

    // (B'B + ridge)^-1 column by column, for fitted-value standard errors.
    fit.normal_inv.assign(k * k, 0.0);
    std::vector<double> e(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        std::fill(e.begin(), e.end(), 0.0);
        e[c] = 1.0;
        detail::cholesky_solve(chol, k, e);
        for (std::size_t i = 0; i < k; ++i) fit.normal_inv[i * k + c] = e[i];
    }

    fit.fitted.resize(n);
    double ss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const double* x = features.data() + r * k;
        double v = 0.0;
        for (std::size_t i = 0; i < k; ++i) v += x[i] * fit.coeffs[i];
        fit.fitted[r] = v;
        const double res = targets[r] - v;
        ss += res * res;
    }
    fit.residual_var =
        n > k ? ss / static_cast<double>(n - k) : 0.0;
    return fit;
}

/// Evaluate a stored fit at a fresh feature row (out-of-sample use).
inline double predict(const RegressionFit& fit, std::span<const double> x) {
    if (fit.mean_fallback || fit.coeffs.empty()) return fit.fallback_mean;
    double v = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) v += x[i] * fit.coeffs[i];
    return v;
}

}  // namespace fbsde
