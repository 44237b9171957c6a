#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "fbsde/errors.hpp"

namespace fbsde {

/// The smallness threshold of the contraction condition.
inline constexpr double kContractionThreshold = 1.0 / 578.0;

/// Parameter bundle (K, L, delta, T, chi) for the smallness condition.
struct DelayParams {
    double K = 0.0;      // delay-sensitivity constant, >= 0
    double L = 1.0;      // Lipschitz constant in (y, z, u), > 0
    double delta = 0.0;  // delay
    double T = 1.0;      // horizon
    double chi = 0.5;    // free parameter in (0, 1)

    void validate() const {
        if (!(chi > 0.0 && chi < 1.0))
            throw DomainError("DelayParams: chi must lie strictly in (0,1)");
        if (!(L > 0.0)) throw DomainError("DelayParams: L must be > 0");
        if (K < 0.0) throw DomainError("DelayParams: K must be >= 0");
    }
};

/// Left-hand side of the smallness condition
///   K * chi * exp((chi + 6 L^2 / chi) * delta) / ((1 - chi) L^2) * max{1, T};
/// the certificate holds iff the value is below 1/578.
inline double condition_value(const DelayParams& p) {
    p.validate();
    const double expo = (p.chi + 6.0 * p.L * p.L / p.chi) * p.delta;
    return p.K * p.chi * std::exp(expo) /
           ((1.0 - p.chi) * p.L * p.L) * std::max(1.0, p.T);
}

inline bool certified(const DelayParams& p) {
    return condition_value(p) < kContractionThreshold;
}

struct ChiSearchResult {
    double chi = 0.0;
    double value = 0.0;
    bool certified = false;
};

/// Minimize condition_value over chi in (0,1) by golden-section search.
/// The map is unimodal in chi for delta > 0; for delta = 0 it is increasing,
/// so the search clamps against the lower bracket at 1e-8.
inline ChiSearchResult best_chi(double K, double L, double delta, double T) {
    if (!(L > 0.0)) throw DomainError("best_chi: L must be > 0");
    const auto value_at = [&](double chi) {
        return condition_value({K, L, delta, T, chi});
    };
    constexpr double lo_clamp = 1e-8;
    double a = lo_clamp, b = 1.0 - lo_clamp;
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = value_at(c), fd = value_at(d);
    while (b - a > 1e-10) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = value_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = value_at(d);
        }
    }
    ChiSearchResult res;
    res.chi = 0.5 * (a + b);
    res.value = value_at(res.chi);
    // Grid fallback if the bracket degenerated (e.g. non-unimodal input).
    if (!std::isfinite(res.value)) {
        res.value = std::numeric_limits<double>::infinity();
        for (int i = 1; i < 10000; ++i) {
            const double chi = static_cast<double>(i) / 10000.0;
            const double v = value_at(chi);
            if (v < res.value) {
                res.value = v;
                res.chi = chi;
            }
        }
    }
    res.certified = res.value < kContractionThreshold;
    return res;
}

/// Constants from the fixed-point estimate: a = 4 L^2 / chi, beta slightly
/// above chi + 4 L^2 / chi, C1 = 1 + 144 / (1 - 4 L^2 / a), and the Step-II
/// contraction modulus gamma_mod; gamma_mod < 1 certifies the contraction.
struct AppendixConstants {
    double a = 0.0;
    double beta = 0.0;
    double c1 = 0.0;
    double gamma_mod = 0.0;
};

inline AppendixConstants appendix_constants(double K, double L, double chi,
                                            double delta, double T) {
    if (!(chi > 0.0 && chi < 1.0))
        throw DomainError("appendix_constants: chi must lie in (0,1)");
    if (!(L > 0.0)) throw DomainError("appendix_constants: L must be > 0");
    AppendixConstants c;
    c.a = 4.0 * L * L / chi;
    c.beta = (1.0 + 1e-6) * (chi + 4.0 * L * L / chi);
    const double denom = 1.0 - 4.0 * L * L / c.a;  // equals 1 - chi
    if (denom <= 0.0)
        throw DomainError("appendix_constants: 1 - 4L^2/a must be positive");
    c.c1 = 1.0 + 144.0 / denom;
    c.gamma_mod = (2.0 * K * std::exp(c.beta * delta) / c.a) *
                  (3.0 + 289.0 / denom) * std::max(1.0, T);
    return c;
}

}  // namespace fbsde
