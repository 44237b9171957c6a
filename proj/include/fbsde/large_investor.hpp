#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fbsde/backward.hpp"
#include "fbsde/delay_condition.hpp"
#include "fbsde/errors.hpp"
#include "fbsde/forward.hpp"
#include "fbsde/levy.hpp"
#include "fbsde/path.hpp"

namespace fbsde {

/// Market with portfolio feedback: the funding rate r and the stock drift mu
/// may read the hedger's current portfolio value and its recent past.
struct MarketModel {
    /// funding rate r(t, x, x_seg): x is the portfolio value, x_seg its
    /// delayed segment
    std::function<double(double, double, const Segment&)> r;
    /// stock drift mu(t, x, x_seg), same feedback arguments
    std::function<double(double, double, const Segment&)> mu;
    /// volatility sigma(t) > 0 (invertibility is needed for pi = z / sigma)
    std::function<double(double)> sigma;
    /// relative jump size gamma_market(t, z) > -1 (stock positivity)
    std::function<double(double, double)> gamma_market;
    LevyModel model;
    double s0 = 1.0;
    /// feedback window length (0 means no delayed feedback)
    double delta = 0.0;
    DelayMeasure alpha = DelayMeasure::unit_atom_at(0.0);
    /// Lipschitz / delay certificates of the induced driver
    double lip_L = 0.0;
    double delay_K = 0.0;

    static MarketModel flat_rates(double rate, double drift, double vol,
                                  double s0_) {
        MarketModel m;
        m.r = [rate](double, double, const Segment&) { return rate; };
        m.mu = [drift](double, double, const Segment&) { return drift; };
        m.sigma = [vol](double) { return vol; };
        m.gamma_market = [](double, double) { return 0.0; };
        m.model = LevyModel::none();
        m.s0 = s0_;
        return m;
    }

    void validate() const {
        if (!r || !mu || !sigma || !gamma_market)
            throw ConfigError("MarketModel: missing coefficient");
        if (s0 <= 0.0) throw ConfigError("MarketModel: s0 must be > 0");
        if (delta > 0.0) alpha.validate(delta);
    }
};

/// Numerical parameters of one replication run.
struct ReplicationConfig {
    double T = 1.0;
    double dt = 0.01;
    std::size_t n_paths = 10000;
    std::uint64_t seed = 1;
    double tol = 1e-4;
    std::size_t max_iter = 50;
    BasisSpec basis;
    unsigned threads = 1;
};

/// Price, per-path portfolio and hedging strategy. The strategy pi is the
/// stored primitive; z_of(p, i) = pi * sigma reproduces the martingale
/// integrand, so pi(s) sigma(s) = Z(s) holds identically.
struct HedgeResult {
    double price_t0 = 0.0;
    double price_std_err = 0.0;
    std::vector<CadlagPath> portfolio;          // per-path X = Y
    std::vector<std::vector<double>> strategy;  // [path][node] pi
    std::vector<double> terminal_error;         // X(T) - h(S) per path
    std::vector<double> sigma_at;               // sigma(t_i) per node
    BsdeSolution solution;                      // keeps the z regressions
    std::vector<CadlagPath> stock;              // the forward ensemble
    bool certified = true;
    std::string warning;

    double pi_at(std::size_t p, std::size_t i) const {
        return strategy[p][i];
    }
    /// Martingale integrand reconstructed from the strategy.
    double z_of(std::size_t p, std::size_t i) const {
        return strategy[p][i] * sigma_at[i];
    }
};

/// Driver of the portfolio equation:
///   F(s, x, x_seg, pi) = -r(s, x, x_seg)(x - pi) - pi mu(s, x, x_seg)
/// with pi = z / sigma(s) substituted. The delayed argument carries the
/// portfolio segment.
inline GeneratorSpec build_driver(const MarketModel& market) {
    market.validate();
    GeneratorSpec gen;
    gen.L = market.lip_L;
    gen.K = market.delay_K;
    gen.delta = market.delta;
    gen.alpha = market.alpha;
    gen.f = [market](double t, const CadlagPath&, double y,
                     std::span<const double> z, double, const Segment& yhat) {
        const double sig = market.sigma(t);
        if (!(sig > 0.0))
            throw ConfigError("build_driver: sigma(t) not invertible at t = " +
                              std::to_string(t));
        const double pi = z[0] / sig;
        return -market.r(t, y, yhat) * (y - pi) - pi * market.mu(t, y, yhat);
    };
    return gen;
}

namespace detail {

/// Stock dynamics with the portfolio-feedback arguments frozen at the zero
/// portfolio (small-investor baseline); the feedback enters the price only
/// through the driver.
inline ForwardCoefficients stock_coefficients(const MarketModel& market,
                                              double dt) {
    ForwardCoefficients c = ForwardCoefficients::zero();
    const double eff_delta = market.delta > 0.0 ? market.delta : dt;
    Segment zero_seg;
    zero_seg.delta = eff_delta;
    zero_seg.dt = dt;
    zero_seg.dim = 1;
    zero_seg.values.assign(grid_ceil(eff_delta / dt) + 1, 0.0);
    c.b = [market, zero_seg](double t, const CadlagPath& s) {
        return std::vector<double>{market.mu(t, 0.0, zero_seg) * s.eval1(t)};
    };
    c.sigma = [market](double t, const CadlagPath& s) {
        return std::vector<double>{market.sigma(t) * s.eval1(t)};
    };
    c.gamma = [market](double t, const CadlagPath& s, double z) {
        return std::vector<double>{market.gamma_market(t, z) * s.eval1(t)};
    };
    return c;
}

}  // namespace detail

/// Price and replicate a claim on the stock path: simulate the stock
/// ensemble, solve the portfolio equation backward, read the strategy off
/// the martingale integrand.
inline HedgeResult replicate(const MarketModel& market,
                             const TerminalSpec& claim,
                             const ReplicationConfig& cfg) {
    market.validate();
    for (const auto& atom : market.model.atoms)
        for (double t = 0.0; t < cfg.T + 1e-12; t += cfg.dt)
            if (market.gamma_market(t, atom.z) <= -1.0)
                throw ConfigError(
                    "replicate: gamma_market <= -1 on an atom (stock would "
                    "lose positivity)");

    const auto coeffs = detail::stock_coefficients(market, cfg.dt);
    const auto phi = CadlagPath::constant(0.0, 0.0, cfg.dt, market.s0);
    auto ens = simulate_ensemble(coeffs, market.model, 0.0, phi, cfg.T,
                                 cfg.dt, cfg.n_paths, cfg.seed, cfg.threads);
    for (const auto& p : ens.paths)
        for (std::size_t i = 0; i < p.nodes(); ++i)
            if (p.node(i)[0] <= 0.0)
                throw NumericError(
                    "replicate: simulated stock lost positivity (refine dt)");

    const auto gen = build_driver(market);
    auto sol = picard_solve(ens, gen, claim, market.delta, cfg.dt, cfg.tol,
                            cfg.max_iter, cfg.basis);

    HedgeResult res;
    const std::size_t n = sol.n_paths;
    const std::size_t n_nodes = sol.n_nodes;
    res.sigma_at.resize(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i)
        res.sigma_at[i] = market.sigma(static_cast<double>(i) * cfg.dt);

    res.portfolio.reserve(n);
    res.strategy.assign(n, std::vector<double>(n_nodes, 0.0));
    res.terminal_error.resize(n);
    double sum = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        std::vector<double> yvals(n_nodes);
        for (std::size_t i = 0; i < n_nodes; ++i) {
            yvals[i] = sol.y_at(p, i);
            res.strategy[p][i] = sol.z_at(p, i)[0] / res.sigma_at[i];
        }
        res.portfolio.push_back(
            CadlagPath::scalar(0.0, cfg.dt, std::move(yvals)));
        res.terminal_error[p] = sol.y_at(p, n_nodes - 1) - claim.h(ens.paths[p]);
        sum += sol.y_at(p, 0);
    }
    res.price_t0 = sum / static_cast<double>(n);
    res.price_std_err =
        std::sqrt(sol.mean_fit[0].residual_var / static_cast<double>(n));

    if (gen.L > 0.0) {
        const auto chi = best_chi(gen.K, gen.L, market.delta, cfg.T);
        res.certified = chi.certified;
        if (!chi.certified)
            res.warning = "contraction condition not certified (best value " +
                          std::to_string(chi.value) + ")";
    }
    res.stock = std::move(ens.paths);
    res.solution = std::move(sol);
    return res;
}

/// Out-of-sample profit-and-loss of the fitted strategy: terminal
/// X(T) - h(S) over a fresh ensemble under the self-financing recursion.
struct PnlSummary {
    double mean = 0.0;
    double std_dev = 0.0;
    double std_err = 0.0;
    std::size_t n_paths = 0;
    std::vector<double> errors;  // per fresh path
};

/// Re-simulate fresh stock paths, read pi off the stored z regressions and
/// run the wealth recursion. pi_scale deliberately mis-sizes the strategy
/// for sensitivity probes.
inline PnlSummary hedge_pnl(const HedgeResult& result,
                            const MarketModel& market,
                            const TerminalSpec& claim,
                            const ReplicationConfig& cfg,
                            std::uint64_t fresh_seed, double pi_scale = 1.0) {
    market.validate();
    const auto coeffs = detail::stock_coefficients(market, cfg.dt);
    const auto phi = CadlagPath::constant(0.0, 0.0, cfg.dt, market.s0);
    const auto ens = simulate_ensemble(coeffs, market.model, 0.0, phi, cfg.T,
                                       cfg.dt, cfg.n_paths, fresh_seed,
                                       cfg.threads);
    const BsdeSolution& sol = result.solution;
    const std::size_t n_nodes = sol.n_nodes;
    const std::size_t k = sol.basis.size(1);
    const auto rs = detail::running_stats(ens, 0, n_nodes);
    const double eff_delta = market.delta > 0.0 ? market.delta : cfg.dt;

    PnlSummary out;
    out.n_paths = ens.n_paths();
    out.errors.resize(out.n_paths);
    std::vector<double> feat(k);
    for (std::size_t p = 0; p < out.n_paths; ++p) {
        std::vector<double> xvals(n_nodes);
        xvals[0] = result.price_t0;
        for (std::size_t i = 0; i + 1 < n_nodes; ++i) {
            const double t_i = static_cast<double>(i) * cfg.dt;
            detail::fill_feature_row(ens.paths[p], rs, p, i, sol.basis,
                                     feat.data());
            const double z_hat =
                sol.z_fit[i].empty() ? 0.0 : predict(sol.z_fit[i][0], feat);
            const double pi = pi_scale * z_hat / market.sigma(t_i);

            const auto xpath = CadlagPath::scalar(
                0.0, cfg.dt,
                std::vector<double>(xvals.begin(), xvals.begin() + i + 1));
            const Segment xseg = segment(xpath, t_i, eff_delta);
            const double x = xvals[i];
            const double rate = market.r(t_i, x, xseg);
            const double drift = market.mu(t_i, x, xseg);

            double dx = pi * drift * cfg.dt + (x - pi) * rate * cfg.dt;
            dx += pi * market.sigma(t_i) *
                  ens.brownian_increments[p][i];
            // compensated jump leg: pi sum gamma(z) - pi dt nu(gamma)
            if (!ens.jump_trains[p].empty())
                for (double z : ens.jump_trains[p][i].marks)
                    dx += pi * market.gamma_market(t_i, z);
            dx -= pi * cfg.dt * nu_integral(market.model, [&](double z) {
                      return market.gamma_market(t_i, z);
                  });
            xvals[i + 1] = x + dx;
        }
        out.errors[p] = xvals[n_nodes - 1] - claim.h(ens.paths[p]);
    }
    for (double e : out.errors) out.mean += e;
    out.mean /= static_cast<double>(out.n_paths);
    double ss = 0.0;
    for (double e : out.errors) ss += (e - out.mean) * (e - out.mean);
    out.std_dev = out.n_paths > 1
                      ? std::sqrt(ss / static_cast<double>(out.n_paths - 1))
                      : 0.0;
    out.std_err = out.std_dev / std::sqrt(static_cast<double>(out.n_paths));
    return out;
}

}  // namespace fbsde
