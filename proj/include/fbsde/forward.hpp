#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fbsde/errors.hpp"
#include "fbsde/levy.hpp"
#include "fbsde/path.hpp"
#include "fbsde/rng.hpp"

namespace fbsde {

/// Non-anticipative coefficient set of the forward jump-diffusion. Each
/// callback sees the path truncated at the current time, which enforces
/// non-anticipativity structurally.
struct ForwardCoefficients {
    std::size_t dim = 1;        // d
    std::size_t noise_dim = 1;  // l

    /// drift b(t, path) -> R^d
    std::function<std::vector<double>(double, const CadlagPath&)> b;
    /// diffusion sigma(t, path) -> R^{d x l}, row-major
    std::function<std::vector<double>(double, const CadlagPath&)> sigma;
    /// jump coefficient gamma(t, path, z) -> R^d
    std::function<std::vector<double>(double, const CadlagPath&, double)> gamma;
    /// declared Lipschitz certificate (diagnostic only)
    double lipschitz_ell = 0.0;

    static ForwardCoefficients zero(std::size_t d = 1, std::size_t l = 1) {
        ForwardCoefficients c;
        c.dim = d;
        c.noise_dim = l;
        c.b = [d](double, const CadlagPath&) {
            return std::vector<double>(d, 0.0);
        };
        c.sigma = [d, l](double, const CadlagPath&) {
            return std::vector<double>(d * l, 0.0);
        };
        c.gamma = [d](double, const CadlagPath&, double) {
            return std::vector<double>(d, 0.0);
        };
        return c;
    }
};

/// Simulated ensemble with its driving noise retained, so the backward
/// solver can reuse the exact same Brownian increments and jump trains.
struct ForwardEnsemble {
    std::vector<CadlagPath> paths;
    /// brownian_increments[p][i] is the l-vector dW over step i (flat l*steps).
    std::vector<std::vector<double>> brownian_increments;
    /// jump_trains[p][i] is the realization of N on (t_i, t_{i+1}].
    std::vector<std::vector<JumpTrain>> jump_trains;
    std::uint64_t seed = 0;
    double t = 0.0;
    CadlagPath phi;
    LevyModel model;

    std::size_t n_paths() const { return paths.size(); }
};

/// One explicit Euler step with coefficients frozen at the left endpoint:
///   X_{i+1} = X_i + b dt + sigma dW + sum_jumps gamma(z) - dt * nu(gamma).
inline std::vector<double> euler_step(const ForwardCoefficients& coeffs,
                                      const CadlagPath& path_so_far,
                                      double t_i, double dt,
                                      std::span<const double> dW,
                                      const JumpTrain& jumps,
                                      const LevyModel& model) {
    const std::size_t d = coeffs.dim;
    const std::size_t l = coeffs.noise_dim;
    const auto x = path_so_far.eval(t_i);

    const auto drift = coeffs.b(t_i, path_so_far);
    const auto sig = coeffs.sigma(t_i, path_so_far);
    std::vector<double> next(x.begin(), x.end());
    for (std::size_t j = 0; j < d; ++j) {
        next[j] += drift[j] * dt;
        for (std::size_t k = 0; k < l; ++k) next[j] += sig[j * l + k] * dW[k];
    }
    // Jumps, gamma seen through the pre-jump path (predictability).
    for (double z : jumps.marks) {
        const auto g = coeffs.gamma(t_i, path_so_far, z);
        for (std::size_t j = 0; j < d; ++j) next[j] += g[j];
    }
    // Deterministic compensator of N~, componentwise.
    for (std::size_t j = 0; j < d; ++j) {
        next[j] -= dt * nu_integral(model, [&](double z) {
                       return coeffs.gamma(t_i, path_so_far, z)[j];
                   });
    }
    for (double v : next)
        if (!std::isfinite(v))
            throw NumericError("euler_step: non-finite state at t = " +
                               std::to_string(t_i));
    return next;
}

namespace detail {

/// Noise for one path over the grid steps [first_step, n_steps).
struct PathNoise {
    std::vector<double> dW;            // flat l per step, full grid length
    std::vector<JumpTrain> trains;     // per step, full grid length
};

inline PathNoise draw_noise(const LevyModel& model, std::size_t noise_dim,
                            double dt, std::size_t n_steps,
                            std::size_t first_step, std::uint64_t seed,
                            std::uint64_t path_idx) {
    PathNoise noise;
    noise.dW.assign(n_steps * noise_dim, 0.0);
    // Zero-intensity models keep the train list empty to avoid allocating
    // per-step empty vectors across large ensembles.
    const bool with_jumps = model.total_intensity > 0.0;
    if (with_jumps) noise.trains.resize(n_steps);
    for (std::size_t i = first_step; i < n_steps; ++i) {
        // Substream keyed by the absolute window index, so a restarted
        // simulation sees identical draws on the shared windows.
        CounterRng rng(seed, path_idx, i);
        for (std::size_t k = 0; k < noise_dim; ++k)
            noise.dW[i * noise_dim + k] = std::sqrt(dt) * rng.normal();
        const double t_i = static_cast<double>(i) * dt;
        if (with_jumps)
            noise.trains[i] = sample_jump_train(model, t_i, t_i + dt, rng);
    }
    return noise;
}

}  // namespace detail

/// Simulate one path of the forward SDE on the [0, T] grid: equals phi on
/// [0, t] and follows the Euler recursion on [t, T]. Noise windows are keyed
/// by absolute step index.
inline CadlagPath simulate(const ForwardCoefficients& coeffs,
                           const LevyModel& model, double t,
                           const CadlagPath& phi, double T, double dt,
                           std::uint64_t seed, std::uint64_t path_idx = 0) {
    if (!detail::grid_aligned(t, dt) || !detail::grid_aligned(T, dt))
        throw ConfigError("simulate: t and T must be integer multiples of dt");
    const std::size_t n_steps = static_cast<std::size_t>(std::llround(T / dt));
    const std::size_t first_step =
        static_cast<std::size_t>(std::llround(t / dt));

    std::vector<double> flat;
    flat.reserve((n_steps + 1) * coeffs.dim);
    for (std::size_t i = 0; i <= first_step; ++i) {
        const auto v = phi.eval(static_cast<double>(i) * dt);
        flat.insert(flat.end(), v.begin(), v.end());
    }
    const auto noise = detail::draw_noise(model, coeffs.noise_dim, dt, n_steps,
                                          first_step, seed, path_idx);
    static const JumpTrain no_jumps;
    for (std::size_t i = first_step; i < n_steps; ++i) {
        const double t_i = static_cast<double>(i) * dt;
        CadlagPath so_far(0.0, dt, coeffs.dim, flat);
        const auto next = euler_step(
            coeffs, so_far, t_i, dt,
            std::span<const double>(noise.dW.data() + i * coeffs.noise_dim,
                                    coeffs.noise_dim),
            noise.trains.empty() ? no_jumps : noise.trains[i], model);
        flat.insert(flat.end(), next.begin(), next.end());
    }
    return CadlagPath(0.0, dt, coeffs.dim, std::move(flat));
}

/// Data-parallel ensemble simulation; deterministic in (seed, path index)
/// regardless of thread count.
inline ForwardEnsemble simulate_ensemble(const ForwardCoefficients& coeffs,
                                         const LevyModel& model, double t,
                                         const CadlagPath& phi, double T,
                                         double dt, std::size_t n_paths,
                                         std::uint64_t seed,
                                         unsigned n_threads = 1) {
    if (n_paths == 0) throw ConfigError("simulate_ensemble: n_paths = 0");
    ForwardEnsemble ens;
    ens.seed = seed;
    ens.t = t;
    ens.phi = phi;
    ens.model = model;
    ens.paths.resize(n_paths);
    ens.brownian_increments.resize(n_paths);
    ens.jump_trains.resize(n_paths);

    const std::size_t n_steps = static_cast<std::size_t>(std::llround(T / dt));
    const std::size_t first_step =
        static_cast<std::size_t>(std::llround(t / dt));

    const auto work = [&](std::size_t p) {
        ens.paths[p] = simulate(coeffs, model, t, phi, T, dt, seed, p);
        auto noise = detail::draw_noise(model, coeffs.noise_dim, dt, n_steps,
                                        first_step, seed, p);
        ens.brownian_increments[p] = std::move(noise.dW);
        ens.jump_trains[p] = std::move(noise.trains);
    };

    if (n_threads <= 1) {
        for (std::size_t p = 0; p < n_paths; ++p) work(p);
    } else {
        std::vector<std::thread> pool;
        for (unsigned th = 0; th < n_threads; ++th) {
            pool.emplace_back([&, th] {
                for (std::size_t p = th; p < n_paths; p += n_threads) work(p);
            });
        }
        for (auto& th : pool) th.join();
    }
    return ens;
}

/// Restart identity check: simulate to T directly vs. stopping at s_mid and
/// restarting from the realized path under the same noise. The recursion is
/// identical step by step, so the gap must be exactly zero.
inline double flow_check(const ForwardCoefficients& coeffs,
                         const LevyModel& model, double t,
                         const CadlagPath& phi, double s_mid, double T,
                         double dt, std::uint64_t seed) {
    const CadlagPath direct = simulate(coeffs, model, t, phi, T, dt, seed);
    const CadlagPath to_mid = simulate(coeffs, model, t, phi, s_mid, dt, seed);
    const CadlagPath restarted =
        simulate(coeffs, model, s_mid, to_mid, T, dt, seed);
    double gap = 0.0;
    for (std::size_t i = 0; i < direct.nodes(); ++i) {
        const auto a = direct.node(i);
        const auto b = restarted.node(i);
        for (std::size_t j = 0; j < a.size(); ++j)
            gap = std::max(gap, std::abs(a[j] - b[j]));
    }
    return gap;
}

}  // namespace fbsde
