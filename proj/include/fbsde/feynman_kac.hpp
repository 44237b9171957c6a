#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <span>
#include <unordered_map>
#include <vector>

#include "fbsde/backward.hpp"
#include "fbsde/errors.hpp"
#include "fbsde/forward.hpp"
#include "fbsde/levy.hpp"
#include "fbsde/path.hpp"

namespace fbsde {

/// Everything needed to price one (t, phi) point: the FBSDE data plus the
/// numerical-scheme parameters and a fixed seed policy.
struct SolverConfig {
    ForwardCoefficients coeffs = ForwardCoefficients::zero();
    LevyModel model;
    GeneratorSpec gen = GeneratorSpec::zero();
    TerminalSpec term = TerminalSpec::constant(0.0);
    double T = 1.0;
    double dt = 0.01;
    std::size_t n_paths = 10000;
    std::uint64_t seed = 1;
    double tol = 1e-4;
    std::size_t max_iter = 50;
    BasisSpec basis;
    unsigned threads = 1;
};

/// Value of u(t, phi) together with the solver byproducts at the start
/// node: the Monte Carlo standard error, Z (= grad_x u sigma along the
/// representation) and the U~ aggregate.
struct UValue {
    double value = 0.0;
    double std_err = 0.0;
    std::vector<double> z;
    double u_tilde = 0.0;
};

namespace detail {

inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t path_digest(const CadlagPath& path) {
    std::uint64_t h = fnv1a(path.flat().data(),
                            path.flat().size() * sizeof(double));
    const double meta[3] = {path.t_start(), path.dt(),
                            static_cast<double>(path.dim())};
    return fnv1a(meta, sizeof(meta), h);
}

}  // namespace detail

/// The Feynman-Kac functional u(t, phi) = Y^{t,phi}(t), evaluated by a
/// fresh ensemble solve per (t, phi) and cached. Deterministic for a fixed
/// seed policy, so concurrent cache races are benign.
class FunctionalU {
public:
    explicit FunctionalU(SolverConfig config) : config_(std::move(config)) {}

    const SolverConfig& config() const { return config_; }

    UValue evaluate(double t, const CadlagPath& phi) const {
        if (t < -1e-12 || t > config_.T + 1e-12)
            throw DomainError("FunctionalU: t outside [0, T]");
        const std::uint64_t key =
            detail::fnv1a(&t, sizeof(t), detail::path_digest(phi));
        {
            std::lock_guard lock(mutex_);
            if (const auto it = cache_.find(key); it != cache_.end())
                return it->second;
        }
        UValue val = solve(t, phi);
        {
            std::lock_guard lock(mutex_);
            cache_[key] = val;
        }
        return val;
    }

private:
    UValue solve(double t, const CadlagPath& phi) const {
        UValue out;
        out.z.assign(config_.coeffs.noise_dim, 0.0);
        if (std::abs(t - config_.T) < 1e-12) {
            out.value = config_.term.h(phi);
            return out;
        }
        const auto ens = simulate_ensemble(config_.coeffs, config_.model, t,
                                           phi, config_.T, config_.dt,
                                           config_.n_paths, config_.seed,
                                           config_.threads);
        const auto sol = picard_solve(ens, config_.gen, config_.term,
                                      config_.gen.delta, config_.dt,
                                      config_.tol, config_.max_iter,
                                      config_.basis);
        const std::size_t it = sol.start_index;
        const double n = static_cast<double>(sol.n_paths);
        for (std::size_t p = 0; p < sol.n_paths; ++p) {
            out.value += sol.y_at(p, it);
            for (std::size_t c = 0; c < sol.noise_dim; ++c)
                out.z[c] += sol.z_at(p, it)[c];
            out.u_tilde += sol.u_tilde_at(p, it);
        }
        out.value /= n;
        for (double& zc : out.z) zc /= n;
        out.u_tilde /= n;
        // With an intercept in the basis the ensemble mean telescopes to
        // mean_p[h + sum_j dt f_j]; the Monte Carlo error of the value is
        // the cross-path spread of that accumulant. (For delayed drivers
        // the segment is approximated by its right endpoint here, which
        // only perturbs the error estimate, not the value.)
        const double eff_delta =
            config_.gen.delta > 0.0 ? config_.gen.delta : config_.dt;
        const std::size_t n_seg =
            fbsde::detail::grid_ceil(eff_delta / config_.dt) + 1;
        double mean_g = 0.0, ss_g = 0.0;
        for (std::size_t p = 0; p < sol.n_paths; ++p) {
            double g = sol.y_at(p, sol.n_nodes - 1);
            for (std::size_t j = it; j + 1 < sol.n_nodes; ++j) {
                const double t_j = static_cast<double>(j) * config_.dt;
                Segment yhat;
                yhat.delta = eff_delta;
                yhat.dt = config_.dt;
                yhat.dim = 1;
                yhat.values.assign(n_seg, sol.y_at(p, j));
                g += config_.dt *
                     config_.gen.f(t_j, ens.paths[p].truncated(t_j),
                                   sol.y_at(p, j), sol.z_at(p, j),
                                   sol.u_tilde_at(p, j), yhat);
            }
            const double d = g - mean_g;
            mean_g += d / static_cast<double>(p + 1);
            ss_g += d * (g - mean_g);
        }
        out.std_err = std::sqrt(ss_g / (n - 1.0) / n);
        return out;
    }

    SolverConfig config_;
    mutable std::mutex mutex_;
    mutable std::unordered_map<std::uint64_t, UValue> cache_;
};

namespace detail {

/// Path with all values at and after time t shifted by the vector `shift`
/// (the flat extension consistent with a present-coordinate jump).
inline CadlagPath bump_from(const CadlagPath& path, double t,
                            std::span<const double> shift) {
    auto flat = path.flat();
    const std::size_t d = path.dim();
    for (std::size_t i = path.index_of(t); i < path.nodes(); ++i)
        for (std::size_t c = 0; c < d; ++c) flat[i * d + c] += shift[c];
    return CadlagPath(path.t_start(), path.dt(), d, std::move(flat));
}

inline CadlagPath bump_from(const CadlagPath& path, double t, std::size_t c,
                            double shift) {
    std::vector<double> vec(path.dim(), 0.0);
    vec[c] = shift;
    return bump_from(path, t, vec);
}

}  // namespace detail

/// Integro-differential jump operator:
///   J u = sum_k [u(t, phi + gamma(t, phi, z_k)) - u(t, phi)] lambda(z_k) w_k,
/// where the path bump shifts the present-and-future values.
inline double jump_operator(
    const FunctionalU& u, double t, const CadlagPath& phi,
    const std::function<std::vector<double>(double, const CadlagPath&, double)>&
        gamma,
    const LevyModel& model) {
    const double base = u.evaluate(t, phi).value;
    double sum = 0.0;
    for (const auto& atom : model.atoms) {
        const auto shift = gamma(t, phi, atom.z);
        const double bumped =
            u.evaluate(t, detail::bump_from(phi, t, shift)).value;
        sum += (bumped - base) * model.weight_fn(atom.z) * atom.w;
    }
    return sum;
}

/// Second-order operator (1/2) Tr[sigma sigma* Hess u] + <b, grad u> by
/// central finite differences in the present coordinate. Only valid on
/// Markovian reductions; a path-perturbation probe rejects functionals that
/// depend on the pre-t history.
inline double generator_L(const FunctionalU& u, double t,
                          const CadlagPath& phi,
                          const ForwardCoefficients& coeffs, double bump) {
    if (bump <= 0.0) throw DomainError("generator_L: bump must be > 0");
    const std::size_t d = phi.dim();
    const std::size_t l = coeffs.noise_dim;
    const double u0 = u.evaluate(t, phi).value;

    // Markovian probe: changing the path strictly before t must not move u.
    if (phi.index_of(t) > 0) {
        auto flat = phi.flat();
        for (std::size_t c = 0; c < d; ++c) flat[c] += 0.5;
        const CadlagPath probe(phi.t_start(), phi.dt(), d, std::move(flat));
        if (std::abs(u.evaluate(t, probe).value - u0) > 1e-10)
            throw DomainError(
                "generator_L: functional is not Markovian (pre-t probe moved "
                "the value)");
    }

    const auto b_vec = coeffs.b(t, phi);
    const auto sig = coeffs.sigma(t, phi);
    // a = sigma sigma^T
    std::vector<double> a(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < l; ++k)
                a[i * d + j] += sig[i * l + k] * sig[j * l + k];

    const auto u_at = [&](std::size_t c, double s) {
        return u.evaluate(t, detail::bump_from(phi, t, c, s)).value;
    };

    double result = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double up = u_at(i, bump);
        const double dn = u_at(i, -bump);
        result += b_vec[i] * (up - dn) / (2.0 * bump);
        result += 0.5 * a[i * d + i] * (up - 2.0 * u0 + dn) / (bump * bump);
        for (std::size_t j = i + 1; j < d; ++j) {
            std::vector<double> pp(d, 0.0), pm(d, 0.0);
            pp[i] = bump;
            pp[j] = bump;
            pm[i] = bump;
            pm[j] = -bump;
            const double upp =
                u.evaluate(t, detail::bump_from(phi, t, pp)).value;
            for (double& v : pp) v = -v;
            const double umm =
                u.evaluate(t, detail::bump_from(phi, t, pp)).value;
            const double upm =
                u.evaluate(t, detail::bump_from(phi, t, pm)).value;
            for (double& v : pm) v = -v;
            const double ump =
                u.evaluate(t, detail::bump_from(phi, t, pm)).value;
            result += a[i * d + j] * (upp + umm - upm - ump) /
                      (4.0 * bump * bump);
        }
    }
    return result;
}

/// Residual of the nonlinear Kolmogorov equation on a Markovian no-delay
/// reduction: -du/dt - L u - f(t, phi, u, Z, (u)_t, J u). Zero for an
/// exact solution up to finite-difference and Monte Carlo error.
inline double pide_residual(const FunctionalU& u, double t,
                            const CadlagPath& phi,
                            const ForwardCoefficients& coeffs,
                            const LevyModel& model, const GeneratorSpec& gen,
                            double dt_time, double bump) {
    const double T = u.config().T;
    const auto eval = u.evaluate(t, phi);

    // Central difference in t, one-sided at the ends of [0, T].
    const double t_up = std::min(t + dt_time, T);
    const double t_dn = std::max(t - dt_time, 0.0);
    const double du_dt = (u.evaluate(t_up, phi).value -
                          u.evaluate(t_dn, phi).value) /
                         (t_up - t_dn);

    const double lu = generator_L(u, t, phi, coeffs, bump);
    const double ju = jump_operator(u, t, phi, coeffs.gamma, model);

    // Degenerate delay: the delayed argument is the constant segment at the
    // current value of u.
    const double eff_delta = gen.delta > 0.0 ? gen.delta : u.config().dt;
    Segment yhat;
    yhat.delta = eff_delta;
    yhat.dt = u.config().dt;
    yhat.dim = 1;
    yhat.values.assign(detail::grid_ceil(eff_delta / u.config().dt) + 1,
                       eval.value);

    const double f_val = gen.f(t, phi.truncated(t), eval.value, eval.z, ju,
                               yhat);
    return -du_dt - lu - f_val;
}

/// Monte Carlo residual of the mild-solution semigroup identity:
///   P_{t,T} h(phi) + int_t^T P_{t,s}[f(...)] ds - u(t, phi),
/// with the transition semigroup estimated over one forward ensemble and
/// the time integral by the trapezoid rule.
inline double mild_residual(const FunctionalU& u, double t,
                            const CadlagPath& phi) {
    const SolverConfig& cfg = u.config();
    const auto ens = simulate_ensemble(cfg.coeffs, cfg.model, t, phi, cfg.T,
                                       cfg.dt, cfg.n_paths, cfg.seed + 1,
                                       cfg.threads);
    const auto sol = picard_solve(ens, cfg.gen, cfg.term, cfg.gen.delta,
                                  cfg.dt, cfg.tol, cfg.max_iter, cfg.basis);
    const std::size_t start = sol.start_index;
    const std::size_t n_nodes = sol.n_nodes;
    const double n = static_cast<double>(sol.n_paths);

    double mean_h = 0.0;
    for (std::size_t p = 0; p < sol.n_paths; ++p)
        mean_h += cfg.term.h(ens.paths[p]);
    mean_h /= n;

    const double eff_delta = cfg.gen.delta > 0.0 ? cfg.gen.delta : cfg.dt;
    std::vector<double> g(n_nodes - start, 0.0);
    for (std::size_t i = start; i < n_nodes; ++i) {
        const double s = static_cast<double>(i) * cfg.dt;
        double mean_f = 0.0;
        for (std::size_t p = 0; p < sol.n_paths; ++p) {
            std::vector<double> yvals(i + 1);
            for (std::size_t j = 0; j <= i; ++j)
                yvals[j] = sol.y_at(p, std::max(j, start));
            const auto ypath = CadlagPath::scalar(0.0, cfg.dt, std::move(yvals));
            mean_f += cfg.gen.f(s, ens.paths[p].truncated(s), sol.y_at(p, i),
                                sol.z_at(p, i), sol.u_tilde_at(p, i),
                                segment(ypath, s, eff_delta));
        }
        g[i - start] = mean_f / n;
    }
    double integral = 0.0;
    for (std::size_t j = 0; j + 1 < g.size(); ++j)
        integral += 0.5 * (g[j] + g[j + 1]) * cfg.dt;

    return mean_h + integral - u.evaluate(t, phi).value;
}

}  // namespace fbsde
