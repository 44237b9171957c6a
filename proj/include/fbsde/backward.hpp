#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fbsde/errors.hpp"
#include "fbsde/forward.hpp"
#include "fbsde/levy.hpp"
#include "fbsde/path.hpp"
#include "fbsde/regression.hpp"

namespace fbsde {

/// Driver of the backward equation. f sees the forward path truncated at
/// the current node, the explicit (y, z, u) arguments and the frozen
/// delayed segment of Y.
struct GeneratorSpec {
    std::function<double(double t, const CadlagPath& x, double y,
                         std::span<const double> z, double u,
                         const Segment& yhat)>
        f;
    double L = 0.0;             // Lipschitz in (y, z, u)
    double K = 0.0;             // delay constant
    double delta = 0.0;         // delay window length (0 means no delay)
    DelayMeasure alpha = DelayMeasure::unit_atom_at(0.0);
    double growth_M = 1.0;      // (A4 iv) certificate
    double growth_p = 1.0;

    static GeneratorSpec zero() {
        GeneratorSpec g;
        g.f = [](double, const CadlagPath&, double, std::span<const double>,
                 double, const Segment&) { return 0.0; };
        return g;
    }

    void validate() const {
        if (!f) throw ConfigError("GeneratorSpec: missing driver f");
        if (delta > 0.0) alpha.validate(delta);
    }
};

/// Terminal condition h with its polynomial-growth certificate.
struct TerminalSpec {
    std::function<double(const CadlagPath&)> h;
    double growth_M = 1.0;
    double growth_p = 1.0;

    static TerminalSpec constant(double c) {
        return TerminalSpec{[c](const CadlagPath&) { return c; }, std::abs(c) + 1.0,
                            1.0};
    }
};

/// Regression basis: polynomials up to `degree` in the present state and in
/// the running min / max of each component (measured from the start time).
struct BasisSpec {
    unsigned degree = 3;
    bool running_stats = true;

    std::size_t size(std::size_t dim) const {
        const std::size_t vars = running_stats ? 3 * dim : dim;
        return 1 + static_cast<std::size_t>(degree) * vars;
    }
};

/// Discrete-time solution ensemble of the backward equation.
struct BsdeSolution {
    std::size_t n_paths = 0;
    std::size_t n_nodes = 0;     // grid nodes on [0, T]
    std::size_t noise_dim = 1;   // l
    std::size_t start_index = 0; // node index of the start time t
    double dt = 0.0;

    std::vector<double> y;        // [path][node]
    std::vector<double> z;        // [path][node][l]
    std::vector<double> u_tilde;  // [path][node]

    /// Per-node regression fits for the conditional mean and for each
    /// component of Z (kept for out-of-sample strategy evaluation).
    std::vector<RegressionFit> mean_fit;             // [node]
    std::vector<std::vector<RegressionFit>> z_fit;   // [node][l]
    std::vector<double> picard_history;              // sup gaps per iteration
    BasisSpec basis;

    double& y_at(std::size_t p, std::size_t i) { return y[p * n_nodes + i]; }
    double y_at(std::size_t p, std::size_t i) const {
        return y[p * n_nodes + i];
    }
    std::span<double> z_at(std::size_t p, std::size_t i) {
        return {z.data() + (p * n_nodes + i) * noise_dim, noise_dim};
    }
    std::span<const double> z_at(std::size_t p, std::size_t i) const {
        return {z.data() + (p * n_nodes + i) * noise_dim, noise_dim};
    }
    double& u_tilde_at(std::size_t p, std::size_t i) {
        return u_tilde[p * n_nodes + i];
    }
    double u_tilde_at(std::size_t p, std::size_t i) const {
        return u_tilde[p * n_nodes + i];
    }
};

/// The scalar aggregate through which the jump integrand enters the driver:
/// integral of U(z) lambda(z) against nu.
template <typename U>
double u_tilde_from_measure(U&& u_profile, const LevyModel& model) {
    return nu_integral(model, [&](double z) {
        return u_profile(z) * model.weight_fn(z);
    });
}

namespace detail {

/// Running min/max of every path component over [start, t_i], node-major.
/// Kept as separate arrays so the per-node feature block can be assembled
/// without holding the full feature tensor in memory.
struct RunningStats {
    std::size_t dim = 1;
    std::size_t n_nodes = 0;
    std::vector<double> mn;  // [path][node][dim]
    std::vector<double> mx;
};

inline RunningStats running_stats(const ForwardEnsemble& ens,
                                  std::size_t start_index,
                                  std::size_t n_nodes) {
    const std::size_t n = ens.n_paths();
    const std::size_t d = ens.paths.front().dim();
    RunningStats rs;
    rs.dim = d;
    rs.n_nodes = n_nodes;
    rs.mn.assign(n * n_nodes * d, 0.0);
    rs.mx.assign(n * n_nodes * d, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
        const CadlagPath& path = ens.paths[p];
        for (std::size_t i = start_index; i < n_nodes; ++i) {
            for (std::size_t c = 0; c < d; ++c) {
                const double x = path.node(i)[c];
                const std::size_t idx = (p * n_nodes + i) * d + c;
                if (i == start_index) {
                    rs.mn[idx] = rs.mx[idx] = x;
                } else {
                    const std::size_t prev = (p * n_nodes + i - 1) * d + c;
                    rs.mn[idx] = std::min(rs.mn[prev], x);
                    rs.mx[idx] = std::max(rs.mx[prev], x);
                }
            }
        }
    }
    return rs;
}

/// Feature row of path p at node i:
/// [1, x^1..x^deg, min^1..deg, max^1..deg] per component.
inline void fill_feature_row(const CadlagPath& path, const RunningStats& rs,
                             std::size_t p, std::size_t i,
                             const BasisSpec& basis, double* out) {
    const std::size_t d = path.dim();
    std::size_t pos = 0;
    out[pos++] = 1.0;
    for (std::size_t c = 0; c < d; ++c) {
        const double x = path.node(i)[c];
        const std::size_t idx = (p * rs.n_nodes + i) * d + c;
        double px = 1.0, pmn = 1.0, pmx = 1.0;
        for (unsigned g = 1; g <= basis.degree; ++g) {
            px *= x;
            out[pos++] = px;
            if (basis.running_stats) {
                pmn *= rs.mn[idx];
                out[pos++] = pmn;
                pmx *= rs.mx[idx];
                out[pos++] = pmx;
            }
        }
    }
}

/// Compensated lambda-aggregate over step i of path p:
///   sum_{jumps} lambda(z) - dt * nu(lambda).
inline double compensated_lambda(const ForwardEnsemble& ens, std::size_t p,
                                 std::size_t i, double dt,
                                 double nu_lambda) {
    if (ens.jump_trains[p].empty()) return -dt * nu_lambda;
    double s = 0.0;
    for (double z : ens.jump_trains[p][i].marks) s += ens.model.weight_fn(z);
    return s - dt * nu_lambda;
}

}  // namespace detail

/// Source of frozen delayed segments: (path, node) -> Segment of the
/// previous Picard iterate.
using FrozenDelay = std::function<Segment(std::size_t path, std::size_t node)>;

/// A frozen-delay source that always returns the zero segment (the Picard
/// starting iterate Y^0 = 0, and the natural choice when K = 0).
inline FrozenDelay zero_delay(double delta, double dt) {
    const double d = delta > 0.0 ? delta : dt;
    return [d, dt](std::size_t, std::size_t) {
        Segment seg;
        seg.delta = d;
        seg.dt = dt;
        seg.dim = 1;
        seg.values.assign(detail::grid_ceil(d / dt) + 1, 0.0);
        return seg;
    };
}

/// One backward induction sweep with the delayed argument frozen.
///
/// Y_N = h(X); then for i = N-1 .. start:
///   Z_i   = E^[Y_{i+1} dW_i] / dt                (componentwise regression)
///   U~_i  = E^[Y_{i+1} dM~_i] / (dt c_nu)        (c_nu = nu(lambda^2))
///   Y_i   = E^[Y_{i+1}] + dt f(t_i, X_{.^i}, E^[Y_{i+1}], Z_i, U~_i, yhat_i)
/// Nodes before the start time carry Z = U~ = 0.
inline BsdeSolution backward_induction(const ForwardEnsemble& ens,
                                       const GeneratorSpec& gen,
                                       const TerminalSpec& term,
                                       const FrozenDelay& frozen_delay,
                                       double dt,
                                       const BasisSpec& basis = {}) {
    gen.validate();
    if (!term.h) throw ConfigError("backward_induction: missing terminal h");

    const std::size_t n = ens.n_paths();
    const std::size_t n_nodes = ens.paths.front().nodes();
    const std::size_t l = ens.brownian_increments.front().size() / (n_nodes - 1);
    const std::size_t start = ens.paths.front().index_of(ens.t);
    const std::size_t d = ens.paths.front().dim();
    const std::size_t k = basis.size(d);

    BsdeSolution sol;
    sol.n_paths = n;
    sol.n_nodes = n_nodes;
    sol.noise_dim = l;
    sol.start_index = start;
    sol.dt = dt;
    sol.basis = basis;
    sol.y.assign(n * n_nodes, 0.0);
    sol.z.assign(n * n_nodes * l, 0.0);
    sol.u_tilde.assign(n * n_nodes, 0.0);
    sol.mean_fit.resize(n_nodes);
    sol.z_fit.assign(n_nodes, {});

    const double nu_lambda = nu_integral(ens.model, ens.model.weight_fn);
    const double c_nu = nu_integral(ens.model, [&](double z) {
        const double w = ens.model.weight_fn(z);
        return w * w;
    });

    // Terminal condition, exact per path.
    for (std::size_t p = 0; p < n; ++p) {
        const double hv = term.h(ens.paths[p]);
        if (!std::isfinite(hv))
            throw NumericError("backward_induction: h(X) non-finite at path " +
                               std::to_string(p));
        sol.y_at(p, n_nodes - 1) = hv;
    }

    const auto rs = detail::running_stats(ens, start, n_nodes);
    std::vector<double> targets(n), weighted(n), block(n * k);

    for (std::size_t i = n_nodes - 1; i-- > start;) {
        const double t_i = static_cast<double>(i) * dt;
        for (std::size_t p = 0; p < n; ++p) {
            targets[p] = sol.y_at(p, i + 1);
            detail::fill_feature_row(ens.paths[p], rs, p, i, basis,
                                     block.data() + p * k);
        }

        // Z by componentwise regression of Y_{i+1} dW / dt.
        sol.z_fit[i].reserve(l);
        for (std::size_t c = 0; c < l; ++c) {
            for (std::size_t p = 0; p < n; ++p) {
                const double dw = ens.brownian_increments[p][i * l + c];
                weighted[p] = targets[p] * dw / dt;
            }
            auto fit = regress_conditional(weighted, block, k);
            for (std::size_t p = 0; p < n; ++p)
                sol.z_at(p, i)[c] = fit.fitted[p];
            fit.shrink();
            sol.z_fit[i].push_back(std::move(fit));
        }

        // U~ by regression against the compensated lambda aggregate.
        if (c_nu > 0.0) {
            for (std::size_t p = 0; p < n; ++p) {
                const double dm =
                    detail::compensated_lambda(ens, p, i, dt, nu_lambda);
                weighted[p] = targets[p] * dm / (dt * c_nu);
            }
            auto fit = regress_conditional(weighted, block, k);
            for (std::size_t p = 0; p < n; ++p)
                sol.u_tilde_at(p, i) = fit.fitted[p];
        }

        // Conditional mean of Y_{i+1} and the explicit driver step.
        auto mean_fit = regress_conditional(targets, block, k);
        for (std::size_t p = 0; p < n; ++p) {
            const double ey = mean_fit.fitted[p];
            const Segment yhat = frozen_delay(p, i);
            const CadlagPath x_trunc = ens.paths[p].truncated(t_i);
            const double fv = gen.f(t_i, x_trunc, ey, sol.z_at(p, i),
                                    sol.u_tilde_at(p, i), yhat);
            const double yv = ey + dt * fv;
            if (!std::isfinite(yv))
                throw NumericError(
                    "backward_induction: non-finite Y at node " +
                    std::to_string(i) + ", path " + std::to_string(p));
            sol.y_at(p, i) = yv;
        }
        mean_fit.shrink();
        sol.mean_fit[i] = std::move(mean_fit);
    }
    return sol;
}

/// Outer Picard iteration over the delayed argument: iterate 0 is Y = 0;
/// each subsequent sweep freezes the delayed segment from the previous
/// iterate and reruns the backward induction. Stops when the sup gap over
/// paths and nodes drops below tol.
inline BsdeSolution picard_solve(const ForwardEnsemble& ens,
                                 const GeneratorSpec& gen,
                                 const TerminalSpec& term, double delta,
                                 double dt, double tol = 1e-4,
                                 std::size_t max_iter = 50,
                                 const BasisSpec& basis = {}) {
    gen.validate();
    const std::size_t n = ens.n_paths();
    const std::size_t n_nodes = ens.paths.front().nodes();
    if (delta > 0.0 && !detail::grid_aligned(delta, dt))
        throw ConfigError("picard_solve: delta must be a multiple of dt");

    BsdeSolution prev;
    std::vector<double> picard_history;
    FrozenDelay frozen = zero_delay(delta > 0.0 ? delta : dt, dt);

    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        BsdeSolution next =
            backward_induction(ens, gen, term, frozen, dt, basis);
        double gap = 0.0;
        if (iter > 0) {
            for (std::size_t j = 0; j < next.y.size(); ++j)
                gap = std::max(gap, std::abs(next.y[j] - prev.y[j]));
        } else {
            for (double v : next.y) gap = std::max(gap, std::abs(v));
        }
        picard_history.push_back(gap);
        prev = std::move(next);
        if (iter > 0 && gap < tol) {
            prev.picard_history = picard_history;
            return prev;
        }
        // Freeze the delayed segment from this iterate. The clamp for
        // r + theta below the path start reuses segment()'s prolongation.
        const double eff_delta = delta > 0.0 ? delta : dt;
        auto y_paths = std::make_shared<std::vector<CadlagPath>>();
        y_paths->reserve(n);
        for (std::size_t p = 0; p < n; ++p) {
            std::vector<double> vals(n_nodes);
            for (std::size_t i = 0; i < n_nodes; ++i)
                vals[i] = prev.y_at(p, i);
            // Nodes before the start carry the restart region; for the
            // delayed argument the proof's clamp Y(r + theta) = Y(0)
            // means the value at the earliest solved node.
            for (std::size_t i = 0; i < prev.start_index; ++i)
                vals[i] = vals[prev.start_index];
            y_paths->push_back(CadlagPath::scalar(0.0, dt, std::move(vals)));
        }
        frozen = [y_paths, eff_delta, dt](std::size_t p, std::size_t node) {
            const double r = static_cast<double>(node) * dt;
            return segment((*y_paths)[p], r, eff_delta);
        };
    }
    throw ConvergenceError("picard_solve: no convergence after " +
                           std::to_string(max_iter) + " iterations (last gap " +
                           std::to_string(picard_history.back()) + ")");
}

/// Fill the pre-start region of a solution with the diagonal values
/// Y^{s,phi}(s) taken from solves started at earlier grid times, and zero
/// Z and U~ there.
inline BsdeSolution restart_prolong(
    const std::map<std::size_t, BsdeSolution>& solutions, std::size_t t_index) {
    const auto it = solutions.find(t_index);
    if (it == solutions.end())
        throw ConfigError("restart_prolong: missing solution at start index");
    BsdeSolution out = it->second;
    for (std::size_t i = 0; i < t_index; ++i) {
        const auto diag = solutions.find(i);
        if (diag == solutions.end())
            throw ConfigError(
                "restart_prolong: missing diagonal solution at node " +
                std::to_string(i));
        for (std::size_t p = 0; p < out.n_paths; ++p) {
            out.y_at(p, i) = diag->second.y_at(p, i);
            for (double& zc : out.z_at(p, i)) zc = 0.0;
            out.u_tilde_at(p, i) = 0.0;
        }
    }
    return out;
}

}  // namespace fbsde
