#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "fbsde/errors.hpp"
#include "fbsde/rng.hpp"

namespace fbsde {

/// One atom of the (finite-activity) Levy measure: jump size z with
/// weight w = nu({z}).
struct LevyAtom {
    double z = 0.0;
    double w = 0.0;
};

/// Finite-activity jump specification. The measure nu is an atom list, so
/// integrals against nu are exact finite sums and the second-moment bound
/// holds by construction.
struct LevyModel {
    double total_intensity = 0.0;
    std::vector<LevyAtom> atoms;
    /// Jump-intensity weight lambda(z); defaults to the constant 1.
    std::function<double(double)> weight_fn = [](double) { return 1.0; };

    void validate() const {
        if (total_intensity < 0.0 || !std::isfinite(total_intensity))
            throw ConfigError("LevyModel: total_intensity must be finite and >= 0");
        double sum_w = 0.0;
        double second_moment = 0.0;
        for (const auto& a : atoms) {
            if (a.z == 0.0)
                throw ConfigError("LevyModel: atom at z = 0 is not allowed");
            if (a.w < 0.0 || !std::isfinite(a.w) || !std::isfinite(a.z))
                throw ConfigError("LevyModel: atom weights must be finite and >= 0");
            sum_w += a.w;
            second_moment += a.z * a.z * a.w;
        }
        if (!std::isfinite(second_moment))
            throw ConfigError("LevyModel: second moment of nu is not finite");
        const double scale = std::max(1.0, total_intensity);
        if (std::abs(sum_w - total_intensity) > 1e-12 * scale)
            throw ConfigError("LevyModel: atom weights must sum to total_intensity");
        if (total_intensity > 0.0 && atoms.empty())
            throw ConfigError("LevyModel: positive intensity with no atoms");
    }

    static LevyModel none() { return LevyModel{}; }

    static LevyModel from_atoms(std::vector<LevyAtom> atoms_in) {
        LevyModel m;
        m.atoms = std::move(atoms_in);
        m.total_intensity = 0.0;
        for (const auto& a : m.atoms) m.total_intensity += a.w;
        m.validate();
        return m;
    }
};

/// A realization of the Poisson random measure N on a window (t0, t1].
struct JumpTrain {
    std::vector<double> times;  // strictly increasing, in (t0, t1]
    std::vector<double> marks;  // jump sizes, same length
};

/// Draw N on (t0, t1]: Poisson count, then i.i.d. uniform times (sorted)
/// and marks distributed w_k / total_intensity over the atoms.
inline JumpTrain sample_jump_train(const LevyModel& model, double t0, double t1,
                                   CounterRng rng) {
    if (!(t0 < t1)) throw DomainError("sample_jump_train: need t0 < t1");
    if (model.total_intensity > 0.0 && model.atoms.empty())
        throw ConfigError("sample_jump_train: positive intensity with no atoms");

    JumpTrain train;
    if (model.total_intensity == 0.0) return train;

    const std::uint64_t n = rng.poisson(model.total_intensity * (t1 - t0));
    train.times.reserve(n);
    train.marks.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i)
        train.times.push_back(t0 + (t1 - t0) * rng.uniform());
    std::sort(train.times.begin(), train.times.end());

    for (std::uint64_t i = 0; i < n; ++i) {
        double u = rng.uniform() * model.total_intensity;
        double acc = 0.0;
        double mark = model.atoms.back().z;
        for (const auto& a : model.atoms) {
            acc += a.w;
            if (u <= acc) {
                mark = a.z;
                break;
            }
        }
        train.marks.push_back(mark);
    }
    return train;
}

/// Exact integral of g against nu: sum_k g(z_k) w_k.
template <typename G>
double nu_integral(const LevyModel& model, G&& g) {
    double sum = 0.0;
    for (const auto& a : model.atoms) {
        const double gz = g(a.z);
        if (std::isnan(gz))
            throw NumericError("nu_integral: g returned NaN at atom z = " +
                               std::to_string(a.z));
        sum += gz * a.w;
    }
    return sum;
}

/// Integral of g against the compensated measure over the window:
/// sum over realized jumps of g(z) minus the compensator (t1-t0) * nu(g).
/// Mean zero over the ensemble.
template <typename G>
double compensated_increment(const JumpTrain& train, const LevyModel& model,
                             G&& g, double t0, double t1) {
    double sum = 0.0;
    for (double z : train.marks) sum += g(z);
    return sum - (t1 - t0) * nu_integral(model, g);
}

}  // namespace fbsde
