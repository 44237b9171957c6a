#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "fbsde/errors.hpp"

namespace fbsde {

namespace detail {
// Tolerant floor for grid arithmetic: s exactly on a node must land on it.
inline std::ptrdiff_t grid_floor(double x) {
    return static_cast<std::ptrdiff_t>(std::floor(x + 1e-9));
}
inline std::size_t grid_ceil(double x) {
    return static_cast<std::size_t>(std::ceil(x - 1e-9));
}
inline bool grid_aligned(double x, double dt) {
    const double r = x / dt;
    return std::abs(r - std::round(r)) < 1e-9;
}
}  // namespace detail

/// Right-continuous piecewise-constant path on a uniform grid. Node i holds
/// the right limit at t_start + i*dt; evaluation between nodes uses the
/// cadlag step convention. Dimension d is a runtime parameter; node values
/// are stored flat, row per node.
class CadlagPath {
public:
    CadlagPath() = default;

    CadlagPath(double t_start, double dt, std::size_t dim,
               std::vector<double> flat)
        : t_start_(t_start), dt_(dt), dim_(dim), data_(std::move(flat)) {
        if (dt_ <= 0.0) throw ConfigError("CadlagPath: dt must be > 0");
        if (dim_ == 0) throw ConfigError("CadlagPath: dim must be >= 1");
        if (data_.empty() || data_.size() % dim_ != 0)
            throw ConfigError("CadlagPath: node data size mismatch");
        for (double v : data_)
            if (!std::isfinite(v))
                throw NumericError("CadlagPath: non-finite node value");
    }

    /// Scalar convenience constructor.
    static CadlagPath scalar(double t_start, double dt,
                             std::vector<double> values) {
        return CadlagPath(t_start, dt, 1, std::move(values));
    }

    /// Path holding the same value at every node of [t_start, t_end].
    static CadlagPath constant(double t_start, double t_end, double dt,
                               std::span<const double> value) {
        const std::size_t n = detail::grid_ceil((t_end - t_start) / dt) + 1;
        std::vector<double> flat;
        flat.reserve(n * value.size());
        for (std::size_t i = 0; i < n; ++i)
            flat.insert(flat.end(), value.begin(), value.end());
        return CadlagPath(t_start, dt, value.size(), std::move(flat));
    }

    static CadlagPath constant(double t_start, double t_end, double dt,
                               double value) {
        return constant(t_start, t_end, dt, std::span<const double>(&value, 1));
    }

    double t_start() const { return t_start_; }
    double dt() const { return dt_; }
    std::size_t dim() const { return dim_; }
    std::size_t nodes() const { return data_.size() / dim_; }
    double t_end() const { return t_start_ + (nodes() - 1) * dt_; }

    std::span<const double> node(std::size_t i) const {
        return {data_.data() + i * dim_, dim_};
    }
    std::span<double> node(std::size_t i) {
        return {data_.data() + i * dim_, dim_};
    }
    const std::vector<double>& flat() const { return data_; }
    std::vector<double>& flat() { return data_; }

    std::size_t index_of(double s) const {
        if (s < t_start_ - 1e-9 * dt_ || s > t_end() + 1e-9 * dt_)
            throw DomainError("CadlagPath: time out of range");
        const auto i = detail::grid_floor((s - t_start_) / dt_);
        if (i < 0 || static_cast<std::size_t>(i) >= nodes())
            throw DomainError("CadlagPath: time out of range");
        return static_cast<std::size_t>(i);
    }

    /// Right-continuous step evaluation at time s.
    std::span<const double> eval(double s) const { return node(index_of(s)); }

    /// Scalar component shortcut for d = 1 paths.
    double eval1(double s) const { return eval(s)[0]; }

    /// Copy of the path truncated to [t_start, s] (value at s included).
    CadlagPath truncated(double s) const {
        const std::size_t last = index_of(s);
        std::vector<double> flat(data_.begin(),
                                 data_.begin() + (last + 1) * dim_);
        return CadlagPath(t_start_, dt_, dim_, std::move(flat));
    }

    bool operator==(const CadlagPath&) const = default;

private:
    double t_start_ = 0.0;
    double dt_ = 1.0;
    std::size_t dim_ = 1;
    std::vector<double> data_;
};

/// Restriction of a path to the delay window [r - delta, r], with the left
/// end clamped to the path's first value when r - delta falls before the
/// path start. Covers exactly ceil(delta/dt) + 1 grid nodes; node k sits at
/// offset theta = -delta + k*dt.
struct Segment {
    double delta = 0.0;
    double dt = 1.0;
    std::size_t dim = 1;
    std::vector<double> values;  // flat, node-major, last node is theta = 0

    std::size_t nodes() const { return values.size() / dim; }

    std::span<const double> at_offset(double theta) const {
        auto k = detail::grid_floor((theta + delta) / dt);
        if (k < 0) k = 0;
        const auto n = static_cast<std::ptrdiff_t>(nodes());
        if (k >= n) k = n - 1;
        return {values.data() + static_cast<std::size_t>(k) * dim, dim};
    }

    double at_offset1(double theta) const { return at_offset(theta)[0]; }
};

inline Segment segment(const CadlagPath& path, double r, double delta) {
    if (delta <= 0.0) throw DomainError("segment: delta must be > 0");
    path.index_of(r);  // range check
    Segment seg;
    seg.delta = delta;
    seg.dt = path.dt();
    seg.dim = path.dim();
    const std::size_t n = detail::grid_ceil(delta / path.dt()) + 1;
    seg.values.reserve(n * seg.dim);
    for (std::size_t k = 0; k < n; ++k) {
        const double s = r - delta + static_cast<double>(k) * path.dt();
        // Prolongation by the initial value when r + theta precedes the start.
        const auto v = s < path.t_start() ? path.node(0) : path.eval(s);
        seg.values.insert(seg.values.end(), v.begin(), v.end());
    }
    return seg;
}

/// An atom list on [-delta, 0] representing the delay measure alpha.
struct DelayMeasure {
    std::vector<std::pair<double, double>> atoms;  // (theta, weight)

    void validate(double delta) const {
        double sum = 0.0;
        for (const auto& [theta, w] : atoms) {
            if (w < 0.0) throw ConfigError("DelayMeasure: negative weight");
            if (theta < -delta - 1e-12 || theta > 1e-12)
                throw ConfigError("DelayMeasure: atom outside [-delta, 0]");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-12)
            throw ConfigError("DelayMeasure: weights must sum to 1");
    }

    static DelayMeasure unit_atom_at(double theta) {
        return DelayMeasure{{{theta, 1.0}}};
    }
};

/// Integral of a scalar segment against alpha: sum_j w_j * seg(theta_j).
inline double alpha_integral(const Segment& seg, const DelayMeasure& alpha) {
    double sum = 0.0;
    for (const auto& [theta, w] : alpha.atoms) sum += w * seg.at_offset1(theta);
    return sum;
}

/// Left-Riemann L2 norm of a step path (exact for step functions).
inline double l2_norm(const CadlagPath& path) {
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < path.nodes(); ++i) {
        double sq = 0.0;
        for (double v : path.node(i)) sq += v * v;
        sum += sq * path.dt();
    }
    return std::sqrt(sum);
}

inline double sup_norm(const CadlagPath& path) {
    double m = 0.0;
    for (std::size_t i = 0; i < path.nodes(); ++i) {
        double sq = 0.0;
        for (double v : path.node(i)) sq += v * v;
        m = std::max(m, sq);
    }
    return std::sqrt(m);
}

/// Point of the Delfour-Mitter space M2 = L2([-T,0]; R^d) x R^d: a past
/// trajectory in L2 together with the present value.
struct M2Point {
    CadlagPath history;  // on [-T, 0]
    std::vector<double> present;
};

inline double m2_norm(const M2Point& point) {
    const double l2 = l2_norm(point.history);
    double sq = 0.0;
    for (double v : point.present) sq += v * v;
    return std::sqrt(l2 * l2 + sq);
}

/// Lift a path phi on [0,T] to the compatible M2 initial condition at t:
/// history(theta) = phi(t + theta) on [-t, 0], frozen at phi(0) on [-T, -t);
/// present = phi(t).
inline M2Point lift_eta(const CadlagPath& phi, double t) {
    if (t < phi.t_start() - 1e-12 || t > phi.t_end() + 1e-12)
        throw DomainError("lift_eta: t outside the path domain");
    const double T = phi.t_end();
    const std::size_t n = phi.nodes();
    std::vector<double> flat;
    flat.reserve(n * phi.dim());
    for (std::size_t k = 0; k < n; ++k) {
        const double theta = -T + static_cast<double>(k) * phi.dt();
        // Note the paper-verbatim asymmetry: the pre-window region is frozen
        // at phi(0), not at phi(t).
        const auto v =
            theta < -t - 1e-9 ? phi.node(0) : phi.eval(t + theta);
        flat.insert(flat.end(), v.begin(), v.end());
    }
    M2Point p;
    p.history = CadlagPath(-T, phi.dt(), phi.dim(), std::move(flat));
    const auto pres = phi.eval(t);
    p.present.assign(pres.begin(), pres.end());
    return p;
}

/// Unlift an M2 history into the path varphi^t on [0,T]:
/// varphi^t(theta) = history(theta - t) on [0,t], = history(0) on (t,T].
inline CadlagPath unlift_varphi(const M2Point& point, double t, double T) {
    const CadlagPath& h = point.history;
    const std::size_t n = detail::grid_ceil(T / h.dt()) + 1;
    std::vector<double> flat;
    flat.reserve(n * h.dim());
    for (std::size_t k = 0; k < n; ++k) {
        const double theta = static_cast<double>(k) * h.dt();
        const auto v = theta <= t + 1e-9 ? h.eval(theta - t) : h.eval(0.0);
        flat.insert(flat.end(), v.begin(), v.end());
    }
    return CadlagPath(0.0, h.dt(), h.dim(), std::move(flat));
}

}  // namespace fbsde
