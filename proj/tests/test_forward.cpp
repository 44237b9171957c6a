#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fbsde/forward.hpp"

using namespace fbsde;

namespace {

ForwardCoefficients geometric(double mu, double sigma0) {
    auto c = ForwardCoefficients::zero();
    c.b = [mu](double t, const CadlagPath& x) {
        return std::vector<double>{mu * x.eval1(t)};
    };
    c.sigma = [sigma0](double t, const CadlagPath& x) {
        return std::vector<double>{sigma0 * x.eval1(t)};
    };
    c.lipschitz_ell = std::abs(mu) + std::abs(sigma0);
    return c;
}

ForwardCoefficients merton(double mu, double sigma0) {
    auto c = geometric(mu, sigma0);
    c.gamma = [](double t, const CadlagPath& x, double z) {
        return std::vector<double>{x.eval1(t) * z};
    };
    return c;
}

}  // namespace

TEST_CASE("euler_step: frozen, drift-only and compensator-only cases") {
    const auto path = CadlagPath::constant(0.0, 0.0, 0.1, 2.0);
    const double dW = 0.37;
    JumpTrain no_jumps;

    SUBCASE("all coefficients zero") {
        const auto next =
            euler_step(ForwardCoefficients::zero(), path, 0.0, 0.1,
                       std::span<const double>(&dW, 1), no_jumps,
                       LevyModel::none());
        CHECK(next[0] == 2.0);
    }

    SUBCASE("pure drift b = 1") {
        auto c = ForwardCoefficients::zero();
        c.b = [](double, const CadlagPath&) {
            return std::vector<double>{1.0};
        };
        const auto next = euler_step(c, path, 0.0, 0.1,
                                     std::span<const double>(&dW, 1),
                                     no_jumps, LevyModel::none());
        CHECK(next[0] == doctest::Approx(2.1));
    }

    SUBCASE("compensator-only step: gamma = z, atom (1,1), no jump") {
        auto c = ForwardCoefficients::zero();
        c.gamma = [](double, const CadlagPath&, double z) {
            return std::vector<double>{z};
        };
        const auto model = LevyModel::from_atoms({{1.0, 1.0}});
        const double zero_dw = 0.0;
        const auto next = euler_step(c, path, 0.0, 0.1,
                                     std::span<const double>(&zero_dw, 1),
                                     no_jumps, model);
        CHECK(next[0] == doctest::Approx(1.9));  // X - dt * nu(gamma)
    }
}

TEST_CASE("simulate: zero coefficients freeze the path at phi(t)") {
    const auto phi = CadlagPath::scalar(0.0, 0.25, {1.0, 2.0, 3.0, 4.0, 5.0});
    const auto path = simulate(ForwardCoefficients::zero(), LevyModel::none(),
                               0.5, phi, 1.0, 0.25, 7);
    // Initial prolongation on [0, t], frozen value after.
    CHECK(path.eval1(0.0) == 1.0);
    CHECK(path.eval1(0.25) == 2.0);
    CHECK(path.eval1(0.5) == 3.0);
    CHECK(path.eval1(0.75) == 3.0);
    CHECK(path.eval1(1.0) == 3.0);
}

TEST_CASE("simulate rejects a misaligned grid") {
    const auto phi = CadlagPath::constant(0.0, 1.0, 0.25, 1.0);
    CHECK_THROWS_AS(simulate(ForwardCoefficients::zero(), LevyModel::none(),
                             0.3, phi, 1.0, 0.25, 7),
                    ConfigError);
}

TEST_CASE("geometric diffusion matches the closed-form mean") {
    const double mu = 0.4, x0 = 1.5, T = 1.0, dt = 1.0 / 100.0;
    const auto phi = CadlagPath::constant(0.0, 0.0, dt, x0);
    const auto ens = simulate_ensemble(geometric(mu, 0.3), LevyModel::none(),
                                       0.0, phi, T, dt, 20000, 31);
    double sum = 0.0, sum_sq = 0.0;
    for (const auto& p : ens.paths) {
        const double xT = p.eval1(T);
        sum += xT;
        sum_sq += xT * xT;
    }
    const double n = static_cast<double>(ens.n_paths());
    const double mean = sum / n;
    const double se = std::sqrt((sum_sq / n - mean * mean) / n);
    // Discrete Euler mean is x0 (1 + mu dt)^{T/dt}; compare against that
    // exactly, and against the continuous limit within 3 sigma + bias.
    const double euler_mean = x0 * std::pow(1.0 + mu * dt, T / dt);
    CHECK(std::abs(mean - euler_mean) < 3.0 * se);
    CHECK(std::abs(mean - x0 * std::exp(mu * T)) <
          3.0 * se + std::abs(euler_mean - x0 * std::exp(mu * T)));
}

TEST_CASE("Merton jumps: compensated martingale moment") {
    // dX = X dW-part + X z dN~: E X(T) stays x0 when mu = 0.
    const double x0 = 2.0, T = 1.0, dt = 1.0 / 100.0;
    const auto model = LevyModel::from_atoms({{0.3, 1.0}, {-0.2, 1.5}});
    const auto phi = CadlagPath::constant(0.0, 0.0, dt, x0);
    const auto ens = simulate_ensemble(merton(0.0, 0.2), model, 0.0, phi, T,
                                       dt, 20000, 77);
    double sum = 0.0, sum_sq = 0.0;
    for (const auto& p : ens.paths) {
        const double xT = p.eval1(T);
        sum += xT;
        sum_sq += xT * xT;
    }
    const double n = static_cast<double>(ens.n_paths());
    const double mean = sum / n;
    const double se = std::sqrt((sum_sq / n - mean * mean) / n);
    CHECK(std::abs(mean - x0) < 3.0 * se);
}

TEST_CASE("ensemble preserves the initial prolongation exactly") {
    const auto phi = CadlagPath::scalar(0.0, 0.5, {1.0, -2.0, 0.5});
    const auto ens = simulate_ensemble(merton(0.1, 0.2),
                                       LevyModel::from_atoms({{0.5, 1.0}}),
                                       1.0, phi, 1.5, 0.5, 50, 5);
    for (const auto& p : ens.paths) {
        CHECK(p.eval1(0.0) == 1.0);
        CHECK(p.eval1(0.5) == -2.0);
        CHECK(p.eval1(1.0) == 0.5);
    }
    CHECK_THROWS_AS(simulate_ensemble(merton(0.1, 0.2), LevyModel::none(),
                                      0.0, phi, 1.0, 0.5, 0, 5),
                    ConfigError);
}

TEST_CASE("non-anticipativity: perturbing phi after s never changes X before") {
    // Coefficients probe only the path at the current time.
    const double dt = 0.125;
    const auto phi_a = CadlagPath::scalar(
        0.0, dt, {1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8});
    auto phi_b_vals = phi_a.flat();
    phi_b_vals.back() = 9.0;  // differ only at the last node (t = 1)
    const auto phi_b = CadlagPath::scalar(0.0, dt, std::move(phi_b_vals));

    const auto coeffs = geometric(0.3, 0.4);
    const auto xa = simulate(coeffs, LevyModel::none(), 0.5, phi_a, 1.0, dt, 3);
    const auto xb = simulate(coeffs, LevyModel::none(), 0.5, phi_b, 1.0, dt, 3);
    // phi differs only at t = 1, after the start time; X on [0.5, 1) agrees.
    for (double s = 0.0; s < 1.0 - 1e-12; s += dt)
        CHECK(xa.eval1(s) == xb.eval1(s));
}

TEST_CASE("pathwise uniqueness surrogate: identical seed, identical path") {
    const auto phi = CadlagPath::constant(0.0, 0.0, 0.1, 1.0);
    const auto model = LevyModel::from_atoms({{0.4, 2.0}});
    const auto a = simulate(merton(0.2, 0.3), model, 0.0, phi, 1.0, 0.1, 123);
    const auto b = simulate(merton(0.2, 0.3), model, 0.0, phi, 1.0, 0.1, 123);
    CHECK(a == b);
}

TEST_CASE("flow identity is exact") {
    const auto phi = CadlagPath::constant(0.0, 0.0, 0.1, 1.0);

    SUBCASE("zero coefficients") {
        CHECK(flow_check(ForwardCoefficients::zero(), LevyModel::none(), 0.0,
                         phi, 0.5, 1.0, 0.1, 1) == 0.0);
    }
    SUBCASE("drift only") {
        auto c = ForwardCoefficients::zero();
        c.b = [](double t, const CadlagPath& x) {
            return std::vector<double>{0.5 * x.eval1(t) + 0.1};
        };
        CHECK(flow_check(c, LevyModel::none(), 0.0, phi, 0.5, 1.0, 0.1, 2) ==
              0.0);
    }
    SUBCASE("full jump-diffusion, several seeds") {
        const auto model = LevyModel::from_atoms({{0.3, 1.0}, {-0.4, 2.0}});
        for (std::uint64_t seed : {1ULL, 77ULL, 3141ULL})
            CHECK(flow_check(merton(0.2, 0.5), model, 0.0, phi, 0.4, 1.0, 0.1,
                             seed) == 0.0);
    }
}

TEST_CASE("thread count does not change the ensemble") {
    const auto phi = CadlagPath::constant(0.0, 0.0, 0.1, 1.0);
    const auto model = LevyModel::from_atoms({{0.3, 1.0}});
    const auto a = simulate_ensemble(merton(0.1, 0.2), model, 0.0, phi, 1.0,
                                     0.1, 64, 9, 1);
    const auto b = simulate_ensemble(merton(0.1, 0.2), model, 0.0, phi, 1.0,
                                     0.1, 64, 9, 4);
    for (std::size_t p = 0; p < a.n_paths(); ++p)
        CHECK(a.paths[p] == b.paths[p]);
}
