#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fbsde/levy.hpp"

using namespace fbsde;

TEST_CASE("zero intensity gives an empty train, always") {
    const LevyModel model = LevyModel::none();
    for (std::uint64_t p = 0; p < 20; ++p) {
        const auto train =
            sample_jump_train(model, 0.0, 1.0, CounterRng(7, p, 0));
        CHECK(train.times.empty());
        CHECK(train.marks.empty());
    }
}

TEST_CASE("jump count follows the Poisson law (statistical oracle)") {
    // Single atom (z = 1, w = 2), unit window: count ~ Poisson(2).
    const auto model = LevyModel::from_atoms({{1.0, 2.0}});
    const std::size_t n = 100000;
    double sum = 0.0;
    for (std::size_t p = 0; p < n; ++p)
        sum += static_cast<double>(
            sample_jump_train(model, 0.0, 1.0, CounterRng(11, p, 0))
                .times.size());
    const double mean = sum / static_cast<double>(n);
    // var of Poisson(2) is 2; 3 sigma band around the mean.
    const double band = 3.0 * std::sqrt(2.0 / static_cast<double>(n));
    CHECK(std::abs(mean - 2.0) < band);
}

TEST_CASE("mark frequencies follow the atom weights (multinomial oracle)") {
    const auto model = LevyModel::from_atoms({{1.0, 1.0}, {-1.0, 1.0}});
    std::size_t plus = 0, total = 0;
    for (std::uint64_t p = 0; total < 100000; ++p) {
        const auto train =
            sample_jump_train(model, 0.0, 1.0, CounterRng(13, p, 0));
        for (double z : train.marks) {
            if (z > 0.0) ++plus;
            ++total;
        }
    }
    const double freq = static_cast<double>(plus) / static_cast<double>(total);
    const double band = 3.0 * 0.5 / std::sqrt(static_cast<double>(total));
    CHECK(std::abs(freq - 0.5) < band);
}

TEST_CASE("jump times are strictly within the window and sorted") {
    const auto model = LevyModel::from_atoms({{0.5, 4.0}});
    const auto train =
        sample_jump_train(model, 1.0, 3.0, CounterRng(17, 0, 5));
    for (std::size_t i = 0; i < train.times.size(); ++i) {
        CHECK(train.times[i] > 1.0);
        CHECK(train.times[i] <= 3.0);
        if (i > 0) CHECK(train.times[i] >= train.times[i - 1]);
    }
}

TEST_CASE("nu_integral is an exact atom sum") {
    CHECK(nu_integral(LevyModel::from_atoms({{1.0, 2.0}}),
                      [](double z) { return 0.0 * z; }) == 0.0);
    CHECK(nu_integral(LevyModel::from_atoms({{1.0, 2.0}}),
                      [](double z) { return z * z; }) == doctest::Approx(2.0));
    CHECK(nu_integral(LevyModel::from_atoms({{1.0, 1.0}, {-2.0, 3.0}}),
                      [](double z) { return z; }) == doctest::Approx(-5.0));
}

TEST_CASE("nu_integral reports the offending atom on NaN") {
    const auto model = LevyModel::from_atoms({{1.0, 1.0}});
    CHECK_THROWS_AS(
        nu_integral(model, [](double) { return std::nan(""); }),
        NumericError);
}

TEST_CASE("empty-atom model with positive intensity is rejected") {
    LevyModel model;
    model.total_intensity = 1.0;
    CHECK_THROWS_AS(model.validate(), ConfigError);
    CHECK_THROWS_AS(sample_jump_train(model, 0.0, 1.0, CounterRng(1, 0, 0)),
                    ConfigError);
}

TEST_CASE("compensated increment: hand values") {
    const auto model = LevyModel::from_atoms({{1.0, 1.0}});
    JumpTrain empty;
    // No jumps, g(z) = z, window 1: 0 - 1*1 = -1.
    CHECK(compensated_increment(empty, model, [](double z) { return z; }, 0.0,
                                1.0) == doctest::Approx(-1.0));
    // g = 0 regardless of train.
    JumpTrain some{{0.3, 0.7}, {1.0, 1.0}};
    CHECK(compensated_increment(some, model, [](double) { return 0.0; }, 0.0,
                                1.0) == 0.0);
}

TEST_CASE("compensated increment is centered and satisfies the isometry") {
    const auto model = LevyModel::from_atoms({{1.0, 1.5}, {-0.5, 0.5}});
    const auto g = [](double z) { return z + 0.2 * z * z; };
    const double window = 0.7;
    const std::size_t n = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (std::uint64_t p = 0; p < n; ++p) {
        const auto train =
            sample_jump_train(model, 0.0, window, CounterRng(23, p, 0));
        const double inc = compensated_increment(train, model, g, 0.0, window);
        sum += inc;
        sum_sq += inc * inc;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    const double se = std::sqrt(var / n);
    CHECK(std::abs(mean) < 3.0 * se);

    const double expected_var =
        window * nu_integral(model, [&](double z) { return g(z) * g(z); });
    CHECK(var == doctest::Approx(expected_var).epsilon(0.05));
}

TEST_CASE("identical seed gives a bitwise-identical train") {
    const auto model = LevyModel::from_atoms({{1.0, 2.0}, {-1.0, 1.0}});
    const auto a = sample_jump_train(model, 0.0, 2.0, CounterRng(42, 3, 9));
    const auto b = sample_jump_train(model, 0.0, 2.0, CounterRng(42, 3, 9));
    CHECK(a.times == b.times);
    CHECK(a.marks == b.marks);
}
