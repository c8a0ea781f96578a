#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "zip/schedule.hpp"

using zip::make_linear_schedule;
using zip::make_timestep_path;
using zip::NoiseSchedule;
using zip::sigma_ddpm;

TEST_CASE("Linear schedule hits both endpoints") {
    const NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
    CHECK(s.steps() == 1000);
    CHECK(s.beta(1) == 1e-4);
    CHECK_THAT(s.beta(1000), Catch::Matchers::WithinULP(0.02, 2));

    const NoiseSchedule one = make_linear_schedule(1, 0.5, 0.9);
    CHECK(one.beta(1) == 0.5);
}

TEST_CASE("Schedule construction rejects invalid input") {
    CHECK_THROWS_AS(make_linear_schedule(0, 1e-4, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.0, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(make_linear_schedule(10, 1e-4, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.5, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(NoiseSchedule(std::vector<double>{}), std::invalid_argument);
    CHECK_THROWS_AS(NoiseSchedule({0.1, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(NoiseSchedule({-0.1}), std::invalid_argument);
}

TEST_CASE("Index bounds are enforced") {
    const NoiseSchedule s = make_linear_schedule(10, 1e-4, 0.02);
    CHECK_THROWS_AS(s.beta(0), std::invalid_argument);
    CHECK_THROWS_AS(s.beta(11), std::invalid_argument);
    CHECK_THROWS_AS(s.alpha(0), std::invalid_argument);
    CHECK_THROWS_AS(s.alpha_bar(-1), std::invalid_argument);
    CHECK_THROWS_AS(s.alpha_bar(11), std::invalid_argument);
    CHECK(s.alpha_bar(0) == 1.0);
    CHECK(s.alpha_bar(10) > 0.0);
}

TEST_CASE("alpha_bar matches an extended-precision cumulative product") {
    const NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
    long double acc = 1.0L;
    for (int t = 1; t <= 1000; ++t) {
        CHECK(s.alpha(t) == 1.0 - s.beta(t));
        acc *= 1.0L - static_cast<long double>(s.beta(t));
        CHECK(s.alpha_bar(t) ==
              Catch::Approx(static_cast<double>(acc)).epsilon(1e-12));
        CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    }
}

TEST_CASE("Schedule values match frozen decimal-arithmetic constants") {
    // Reference values computed with 60-digit decimal arithmetic for the
    // linear schedule beta_1 = 1e-4, beta_T = 0.02.
    const NoiseSchedule s1000 = make_linear_schedule(1000, 1e-4, 0.02);
    CHECK(s1000.alpha_bar(1000) ==
          Catch::Approx(4.03582976537568331481763516155e-5).epsilon(1e-10));
    CHECK(s1000.alpha_bar(500) ==
          Catch::Approx(0.0785872428817782373432898268911).epsilon(1e-10));
    CHECK(s1000.beta(2) == Catch::Approx(0.000119919919919919919919).epsilon(1e-12));
    CHECK(sigma_ddpm(s1000, 2) ==
          Catch::Approx(0.00738457017117625160608918877877).epsilon(1e-10));

    const NoiseSchedule s50 = make_linear_schedule(50, 1e-4, 0.02);
    CHECK(s50.alpha_bar(50) ==
          Catch::Approx(0.602951597329714903450059280988).epsilon(1e-10));
    CHECK(s50.alpha_bar(25) ==
          Catch::Approx(0.882712929440237483708773297588).epsilon(1e-10));
    CHECK(sigma_ddpm(s50, 7) ==
          Catch::Approx(0.0429129885665431387459743930214).epsilon(1e-10));

    const NoiseSchedule s100 = make_linear_schedule(100, 1e-4, 0.02);
    CHECK(s100.alpha_bar(100) ==
          Catch::Approx(0.363563248055491915447219599860).epsilon(1e-10));
}

TEST_CASE("sigma_ddpm vanishes at t = 1 and matches its definition") {
    const NoiseSchedule s = make_linear_schedule(50, 1e-4, 0.02);
    CHECK(sigma_ddpm(s, 1) == 0.0);
    for (int t = 2; t <= 50; ++t) {
        const double expected =
            std::sqrt((1.0 - s.alpha_bar(t - 1)) / (1.0 - s.alpha_bar(t)) * s.beta(t));
        CHECK(sigma_ddpm(s, t) == expected);
    }
}

TEST_CASE("Timestep path covers T down to 1 with the requested stride") {
    const NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
    const zip::TimestepPath path = make_timestep_path(s, 50);
    REQUIRE(path.steps.size() == 21);
    CHECK(path.steps.front() == 1000);
    CHECK(path.steps[19] == 50);
    CHECK(path.steps.back() == 1);
    CHECK(path.prev(1000) == 950);
    CHECK(path.prev(50) == 1);
    CHECK(path.prev(1) == 0);
    CHECK_THROWS_AS(path.prev(999), std::invalid_argument);

    const NoiseSchedule s100 = make_linear_schedule(100, 1e-4, 0.02);
    const zip::TimestepPath dense = make_timestep_path(s100, 1);
    REQUIRE(dense.steps.size() == 100);
    for (int i = 0; i < 100; ++i) CHECK(dense.steps[static_cast<std::size_t>(i)] == 100 - i);

    const zip::TimestepPath coarse = make_timestep_path(s100, 100);
    CHECK(coarse.steps == std::vector<int>{100, 1});

    CHECK_THROWS_AS(make_timestep_path(s100, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_timestep_path(s100, 101), std::invalid_argument);
}
