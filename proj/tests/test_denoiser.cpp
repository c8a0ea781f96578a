#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <vector>

#include "zip/denoiser.hpp"
#include "zip/rng.hpp"
#include "zip/sampler.hpp"
#include "zip/schedule.hpp"
#include "zip/tensor.hpp"
#include "zip/tiling.hpp"

using zip::AnalyticGaussianDenoiser;
using zip::DiscreteDatasetDenoiser;
using zip::NoiseSchedule;
using zip::RngStream;
using zip::Tensor;

namespace {

NoiseSchedule schedule50() { return zip::make_linear_schedule(50, 1e-4, 0.02); }
NoiseSchedule schedule1000() { return zip::make_linear_schedule(1000, 1e-4, 0.02); }

}  // namespace

TEST_CASE("Single-reference prior always answers with the reference") {
    RngStream rng(40);
    const Tensor r = rng.gaussian_tensor(4, 4, 2);
    const DiscreteDatasetDenoiser den({r});
    const NoiseSchedule s = schedule50();
    for (int t : {1, 25, 50}) {
        const Tensor x_t = rng.gaussian_tensor(4, 4, 2);
        CHECK(zip::max_abs_diff(den.posterior_mean(x_t, t, s), r) == 0.0);
        const std::vector<double> w = den.posterior_weights(x_t, t, s);
        REQUIRE(w.size() == 1);
        CHECK(w[0] == 1.0);
    }
}

TEST_CASE("Equidistant references split the posterior evenly") {
    RngStream rng(41);
    const Tensor r = rng.gaussian_tensor(3, 3, 1);
    const DiscreteDatasetDenoiser den({r, -1.0 * r});
    const NoiseSchedule s = schedule50();
    const Tensor x_t(3, 3, 1, 0.0);
    const std::vector<double> w = den.posterior_weights(x_t, 20, s);
    CHECK(w[0] == 0.5);
    CHECK(w[1] == 0.5);
    CHECK(zip::max_abs(den.posterior_mean(x_t, 20, s)) == 0.0);
}

TEST_CASE("Posterior weights match a brute-force softmax oracle") {
    RngStream rng(42);
    std::vector<Tensor> refs;
    for (int i = 0; i < 8; ++i) refs.push_back(0.5 * rng.gaussian_tensor(4, 4, 1));
    const DiscreteDatasetDenoiser den(refs);
    const NoiseSchedule s = schedule50();
    const int t = 25;
    const Tensor x_t = zip::forward_sample(refs[3], t, s, rng.gaussian_tensor(4, 4, 1));

    // Naive long-double softmax; safe here because mid-schedule variance
    // keeps the unnormalized weights far above underflow.
    const long double abar = s.alpha_bar(t);
    const long double root_abar = std::sqrt(abar);
    std::vector<long double> expected(refs.size());
    long double total = 0.0L;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        long double d2 = 0.0L;
        for (std::size_t j = 0; j < x_t.data.size(); ++j) {
            const long double diff = static_cast<long double>(x_t.data[j]) -
                                     root_abar * static_cast<long double>(refs[i].data[j]);
            d2 += diff * diff;
        }
        expected[i] = std::exp(-d2 / (2.0L * (1.0L - abar)));
        total += expected[i];
    }
    for (long double& e : expected) e /= total;

    const std::vector<double> w = den.posterior_weights(x_t, t, s);
    double sum = 0.0;
    Tensor mean_oracle(4, 4, 1, 0.0);
    for (std::size_t i = 0; i < refs.size(); ++i) {
        CHECK(w[i] >= 0.0);
        CHECK(w[i] == Catch::Approx(static_cast<double>(expected[i])).margin(1e-9));
        sum += w[i];
        mean_oracle += static_cast<double>(expected[i]) * refs[i];
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));
    CHECK(zip::max_abs_diff(den.posterior_mean(x_t, t, s), mean_oracle) < 1e-9);
}

TEST_CASE("Posterior mean stays in the convex hull of the references") {
    RngStream rng(43);
    std::vector<Tensor> refs;
    for (int i = 0; i < 5; ++i) refs.push_back(rng.gaussian_tensor(2, 2, 1));
    const DiscreteDatasetDenoiser den(refs);
    const NoiseSchedule s = schedule50();
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor pm = den.posterior_mean(2.0 * rng.gaussian_tensor(2, 2, 1), 30, s);
        for (std::size_t j = 0; j < pm.data.size(); ++j) {
            double lo = refs[0].data[j], hi = refs[0].data[j];
            for (const Tensor& r : refs) {
                lo = std::min(lo, r.data[j]);
                hi = std::max(hi, r.data[j]);
            }
            CHECK(pm.data[j] >= lo - 1e-12);
            CHECK(pm.data[j] <= hi + 1e-12);
        }
    }
}

TEST_CASE("Log-domain weights survive where naive softmax underflows") {
    const NoiseSchedule s = schedule1000();
    const DiscreteDatasetDenoiser den({Tensor(4, 4, 1, 0.0), Tensor(4, 4, 1, 1.0)});

    // Both unnormalized weights are exp(-huge); the max-subtracted form
    // still concentrates on the nearer reference.
    const Tensor far(4, 4, 1, 50.0);
    const std::vector<double> w = den.posterior_weights(far, 1, s);
    CHECK(w[0] == 0.0);
    CHECK(w[1] == 1.0);
    CHECK(zip::max_abs_diff(den.posterior_mean(far, 1, s), Tensor(4, 4, 1, 1.0)) == 0.0);
}

TEST_CASE("Near-clean input at t = 1 concentrates on its reference") {
    RngStream rng(44);
    std::vector<Tensor> refs;
    for (int i = 0; i < 4; ++i) refs.push_back(rng.gaussian_tensor(4, 4, 1));
    const DiscreteDatasetDenoiser den(refs);
    const NoiseSchedule s = schedule1000();
    const Tensor x_t = std::sqrt(s.alpha_bar(1)) * refs[2];
    const std::vector<double> w = den.posterior_weights(x_t, 1, s);
    CHECK(w[2] > 1.0 - 1e-9);
    CHECK(zip::max_abs_diff(den.posterior_mean(x_t, 1, s), refs[2]) < 1e-9);
}

TEST_CASE("Discrete denoiser rejects bad construction and queries") {
    CHECK_THROWS_AS(DiscreteDatasetDenoiser(std::vector<Tensor>{}), std::invalid_argument);
    CHECK_THROWS_AS(DiscreteDatasetDenoiser({Tensor(2, 2, 1), Tensor(3, 2, 1)}),
                    std::invalid_argument);
    const DiscreteDatasetDenoiser den({Tensor(2, 2, 1, 0.5)});
    const NoiseSchedule s = schedule50();
    CHECK_THROWS_AS(den.posterior_weights(Tensor(2, 2, 1), 0, s), std::invalid_argument);
    CHECK_THROWS_AS(den.posterior_weights(Tensor(2, 2, 1), 51, s), std::invalid_argument);
    CHECK_THROWS_AS(den.posterior_weights(Tensor(2, 3, 1), 10, s), std::invalid_argument);
}

TEST_CASE("Standard-normal prior shrinks the state by sqrt(abar)") {
    const AnalyticGaussianDenoiser den(0.0, 1.0);
    const NoiseSchedule s = schedule50();
    RngStream rng(45);
    const Tensor x_t = rng.gaussian_tensor(3, 5, 2);
    for (int t : {0, 1, 25, 50}) {
        const Tensor expected = std::sqrt(s.alpha_bar(t)) * x_t;
        CHECK(zip::max_abs_diff(den.posterior_mean(x_t, t, s), expected) < 1e-12);
    }
    CHECK_THROWS_AS(den.posterior_mean(x_t, 51, s), std::invalid_argument);
}

TEST_CASE("Gaussian posterior limits: no noise keeps x_t, tiny prior pins mu") {
    RngStream rng(46);
    const Tensor x_t = rng.gaussian_tensor(2, 2, 1);
    const NoiseSchedule near_clean({1e-12});
    const AnalyticGaussianDenoiser unit(0.0, 1.0);
    CHECK(zip::max_abs_diff(unit.posterior_mean(x_t, 1, near_clean), x_t) < 1e-10);

    const Tensor mu(2, 2, 1, 0.7);
    const AnalyticGaussianDenoiser narrow(mu, 1e-6);
    const NoiseSchedule s = schedule50();
    CHECK(zip::max_abs_diff(narrow.posterior_mean(x_t, 25, s), mu) < 1e-9);

    CHECK_THROWS_AS(AnalyticGaussianDenoiser(0.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(AnalyticGaussianDenoiser(mu, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(narrow.posterior_mean(Tensor(3, 2, 1), 25, s), std::invalid_argument);
}

TEST_CASE("Scalar and constant-tensor means agree") {
    const AnalyticGaussianDenoiser scalar(0.3, 0.8);
    const AnalyticGaussianDenoiser tensor(Tensor(4, 4, 1, 0.3), 0.8);
    RngStream rng(47);
    const Tensor x_t = rng.gaussian_tensor(4, 4, 1);
    const NoiseSchedule s = schedule50();
    CHECK(zip::max_abs_diff(scalar.posterior_mean(x_t, 30, s),
                            tensor.posterior_mean(x_t, 30, s)) == 0.0);
    // Scalar form additionally adapts to any shape.
    CHECK_NOTHROW(scalar.posterior_mean(Tensor(7, 3, 2), 30, s));
}

TEST_CASE("Epsilon prediction recovers injected noise for a single reference") {
    RngStream rng(48);
    const Tensor r = 0.8 * rng.gaussian_tensor(4, 4, 2);
    const Tensor e = rng.gaussian_tensor(4, 4, 2);
    const DiscreteDatasetDenoiser den({r});
    const NoiseSchedule s = schedule50();
    for (int t : {1, 10, 40}) {
        const Tensor x_t = zip::forward_sample(r, t, s, e);
        CHECK(zip::max_abs_diff(den.predict_epsilon(x_t, t, s), e) < 1e-12);
    }
}

TEST_CASE("Epsilon prediction closed form for the standard-normal prior") {
    const AnalyticGaussianDenoiser den(0.0, 1.0);
    const NoiseSchedule s = schedule50();
    RngStream rng(49);
    const Tensor x_t = rng.gaussian_tensor(3, 3, 1);
    for (int t : {1, 20, 50}) {
        // eps_hat = (x_t - abar x_t) / sqrt(1-abar) = sqrt(1-abar) x_t.
        const Tensor expected = std::sqrt(1.0 - s.alpha_bar(t)) * x_t;
        CHECK(zip::max_abs_diff(den.predict_epsilon(x_t, t, s), expected) < 1e-12);
    }
    // No remaining noise at t = 0: the prediction is identically zero.
    const Tensor at_zero = den.predict_epsilon(x_t, 0, s);
    CHECK(zip::max_abs(at_zero) == 0.0);
    CHECK(at_zero.same_shape(x_t));
}

TEST_CASE("Denoised estimate from predicted epsilon equals the posterior mean") {
    RngStream rng(50);
    std::vector<Tensor> refs;
    for (int i = 0; i < 6; ++i) refs.push_back(rng.gaussian_tensor(4, 4, 1));
    const DiscreteDatasetDenoiser den(refs);
    const NoiseSchedule s = schedule50();
    for (int t : {5, 25, 45}) {
        const Tensor x_t = rng.gaussian_tensor(4, 4, 1);
        const Tensor eps = den.predict_epsilon(x_t, t, s);
        CHECK(zip::max_abs_diff(zip::estimate_x0(x_t, eps, t, s),
                                den.posterior_mean(x_t, t, s)) < 1e-10);
    }
}

TEST_CASE("Predicted noise is standard normal in the deep-noise limit") {
    const NoiseSchedule s = schedule1000();
    const AnalyticGaussianDenoiser den(0.0, 1.0);
    RngStream rng(51);
    const Tensor x0 = rng.gaussian_tensor(100, 100, 1);
    const Tensor eps = rng.gaussian_tensor(100, 100, 1);
    const Tensor ehat = den.predict_epsilon(zip::forward_sample(x0, 1000, s, eps), 1000, s);

    double mean = 0.0;
    for (double v : ehat.data) mean += v;
    mean /= static_cast<double>(ehat.data.size());
    double var = 0.0;
    for (double v : ehat.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(ehat.data.size() - 1);

    CHECK(std::abs(mean) < 0.05);
    CHECK(var == Catch::Approx(1.0).epsilon(0.05));
}

TEST_CASE("Tiled denoiser equals per-tile application of the inner backend") {
    RngStream rng(52);
    std::vector<Tensor> refs;
    for (int i = 0; i < 3; ++i) refs.push_back(rng.gaussian_tensor(4, 4, 1));
    const auto inner = std::make_shared<DiscreteDatasetDenoiser>(refs);
    const zip::TileGrid grid(2, 2, 4, 4);
    const zip::TiledDenoiser tiled(inner, grid);
    const NoiseSchedule s = schedule50();

    const Tensor mosaic = rng.gaussian_tensor(8, 8, 1);
    std::vector<Tensor> tiles = zip::untile_tensor(mosaic, grid);
    for (Tensor& tile : tiles) tile = inner->posterior_mean(tile, 25, s);
    const Tensor expected = zip::tile_tensors(tiles, grid);

    CHECK(zip::max_abs_diff(tiled.posterior_mean(mosaic, 25, s), expected) == 0.0);
    CHECK_THROWS_AS(zip::TiledDenoiser(nullptr, grid), std::invalid_argument);
}
