#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "hiersfl/errors.hpp"
#include "hiersfl/ldp.hpp"
#include "hiersfl/nn.hpp"

using namespace hiersfl;

TEST_CASE("clip pins values to the bound") {
    CHECK(clip_value(3.7, 0.5) == 0.5);
    CHECK(clip_value(-3.7, 0.5) == -0.5);
    CHECK(clip_value(0.2, 0.5) == 0.2);
    CHECK(clip_value(-0.5, 0.5) == -0.5);
    CHECK(clip_value(0.0, 0.5) == 0.0);
    CHECK_THROWS_AS(clip_value(1.0, 0.0), InputError);
}

TEST_CASE("sensitivity is the clipped range width") {
    CHECK(sensitivity(0.5) == 1.0);
    CHECK(sensitivity(2.0) == 4.0);
    CHECK_THROWS_AS(sensitivity(-1.0), InputError);
}

TEST_CASE("laplace scale examples") {
    CHECK(laplace_scale(1.0, 0.5) == 2.0);
    CHECK(laplace_scale(1.0, 5.0) == 0.2);
    CHECK(laplace_scale(2.0, 1.0) == 2.0);
    CHECK_THROWS_AS(laplace_scale(0.0, 1.0), InputError);
    CHECK_THROWS_AS(laplace_scale(1.0, 0.0), InputError);
}

TEST_CASE("inverse CDF maps the median and quartiles exactly") {
    CHECK(laplace_from_uniform(0.0, 2.0) == 0.0);
    // Quartiles of Laplace(0, c) sit at +-c ln 2.
    CHECK(laplace_from_uniform(0.25, 2.0) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-15));
    CHECK(laplace_from_uniform(-0.25, 2.0) ==
          doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-15));
    CHECK(laplace_from_uniform(0.4, 1.0) == doctest::Approx(-std::log(0.2)).epsilon(1e-15));
}

TEST_CASE("empirical calibration of 1e5 draws at scale 2") {
    Rng rng(4242);
    const size_t n = 100000;
    double sum = 0.0;
    double abs_sum = 0.0;
    for (double x : sample_laplace(rng, 2.0, n)) {
        sum += x;
        abs_sum += std::fabs(x);
    }
    double mean = sum / static_cast<double>(n);
    double mean_abs = abs_sum / static_cast<double>(n);
    CHECK(std::fabs(mean) <= 0.05);
    CHECK(std::fabs(mean_abs - 2.0) <= 0.04);
}

TEST_CASE("scalar and vector draws agree on the same stream") {
    Rng a(7);
    Rng b(7);
    std::vector<double> batch = sample_laplace(a, 0.7, 5);
    for (double expected : batch) CHECK(sample_laplace(b, 0.7) == expected);
}

TEST_CASE("disabled config is the identity and consumes no randomness") {
    LayerStack stack = LayerStack::dense({6, 5, 3});
    ParamVector params = init_params(stack, 5);
    ParamVector before = params;
    Rng rng(11);
    LdpConfig off;
    perturb_params(params, off, rng);
    CHECK(params.values == before.values);
    CHECK(rng.next_u64() == Rng(11).next_u64());
}

TEST_CASE("enabled perturbation clips then adds stream noise") {
    std::vector<LayerShape> shapes{{Activation::SoftmaxOutput, 0, 3}};
    ParamVector params({10.0, -10.0, 0.1}, shapes);
    LdpConfig cfg{true, 0.5, 1.0};
    double scale = laplace_scale(sensitivity(0.5), 1.0);

    Rng expect_rng(21);
    std::vector<double> noise = sample_laplace(expect_rng, scale, 3);

    Rng rng(21);
    perturb_params(params, cfg, rng);
    CHECK(params.values[0] == 0.5 + noise[0]);
    CHECK(params.values[1] == -0.5 + noise[1]);
    CHECK(params.values[2] == 0.1 + noise[2]);
}

TEST_CASE("larger epsilon means less noise") {
    std::vector<LayerShape> shapes{{Activation::SoftmaxOutput, 0, 1000}};
    auto total_noise = [&](double epsilon) {
        ParamVector params = ParamVector::zeros(shapes);
        Rng rng(33);
        perturb_params(params, LdpConfig{true, 0.5, epsilon}, rng);
        double total = 0.0;
        for (double v : params.values) total += std::fabs(v);
        return total;
    };
    double loose = total_noise(0.5);
    double tight = total_noise(5.0);
    CHECK(tight < loose);
    // Same stream, scales differ 10x, so the draws do too.
    CHECK(loose == doctest::Approx(10.0 * tight).epsilon(1e-12));
}

TEST_CASE("config validation") {
    CHECK_NOTHROW(LdpConfig{false, -1.0, -1.0}.validate());
    CHECK_THROWS_AS((LdpConfig{true, 0.0, 1.0}.validate()), InputError);
    CHECK_THROWS_AS((LdpConfig{true, 0.5, 0.0}.validate()), InputError);
    CHECK_NOTHROW((LdpConfig{true, 0.5, 0.5}.validate()));
}
