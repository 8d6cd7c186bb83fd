#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "hiersfl/errors.hpp"
#include "hiersfl/nn.hpp"
#include "hiersfl/rng.hpp"
#include "oracles.hpp"

using namespace hiersfl;

namespace {

Tensor2D random_input(Rng& rng, size_t rows, size_t cols) {
    Tensor2D x(rows, cols);
    for (double& v : x.data) v = rng.next_double();
    return x;
}

std::vector<int> random_labels(Rng& rng, size_t rows, size_t classes) {
    std::vector<int> labels(rows);
    for (int& l : labels) l = static_cast<int>(rng.next_below(classes));
    return labels;
}

}  // namespace

TEST_CASE("dense stack layout and param counts") {
    LayerStack stack = LayerStack::dense({784, 64, 32, 10});
    REQUIRE(stack.depth() == 3);
    CHECK(stack.layers[0].activation == Activation::Relu);
    CHECK(stack.layers[1].activation == Activation::Relu);
    CHECK(stack.layers[2].activation == Activation::SoftmaxOutput);
    CHECK(stack.layers[0].param_count() == 50240);
    CHECK(stack.layers[1].param_count() == 2080);
    CHECK(stack.layers[2].param_count() == 330);
    CHECK(stack.param_count() == 52650);
    CHECK(stack.input_dim() == 784);
    CHECK(stack.output_dim() == 10);

    LayerStack head = stack.prefix(1);
    LayerStack tail = stack.suffix(1);
    CHECK(head.param_count() == 50240);
    CHECK(tail.param_count() == 2410);
    CHECK(head.output_dim() == 64);
    CHECK(tail.input_dim() == 64);
}

TEST_CASE("dense stack validation") {
    CHECK_THROWS_AS(LayerStack::dense({784}), InputError);
    CHECK_THROWS_AS(LayerStack::dense({784, 0, 10}), InputError);
    LayerStack broken = LayerStack::dense({4, 3, 2});
    broken.layers[1].in_dim = 5;
    CHECK_THROWS_AS(broken.validate(), InputError);
}

TEST_CASE("glorot init ranges, zero biases, determinism") {
    LayerStack stack = LayerStack::dense({20, 12, 5});
    ParamVector a = init_params(stack, 99);
    ParamVector b = init_params(stack, 99);
    ParamVector c = init_params(stack, 100);
    CHECK(a.values == b.values);
    CHECK(a.values != c.values);
    CHECK(a.all_finite());

    for (size_t l = 0; l < stack.layers.size(); ++l) {
        const LayerShape& s = stack.layers[l];
        double limit = std::sqrt(6.0 / static_cast<double>(s.in_dim + s.out_dim));
        const double* w = a.layer_data(l);
        bool nonzero = false;
        for (size_t i = 0; i < s.in_dim * s.out_dim; ++i) {
            CHECK(std::fabs(w[i]) <= limit);
            nonzero = nonzero || w[i] != 0.0;
        }
        CHECK(nonzero);
        for (size_t i = 0; i < s.out_dim; ++i) CHECK(w[s.in_dim * s.out_dim + i] == 0.0);
    }
}

TEST_CASE("forward matches the scalar reference") {
    Rng rng(41);
    for (int rep = 0; rep < 20; ++rep) {
        size_t d = 2 + rng.next_below(6);
        size_t h = 2 + rng.next_below(5);
        size_t classes = 2 + rng.next_below(4);
        size_t rows = 1 + rng.next_below(6);
        LayerStack stack = LayerStack::dense({d, h, classes});
        ParamVector params = init_params(stack, rng.next_u64());
        Tensor2D x = random_input(rng, rows, d);

        ForwardResult fwd = forward(stack, params, x);
        auto ref = oracle::reference_forward(stack, params, oracle::to_rows(x));
        REQUIRE(fwd.output().rows == rows);
        REQUIRE(fwd.output().cols == classes);
        for (size_t r = 0; r < rows; ++r) {
            double row_sum = 0.0;
            for (size_t c2 = 0; c2 < classes; ++c2) {
                CHECK(fwd.output().at(r, c2) == doctest::Approx(ref[r][c2]).epsilon(1e-9));
                row_sum += fwd.output().at(r, c2);
            }
            CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("cross entropy of uniform predictions is ln(num_classes)") {
    Tensor2D preds(4, 10);
    for (double& v : preds.data) v = 0.1;
    std::vector<int> labels = {0, 3, 7, 9};
    CHECK(loss_cross_entropy(preds, labels) ==
          doctest::Approx(2.302585092994046).epsilon(1e-14));
}

TEST_CASE("cross entropy rejects bad labels and stays finite at zero probability") {
    Tensor2D preds(2, 3);
    preds.at(0, 0) = 1.0;
    preds.at(1, 2) = 1.0;
    CHECK_THROWS_AS(loss_cross_entropy(preds, {0}), InputError);
    CHECK_THROWS_AS(loss_cross_entropy(preds, {0, 3}), InputError);
    CHECK_THROWS_AS(loss_cross_entropy(preds, {-1, 0}), InputError);

    double loss = loss_cross_entropy(preds, {1, 2});
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(-std::log(1e-12) / 2.0).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences") {
    Rng rng(1234);
    std::vector<std::vector<size_t>> dims_list = {{5, 4, 3}, {6, 5, 4, 3}, {4, 3, 2}};
    for (const auto& dims : dims_list) {
        LayerStack stack = LayerStack::dense(dims);
        ParamVector params = init_params(stack, rng.next_u64());
        Tensor2D x = random_input(rng, 8, dims.front());
        std::vector<int> labels = random_labels(rng, 8, dims.back());

        ForwardResult fwd = forward(stack, params, x);
        ParamVector analytic = backward(stack, params, fwd, labels);
        std::vector<double> fd =
            oracle::fd_gradient(stack, params, oracle::to_rows(x), labels, 1e-5);

        REQUIRE(analytic.size() == fd.size());
        for (size_t i = 0; i < fd.size(); ++i) {
            double scale = std::max({std::fabs(fd[i]), std::fabs(analytic.values[i]), 1e-6});
            CHECK(std::fabs(analytic.values[i] - fd[i]) / scale <= 1e-4);
        }
    }
}

TEST_CASE("backward_with_input_grad leaves the parameter gradient unchanged") {
    Rng rng(77);
    LayerStack stack = LayerStack::dense({6, 5, 3});
    ParamVector params = init_params(stack, 7);
    Tensor2D x = random_input(rng, 4, 6);
    std::vector<int> labels = random_labels(rng, 4, 3);
    ForwardResult fwd = forward(stack, params, x);

    ParamVector plain = backward(stack, params, fwd, labels);
    Tensor2D input_grad(0, 0);
    ParamVector with_input = backward_with_input_grad(stack, params, fwd, labels, input_grad);
    CHECK(plain.values == with_input.values);
    REQUIRE(input_grad.rows == 4);
    REQUIRE(input_grad.cols == 6);
    CHECK(input_grad.all_finite());
}

TEST_CASE("backward_from_cut requires a relu top layer") {
    LayerStack stack = LayerStack::dense({6, 5, 3});
    ParamVector params = init_params(stack, 3);
    Rng rng(5);
    Tensor2D x = random_input(rng, 2, 6);
    ForwardResult fwd = forward(stack, params, x);
    Tensor2D cut_grad(2, 3);
    CHECK_THROWS_AS(backward_from_cut(stack, params, fwd, cut_grad), ContractViolation);
}

TEST_CASE("sgd step applies momentum and decayed learning rate") {
    std::vector<LayerShape> shapes{{Activation::SoftmaxOutput, 0, 2}};
    ParamVector w({1.0, 2.0}, shapes);
    OptimizerState opt = OptimizerState::make(2, 0.1, 0.9, 0.5);

    ParamVector g1({0.5, -1.0}, shapes);
    sgd_step(w, g1, opt);
    CHECK(w.values[0] == doctest::Approx(1.0 - 0.1 * 0.5).epsilon(1e-15));
    CHECK(w.values[1] == doctest::Approx(2.0 + 0.1 * 1.0).epsilon(1e-15));

    opt.advance_epoch();
    CHECK(opt.effective_rate() == doctest::Approx(0.09).epsilon(1e-15));

    ParamVector g2({1.0, 1.0}, shapes);
    double v0 = 0.5 * 0.5 + 1.0;
    double v1 = 0.5 * -1.0 + 1.0;
    double expect0 = (1.0 - 0.1 * 0.5) - 0.09 * v0;
    double expect1 = (2.0 + 0.1 * 1.0) - 0.09 * v1;
    sgd_step(w, g2, opt);
    CHECK(w.values[0] == doctest::Approx(expect0).epsilon(1e-15));
    CHECK(w.values[1] == doctest::Approx(expect1).epsilon(1e-15));
}

TEST_CASE("velocity reset keeps the epoch counter") {
    OptimizerState opt = OptimizerState::make(3, 0.1, 0.5, 0.9);
    opt.advance_epoch();
    opt.advance_epoch();
    opt.velocity = {1.0, 2.0, 3.0};
    opt.reset_velocity();
    CHECK(opt.epoch == 2);
    CHECK(opt.velocity == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(opt.effective_rate() == doctest::Approx(0.1 * 0.25).epsilon(1e-15));
}

TEST_CASE("optimizer construction rejects bad hyperparameters") {
    CHECK_THROWS_AS(OptimizerState::make(2, 0.0, 0.9, 0.5), InputError);
    CHECK_THROWS_AS(OptimizerState::make(2, 0.1, 0.0, 0.5), InputError);
    CHECK_THROWS_AS(OptimizerState::make(2, 0.1, 1.5, 0.5), InputError);
    CHECK_THROWS_AS(OptimizerState::make(2, 0.1, 0.9, 1.0), InputError);
    CHECK_THROWS_AS(OptimizerState::make(2, 0.1, 0.9, -0.1), InputError);
    CHECK_NOTHROW(OptimizerState::make(2, 0.1, 1.0, 0.0));
}

TEST_CASE("sgd step rejects mismatched shapes and non-finite gradients") {
    std::vector<LayerShape> s2{{Activation::SoftmaxOutput, 0, 2}};
    std::vector<LayerShape> s3{{Activation::SoftmaxOutput, 0, 3}};
    ParamVector w({1.0, 2.0}, s2);
    OptimizerState opt = OptimizerState::make(2, 0.1, 1.0, 0.0);

    ParamVector wrong({1.0, 2.0, 3.0}, s3);
    CHECK_THROWS_AS(sgd_step(w, wrong, opt), ContractViolation);

    ParamVector bad({std::nan(""), 0.0}, s2);
    CHECK_THROWS_AS(sgd_step(w, bad, opt), NumericError);
}

TEST_CASE("forward flags non-finite parameters") {
    LayerStack stack = LayerStack::dense({3, 2, 2});
    ParamVector params = init_params(stack, 1);
    params.values[0] = std::numeric_limits<double>::infinity();
    Tensor2D x(1, 3);
    CHECK_THROWS_AS(forward(stack, params, x), NumericError);
}

TEST_CASE("forward and backward reject mismatched batch shapes") {
    LayerStack stack = LayerStack::dense({3, 2, 2});
    ParamVector params = init_params(stack, 1);
    Tensor2D wrong(2, 4);
    CHECK_THROWS_AS(forward(stack, params, wrong), InputError);

    Tensor2D x(2, 3);
    ForwardResult fwd = forward(stack, params, x);
    CHECK_THROWS_AS(backward(stack, params, fwd, {0}), InputError);
}
