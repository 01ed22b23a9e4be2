#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mixseg/gradcheck.hpp"
#include "mixseg/ops.hpp"
#include "support/test_util.hpp"

using namespace mixseg;
using testutil::conv2d_same_reference;
using testutil::rand_tensor;
using testutil::rand_tensor_nonzero;

namespace {

template <class T>
std::shared_ptr<std::vector<T>> rand_weights(std::int64_t n, Rng& rng) {
    auto w = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n));
    for (auto& v : *w) v = static_cast<T>(rng.uniform(-1.0, 1.0));
    return w;
}

}  // namespace

TEST_CASE("tensor shape/data invariant") {
    CHECK_THROWS_AS(Tensor<float>({2, 3}, std::vector<float>(5, 0.0f)), ShapeError);
    CHECK_THROWS_AS(Tensor<float>({0, 3}, std::vector<float>{}), ShapeError);
    auto t = Tensor<double>::zeros({2, 3, 4});
    CHECK(t.numel() == 24);
}

TEST_CASE("conv2d_same: 1x1 identity kernel reproduces the input") {
    Tape<double> tape;
    auto x = make_full<double>({3, 3, 1}, 1.0);
    auto w = make_full<double>({1, 1, 1, 1}, 1.0);
    auto b = make_zeros<double>({1});
    auto y = conv2d_same(tape, x, w, b);
    CHECK(y->shape == x->shape);
    for (std::size_t i = 0; i < y->data.size(); ++i) {
        CHECK(y->data[i] == doctest::Approx(x->data[i]));
    }
}

TEST_CASE("conv2d_same: all-ones 3x3 kernel on all-ones input counts window overlap") {
    Tape<double> tape;
    auto x = make_full<double>({3, 3, 1}, 1.0);
    auto w = make_full<double>({3, 3, 1, 1}, 1.0);
    auto b = make_zeros<double>({1});
    auto y = conv2d_same(tape, x, w, b);
    // Window cell counts inside a 3x3 image: corners 4, edge midpoints 6, center 9.
    const std::vector<double> expected = {4, 6, 4, 6, 9, 6, 4, 6, 4};
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(y->data[i] == doctest::Approx(expected[i]));
    }
    // Same answer from the independent nested-loop oracle.
    auto ref = conv2d_same_reference(*x, *w, *b);
    CHECK(testutil::max_abs_diff(y->data, ref.data) < 1e-12);
}

TEST_CASE("conv2d_same: patch-sized input with 7x7 kernel keeps spatial dims") {
    Tape<float> tape(false);
    Rng rng(11);
    auto x = rand_tensor<float>({48, 48, 1}, rng);
    auto w = rand_tensor<float>({7, 7, 1, 8}, rng);
    auto b = rand_tensor<float>({8}, rng);
    auto y = conv2d_same(tape, x, w, b);
    CHECK(y->shape == Shape{48, 48, 8});
}

TEST_CASE("conv2d_same: shape and configuration errors") {
    Tape<float> tape;
    Rng rng(3);
    auto x = rand_tensor<float>({4, 4, 2}, rng);
    auto wrong_c = rand_tensor<float>({3, 3, 3, 4}, rng);
    auto b4 = make_zeros<float>({4});
    CHECK_THROWS_AS(conv2d_same(tape, x, wrong_c, b4), ShapeError);
    CHECK_THROWS_WITH_AS(conv2d_same(tape, x, wrong_c, b4), doctest::Contains("(4,4,2)"), ShapeError);
    auto even = rand_tensor<float>({2, 2, 2, 4}, rng);
    CHECK_THROWS_AS(conv2d_same(tape, x, even, b4), ConfigError);
    auto w = rand_tensor<float>({3, 3, 2, 4}, rng);
    auto bad_bias = make_zeros<float>({3});
    CHECK_THROWS_AS(conv2d_same(tape, x, w, bad_bias), ShapeError);
}

TEST_CASE("conv2d_same: im2col path equals naive oracle on random batched input") {
    Rng rng(17);
    for (int round = 0; round < 8; ++round) {
        const std::int64_t k = 2 * static_cast<std::int64_t>(rng.below(4)) + 1;
        const std::int64_t h = 3 + static_cast<std::int64_t>(rng.below(6));
        const std::int64_t w = 3 + static_cast<std::int64_t>(rng.below(6));
        const std::int64_t c = 1 + static_cast<std::int64_t>(rng.below(3));
        const std::int64_t m = 1 + static_cast<std::int64_t>(rng.below(4));
        const std::int64_t b = 1 + static_cast<std::int64_t>(rng.below(2));
        Tape<double> tape(false);
        auto x = rand_tensor<double>({b, h, w, c}, rng);
        auto kw = rand_tensor<double>({k, k, c, m}, rng);
        auto kb = rand_tensor<double>({m}, rng);
        auto y = conv2d_same(tape, x, kw, kb);
        auto ref = conv2d_same_reference(*x, *kw, *kb);
        CHECK(y->shape == Shape{b, h, w, m});
        CHECK(testutil::max_abs_diff(y->data, ref.data) < 1e-11);
    }
}

TEST_CASE("conv2d_same: spatial shape preserved for every odd kernel size") {
    Rng rng(23);
    for (int round = 0; round < 12; ++round) {
        for (std::int64_t k : {1, 3, 5, 7}) {
            const std::int64_t h = 1 + static_cast<std::int64_t>(rng.below(9));
            const std::int64_t w = 1 + static_cast<std::int64_t>(rng.below(9));
            const std::int64_t c = 1 + static_cast<std::int64_t>(rng.below(3));
            const std::int64_t m = 1 + static_cast<std::int64_t>(rng.below(3));
            Tape<float> tape(false);
            auto x = rand_tensor<float>({h, w, c}, rng);
            auto y = conv2d_same(tape, x, rand_tensor<float>({k, k, c, m}, rng),
                                 rand_tensor<float>({m}, rng));
            CHECK(y->shape == Shape{h, w, m});
        }
    }
}

TEST_CASE("conv2d_same: linear in the input with zero bias") {
    Rng rng(29);
    Tape<double> tape(false);
    auto x = rand_tensor<double>({5, 6, 2}, rng);
    auto y = rand_tensor<double>({5, 6, 2}, rng);
    auto w = rand_tensor<double>({3, 3, 2, 3}, rng);
    auto zero = make_zeros<double>({3});
    const double a = 2.25, c = -0.75;
    auto mixi = make_zeros<double>({5, 6, 2});
    for (std::size_t i = 0; i < mixi->data.size(); ++i) {
        mixi->data[i] = a * x->data[i] + c * y->data[i];
    }
    auto lhs = conv2d_same(tape, mixi, w, zero);
    auto cx = conv2d_same(tape, x, w, zero);
    auto cy = conv2d_same(tape, y, w, zero);
    for (std::size_t i = 0; i < lhs->data.size(); ++i) {
        CHECK(lhs->data[i] == doctest::Approx(a * cx->data[i] + c * cy->data[i]).epsilon(1e-6));
    }
}

TEST_CASE("conv2d_same: gradients match finite differences") {
    Rng rng(31);
    auto x = rand_tensor<double>({4, 5, 2}, rng);
    auto w = rand_tensor<double>({3, 3, 2, 3}, rng);
    auto b = rand_tensor<double>({3}, rng);
    auto weights = rand_weights<double>(4 * 5 * 3, rng);
    GradProbe<double> probe;
    probe.forward = [&](Tape<double>& tape) {
        return weighted_sum(tape, conv2d_same(tape, x, w, b), weights);
    };
    probe.wrt = {x, w, b};
    CHECK(probe.max_error() < 1e-4);
}

TEST_CASE("concat_channels: single part is the identity") {
    Tape<float> tape;
    Rng rng(5);
    auto x = rand_tensor<float>({3, 4, 2}, rng);
    auto y = concat_channels(tape, {x});
    CHECK(y->shape == x->shape);
    CHECK(y->data == x->data);
}

TEST_CASE("concat_channels: four 16-channel parts make 64 channels") {
    Tape<float> tape(false);
    Rng rng(7);
    std::vector<TensorPtr<float>> parts;
    for (int i = 0; i < 4; ++i) parts.push_back(rand_tensor<float>({48, 48, 16}, rng));
    auto y = concat_channels(tape, parts);
    CHECK(y->shape == Shape{48, 48, 64});
}

TEST_CASE("concat_channels: channel blocks appear in argument order") {
    Tape<float> tape;
    auto a = make_tensor<float>({2, 2, 1}, {1, 2, 3, 4});
    auto b = make_tensor<float>({2, 2, 1}, {5, 6, 7, 8});
    auto y = concat_channels(tape, {a, b});
    CHECK(y->shape == Shape{2, 2, 2});
    // Channel 0 holds 1..4, channel 1 holds 5..8, interleaved per pixel.
    const std::vector<float> expected = {1, 5, 2, 6, 3, 7, 4, 8};
    CHECK(y->data == expected);
}

TEST_CASE("concat_channels: spatial mismatch raises a dimension error") {
    Tape<float> tape;
    Rng rng(9);
    auto a = rand_tensor<float>({2, 2, 1}, rng);
    auto b = rand_tensor<float>({3, 2, 1}, rng);
    CHECK_THROWS_AS(concat_channels(tape, {a, b}), ShapeError);
    CHECK_THROWS_AS(concat_channels(tape, {}), ShapeError);
}

TEST_CASE("concat/slice round-trip is bit-exact") {
    Rng rng(13);
    for (int round = 0; round < 10; ++round) {
        Tape<float> tape;
        const std::int64_t h = 1 + static_cast<std::int64_t>(rng.below(5));
        const std::int64_t w = 1 + static_cast<std::int64_t>(rng.below(5));
        std::vector<TensorPtr<float>> parts;
        const int n = 1 + static_cast<int>(rng.below(4));
        for (int i = 0; i < n; ++i) {
            parts.push_back(rand_tensor<float>({h, w, 1 + static_cast<std::int64_t>(rng.below(4))}, rng));
        }
        auto y = concat_channels(tape, parts);
        std::int64_t off = 0;
        for (const auto& p : parts) {
            auto back = slice_channels(tape, y, off, off + p->channels());
            CHECK(back->data == p->data);
            off += p->channels();
        }
    }
}

TEST_CASE("concat_channels: gradient routes each block to its source") {
    Rng rng(37);
    auto a = rand_tensor<double>({3, 3, 2}, rng);
    auto b = rand_tensor<double>({3, 3, 1}, rng);
    auto weights = rand_weights<double>(3 * 3 * 3, rng);
    GradProbe<double> probe;
    probe.forward = [&](Tape<double>& tape) {
        return weighted_sum(tape, concat_channels(tape, {a, b}), weights);
    };
    probe.wrt = {a, b};
    CHECK(probe.max_error() < 1e-4);
}

TEST_CASE("max_pool2: window max and shape halving") {
    Tape<float> tape;
    auto x = make_tensor<float>({2, 2, 1}, {1, 2, 3, 4});
    auto y = max_pool2(tape, x);
    CHECK(y->shape == Shape{1, 1, 1});
    CHECK(y->data[0] == 4.0f);

    Rng rng(41);
    auto big = rand_tensor<float>({48, 48, 3}, rng);
    CHECK(max_pool2(tape, big)->shape == Shape{24, 24, 3});

    auto odd = rand_tensor<float>({3, 4, 1}, rng);
    CHECK_THROWS_AS(max_pool2(tape, odd), ShapeError);
}

TEST_CASE("max_pool2: constant input sends gradient to the first window element") {
    Tape<double> tape;
    auto x = make_full<double>({2, 2, 1}, 3.5, true);
    auto y = max_pool2(tape, x);
    CHECK(y->data[0] == 3.5);
    auto loss = sum(tape, y);
    tape.backward(loss);
    CHECK(x->grad == std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("max_pool2: gradient matches finite differences on tie-free input") {
    Rng rng(43);
    auto x = rand_tensor<double>({4, 6, 2}, rng);
    auto weights = rand_weights<double>(2 * 3 * 2, rng);
    GradProbe<double> probe;
    probe.forward = [&](Tape<double>& tape) {
        return weighted_sum(tape, max_pool2(tape, x), weights);
    };
    probe.wrt = {x};
    CHECK(probe.max_error(1e-6) < 1e-4);
}

TEST_CASE("upsample2_nearest: replication and round trip on constants") {
    Tape<float> tape;
    auto x = make_full<float>({1, 1, 1}, 5.0f);
    auto y = upsample2_nearest(tape, x);
    CHECK(y->shape == Shape{2, 2, 1});
    CHECK(y->data == std::vector<float>(4, 5.0f));

    auto c = make_full<float>({3, 3, 2}, 0.25f);
    auto back = max_pool2(tape, upsample2_nearest(tape, c));
    CHECK(back->shape == c->shape);
    CHECK(back->data == c->data);
}

TEST_CASE("upsample2_nearest: gradient of sum is 4 everywhere") {
    auto x = rand_tensor<double>({2, 3, 2}, *std::make_unique<Rng>(47).get());
    {
        Tape<double> tape;
        x->requires_grad = true;
        auto loss = sum(tape, upsample2_nearest(tape, x));
        tape.backward(loss);
        for (double g : x->grad) CHECK(g == doctest::Approx(4.0));
    }
    // Same value from the finite-difference oracle.
    auto fd = finite_difference_grad<double>(
        [](const Tensor<double>& t) {
            Tape<double> tape(false);
            auto y = upsample2_nearest(tape, std::make_shared<Tensor<double>>(t));
            double acc = 0;
            for (double v : y->data) acc += v;
            return acc;
        },
        *x);
    for (double g : fd.data) CHECK(g == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("batch_norm: normalized input is a fixed point") {
    Tape<double> tape;
    // Batch of two single-channel pixels {-1, +1}: zero mean, unit variance.
    auto x = make_tensor<double>({2, 1, 1, 1}, {-1.0, 1.0});
    auto gamma = make_full<double>({1}, 1.0);
    auto beta = make_zeros<double>({1});
    std::vector<double> rm(1, 0.0), rv(1, 1.0);
    auto y = batch_norm(tape, x, gamma, beta, rm, rv, true);
    CHECK(std::abs(y->data[0] - (-1.0)) < 1e-5);
    CHECK(std::abs(y->data[1] - 1.0) < 1e-5);
    // Running stats moved toward the batch stats with momentum 0.1.
    CHECK(rm[0] == doctest::Approx(0.0));
    CHECK(rv[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0));
}

TEST_CASE("batch_norm: zero gamma collapses output to beta") {
    Tape<float> tape;
    Rng rng(53);
    auto x = rand_tensor<float>({2, 3, 3, 2}, rng);
    auto gamma = make_zeros<float>({2});
    auto beta = make_tensor<float>({2}, {0.5f, -2.0f});
    std::vector<float> rm(2, 0.0f), rv(2, 1.0f);
    auto y = batch_norm(tape, x, gamma, beta, rm, rv, true);
    for (std::size_t i = 0; i < y->data.size(); ++i) {
        CHECK(y->data[i] == doctest::Approx(beta->data[i % 2]));
    }
}

TEST_CASE("batch_norm: batch {1,3} normalizes to {-1,+1} up to epsilon") {
    Tape<double> tape;
    auto x = make_tensor<double>({2, 1, 1, 1}, {1.0, 3.0});
    auto gamma = make_full<double>({1}, 1.0);
    auto beta = make_zeros<double>({1});
    std::vector<double> rm(1, 0.0), rv(1, 1.0);
    auto y = batch_norm(tape, x, gamma, beta, rm, rv, true);
    // mean 2, biased var 1; epsilon 1e-5 shaves a hair off the magnitude.
    CHECK(y->data[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(y->data[1] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(std::abs(y->data[0]) < 1.0);
}

TEST_CASE("batch_norm: eval mode uses running stats") {
    Tape<double> tape;
    auto x = make_tensor<double>({2, 1, 1, 1}, {4.0, 8.0});
    auto gamma = make_full<double>({1}, 2.0);
    auto beta = make_full<double>({1}, 1.0);
    std::vector<double> rm(1, 4.0), rv(1, 4.0);
    auto y = batch_norm(tape, x, gamma, beta, rm, rv, false);
    CHECK(y->data[0] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(y->data[1] == doctest::Approx(2.0 * (4.0 / std::sqrt(4.00001)) + 1.0).epsilon(1e-6));
    // Eval mode must not touch the running stats.
    CHECK(rm[0] == 4.0);
    CHECK(rv[0] == 4.0);
}

TEST_CASE("batch_norm: gradient matches finite differences") {
    Rng rng(59);
    auto x = rand_tensor<double>({2, 3, 4, 3}, rng);
    auto gamma = rand_tensor<double>({3}, rng, 0.5, 1.5);
    auto beta = rand_tensor<double>({3}, rng);
    auto weights = rand_weights<double>(2 * 3 * 4 * 3, rng);
    auto rm = std::make_shared<std::vector<double>>(3, 0.0);
    auto rv = std::make_shared<std::vector<double>>(3, 1.0);
    GradProbe<double> probe;
    probe.forward = [&, rm, rv](Tape<double>& tape) {
        return weighted_sum(tape, batch_norm(tape, x, gamma, beta, *rm, *rv, true), weights);
    };
    probe.wrt = {x, gamma, beta};
    CHECK(probe.max_error() < 1e-4);
}

TEST_CASE("batch_norm: parameter length mismatch raises a dimension error") {
    Tape<float> tape;
    Rng rng(61);
    auto x = rand_tensor<float>({2, 2, 2, 3}, rng);
    auto gamma = make_full<float>({2}, 1.0f);
    auto beta = make_zeros<float>({3});
    std::vector<float> rm(3, 0.0f), rv(3, 1.0f);
    CHECK_THROWS_AS(batch_norm(tape, x, gamma, beta, rm, rv, true), ShapeError);
}

TEST_CASE("relu and sigmoid: pointwise values") {
    Tape<double> tape;
    auto x = make_tensor<double>({3}, {-2.0, 0.0, 3.0});
    auto r = relu(tape, x);
    CHECK(r->data == std::vector<double>{0.0, 0.0, 3.0});
    auto s = sigmoid(tape, make_zeros<double>({1}));
    CHECK(s->data[0] == doctest::Approx(0.5));
}

TEST_CASE("sigmoid: gradient at 0 is 0.25") {
    {
        Tape<double> tape;
        auto x = make_zeros<double>({1}, true);
        auto loss = sum(tape, sigmoid(tape, x));
        tape.backward(loss);
        CHECK(x->grad[0] == doctest::Approx(0.25));
    }
    auto fd = finite_difference_grad<double>(
        [](const Tensor<double>& t) {
            Tape<double> tape(false);
            return sigmoid(tape, std::make_shared<Tensor<double>>(t))->data[0];
        },
        Tensor<double>::zeros({1}));
    CHECK(fd.data[0] == doctest::Approx(0.25).epsilon(1e-8));
}

TEST_CASE("relu/sigmoid: gradients match finite differences") {
    Rng rng(67);
    auto x = rand_tensor_nonzero<double>({3, 4, 2}, rng);
    auto weights = rand_weights<double>(24, rng);
    GradProbe<double> relu_probe;
    relu_probe.forward = [&](Tape<double>& tape) {
        return weighted_sum(tape, relu(tape, x), weights);
    };
    relu_probe.wrt = {x};
    CHECK(relu_probe.max_error() < 1e-4);

    auto x2 = rand_tensor<double>({3, 4, 2}, rng);
    GradProbe<double> sig_probe;
    sig_probe.forward = [&](Tape<double>& tape) {
        return weighted_sum(tape, sigmoid(tape, x2), weights);
    };
    sig_probe.wrt = {x2};
    CHECK(sig_probe.max_error() < 1e-4);
}

TEST_CASE("bce_loss: perfect prediction has near-zero loss") {
    Tape<double> tape;
    auto t = make_tensor<double>({4}, {0, 1, 1, 0});
    auto p = make_tensor<double>({4}, {0, 1, 1, 0});
    auto loss = bce_loss(tape, p, t);
    CHECK(loss->data[0] >= 0.0);
    CHECK(loss->data[0] <= 1e-6);
}

TEST_CASE("bce_loss: uniform 0.5 prediction costs ln 2") {
    Tape<double> tape;
    auto t = make_tensor<double>({4}, {0, 1, 1, 0});
    auto p = make_full<double>({4}, 0.5);
    auto loss = bce_loss(tape, p, t);
    CHECK(loss->data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("bce_loss: errors on mismatched shapes and non-binary targets") {
    Tape<double> tape;
    auto p = make_full<double>({4}, 0.5);
    CHECK_THROWS_AS(bce_loss(tape, p, make_zeros<double>({5})), ShapeError);
    CHECK_THROWS_AS(bce_loss(tape, p, make_full<double>({4}, 0.5)), DataError);
}

TEST_CASE("bce_loss: gradient matches finite differences") {
    Rng rng(71);
    auto p = rand_tensor<double>({3, 3, 1}, rng, 0.05, 0.95);
    auto t = make_zeros<double>({3, 3, 1});
    for (auto& v : t->data) v = rng.coin() ? 1.0 : 0.0;
    GradProbe<double> probe;
    probe.forward = [&](Tape<double>& tape) { return bce_loss(tape, p, t); };
    probe.wrt = {p};
    CHECK(probe.max_error() < 1e-4);
}

TEST_CASE("backward: sum gives all-ones gradient") {
    Tape<double> tape;
    Rng rng(73);
    auto x = rand_tensor<double>({2, 3}, rng, -1, 1, true);
    auto loss = sum(tape, x);
    tape.backward(loss);
    CHECK(x->grad == std::vector<double>(6, 1.0));
}

TEST_CASE("backward: sum of squares at [1,2] gives [2,4]") {
    Tape<double> tape;
    auto x = make_tensor<double>({2}, {1.0, 2.0}, true);
    auto loss = sum(tape, mul(tape, x, x));
    tape.backward(loss);
    CHECK(x->grad[0] == doctest::Approx(2.0));
    CHECK(x->grad[1] == doctest::Approx(4.0));
}

TEST_CASE("backward: fan-out accumulates both branch gradients") {
    // Hand-built two-branch graph: loss = sum(relu(x) + x*x), all x > 0,
    // so grad must be 1 + 2x.
    Tape<double> tape;
    auto x = make_tensor<double>({3}, {0.5, 1.5, 2.0}, true);
    auto branch1 = relu(tape, x);
    auto branch2 = mul(tape, x, x);
    auto loss = sum(tape, add(tape, branch1, branch2));
    tape.backward(loss);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(x->grad[i] == doctest::Approx(1.0 + 2.0 * x->data[i]));
    }
}

TEST_CASE("backward: error on non-scalar loss and off-tape tensors") {
    Tape<double> tape;
    auto x = make_tensor<double>({2}, {1.0, 2.0}, true);
    auto y = add(tape, x, x);
    CHECK_THROWS_AS(tape.backward(y), NumericError);
    auto leaf = make_tensor<double>({1}, {1.0}, true);
    CHECK_THROWS_AS(tape.backward(leaf), NumericError);
}

TEST_CASE("determinism: identical seeds give bit-identical outputs and gradients") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        auto x = rand_tensor<double>({4, 4, 2}, rng, -1, 1, true);
        auto w = rand_tensor<double>({3, 3, 2, 2}, rng, -1, 1, true);
        auto b = rand_tensor<double>({2}, rng, -1, 1, true);
        Tape<double> tape;
        auto loss = sum(tape, sigmoid(tape, conv2d_same(tape, x, w, b)));
        tape.backward(loss);
        return std::make_tuple(loss->data[0], x->grad, w->grad);
    };
    auto a = run(99);
    auto b = run(99);
    CHECK(std::get<0>(a) == std::get<0>(b));
    CHECK(std::get<1>(a) == std::get<1>(b));
    CHECK(std::get<2>(a) == std::get<2>(b));
}

TEST_CASE("finite_difference_grad: closed forms") {
    auto ones = finite_difference_grad<double>(
        [](const Tensor<double>& t) {
            double acc = 0;
            for (double v : t.data) acc += v;
            return acc;
        },
        Tensor<double>::full({3}, 2.0));
    for (double g : ones.data) CHECK(g == doctest::Approx(1.0).epsilon(1e-9));

    auto sq = finite_difference_grad<double>(
        [](const Tensor<double>& t) {
            double acc = 0;
            for (double v : t.data) acc += v * v;
            return acc;
        },
        Tensor<double>::full({1}, 3.0));
    CHECK(sq.data[0] == doctest::Approx(6.0).epsilon(1e-8));
}

TEST_CASE("finite values: NaN detection is a checked failure") {
    auto x = make_full<float>({2}, 1.0f);
    CHECK_NOTHROW(check_finite(*x, "x"));
    x->data[1] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(check_finite(*x, "x"), NumericError);
}
