#include "doctest.h"

#include "fd_check.hpp"
#include "mvseg/ops.hpp"

using namespace mvseg;
using namespace mvseg::ops;
using testutil::max_grad_rel_err;
using testutil::random_tensor;
using testutil::weighted_probe;
using ag::Var;

namespace {
constexpr double kTol = 2e-6;
}

TEST_CASE("elementwise op gradients") {
    std::mt19937_64 rng(1);
    Var a = Var::param(random_tensor({2, 3, 4}, rng));
    Var b = Var::param(random_tensor({2, 3, 4}, rng));

    CHECK(max_grad_rel_err({a, b}, [&] { return weighted_probe(add(a, b)); }) < kTol);
    CHECK(max_grad_rel_err({a, b}, [&] { return weighted_probe(sub(a, b)); }) < kTol);
    CHECK(max_grad_rel_err({a, b}, [&] { return weighted_probe(mul(a, b)); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return weighted_probe(scale(a, -2.5)); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return weighted_probe(add_scalar(a, 0.7)); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return weighted_probe(gelu(a)); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return weighted_probe(sigmoid(a)); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return sum(a); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return mean(a); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return weighted_probe(reshape(a, {6, 4})); }) < kTol);
}

TEST_CASE("linear gradient and values") {
    std::mt19937_64 rng(2);
    Var x = Var::param(random_tensor({3, 5, 4}, rng));
    Var w = Var::param(random_tensor({4, 6}, rng));
    Var b = Var::param(random_tensor({6}, rng));
    CHECK(max_grad_rel_err({x, w, b}, [&] { return weighted_probe(linear(x, w, b)); }) < kTol);
    CHECK(max_grad_rel_err({x, w}, [&] { return weighted_probe(linear(x, w, Var())); }) < kTol);

    // Hand value: 1x1 case
    Var x1 = Var::constant(Tensor({1, 1}, {2.0}));
    Var w1 = Var::constant(Tensor({1, 1}, {3.0}));
    Var b1 = Var::constant(Tensor({1}, {0.5}));
    CHECK(linear(x1, w1, b1).value().data()[0] == doctest::Approx(6.5));
}

TEST_CASE("normalization gradients") {
    std::mt19937_64 rng(3);
    Var x = Var::param(random_tensor({2, 3, 6}, rng));
    Var g = Var::param(random_tensor({6}, rng, 0.5, 1.5));
    Var b = Var::param(random_tensor({6}, rng));
    CHECK(max_grad_rel_err({x, g, b}, [&] { return weighted_probe(layer_norm(x, g, b)); }) < kTol);

    Var xc = Var::param(random_tensor({2, 5, 3, 4}, rng));
    Var gc = Var::param(random_tensor({5}, rng, 0.5, 1.5));
    Var bc = Var::param(random_tensor({5}, rng));
    CHECK(max_grad_rel_err({xc, gc, bc}, [&] { return weighted_probe(channel_norm(xc, gc, bc)); }) <
          kTol);
}

TEST_CASE("layer_norm normalizes rows") {
    std::mt19937_64 rng(4);
    Var x = Var::constant(random_tensor({4, 8}, rng, -3.0, 3.0));
    Var g = Var::constant(Tensor::full({8}, 1.0));
    Var b = Var::constant(Tensor::zeros({8}));
    Tensor y = layer_norm(x, g, b).value();
    for (int64_t r = 0; r < 4; ++r) {
        double m = 0.0;
        for (int64_t j = 0; j < 8; ++j) m += y.data()[r * 8 + j];
        CHECK(std::fabs(m / 8.0) < 1e-12);
    }
}

TEST_CASE("conv gradients") {
    std::mt19937_64 rng(5);
    Var x = Var::param(random_tensor({2, 3, 5, 6}, rng));
    Var w = Var::param(random_tensor({4, 3, 3, 3}, rng));
    Var b = Var::param(random_tensor({4}, rng));
    CHECK(max_grad_rel_err({x, w, b}, [&] { return weighted_probe(conv2d(x, w, b, 1, 1)); }) < kTol);
    CHECK(max_grad_rel_err({x, w, b}, [&] { return weighted_probe(conv2d(x, w, b, 2, 1)); }) < kTol);

    Var w4 = Var::param(random_tensor({2, 3, 4, 4}, rng));
    Var b4 = Var::param(random_tensor({2}, rng));
    Var x8 = Var::param(random_tensor({1, 3, 8, 8}, rng));
    CHECK(max_grad_rel_err({x8, w4, b4}, [&] { return weighted_probe(conv2d(x8, w4, b4, 4, 0)); }) <
          kTol);

    Var dw = Var::param(random_tensor({3, 3, 3}, rng));
    CHECK(max_grad_rel_err({x, dw}, [&] { return weighted_probe(dwconv2d(x, dw, 1)); }) < kTol);

    Var a2 = Var::param(random_tensor({2, 3, 4, 5}, rng));
    Var b2 = Var::param(random_tensor({2, 3, 4, 5}, rng));
    Var w3 = Var::param(random_tensor({3, 2, 3, 3}, rng));
    CHECK(max_grad_rel_err({a2, b2, w3}, [&] { return weighted_probe(dwconv3d_pair(a2, b2, w3, 1)); }) <
          kTol);

    Var xt = Var::param(random_tensor({2, 3, 3, 4}, rng));
    Var wt = Var::param(random_tensor({3, 2, 2, 2}, rng));
    Var bt = Var::param(random_tensor({2}, rng));
    CHECK(max_grad_rel_err({xt, wt, bt}, [&] { return weighted_probe(conv_transpose2x2(xt, wt, bt)); }) <
          kTol);
}

TEST_CASE("conv2d value: identity kernel") {
    Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor w({1, 1, 1, 1}, {2.0});
    Var out = conv2d(Var::constant(x), Var::constant(w), Var(), 1, 0);
    CHECK(out.value().data()[4] == doctest::Approx(10.0));
    CHECK(out.value().shape() == std::vector<int64_t>{1, 1, 3, 3});
}

TEST_CASE("resampling gradients and values") {
    std::mt19937_64 rng(6);
    Var x = Var::param(random_tensor({2, 3, 4, 6}, rng));
    CHECK(max_grad_rel_err({x}, [&] { return weighted_probe(avg_pool2x2(x)); }) < kTol);
    CHECK(max_grad_rel_err({x}, [&] { return weighted_probe(bilinear_resize(x, 8, 12)); }) < kTol);
    CHECK(max_grad_rel_err({x}, [&] { return weighted_probe(bilinear_resize(x, 2, 3)); }) < kTol);
    CHECK(max_grad_rel_err({x}, [&] { return weighted_probe(bilinear_resize(x, 4, 6)); }) < kTol);
    CHECK(max_grad_rel_err({x}, [&] { return weighted_probe(bilinear_resize(x, 5, 7)); }) < kTol);

    // Constant fields stay constant under resize.
    Var c = Var::constant(Tensor::full({1, 1, 5, 5}, 0.25));
    Tensor up = bilinear_resize(c, 13, 9).value();
    for (int64_t i = 0; i < up.numel(); ++i) CHECK(up.data()[i] == doctest::Approx(0.25));

    // Identity resize is bit-exact.
    Tensor src = random_tensor({1, 2, 4, 4}, rng);
    CHECK(exact_equal(bilinear_resize(Var::constant(src), 4, 4).value(), src));

    // avg_pool2x2 value
    Tensor p({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    CHECK(avg_pool2x2(Var::constant(p)).value().data()[0] == doctest::Approx(2.5));
}

TEST_CASE("attention gradients and softmax convexity") {
    std::mt19937_64 rng(7);
    Var q = Var::param(random_tensor({2, 3, 4}, rng));
    Var k = Var::param(random_tensor({2, 5, 4}, rng));
    Var v = Var::param(random_tensor({2, 5, 4}, rng));
    CHECK(max_grad_rel_err({q, k, v}, [&] { return weighted_probe(attention_rows(q, k, v, 0.5)); }) <
          kTol);

    // All keys/values identical -> output equals that value row regardless of query.
    Tensor kv({1, 4, 3});
    for (int64_t j = 0; j < 4; ++j)
        for (int64_t t = 0; t < 3; ++t) kv.data()[j * 3 + t] = 0.6 * static_cast<double>(t) - 0.2;
    Var qq = Var::constant(random_tensor({1, 2, 3}, rng));
    Tensor out = attention_rows(qq, Var::constant(kv), Var::constant(kv), 1.0).value();
    for (int64_t i = 0; i < 2; ++i)
        for (int64_t t = 0; t < 3; ++t)
            CHECK(out.data()[i * 3 + t] == doctest::Approx(0.6 * static_cast<double>(t) - 0.2));
}

TEST_CASE("head splitting and token/map conversion") {
    std::mt19937_64 rng(8);
    Var x = Var::param(random_tensor({2, 3, 6}, rng));
    CHECK(max_grad_rel_err({x}, [&] { return weighted_probe(split_heads(x, 3)); }) < kTol);
    CHECK(max_grad_rel_err({x}, [&] { return weighted_probe(merge_heads(split_heads(x, 2), 2)); }) <
          kTol);
    CHECK(exact_equal(merge_heads(split_heads(x, 3), 3).value(), x.value()));

    Var m = Var::param(random_tensor({2, 12, 5}, rng));
    CHECK(max_grad_rel_err({m}, [&] { return weighted_probe(tokens_to_map(m, 3, 4)); }) < kTol);
    CHECK(exact_equal(map_to_tokens(tokens_to_map(m, 3, 4)).value(), m.value()));

    // Layout: token t of map position (y,x) = y*w+x.
    Tensor seq({1, 4, 1}, {10, 20, 30, 40});
    Tensor map = tokens_to_map(Var::constant(seq), 2, 2).value();
    CHECK(map.at({0, 0, 0, 0}) == 10);
    CHECK(map.at({0, 0, 0, 1}) == 20);
    CHECK(map.at({0, 0, 1, 0}) == 30);
    CHECK(map.at({0, 0, 1, 1}) == 40);
}

TEST_CASE("broadcast, token selection, pixel dot, concat") {
    std::mt19937_64 rng(9);
    Var t = Var::param(random_tensor({2, 3}, rng));
    CHECK(max_grad_rel_err({t}, [&] { return weighted_probe(broadcast_rows(t, 4)); }) < kTol);

    Var x = Var::param(random_tensor({3, 2, 5}, rng));
    CHECK(max_grad_rel_err({x}, [&] { return weighted_probe(select_token(x, 1)); }) < kTol);

    Var f = Var::param(random_tensor({2, 3, 4, 4}, rng));
    Var w = Var::param(random_tensor({2, 3}, rng));
    CHECK(max_grad_rel_err({f, w}, [&] { return weighted_probe(pixel_dot(f, w)); }) < kTol);

    Var a = Var::param(random_tensor({2, 2, 3, 3}, rng));
    Var b = Var::param(random_tensor({2, 4, 3, 3}, rng));
    CHECK(max_grad_rel_err({a, b}, [&] { return weighted_probe(concat_channels(a, b)); }) < kTol);
}

TEST_CASE("avg_pool_same matches direct window averaging") {
    std::mt19937_64 rng(10);
    Tensor x = random_tensor({1, 2, 5, 7}, rng, 0.0, 1.0);
    Tensor out = avg_pool_same(x, 3);
    // spot-check a corner: zero padding counts toward the divisor
    double expect = 0.0;
    for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) expect += x.at({0, 0, dy, dx});
    CHECK(out.at({0, 0, 0, 0}) == doctest::Approx(expect / 9.0));
}

TEST_CASE("no-grad mode skips graph construction") {
    std::mt19937_64 rng(11);
    Var x = Var::param(random_tensor({2, 2}, rng));
    ag::NoGradGuard ng;
    Var y = gelu(x);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("randomized op-chain gradient fuzz") {
    // Compose random map-to-map ops and finite-difference the whole chain;
    // exercises chain-rule plumbing across shape changes.
    // Channel count >= 3 keeps the channel-norm curvature bounded; with two
    // channels a near-tie in values makes the normalizer too sharp for a
    // fixed-step central difference.
    std::mt19937_64 rng(123);
    for (int trial = 0; trial < 12; ++trial) {
        int64_t c = 3 + static_cast<int64_t>(rng() % 2);
        int64_t h = 2 * (1 + static_cast<int64_t>(rng() % 3));
        int64_t w = 2 * (1 + static_cast<int64_t>(rng() % 3));
        Var x = Var::param(random_tensor({2, c, h, w}, rng));
        Var gamma = Var::param(random_tensor({c}, rng, 0.5, 1.5));
        Var beta = Var::param(random_tensor({c}, rng));
        Var dw = Var::param(random_tensor({c, 3, 3}, rng));

        int ops_mask = static_cast<int>(rng() % 32);
        auto chain = [&] {
            Var cur = x;
            if (ops_mask & 1) cur = gelu(cur);
            if (ops_mask & 2) cur = dwconv2d(cur, dw, 1);
            if (ops_mask & 4) cur = channel_norm(cur, gamma, beta);
            if (ops_mask & 8)
                cur = bilinear_resize(cur, cur.value().dim(2) * 2, cur.value().dim(3) + 1);
            if (ops_mask & 16) cur = sigmoid(cur);
            cur = avg_pool2x2(bilinear_resize(cur, h, w));
            return testutil::weighted_probe(cur, 1000 + static_cast<uint64_t>(trial));
        };
        CHECK(testutil::max_grad_rel_err({x, gamma, beta, dw}, chain) < 1e-4);
    }
}
