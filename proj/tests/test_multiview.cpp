#include "doctest.h"

#include <random>
#include <thread>

#include "fd_check.hpp"
#include "mvseg/multiview.hpp"

using namespace mvseg;
using namespace mvseg::multiview;
using ag::Var;
using testutil::random_tensor;

TEST_CASE("make_multiview shapes at reference resolution") {
    std::mt19937_64 rng(1);
    Tensor raw = random_tensor({1, 3, 1024, 1024}, rng, 0.0, 1.0);
    Tensor mv = make_multiview(raw, 512, 512);
    CHECK(mv.shape() == std::vector<int64_t>{5, 3, 512, 512});
}

TEST_CASE("make_multiview on pre-sized input is exact quadrant cropping") {
    std::mt19937_64 rng(2);
    Tensor raw = random_tensor({2, 3, 64, 96}, rng, 0.0, 1.0);
    Tensor mv = make_multiview(raw, 32, 48);
    SplitTensors s = split_views(mv);
    // Input already at (2h,2w): resize is the identity, crops are bit-exact.
    for (int q = 0; q < 4; ++q) {
        int64_t oy = (q / 2) * 32, ox = (q % 2) * 48;
        for (int64_t b = 0; b < 2; ++b)
            for (int64_t c = 0; c < 3; ++c)
                for (int64_t y = 0; y < 32; ++y)
                    for (int64_t x = 0; x < 48; ++x)
                        CHECK(s.locals[static_cast<size_t>(q)].at({b, c, y, x}) ==
                              raw.at({b, c, oy + y, ox + x}));
    }
}

TEST_CASE("make_multiview preserves constant fields") {
    Tensor raw = Tensor::full({1, 3, 100, 60}, 0.25);
    Tensor mv = make_multiview(raw, 16, 16);
    for (int64_t i = 0; i < mv.numel(); ++i) CHECK(mv.data()[i] == 0.25);
}

TEST_CASE("make_multiview merged locals equal the resized raw bit-exactly") {
    std::mt19937_64 rng(3);
    Tensor raw = random_tensor({1, 3, 77, 51}, rng, 0.0, 1.0);
    Tensor mv = make_multiview(raw, 24, 40);
    Tensor resized = ops::bilinear_resize_plain(raw, 48, 80);
    CHECK(exact_equal(unified_local_image(mv), resized));
}

TEST_CASE("make_multiview input validation") {
    std::mt19937_64 rng(4);
    CHECK_THROWS_AS(make_multiview(Tensor({1, 3, 1, 5}, 0.0), 16, 16), std::invalid_argument);
    CHECK_THROWS_AS(make_multiview(Tensor({1, 3, 5, 5}, 0.0), 4, 16), std::invalid_argument);
    CHECK_THROWS_AS(make_multiview(Tensor({1, 1, 5, 5}, 0.0), 16, 16), std::invalid_argument);
}

TEST_CASE("split_views slices the global block") {
    Tensor x({10, 2, 3, 3});
    for (int64_t i = 8 * 2 * 9; i < 10 * 2 * 9; ++i) x.data()[i] = 7.0;
    SplitTensors s = split_views(x);
    CHECK(s.global.shape() == std::vector<int64_t>{2, 2, 3, 3});
    for (int64_t i = 0; i < s.global.numel(); ++i) CHECK(s.global.data()[i] == 7.0);
    for (int v = 0; v < 4; ++v)
        CHECK(s.locals[static_cast<size_t>(v)].shape() == std::vector<int64_t>{2, 2, 3, 3});
    CHECK_THROWS_AS(split_views(Tensor({7, 1, 2, 2}, 0.0)), std::invalid_argument);
}

TEST_CASE("pack/split and merge/scatter round trips") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int64_t> d(1, 4);
        int64_t b = d(rng), c = d(rng), a = d(rng), w = d(rng);
        Tensor x = random_tensor({5 * b, c, a, w}, rng);
        SplitTensors s = split_views(x);
        CHECK(exact_equal(pack_views(s.locals, s.global), x));

        Tensor u = random_tensor({b, c, 2 * a, 2 * w}, rng);
        CHECK(exact_equal(merge_locals(scatter_unified(u)), u));

        std::array<Tensor, 4> quads;
        for (auto& q : quads) q = random_tensor({b, c, a, w}, rng);
        auto back = scatter_unified(merge_locals(quads));
        for (int i = 0; i < 4; ++i)
            CHECK(exact_equal(back[static_cast<size_t>(i)], quads[static_cast<size_t>(i)]));
    }
}

TEST_CASE("merge_locals places quadrants row-major") {
    std::array<Tensor, 4> quads;
    for (int q = 0; q < 4; ++q) quads[static_cast<size_t>(q)] = Tensor({1, 1, 2, 2}, q + 1.0);
    Tensor u = merge_locals(quads);
    CHECK(u.at({0, 0, 0, 0}) == 1.0);
    CHECK(u.at({0, 0, 0, 3}) == 2.0);
    CHECK(u.at({0, 0, 3, 0}) == 3.0);
    CHECK(u.at({0, 0, 3, 3}) == 4.0);

    // Smallest case a=b=1.
    std::array<Tensor, 4> tiny{Tensor({1, 1, 1, 1}, 0.1), Tensor({1, 1, 1, 1}, 0.2),
                               Tensor({1, 1, 1, 1}, 0.3), Tensor({1, 1, 1, 1}, 0.4)};
    Tensor t = merge_locals(tiny);
    CHECK(t.at({0, 0, 0, 0}) == 0.1);
    CHECK(t.at({0, 0, 0, 1}) == 0.2);
    CHECK(t.at({0, 0, 1, 0}) == 0.3);
    CHECK(t.at({0, 0, 1, 1}) == 0.4);

    std::array<Tensor, 4> bad{Tensor({1, 1, 2, 2}, 0.0), Tensor({1, 1, 2, 3}, 0.0),
                              Tensor({1, 1, 2, 2}, 0.0), Tensor({1, 1, 2, 2}, 0.0)};
    CHECK_THROWS_AS(merge_locals(bad), std::invalid_argument);
}

TEST_CASE("scatter_unified extracts block constants") {
    Tensor u({1, 1, 2, 2}, {1, 2, 3, 4});
    auto quads = scatter_unified(u);
    for (int q = 0; q < 4; ++q) CHECK(quads[static_cast<size_t>(q)].at({0, 0, 0, 0}) == q + 1.0);
    CHECK_THROWS_AS(scatter_unified(Tensor({1, 1, 3, 4}, 0.0)), std::invalid_argument);
}

TEST_CASE("pack_views exhaustive layout enumeration") {
    // B=1, C=1, a=b=2: all 20 elements must land at
    // flat = view * 4 + y * 2 + x.
    std::array<Tensor, 4> locals;
    for (int v = 0; v < 4; ++v) {
        locals[static_cast<size_t>(v)] = Tensor({1, 1, 2, 2});
        for (int64_t i = 0; i < 4; ++i)
            locals[static_cast<size_t>(v)].data()[i] = 100.0 * (v + 1) + static_cast<double>(i);
    }
    Tensor global({1, 1, 2, 2});
    for (int64_t i = 0; i < 4; ++i) global.data()[i] = 500.0 + static_cast<double>(i);

    Tensor packed = pack_views(locals, global);
    REQUIRE(packed.numel() == 20);
    for (int v = 0; v < 5; ++v)
        for (int64_t y = 0; y < 2; ++y)
            for (int64_t x = 0; x < 2; ++x) {
                double expect = 100.0 * (v + 1) + static_cast<double>(y * 2 + x);
                if (v == 4) expect = 500.0 + static_cast<double>(y * 2 + x);
                CHECK(packed.data()[v * 4 + y * 2 + x] == expect);
            }
}

TEST_CASE("multiview ops are differentiable") {
    std::mt19937_64 rng(6);
    Var x = Var::param(random_tensor({5, 2, 2, 2}, rng));
    CHECK(testutil::max_grad_rel_err({x}, [&] {
              SplitViews s = split_views(x);
              Var u = merge_locals(s.locals);
              Var re = pack_views(scatter_unified(u), s.global);
              return testutil::weighted_probe(re);
          }) < 2e-6);
}

TEST_CASE("multiview ops are safe to run concurrently") {
    std::mt19937_64 rng(77);
    Tensor shared = random_tensor({10, 3, 4, 4}, rng);
    Tensor expected = pack_views(split_views(shared).locals, split_views(shared).global);
    auto worker = [&](Tensor* out) {
        Tensor local = shared;
        for (int i = 0; i < 200; ++i) {
            SplitTensors s = split_views(local);
            local = pack_views(s.locals, s.global);
        }
        *out = local;
    };
    Tensor r1, r2;
    std::thread t1(worker, &r1), t2(worker, &r2);
    t1.join();
    t2.join();
    CHECK(exact_equal(r1, expected));
    CHECK(exact_equal(r2, expected));
}

TEST_CASE("raw kernels support multiple scalar types") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> x(5 * 3 * 4);
    for (float& v : x) v = dist(rng);
    // split into blocks and repack
    std::vector<float> repacked(x.size());
    for (int v = 0; v < 5; ++v) {
        std::vector<float> block(3 * 4);
        kernels::copy_view_block(x.data(), block.data(), 5, 12, v);
        kernels::place_view_block(block.data(), repacked.data(), 5, 12, v);
    }
    CHECK(x == repacked);

    std::vector<float> unified(4 * 6 * 8), quad(4 * 3 * 4), rebuilt(4 * 6 * 8);
    for (float& v : unified) v = dist(rng);
    for (int q = 0; q < 4; ++q) {
        kernels::extract_quadrant(unified.data(), quad.data(), 4, 3, 4, q);
        kernels::place_quadrant(quad.data(), rebuilt.data(), 4, 3, 4, q);
    }
    CHECK(unified == rebuilt);
}
