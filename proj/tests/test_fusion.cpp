#include "doctest.h"

#include "fd_check.hpp"
#include "mvseg/fusion.hpp"

using namespace mvseg;
using ag::Var;
using testutil::random_tensor;

TEST_CASE("cross-view fusion preserves shape and token bookkeeping") {
    std::mt19937_64 rng(1);
    CrossViewAttentionFusion mcem(16, 2, rng);
    // h=w=128: F16 maps are 8x8 -> 64 global tokens, 256 unified-local
    // tokens, 16 = hw/32^2 tokens per quadrant group.
    Tensor x = random_tensor({5, 16, 8, 8}, rng);
    Var out = mcem.fwd(Var::constant(x));
    CHECK(out.value().shape() == x.shape());
    CHECK(8 * 8 == 64);
    CHECK(4 * 8 * 8 == 256);
    CHECK((128 / 32) * (128 / 32) == 16);
}

TEST_CASE("cross-view fusion rejects bad inputs") {
    std::mt19937_64 rng(2);
    CrossViewAttentionFusion mcem(8, 1, rng);
    CHECK_THROWS_AS(mcem.fwd(Var::constant(Tensor({6, 8, 4, 4}, 0.0))), std::invalid_argument);
    CHECK_THROWS_AS(mcem.fwd(Var::constant(Tensor({5, 8, 3, 4}, 0.0))), std::invalid_argument);
}

TEST_CASE("cross-view fusion quadrant correspondence") {
    std::mt19937_64 rng(3);
    CrossViewAttentionFusion mcem(8, 1, rng);
    Tensor base = random_tensor({5, 8, 4, 4}, rng);

    Tensor out_base = mcem.fwd(Var::constant(base)).value();
    int64_t plane = 8 * 4 * 4; // one view's elements

    for (int q = 0; q < 4; ++q) {
        // Perturb the global view only inside quadrant q of its map.
        Tensor pert = base.clone();
        int64_t oy = (q / 2) * 2, ox = (q % 2) * 2;
        for (int64_t c = 0; c < 8; ++c)
            for (int64_t y = 0; y < 2; ++y)
                for (int64_t x = 0; x < 2; ++x)
                    pert.at({4, c, oy + y, ox + x}) += 0.5;
        Tensor out = mcem.fwd(Var::constant(pert)).value();

        for (int m = 0; m < 4; ++m) {
            double diff = 0.0;
            for (int64_t i = 0; i < plane; ++i)
                diff = std::max(diff, std::fabs(out.data()[m * plane + i] -
                                                out_base.data()[m * plane + i]));
            if (m == q)
                CHECK(diff > 1e-9); // the matching local view sees the change
            else
                CHECK(diff == 0.0); // the others are untouched, bitwise
        }
    }
}

TEST_CASE("cross-view fusion: global perturbation reaches local outputs") {
    std::mt19937_64 rng(4);
    CrossViewAttentionFusion mcem(8, 2, rng);
    Tensor a = random_tensor({5, 8, 4, 4}, rng);
    Tensor b = a.clone();
    for (int64_t i = 4 * 8 * 16; i < 5 * 8 * 16; ++i) b.data()[i] = 0.0;
    Tensor oa = mcem.fwd(Var::constant(a)).value();
    Tensor ob = mcem.fwd(Var::constant(b)).value();
    double local_diff = 0.0;
    for (int64_t i = 0; i < 4 * 8 * 16; ++i)
        local_diff = std::max(local_diff, std::fabs(oa.data()[i] - ob.data()[i]));
    CHECK(local_diff > 1e-9);
}

TEST_CASE("cross-view fusion gradients") {
    std::mt19937_64 rng(5);
    CrossViewAttentionFusion mcem(4, 1, rng);
    Var x = Var::param(random_tensor({5, 4, 2, 2}, rng));
    CHECK(testutil::max_grad_rel_err(
              {x}, [&] { return testutil::weighted_probe(mcem.fwd(x)); }) < 2e-6);
}

TEST_CASE("hierarchical fusion shape contract") {
    std::mt19937_64 rng(6);
    HierarchicalViewFusion hmim(8, rng);
    Tensor deep = random_tensor({5, 8, 4, 4}, rng);
    Tensor shallow = random_tensor({5, 8, 8, 8}, rng);
    CHECK(hmim.fwd(Var::constant(deep), Var::constant(shallow)).value().shape() ==
          shallow.shape());
    CHECK_THROWS_AS(hmim.fwd(Var::constant(shallow), Var::constant(deep)),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        hmim.fwd(Var::constant(deep), Var::constant(Tensor({5, 8, 9, 8}, 0.0))),
        std::invalid_argument);
}

TEST_CASE("hierarchical fusion zero-weight fixed point is the final bias") {
    std::mt19937_64 rng(7);
    HierarchicalViewFusion hmim(4, rng);
    auto zero = [](Var v) {
        Tensor& t = v.value_mut();
        for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = 0.0;
    };
    zero(hmim.deep_dw.weight);
    zero(hmim.fuse_global.weight);
    zero(hmim.fuse_global.bias);
    zero(hmim.up_dw.weight);
    zero(hmim.fuse_local.weight);
    zero(hmim.fuse_local.bias);
    zero(hmim.out_proj.weight);
    for (int64_t i = 0; i < 4; ++i) hmim.out_proj.bias.value_mut().data()[i] = 0.37;

    Tensor deep = random_tensor({5, 4, 2, 2}, rng);
    Tensor shallow = random_tensor({5, 4, 4, 4}, rng);
    Tensor out = hmim.fwd(Var::constant(deep), Var::constant(shallow)).value();
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == doctest::Approx(0.37));
}

TEST_CASE("hierarchical fusion gradients") {
    std::mt19937_64 rng(8);
    HierarchicalViewFusion hmim(2, rng);
    Var deep = Var::param(random_tensor({5, 2, 2, 2}, rng));
    Var shallow = Var::param(random_tensor({5, 2, 4, 4}, rng));
    // Channel norm over only two channels is highly curved, so the central
    // difference itself carries visible truncation error; 1e-4 is the
    // meaningful bound here.
    double err = testutil::max_grad_rel_err(
        {deep, shallow}, [&] { return testutil::weighted_probe(hmim.fwd(deep, shallow)); });
    CHECK(err < 1e-4);
}

TEST_CASE("hierarchical fusion: deep features drive the global branch") {
    std::mt19937_64 rng(9);
    HierarchicalViewFusion hmim(4, rng);
    Tensor deep = random_tensor({5, 4, 2, 2}, rng);
    Tensor shallow = random_tensor({5, 4, 4, 4}, rng);
    Tensor deep2 = deep.clone();
    for (int64_t i = 0; i < 4 * 4 * 4; ++i) deep2.data()[i] += 0.25; // locals only
    Tensor oa = hmim.fwd(Var::constant(deep), Var::constant(shallow)).value();
    Tensor ob = hmim.fwd(Var::constant(deep2), Var::constant(shallow)).value();
    // Global view block of the output must move.
    double diff = 0.0;
    for (int64_t i = 4 * 4 * 16; i < 5 * 4 * 16; ++i)
        diff = std::max(diff, std::fabs(oa.data()[i] - ob.data()[i]));
    CHECK(diff > 1e-9);
}

TEST_CASE("fusion modules are deterministic") {
    std::mt19937_64 rng(10);
    CrossViewAttentionFusion mcem(8, 2, rng);
    Tensor x = random_tensor({5, 8, 4, 4}, rng);
    CHECK(exact_equal(mcem.fwd(Var::constant(x)).value(), mcem.fwd(Var::constant(x)).value()));
}
