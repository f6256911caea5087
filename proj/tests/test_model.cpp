#include "doctest.h"

#include <set>
#include <thread>

#include "fd_check.hpp"
#include "mvseg/loss.hpp"
#include "mvseg/model.hpp"

using namespace mvseg;
using ag::Var;
using testutil::random_tensor;

namespace {

ModelConfig toy_model(int64_t view = 32) {
    ModelConfig cfg;
    cfg.encoder.stage_depths = {1, 1, 1, 1};
    cfg.encoder.stage_dims = {4, 4, 8, 8};
    cfg.encoder.heads = {1, 1, 2, 2};
    cfg.encoder.reduction_factor = 2;
    cfg.encoder.neck_dim = 8;
    cfg.encoder.view_h = view;
    cfg.encoder.view_w = view;
    cfg.encoder.mlp_ratio = 2;
    cfg.twoway_depth = 1;
    cfg.mask_feature_dim = 4;
    cfg.drm_aux_depth = 2;
    cfg.seed = 7;
    return cfg;
}

} // namespace

TEST_CASE("full forward produces working-resolution probability maps") {
    SegModel model(toy_model(32));
    std::mt19937_64 rng(1);
    Tensor raw = random_tensor({1, 3, 100, 80}, rng, 0.0, 1.0);
    ModelOutputs out = model.fwd(raw);
    CHECK(out.mp.value().shape() == std::vector<int64_t>{1, 1, 64, 64});
    CHECK(out.ms.value().shape() == std::vector<int64_t>{1, 1, 64, 64});
    CHECK(out.fp.value().shape() == std::vector<int64_t>{5, 4, 8, 8});
    for (int64_t i = 0; i < out.mp.value().numel(); ++i) {
        CHECK(out.mp.value().data()[i] >= 0.0);
        CHECK(out.mp.value().data()[i] <= 1.0);
    }
    CHECK(out.fp.value().all_finite());
}

TEST_CASE("forward is deterministic") {
    SegModel model(toy_model(32));
    std::mt19937_64 rng(2);
    Tensor raw = random_tensor({2, 3, 64, 64}, rng, 0.0, 1.0);
    ModelOutputs a = model.fwd(raw);
    ModelOutputs b = model.fwd(raw);
    CHECK(exact_equal(a.mp.value(), b.mp.value()));
    CHECK(exact_equal(a.ms.value(), b.ms.value()));
}

TEST_CASE("parameter names are unique and grouped sensibly") {
    SegModel model(toy_model(32));
    std::set<std::string> names;
    int64_t adapter = 0;
    for (auto& [name, var] : model.named_params()) {
        CHECK(names.insert(name).second);
        if (SegModel::is_adapter_param(name)) adapter += var.numel();
        // The three group predicates are mutually exclusive on this model.
        int hits = (SegModel::is_backbone_param(name) ? 1 : 0) +
                   (SegModel::is_decoder_param(name) ? 1 : 0);
        CHECK(hits <= 1);
    }
    // One block per stage at dims 4,4,8,8 with r=2.
    int64_t expect = adapter_param_count(4, 2) * 2 + adapter_param_count(8, 2) * 2;
    CHECK(adapter == expect);
    CHECK(model.adapter_param_count_actual() == expect);
    CHECK(model.param(std::string("decoder.tokens")).numel() == 8);
    CHECK_THROWS_AS(model.param("no.such.param"), std::invalid_argument);
}

TEST_CASE("module toggles keep shapes") {
    ModelConfig cfg = toy_model(32);
    cfg.mcem_enabled = false;
    cfg.hmim_enabled = false;
    cfg.drm_enabled = false;
    cfg.encoder.adapter_enabled = false;
    SegModel model(cfg);
    std::mt19937_64 rng(3);
    Tensor raw = random_tensor({1, 3, 64, 64}, rng, 0.0, 1.0);
    ModelOutputs out = model.fwd(raw);
    CHECK(out.mp.value().shape() == std::vector<int64_t>{1, 1, 64, 64});
    // With the refiner disabled the final prediction falls back to the
    // auxiliary map.
    CHECK(exact_equal(out.mp.value(), out.ms.value()));
    CHECK(model.adapter_param_count_actual() == 0);
}

TEST_CASE("optional global-view supervision map") {
    ModelConfig cfg = toy_model(32);
    cfg.supervise_global_view = true;
    SegModel model(cfg);
    std::mt19937_64 rng(4);
    Tensor raw = random_tensor({1, 3, 64, 64}, rng, 0.0, 1.0);
    ModelOutputs out = model.fwd(raw);
    CHECK(out.ms_global.value().shape() == out.ms.value().shape());
}

TEST_CASE("training loss backpropagates to every trainable group") {
    ModelConfig cfg = toy_model(32);
    SegModel model(cfg);
    std::mt19937_64 rng(5);
    Tensor raw = random_tensor({1, 3, 64, 64}, rng, 0.0, 1.0);
    Tensor gt({1, 1, 64, 64});
    for (int64_t i = 0; i < gt.numel(); ++i) gt.data()[i] = (rng() & 1) ? 1.0 : 0.0;

    ModelOutputs out = model.fwd(raw);
    LossConfig lcfg;
    Var loss = total_loss_logits(out.mp_logits, out.ms_logits, gt, lcfg);
    ag::backward(loss);

    bool any_drm = false, any_fusion = false, any_decoder = false, any_neck = false;
    for (auto& [name, var] : model.named_params()) {
        if (!var.has_grad()) continue;
        if (name.rfind("drm.", 0) == 0) any_drm = true;
        if (name.rfind("fusion.", 0) == 0) any_fusion = true;
        if (name.rfind("decoder.", 0) == 0) any_decoder = true;
        if (name.rfind("encoder.neck.", 0) == 0) any_neck = true;
    }
    CHECK(any_drm);
    CHECK(any_fusion);
    CHECK(any_decoder);
    CHECK(any_neck);
}

TEST_CASE("independent model instances run concurrently") {
    ModelConfig cfg = toy_model(32);
    SegModel a(cfg), b(cfg);
    std::mt19937_64 rng(8);
    Tensor raw = random_tensor({1, 3, 64, 64}, rng, 0.0, 1.0);
    Tensor serial = a.fwd(raw).mp.value();

    Tensor ra, rb;
    std::thread ta([&] { ra = a.fwd(raw).mp.value(); });
    std::thread tb([&] { rb = b.fwd(raw).mp.value(); });
    ta.join();
    tb.join();
    CHECK(exact_equal(ra, serial));
    CHECK(exact_equal(rb, serial)); // same seed, same weights
}

TEST_CASE("sampled end-to-end gradient check") {
    ModelConfig cfg = toy_model(32);
    SegModel model(cfg);
    std::mt19937_64 rng(6);
    Tensor raw = random_tensor({1, 3, 64, 64}, rng, 0.0, 1.0);
    Tensor gt({1, 1, 64, 64});
    for (int64_t i = 0; i < gt.numel(); ++i) gt.data()[i] = (rng() & 1) ? 1.0 : 0.0;
    Tensor views = multiview::make_multiview(raw, 32, 32);
    Tensor unified = multiview::unified_local_image(views);

    std::vector<Var> params;
    for (auto& [name, var] : model.named_params()) params.push_back(var);
    LossConfig lcfg;
    auto loss_fn = [&] {
        ModelOutputs out = model.fwd_views(Var::constant(views), Var::constant(unified));
        return total_loss_logits(out.mp_logits, out.ms_logits, gt, lcfg);
    };
    std::mt19937_64 pick(7);
    double err = testutil::max_grad_rel_err_sampled(params, loss_fn, 10, pick);
    CHECK(err < 1e-4);
}
