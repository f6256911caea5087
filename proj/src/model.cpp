#include "mvseg/model.hpp"

#include "mvseg/errors.hpp"

namespace mvseg {

using namespace ops;
namespace mv = multiview;

void ModelConfig::validate() const {
    encoder.validate();
    if (twoway_depth < 1) throw ConfigError("twoway_depth must be >= 1");
    if (num_output_tokens < 1) throw ConfigError("num_output_tokens must be >= 1");
    if (mask_feature_dim < 1) throw ConfigError("mask_feature_dim must be >= 1");
    if (drm_aux_depth < 1) throw ConfigError("drm_aux_depth must be >= 1");
}

SegModel::SegModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(cfg.seed);
    encoder_ = std::make_unique<PyramidEncoder>(cfg.encoder, rng);
    tokens_ = Var::param(Tensor::randn({cfg.num_output_tokens, cfg.encoder.neck_dim}, rng, 0.02));
    // Head count for attention over neck features: reuse the deepest stage's.
    int heads = cfg.encoder.heads[3];
    if (cfg.encoder.neck_dim % heads != 0) heads = 1;
    twoway_ = std::make_unique<TwoWayDecoder>(cfg.encoder.neck_dim, heads, cfg.twoway_depth, rng);
    mask_head_ = std::make_unique<MaskHead>(cfg.encoder.neck_dim, cfg.mask_feature_dim, rng);
    if (cfg.mcem_enabled) mcem_.emplace(cfg.encoder.neck_dim, heads, rng);
    if (cfg.hmim_enabled) {
        hmim8_.emplace(cfg.encoder.neck_dim, rng);
        hmim4_.emplace(cfg.encoder.neck_dim, rng);
    }
    if (cfg.drm_enabled)
        drm_.emplace(cfg.mask_feature_dim, cfg_.drm_width_effective(), cfg.drm_aux_depth, rng);
}

ModelOutputs SegModel::fwd(const Tensor& raw) const {
    Tensor views = mv::make_multiview(raw, cfg_.encoder.view_h, cfg_.encoder.view_w);
    Tensor unified = mv::unified_local_image(views);
    return fwd_views(Var::constant(views), Var::constant(unified));
}

ModelOutputs SegModel::fwd_views(const Var& views, const Var& unified_image) const {
    const Tensor& x = views.value();
    if (x.ndim() != 4 || x.dim(0) % 5 != 0)
        throw std::invalid_argument("model: expected multiview batch ⟨5B,3,h,w⟩");
    int64_t out_h = 2 * x.dim(2), out_w = 2 * x.dim(3);

    PyramidFeatures feats = encoder_->fwd(views);
    Var tok = broadcast_rows(tokens_, x.dim(0));
    TwoWayResult refined = twoway_->fwd(feats.f16, tok);

    Var e16 = mcem_ ? mcem_->fwd(refined.image) : refined.image;
    Var e8 = hmim8_ ? hmim8_->fwd(e16, feats.f8) : feats.f8;
    Var e4 = hmim4_ ? hmim4_->fwd(e8, feats.f4) : feats.f4;

    MaskHeadOutputs head = mask_head_->fwd(e4, e8, e16, refined.tokens, out_h, out_w);

    ModelOutputs out;
    out.ms_logits = head.ms_logits;
    out.ms = head.ms;
    out.ms_global_logits = head.ms_global_logits;
    out.ms_global = head.ms_global;
    out.fp = head.fp;
    if (drm_) {
        DetailRefiner::Outputs final = drm_->fwd(head.fp, unified_image);
        out.mp_logits = final.mp_logits;
        out.mp = final.mp;
    } else {
        out.mp_logits = head.ms_logits;
        out.mp = head.ms;
    }
    return out;
}

nn::ParamList SegModel::named_params() const {
    nn::ParamList out;
    encoder_->append_params("encoder", out);
    nn::add_param(out, "decoder", "tokens", tokens_);
    twoway_->append_params("decoder.twoway", out);
    mask_head_->append_params("decoder.mask_head", out);
    if (mcem_) mcem_->append_params("fusion.mcem", out);
    if (hmim8_) hmim8_->append_params("fusion.hmim8", out);
    if (hmim4_) hmim4_->append_params("fusion.hmim4", out);
    if (drm_) drm_->append_params("drm", out);
    return out;
}

Var SegModel::param(const std::string& name) const {
    for (auto& [n, v] : named_params())
        if (n == name) return v;
    throw std::invalid_argument("unknown parameter: " + name);
}

bool SegModel::is_adapter_param(const std::string& name) {
    return name.find(".adapter.") != std::string::npos;
}

bool SegModel::is_backbone_param(const std::string& name) {
    return name.rfind("encoder.", 0) == 0 && !is_adapter_param(name) &&
           name.rfind("encoder.neck.", 0) != 0;
}

bool SegModel::is_decoder_param(const std::string& name) {
    return name.rfind("decoder.", 0) == 0;
}

int64_t SegModel::total_param_count() const {
    int64_t n = 0;
    for (auto& [name, v] : named_params()) n += v.numel();
    return n;
}

int64_t SegModel::adapter_param_count_actual() const {
    int64_t n = 0;
    for (auto& [name, v] : named_params())
        if (is_adapter_param(name)) n += v.numel();
    return n;
}

} // namespace mvseg
