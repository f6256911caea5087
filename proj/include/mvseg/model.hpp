#pragma once

#include <memory>
#include <optional>

#include "mvseg/decoder.hpp"
#include "mvseg/drm.hpp"
#include "mvseg/encoder.hpp"
#include "mvseg/fusion.hpp"

namespace mvseg {

struct ModelConfig {
    EncoderConfig encoder;
    bool mcem_enabled = true;
    bool hmim_enabled = true;
    bool drm_enabled = true;
    int twoway_depth = 2;
    int64_t num_output_tokens = 1;
    int64_t mask_feature_dim = 32;
    int64_t drm_width = 0; // 0 -> mask_feature_dim
    int drm_aux_depth = 3;
    bool supervise_global_view = false;
    uint64_t seed = 42;

    int64_t drm_width_effective() const { return drm_width > 0 ? drm_width : mask_feature_dim; }
    void validate() const;
};

struct ModelOutputs {
    Var ms_logits, ms; // ⟨B,1,2h,2w⟩ auxiliary prediction
    Var mp_logits, mp; // ⟨B,1,2h,2w⟩ final prediction
    Var ms_global_logits, ms_global;
    Var fp; // ⟨5B,C_p,h/4,w/4⟩
};

class SegModel {
public:
    explicit SegModel(const ModelConfig& cfg);

    // Full pipeline from a raw image ⟨B,3,H,W⟩ (resized internally).
    ModelOutputs fwd(const Tensor& raw) const;
    // From an already-built multiview batch. The unified local image must be
    // the merged local views of `views` at the batch's working resolution.
    ModelOutputs fwd_views(const Var& views, const Var& unified_image) const;

    const ModelConfig& config() const { return cfg_; }

    // Deterministic construction-order list; Var handles share storage with
    // the module parameters, so writes through them mutate the model.
    nn::ParamList named_params() const;
    Var param(const std::string& name) const; // throws if absent

    static bool is_backbone_param(const std::string& name);
    static bool is_adapter_param(const std::string& name);
    static bool is_decoder_param(const std::string& name);

    int64_t total_param_count() const;
    int64_t adapter_param_count_actual() const;

private:
    ModelConfig cfg_;
    std::unique_ptr<PyramidEncoder> encoder_;
    Var tokens_; // ⟨T,C⟩ learned output tokens
    std::unique_ptr<TwoWayDecoder> twoway_;
    std::unique_ptr<MaskHead> mask_head_;
    std::optional<CrossViewAttentionFusion> mcem_;
    std::optional<HierarchicalViewFusion> hmim8_, hmim4_;
    std::optional<DetailRefiner> drm_;
};

} // namespace mvseg
