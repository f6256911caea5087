#pragma once

#include "mvseg/multiview.hpp"
#include "mvseg/nn.hpp"

namespace mvseg {

using ag::Var;

struct TwoWayResult {
    Var image;  // refined ⟨5B,C,h/16,w/16⟩
    Var tokens; // refined ⟨5B,T,C⟩
};

// Two-way transformer refining the deep feature against learned output
// tokens. Pre-norm residual sublayers, so zero-initialized output
// projections leave both streams untouched.
class TwoWayDecoder {
public:
    TwoWayDecoder(int64_t channels, int heads, int depth, std::mt19937_64& rng);

    TwoWayResult fwd(const Var& f16, const Var& tokens) const;
    void append_params(const std::string& prefix, nn::ParamList& out) const;

private:
    struct Layer {
        nn::LayerNorm ln_self, ln_cross, ln_ffn, ln_img;
        nn::Mha self_attn, cross_t2i, cross_i2t;
        nn::Ffn ffn;
    };
    std::vector<Layer> layers_;
    nn::LayerNorm final_ln_;
    nn::Mha final_attn_;
};

struct MaskHeadOutputs {
    Var fp;               // ⟨5B,C_p,h/4,w/4⟩
    Var ms_logits;        // ⟨B,1,out_h,out_w⟩ merged local views
    Var ms;               // sigmoid(ms_logits)
    Var ms_global_logits; // ⟨B,1,out_h,out_w⟩, always produced, optional to supervise
    Var ms_global;
};

// Upscaling head: e16 is transposed-conv upsampled with skip-adds of e8 and
// e4 to form the mask feature F_p; a token-conditioned linear maps the
// refined output token to per-channel weights whose pixel dot product gives
// one logit map per view. The four local maps are merged by quadrant
// position, resized to the output resolution and squashed.
class MaskHead {
public:
    MaskHead(int64_t channels, int64_t mask_dim, std::mt19937_64& rng);

    MaskHeadOutputs fwd(const Var& e4, const Var& e8, const Var& e16, const Var& tokens,
                        int64_t out_h, int64_t out_w) const;
    // View reduction used by fwd: merge the four local logit maps by quadrant
    // position (the shared merge operation), resize to the output resolution,
    // squash. Returns {ms_logits, ms_global_logits}.
    static std::pair<Var, Var> reduce_views(const Var& logits5, int64_t out_h, int64_t out_w);
    void append_params(const std::string& prefix, nn::ParamList& out) const;

    nn::ConvTranspose2x2 up1; // C -> C
    nn::ConvTranspose2x2 up2; // C -> C_p
    nn::Conv2d skip4;         // 1x1 C -> C_p
    nn::Linear token_proj;    // C -> C_p
};

} // namespace mvseg
