#pragma once

#include "mvseg/multiview.hpp"
#include "mvseg/nn.hpp"

namespace mvseg {

using ag::Var;

// Deep-feature enhancement between views: global tokens query the unified
// local tokens; the enhanced global map is then partitioned into quadrant
// token groups that serve as keys/values for the matching local view.
// Attention and FFN weights of the per-quadrant stage are shared across the
// four quadrants. Post-residual layer norm throughout.
class CrossViewAttentionFusion {
public:
    CrossViewAttentionFusion(int64_t channels, int heads, std::mt19937_64& rng);

    Var fwd(const Var& f16) const;
    void append_params(const std::string& prefix, nn::ParamList& out) const;

    nn::Mha global_attn;
    nn::LayerNorm g_ln1, g_ln2;
    nn::Ffn g_ffn;
    nn::Mha local_attn; // shared across quadrants
    nn::LayerNorm l_ln1, l_ln2;
    nn::Ffn l_ffn;      // shared across quadrants
};

// Shallow-feature enhancement from the next deeper level: the merged deep
// local map refines the shallow global view, and the upsampled result
// refines the merged shallow local map. deep is ⟨5B,C,a,b⟩, shallow
// ⟨5B,C,2a,2b⟩; output matches shallow.
class HierarchicalViewFusion {
public:
    HierarchicalViewFusion(int64_t channels, std::mt19937_64& rng);

    Var fwd(const Var& deep, const Var& shallow) const;
    void append_params(const std::string& prefix, nn::ParamList& out) const;

    nn::DWConv2d deep_dw;
    nn::Conv2d fuse_global; // 1x1, 2C -> C
    nn::DWConv2d up_dw;
    nn::Conv2d fuse_local;  // 1x1, 2C -> C
    nn::ChannelNorm norm;
    nn::Conv2d out_proj;    // 1x1, C -> C
};

} // namespace mvseg
