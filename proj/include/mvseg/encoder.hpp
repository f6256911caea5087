#pragma once

#include <array>
#include <optional>
#include <vector>

#include "mvseg/multiview.hpp"
#include "mvseg/nn.hpp"

namespace mvseg {

using ag::Var;

struct EncoderConfig {
    std::array<int, 4> stage_depths{2, 2, 2, 2};
    std::array<int64_t, 4> stage_dims{32, 64, 128, 256};
    std::array<int, 4> heads{1, 2, 4, 8};
    int reduction_factor = 4;
    int64_t neck_dim = 256;
    int64_t view_h = 512;
    int64_t view_w = 512;
    bool adapter_enabled = true;
    int mlp_ratio = 4;

    void validate() const; // throws ConfigError on inconsistency
};

struct PyramidFeatures {
    Var f4, f8, f16;
};

// Closed-form parameter count of one adapter instance at embed dim `dim`
// and reduction `r`: down projection (dim*(dim/r) + dim/r), up projection
// ((dim/r)*dim + dim), two bias-free depth-wise stacked-pair kernels
// (2 * (dim/r) * 2*3*3).
int64_t adapter_param_count(int64_t dim, int64_t r);

// Adapter inserted before pre-normalization in each encoder block.
// Down-projects tokens, reshapes to a map, exchanges detail between the
// unified-local and global views through stacked-pair depth-wise convs,
// re-packs, and up-projects. The up projection is zero-initialized, so the
// residual form (x + adapter(x)) is an exact identity at init.
class MultiViewAdapter {
public:
    MultiViewAdapter(int64_t dim, int reduction, std::mt19937_64& rng);

    Var fwd(const Var& x, int64_t grid_h, int64_t grid_w) const;
    void append_params(const std::string& prefix, nn::ParamList& out) const;

    nn::Linear down;
    nn::DWConv3dPair local_enhance;  // Stack(L_M, US(G))
    nn::DWConv3dPair global_enhance; // Stack(DS(L_M), G)
    nn::Linear up;                   // zero-initialized
};

class EncoderBlock {
public:
    // Backbone weights draw from `rng`, adapter weights from `adapter_rng`,
    // so toggling the adapter does not shift backbone initialization.
    EncoderBlock(int64_t dim, int heads, int mlp_ratio, int reduction, bool with_adapter,
                 std::mt19937_64& rng, std::mt19937_64& adapter_rng);

    Var fwd(const Var& x, int64_t grid_h, int64_t grid_w) const;
    void append_params(const std::string& prefix, nn::ParamList& out) const;

    std::optional<MultiViewAdapter> adapter;
    nn::LayerNorm ln1, ln2;
    nn::Mha attn;
    nn::Ffn ffn;
};

// Four-stage stand-in encoder at strides 4/8/16/32: stride-4 patch embed,
// global-attention blocks per stage, strided patch-merging projections
// between stages, and a top-down neck emitting {F4, F8, F16} at a common
// channel count.
class PyramidEncoder {
public:
    PyramidEncoder(const EncoderConfig& cfg, std::mt19937_64& rng);

    PyramidFeatures fwd(const Var& multiview) const;
    void append_params(const std::string& prefix, nn::ParamList& out) const;

    const EncoderConfig& config() const { return cfg_; }

private:
    EncoderConfig cfg_;
    nn::Conv2d patch_embed;
    std::vector<std::vector<EncoderBlock>> stages_;
    std::vector<nn::Conv2d> downsample_;
    std::vector<nn::Conv2d> neck_proj_;
};

} // namespace mvseg
