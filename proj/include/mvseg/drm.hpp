#pragma once

#include "mvseg/multiview.hpp"
#include "mvseg/nn.hpp"

namespace mvseg {

using ag::Var;

// Progressive detail restoration. Main branch: the mask feature's merged
// local and upsampled global views are fused by a stacked-pair depth-wise
// conv, then restored h/2 -> h -> 2h by two rounds of bilinear x2 + 3x3
// conv + GELU. Auxiliary branch: a small conv stack over the unified local
// image at full working resolution. The branches are summed and reduced to
// one-channel logits.
class DetailRefiner {
public:
    DetailRefiner(int64_t mask_dim, int64_t width, int aux_depth, std::mt19937_64& rng);

    struct Outputs {
        Var mp_logits; // ⟨B,1,2h,2w⟩
        Var mp;        // sigmoid(mp_logits)
    };

    // unified_local_image must be the merged local views of the input batch,
    // i.e. the (2h,2w) working-resolution image. Not checked at runtime.
    Outputs fwd(const Var& fp, const Var& unified_local_image) const;
    void append_params(const std::string& prefix, nn::ParamList& out) const;

    nn::DWConv3dPair fuse;
    nn::Conv2d restore1, restore2;
    std::vector<nn::Conv2d> aux;
    nn::Conv2d head3; // 3x3, width -> width
    nn::Conv2d head1; // 1x1, width -> 1
};

} // namespace mvseg
