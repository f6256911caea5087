#include "mvseg/fusion.hpp"

#include "mvseg/errors.hpp"

namespace mvseg {

using namespace ops;
namespace mv = multiview;

CrossViewAttentionFusion::CrossViewAttentionFusion(int64_t channels, int heads,
                                                   std::mt19937_64& rng)
    : global_attn(channels, heads, rng), g_ln1(channels), g_ln2(channels),
      g_ffn(channels, channels * 4, rng), local_attn(channels, heads, rng), l_ln1(channels),
      l_ln2(channels), l_ffn(channels, channels * 4, rng) {}

Var CrossViewAttentionFusion::fwd(const Var& f16) const {
    const Tensor& x = f16.value();
    if (x.ndim() != 4) throw std::invalid_argument("cross-view fusion: expected ⟨5B,C,h,w⟩");
    if (x.dim(0) % 5 != 0) throw std::invalid_argument("cross-view fusion: batch not divisible by 5");
    int64_t hh = x.dim(2), ww = x.dim(3);
    if (hh % 2 != 0 || ww % 2 != 0)
        throw std::invalid_argument("cross-view fusion: spatial dims must be even, got " +
                                    x.shape_str());

    mv::SplitViews views = mv::split_views(f16);
    Var unified = mv::merge_locals(views.locals);

    Var g_tokens = map_to_tokens(views.global);   // ⟨B, hh*ww, C⟩
    Var lm_tokens = map_to_tokens(unified);       // ⟨B, 4*hh*ww, C⟩

    Var g_hat = g_ln1.fwd(add(global_attn.fwd(g_tokens, lm_tokens), g_tokens));
    Var e_g = g_ln2.fwd(add(g_ffn.fwd(g_hat), g_hat));

    // Quadrant partition of the enhanced global tokens by map position.
    Var e_g_map = tokens_to_map(e_g, hh, ww);
    std::array<Var, 4> g_quads = mv::scatter_unified(e_g_map);
    int64_t per_quad = g_quads[0].value().dim(2) * g_quads[0].value().dim(3);
    if (per_quad * 4 != hh * ww)
        throw Error("cross-view fusion: quadrant token bookkeeping failed");

    std::array<Var, 4> enhanced_locals;
    for (int m = 0; m < 4; ++m) {
        Var q = map_to_tokens(views.locals[static_cast<size_t>(m)]);
        Var kv = map_to_tokens(g_quads[static_cast<size_t>(m)]);
        Var l_hat = l_ln1.fwd(add(local_attn.fwd(q, kv), q));
        Var e_l = l_ln2.fwd(add(l_ffn.fwd(l_hat), l_hat));
        enhanced_locals[static_cast<size_t>(m)] = tokens_to_map(e_l, hh, ww);
    }
    return mv::pack_views(enhanced_locals, e_g_map);
}

void CrossViewAttentionFusion::append_params(const std::string& prefix,
                                             nn::ParamList& out) const {
    global_attn.append_params(prefix + ".global_attn", out);
    g_ln1.append_params(prefix + ".g_ln1", out);
    g_ln2.append_params(prefix + ".g_ln2", out);
    g_ffn.append_params(prefix + ".g_ffn", out);
    local_attn.append_params(prefix + ".local_attn", out);
    l_ln1.append_params(prefix + ".l_ln1", out);
    l_ln2.append_params(prefix + ".l_ln2", out);
    l_ffn.append_params(prefix + ".l_ffn", out);
}

HierarchicalViewFusion::HierarchicalViewFusion(int64_t channels, std::mt19937_64& rng)
    : deep_dw(channels, 3, rng), fuse_global(2 * channels, channels, 1, 1, 0, rng),
      up_dw(channels, 3, rng), fuse_local(2 * channels, channels, 1, 1, 0, rng),
      norm(channels), out_proj(channels, channels, 1, 1, 0, rng) {}

Var HierarchicalViewFusion::fwd(const Var& deep, const Var& shallow) const {
    const Tensor& d = deep.value();
    const Tensor& s = shallow.value();
    if (d.ndim() != 4 || s.ndim() != 4)
        throw std::invalid_argument("hierarchical fusion: expected 4-D inputs");
    if (d.dim(0) != s.dim(0) || d.dim(1) != s.dim(1))
        throw std::invalid_argument("hierarchical fusion: batch/channel mismatch " +
                                    d.shape_str() + " vs " + s.shape_str());
    if (s.dim(2) != 2 * d.dim(2) || s.dim(3) != 2 * d.dim(3))
        throw std::invalid_argument("hierarchical fusion: shallow dims must double deep dims, got " +
                                    d.shape_str() + " vs " + s.shape_str());

    mv::SplitViews dv = mv::split_views(deep);
    mv::SplitViews sv = mv::split_views(shallow);
    Var deep_unified = mv::merge_locals(dv.locals);    // ⟨B,C,2a,2b⟩
    Var shallow_unified = mv::merge_locals(sv.locals); // ⟨B,C,4a,4b⟩

    Var e_g = fuse_global.fwd(concat_channels(deep_dw.fwd(deep_unified), sv.global));

    Var e_g_up = bilinear_resize(e_g, s.dim(2) * 2, s.dim(3) * 2);
    Var e_lm = fuse_local.fwd(concat_channels(up_dw.fwd(e_g_up), shallow_unified));

    Var packed = mv::pack_views(mv::scatter_unified(e_lm), e_g);
    return out_proj.fwd(gelu(norm.fwd(packed)));
}

void HierarchicalViewFusion::append_params(const std::string& prefix, nn::ParamList& out) const {
    deep_dw.append_params(prefix + ".deep_dw", out);
    fuse_global.append_params(prefix + ".fuse_global", out);
    up_dw.append_params(prefix + ".up_dw", out);
    fuse_local.append_params(prefix + ".fuse_local", out);
    norm.append_params(prefix + ".norm", out);
    out_proj.append_params(prefix + ".out_proj", out);
}

} // namespace mvseg
