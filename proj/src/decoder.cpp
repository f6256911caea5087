#include "mvseg/decoder.hpp"

#include "mvseg/errors.hpp"

namespace mvseg {

using namespace ops;
namespace mv = multiview;

TwoWayDecoder::TwoWayDecoder(int64_t channels, int heads, int depth, std::mt19937_64& rng)
    : final_ln_(channels), final_attn_(channels, heads, rng) {
    if (depth < 1) throw ConfigError("twoway_depth must be >= 1");
    for (int i = 0; i < depth; ++i) {
        Layer layer{nn::LayerNorm(channels), nn::LayerNorm(channels), nn::LayerNorm(channels),
                    nn::LayerNorm(channels), nn::Mha(channels, heads, rng),
                    nn::Mha(channels, heads, rng), nn::Mha(channels, heads, rng),
                    nn::Ffn(channels, channels * 4, rng)};
        layers_.push_back(std::move(layer));
    }
}

TwoWayResult TwoWayDecoder::fwd(const Var& f16, const Var& tokens) const {
    const Tensor& x = f16.value();
    if (x.ndim() != 4) throw std::invalid_argument("twoway: expected ⟨5B,C,h,w⟩ image feature");
    if (tokens.value().ndim() != 3 || tokens.value().dim(2) != x.dim(1))
        throw ConfigError("twoway: token dim must equal image channel dim");
    int64_t hh = x.dim(2), ww = x.dim(3);

    Var img = map_to_tokens(f16); // ⟨5B, h*w, C⟩
    Var tok = tokens;
    for (const Layer& layer : layers_) {
        Var n = layer.ln_self.fwd(tok);
        tok = add(tok, layer.self_attn.fwd(n, n));
        tok = add(tok, layer.cross_t2i.fwd(layer.ln_cross.fwd(tok), img));
        tok = add(tok, layer.ffn.fwd(layer.ln_ffn.fwd(tok)));
        img = add(img, layer.cross_i2t.fwd(layer.ln_img.fwd(img), tok));
    }
    tok = add(tok, final_attn_.fwd(final_ln_.fwd(tok), img));
    return {tokens_to_map(img, hh, ww), tok};
}

void TwoWayDecoder::append_params(const std::string& prefix, nn::ParamList& out) const {
    for (size_t i = 0; i < layers_.size(); ++i) {
        const std::string base = prefix + ".layer" + std::to_string(i);
        layers_[i].ln_self.append_params(base + ".ln_self", out);
        layers_[i].ln_cross.append_params(base + ".ln_cross", out);
        layers_[i].ln_ffn.append_params(base + ".ln_ffn", out);
        layers_[i].ln_img.append_params(base + ".ln_img", out);
        layers_[i].self_attn.append_params(base + ".self_attn", out);
        layers_[i].cross_t2i.append_params(base + ".cross_t2i", out);
        layers_[i].cross_i2t.append_params(base + ".cross_i2t", out);
        layers_[i].ffn.append_params(base + ".ffn", out);
    }
    final_ln_.append_params(prefix + ".final_ln", out);
    final_attn_.append_params(prefix + ".final_attn", out);
}

MaskHead::MaskHead(int64_t channels, int64_t mask_dim, std::mt19937_64& rng)
    : up1(channels, channels, rng), up2(channels, mask_dim, rng),
      skip4(channels, mask_dim, 1, 1, 0, rng), token_proj(channels, mask_dim, rng) {}

std::pair<Var, Var> MaskHead::reduce_views(const Var& logits5, int64_t out_h, int64_t out_w) {
    mv::SplitViews views = mv::split_views(logits5);
    Var merged = mv::merge_locals(views.locals); // ⟨B,1,h/2,w/2⟩
    return {bilinear_resize(merged, out_h, out_w), bilinear_resize(views.global, out_h, out_w)};
}

MaskHeadOutputs MaskHead::fwd(const Var& e4, const Var& e8, const Var& e16, const Var& tokens,
                              int64_t out_h, int64_t out_w) const {
    Var u1 = gelu(add(up1.fwd(e16), e8));
    Var fp = add(up2.fwd(u1), skip4.fwd(e4)); // ⟨5B,C_p,h/4,w/4⟩

    Var w = token_proj.fwd(select_token(tokens, 0)); // ⟨5B,C_p⟩
    Var logits5 = pixel_dot(fp, w);                  // ⟨5B,1,h/4,w/4⟩

    auto [ms_logits, ms_global_logits] = reduce_views(logits5, out_h, out_w);
    return {fp, ms_logits, sigmoid(ms_logits), ms_global_logits, sigmoid(ms_global_logits)};
}

void MaskHead::append_params(const std::string& prefix, nn::ParamList& out) const {
    up1.append_params(prefix + ".up1", out);
    up2.append_params(prefix + ".up2", out);
    skip4.append_params(prefix + ".skip4", out);
    token_proj.append_params(prefix + ".token_proj", out);
}

} // namespace mvseg
