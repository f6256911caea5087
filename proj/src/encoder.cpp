#include "mvseg/encoder.hpp"

#include "mvseg/errors.hpp"

namespace mvseg {

using namespace ops;
namespace mv = multiview;

void EncoderConfig::validate() const {
    for (int i = 0; i < 4; ++i) {
        if (stage_depths[static_cast<size_t>(i)] < 1)
            throw ConfigError("stage_depths must be >= 1");
        int64_t d = stage_dims[static_cast<size_t>(i)];
        int h = heads[static_cast<size_t>(i)];
        if (d < 1 || h < 1 || d % h != 0)
            throw ConfigError("stage dim " + std::to_string(d) +
                              " not divisible by head count " + std::to_string(h));
        if (reduction_factor < 1 || d % reduction_factor != 0)
            throw ConfigError("stage dim " + std::to_string(d) +
                              " not divisible by reduction_factor " +
                              std::to_string(reduction_factor));
    }
    if (neck_dim < 1) throw ConfigError("neck_dim must be >= 1");
    if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be >= 1");
    if (view_h % 32 != 0 || view_w % 32 != 0)
        throw ConfigError("view size must be divisible by 32, got " + std::to_string(view_h) +
                          "x" + std::to_string(view_w));
}

int64_t adapter_param_count(int64_t dim, int64_t r) {
    int64_t hidden = dim / r;
    int64_t down = dim * hidden + hidden;
    int64_t up = hidden * dim + dim;
    int64_t dw = 2 * hidden * (2 * 3 * 3);
    return down + up + dw;
}

MultiViewAdapter::MultiViewAdapter(int64_t dim, int reduction, std::mt19937_64& rng)
    : down(dim, dim / reduction, rng),
      local_enhance(dim / reduction, rng),
      global_enhance(dim / reduction, rng),
      up(dim / reduction, dim, rng, /*zero_init=*/true) {
    if (dim % reduction != 0)
        throw ConfigError("adapter dim " + std::to_string(dim) + " not divisible by reduction " +
                          std::to_string(reduction));
}

Var MultiViewAdapter::fwd(const Var& x, int64_t grid_h, int64_t grid_w) const {
    Var reduced = down.fwd(x);
    Var map = tokens_to_map(reduced, grid_h, grid_w);

    mv::SplitViews views = mv::split_views(map);
    Var unified = mv::merge_locals(views.locals);

    // Cross-view exchange: the unified-local map sees the upsampled global
    // view; the global map then sees the pooled (already enhanced) local map.
    Var up_global = bilinear_resize(views.global, 2 * grid_h, 2 * grid_w);
    Var unified2 = local_enhance.fwd(unified, up_global);
    Var global2 = global_enhance.fwd(avg_pool2x2(unified2), views.global);

    Var packed = mv::pack_views(mv::scatter_unified(unified2), global2);
    Var tokens = map_to_tokens(gelu(packed));
    return add(x, up.fwd(tokens));
}

void MultiViewAdapter::append_params(const std::string& prefix, nn::ParamList& out) const {
    down.append_params(prefix + ".down", out);
    local_enhance.append_params(prefix + ".local_enhance", out);
    global_enhance.append_params(prefix + ".global_enhance", out);
    up.append_params(prefix + ".up", out);
}

EncoderBlock::EncoderBlock(int64_t dim, int heads, int mlp_ratio, int reduction,
                           bool with_adapter, std::mt19937_64& rng, std::mt19937_64& adapter_rng)
    : ln1(dim), ln2(dim), attn(dim, heads, rng), ffn(dim, dim * mlp_ratio, rng) {
    if (with_adapter) adapter.emplace(dim, reduction, adapter_rng);
}

Var EncoderBlock::fwd(const Var& x, int64_t grid_h, int64_t grid_w) const {
    Var xt = adapter ? adapter->fwd(x, grid_h, grid_w) : x;
    Var n1 = ln1.fwd(xt);
    Var xh = add(attn.fwd(n1, n1), xt);
    Var out = add(ffn.fwd(ln2.fwd(xh)), xh);
    return out;
}

void EncoderBlock::append_params(const std::string& prefix, nn::ParamList& out) const {
    if (adapter) adapter->append_params(prefix + ".adapter", out);
    ln1.append_params(prefix + ".ln1", out);
    ln2.append_params(prefix + ".ln2", out);
    attn.append_params(prefix + ".attn", out);
    ffn.append_params(prefix + ".ffn", out);
}

PyramidEncoder::PyramidEncoder(const EncoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg_.validate();
    // Adapters draw from a derived stream; the seed is consumed whether or
    // not adapters exist, keeping every other weight identical across the
    // adapter_enabled toggle.
    std::mt19937_64 adapter_rng(rng());
    patch_embed = nn::Conv2d(3, cfg.stage_dims[0], 4, 4, 0, rng);
    for (int s = 0; s < 4; ++s) {
        std::vector<EncoderBlock> blocks;
        for (int b = 0; b < cfg.stage_depths[static_cast<size_t>(s)]; ++b)
            blocks.emplace_back(cfg.stage_dims[static_cast<size_t>(s)],
                                cfg.heads[static_cast<size_t>(s)], cfg.mlp_ratio,
                                cfg.reduction_factor, cfg.adapter_enabled, rng, adapter_rng);
        stages_.push_back(std::move(blocks));
        if (s < 3)
            downsample_.emplace_back(cfg.stage_dims[static_cast<size_t>(s)],
                                     cfg.stage_dims[static_cast<size_t>(s + 1)], 2, 2, 0, rng);
    }
    for (int s = 0; s < 4; ++s)
        neck_proj_.emplace_back(cfg.stage_dims[static_cast<size_t>(s)], cfg.neck_dim, 1, 1, 0,
                                rng);
}

PyramidFeatures PyramidEncoder::fwd(const Var& multiview) const {
    const Tensor& x = multiview.value();
    if (x.ndim() != 4 || x.dim(1) != 3)
        throw std::invalid_argument("encoder: expected multiview batch ⟨5B,3,h,w⟩, got " +
                                    x.shape_str());
    if (x.dim(0) % 5 != 0)
        throw std::invalid_argument("encoder: batch not divisible by 5");
    int64_t h = x.dim(2), w = x.dim(3);
    if (h % 32 != 0 || w % 32 != 0)
        throw ConfigError("encoder: spatial dims must be divisible by 32, got " + x.shape_str());

    Var cur = map_to_tokens(patch_embed.fwd(multiview));
    int64_t gh = h / 4, gw = w / 4;
    std::vector<Var> stage_maps;
    for (size_t s = 0; s < stages_.size(); ++s) {
        for (const EncoderBlock& block : stages_[s]) cur = block.fwd(cur, gh, gw);
        Var map = tokens_to_map(cur, gh, gw);
        stage_maps.push_back(map);
        if (s < downsample_.size()) {
            Var down = downsample_[s].fwd(map);
            gh /= 2;
            gw /= 2;
            cur = map_to_tokens(down);
        }
    }

    std::array<Var, 4> projected;
    for (int s = 0; s < 4; ++s)
        projected[static_cast<size_t>(s)] =
            neck_proj_[static_cast<size_t>(s)].fwd(stage_maps[static_cast<size_t>(s)]);

    // Top-down fusion; the stride-32 level folds into F16.
    Var f16 = add(projected[2], bilinear_resize(projected[3], h / 16, w / 16));
    Var f8 = add(projected[1], bilinear_resize(f16, h / 8, w / 8));
    Var f4 = add(projected[0], bilinear_resize(f8, h / 4, w / 4));
    return {f4, f8, f16};
}

void PyramidEncoder::append_params(const std::string& prefix, nn::ParamList& out) const {
    patch_embed.append_params(prefix + ".patch_embed", out);
    for (size_t s = 0; s < stages_.size(); ++s) {
        for (size_t b = 0; b < stages_[s].size(); ++b)
            stages_[s][b].append_params(
                prefix + ".stage" + std::to_string(s) + ".block" + std::to_string(b), out);
        if (s < downsample_.size())
            downsample_[s].append_params(prefix + ".down" + std::to_string(s), out);
    }
    for (size_t s = 0; s < neck_proj_.size(); ++s)
        neck_proj_[s].append_params(prefix + ".neck.proj" + std::to_string(s), out);
}

} // namespace mvseg
