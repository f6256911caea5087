#include "mvseg/drm.hpp"

#include "mvseg/errors.hpp"

namespace mvseg {

using namespace ops;
namespace mv = multiview;

DetailRefiner::DetailRefiner(int64_t mask_dim, int64_t width, int aux_depth, std::mt19937_64& rng)
    : fuse(mask_dim, rng), restore1(mask_dim, width, 3, 1, 1, rng),
      restore2(width, width, 3, 1, 1, rng), head3(width, width, 3, 1, 1, rng),
      head1(width, 1, 1, 1, 0, rng) {
    if (aux_depth < 1) throw ConfigError("drm_aux_depth must be >= 1");
    aux.emplace_back(3, width, 3, 1, 1, rng);
    for (int i = 1; i < aux_depth; ++i) aux.emplace_back(width, width, 3, 1, 1, rng);
}

DetailRefiner::Outputs DetailRefiner::fwd(const Var& fp, const Var& unified_local_image) const {
    const Tensor& f = fp.value();
    const Tensor& img = unified_local_image.value();
    if (f.ndim() != 4 || f.dim(0) % 5 != 0)
        throw std::invalid_argument("detail refiner: expected mask feature ⟨5B,C_p,h/4,w/4⟩");
    if (img.ndim() != 4 || img.dim(1) != 3)
        throw std::invalid_argument("detail refiner: expected unified local image ⟨B,3,2h,2w⟩");
    if (img.dim(0) != f.dim(0) / 5)
        throw std::invalid_argument("detail refiner: image batch does not match feature batch");
    // Feature grid is h/4; the image is 2h: an exact factor 8 apart.
    if (img.dim(2) != 8 * f.dim(2) || img.dim(3) != 8 * f.dim(3))
        throw std::invalid_argument("detail refiner: image " + img.shape_str() +
                                    " is not 8x the feature grid " + f.shape_str());

    mv::SplitViews views = mv::split_views(fp);
    Var local_merged = mv::merge_locals(views.locals); // ⟨B,C_p,h/2,w/2⟩
    int64_t half_h = local_merged.value().dim(2), half_w = local_merged.value().dim(3);
    Var global_up = bilinear_resize(views.global, half_h, half_w);
    Var fused = fuse.fwd(local_merged, global_up); // ⟨B,C_p,h/2,w/2⟩

    Var m = gelu(restore1.fwd(bilinear_resize(fused, 2 * half_h, 2 * half_w)));
    m = gelu(restore2.fwd(bilinear_resize(m, 4 * half_h, 4 * half_w)));
    if (m.value().dim(2) != img.dim(2) || m.value().dim(3) != img.dim(3))
        throw Error("detail refiner: restoration did not reach the working resolution");

    Var a = unified_local_image;
    for (const nn::Conv2d& conv : aux) a = gelu(conv.fwd(a));

    Var s = add(m, a);
    Var logits = head1.fwd(gelu(head3.fwd(s)));
    return {logits, sigmoid(logits)};
}

void DetailRefiner::append_params(const std::string& prefix, nn::ParamList& out) const {
    fuse.append_params(prefix + ".fuse", out);
    restore1.append_params(prefix + ".restore1", out);
    restore2.append_params(prefix + ".restore2", out);
    for (size_t i = 0; i < aux.size(); ++i)
        aux[i].append_params(prefix + ".aux" + std::to_string(i), out);
    head3.append_params(prefix + ".head3", out);
    head1.append_params(prefix + ".head1", out);
}

} // namespace mvseg
