#include "mvseg/multiview.hpp"

namespace mvseg::multiview {

using ag::VarImpl;
using ag::accum_grad;
using ag::make_op;

namespace {

void check_view_batch(const Tensor& x, const char* op) {
    if (x.ndim() != 4)
        throw std::invalid_argument(std::string(op) + ": expected ⟨5B,C,a,b⟩, got " + x.shape_str());
    if (x.dim(0) % 5 != 0)
        throw std::invalid_argument(std::string(op) + ": leading dim " + std::to_string(x.dim(0)) +
                                    " not divisible by 5");
}

void check_quadrants(const std::array<Tensor, 4>& locals, const char* op) {
    for (int i = 1; i < 4; ++i)
        if (!locals[0].same_shape(locals[static_cast<size_t>(i)]))
            throw std::invalid_argument(std::string(op) + ": quadrant shape mismatch");
    if (locals[0].ndim() != 4)
        throw std::invalid_argument(std::string(op) + ": quadrants must be ⟨B,C,a,b⟩");
}

} // namespace

Tensor view_block(const Tensor& x, int view) {
    check_view_batch(x, "view_block");
    if (view < 0 || view > 4) throw std::invalid_argument("view_block: view index must be 0..4");
    int64_t b = x.dim(0) / 5;
    int64_t inner = x.numel() / x.dim(0);
    Tensor out({b, x.dim(1), x.dim(2), x.dim(3)});
    kernels::copy_view_block(x.data(), out.data(), x.dim(0), inner, view);
    return out;
}

Var view_block(const Var& x, int view) {
    Tensor out = view_block(x.value(), view);
    auto px = x.impl();
    auto in_shape = x.value().shape();
    int64_t b = in_shape[0] / 5;
    int64_t inner = x.value().numel() / in_shape[0];
    return make_op(std::move(out), {x}, [px, in_shape, b, inner, view](VarImpl& self) {
        if (!px->requires_grad) return;
        Tensor dx(in_shape);
        const double* g = self.grad.data();
        double* dst = dx.data() + static_cast<int64_t>(view) * b * inner;
        for (int64_t i = 0; i < b * inner; ++i) dst[i] += g[i];
        accum_grad(*px, dx);
    });
}

SplitTensors split_views(const Tensor& x) {
    check_view_batch(x, "split_views");
    SplitTensors out;
    for (int v = 0; v < 4; ++v) out.locals[static_cast<size_t>(v)] = view_block(x, v);
    out.global = view_block(x, 4);
    return out;
}

SplitViews split_views(const Var& x) {
    check_view_batch(x.value(), "split_views");
    SplitViews out;
    for (int v = 0; v < 4; ++v) out.locals[static_cast<size_t>(v)] = view_block(x, v);
    out.global = view_block(x, 4);
    return out;
}

Tensor pack_views(const std::array<Tensor, 4>& locals, const Tensor& global) {
    check_quadrants(locals, "pack_views");
    if (!locals[0].same_shape(global))
        throw std::invalid_argument("pack_views: global shape differs from locals");
    int64_t b = locals[0].dim(0);
    int64_t inner = locals[0].numel() / b;
    Tensor out({5 * b, locals[0].dim(1), locals[0].dim(2), locals[0].dim(3)});
    for (int v = 0; v < 4; ++v)
        kernels::place_view_block(locals[static_cast<size_t>(v)].data(), out.data(), 5 * b, inner, v);
    kernels::place_view_block(global.data(), out.data(), 5 * b, inner, 4);
    return out;
}

Var pack_views(const std::array<Var, 4>& locals, const Var& global) {
    std::array<Tensor, 4> lt{locals[0].value(), locals[1].value(), locals[2].value(),
                             locals[3].value()};
    Tensor out = pack_views(lt, global.value());
    int64_t b = lt[0].dim(0);
    int64_t inner = lt[0].numel() / b;
    std::array<std::shared_ptr<VarImpl>, 5> parents{locals[0].impl(), locals[1].impl(),
                                                    locals[2].impl(), locals[3].impl(),
                                                    global.impl()};
    auto block_shape = lt[0].shape();
    return make_op(std::move(out), {locals[0], locals[1], locals[2], locals[3], global},
                   [parents, block_shape, b, inner](VarImpl& self) {
        const double* g = self.grad.data();
        for (int v = 0; v < 5; ++v) {
            auto& p = parents[static_cast<size_t>(v)];
            if (!p->requires_grad) continue;
            Tensor d(block_shape);
            const double* src = g + static_cast<int64_t>(v) * b * inner;
            for (int64_t i = 0; i < b * inner; ++i) d.data()[i] = src[i];
            accum_grad(*p, d);
        }
    });
}

Tensor merge_locals(const std::array<Tensor, 4>& locals) {
    check_quadrants(locals, "merge_locals");
    int64_t b = locals[0].dim(0), c = locals[0].dim(1), a = locals[0].dim(2), w = locals[0].dim(3);
    Tensor out({b, c, 2 * a, 2 * w});
    for (int q = 0; q < 4; ++q)
        kernels::place_quadrant(locals[static_cast<size_t>(q)].data(), out.data(), b * c, a, w, q);
    return out;
}

Var merge_locals(const std::array<Var, 4>& locals) {
    std::array<Tensor, 4> lt{locals[0].value(), locals[1].value(), locals[2].value(),
                             locals[3].value()};
    Tensor out = merge_locals(lt);
    int64_t b = lt[0].dim(0), c = lt[0].dim(1), a = lt[0].dim(2), w = lt[0].dim(3);
    std::array<std::shared_ptr<VarImpl>, 4> parents{locals[0].impl(), locals[1].impl(),
                                                    locals[2].impl(), locals[3].impl()};
    auto block_shape = lt[0].shape();
    return make_op(std::move(out), {locals[0], locals[1], locals[2], locals[3]},
                   [parents, block_shape, b, c, a, w](VarImpl& self) {
        for (int q = 0; q < 4; ++q) {
            auto& p = parents[static_cast<size_t>(q)];
            if (!p->requires_grad) continue;
            Tensor d(block_shape);
            kernels::extract_quadrant(self.grad.data(), d.data(), b * c, a, w, q);
            accum_grad(*p, d);
        }
    });
}

std::array<Tensor, 4> scatter_unified(const Tensor& unified) {
    if (unified.ndim() != 4)
        throw std::invalid_argument("scatter_unified: expected ⟨B,C,2a,2b⟩");
    if (unified.dim(2) % 2 != 0 || unified.dim(3) % 2 != 0)
        throw std::invalid_argument("scatter_unified: spatial dims must be even, got " +
                                    unified.shape_str());
    int64_t b = unified.dim(0), c = unified.dim(1);
    int64_t a = unified.dim(2) / 2, w = unified.dim(3) / 2;
    std::array<Tensor, 4> out;
    for (int q = 0; q < 4; ++q) {
        out[static_cast<size_t>(q)] = Tensor({b, c, a, w});
        kernels::extract_quadrant(unified.data(), out[static_cast<size_t>(q)].data(), b * c, a, w, q);
    }
    return out;
}

std::array<Var, 4> scatter_unified(const Var& unified) {
    std::array<Tensor, 4> vals = scatter_unified(unified.value());
    int64_t b = unified.value().dim(0), c = unified.value().dim(1);
    int64_t a = unified.value().dim(2) / 2, w = unified.value().dim(3) / 2;
    auto pu = unified.impl();
    auto u_shape = unified.value().shape();
    std::array<Var, 4> out;
    for (int q = 0; q < 4; ++q) {
        out[static_cast<size_t>(q)] =
            make_op(std::move(vals[static_cast<size_t>(q)]), {unified},
                    [pu, u_shape, b, c, a, w, q](VarImpl& self) {
                        if (!pu->requires_grad) return;
                        Tensor dx(u_shape);
                        kernels::place_quadrant(self.grad.data(), dx.data(), b * c, a, w, q);
                        accum_grad(*pu, dx);
                    });
    }
    return out;
}

Tensor make_multiview(const Tensor& raw, int64_t view_h, int64_t view_w) {
    if (raw.ndim() != 4 || raw.dim(1) != 3)
        throw std::invalid_argument("make_multiview: expected raw image ⟨B,3,H,W⟩, got " +
                                    raw.shape_str());
    if (raw.dim(2) < 2 || raw.dim(3) < 2)
        throw std::invalid_argument("make_multiview: degenerate image, need H,W >= 2");
    if (view_h < 8 || view_w < 8)
        throw std::invalid_argument("make_multiview: view size must be >= 8");

    Tensor working = ops::bilinear_resize_plain(raw, 2 * view_h, 2 * view_w);
    std::array<Tensor, 4> locals = scatter_unified(working);
    Tensor global = ops::bilinear_resize_plain(raw, view_h, view_w);
    return pack_views(locals, global);
}

Tensor unified_local_image(const Tensor& multiview) {
    SplitTensors split = split_views(multiview);
    return merge_locals(split.locals);
}

} // namespace mvseg::multiview
