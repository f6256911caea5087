#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>

#include "mvseg/autograd.hpp"
#include "mvseg/ops.hpp"

namespace mvseg::multiview {

using ag::Var;

// Batch layout convention for a multi-view batch ⟨5B, C, h, w⟩:
// five contiguous blocks of B samples each, in the order
//   [L1-block, L2-block, L3-block, L4-block, G-block]
// where quadrants are numbered row-major over the source image:
//   L1 top-left, L2 top-right, L3 bottom-left, L4 bottom-right,
// and G is the resized global view.

struct SplitViews {
    std::array<Var, 4> locals;
    Var global;
};

struct SplitTensors {
    std::array<Tensor, 4> locals;
    Tensor global;
};

// --- raw kernels, usable with any scalar type -----------------------------

namespace kernels {

// x: ⟨5B, inner⟩ flattened; copies view block v (0..3 locals, 4 global).
template <typename T>
void copy_view_block(const T* x, T* out, int64_t b5, int64_t inner, int view) {
    if (b5 % 5 != 0) throw std::invalid_argument("view batch not divisible by 5");
    int64_t b = b5 / 5;
    const T* src = x + static_cast<int64_t>(view) * b * inner;
    for (int64_t i = 0; i < b * inner; ++i) out[i] = src[i];
}

template <typename T>
void place_view_block(const T* block, T* out, int64_t b5, int64_t inner, int view) {
    int64_t b = b5 / 5;
    T* dst = out + static_cast<int64_t>(view) * b * inner;
    for (int64_t i = 0; i < b * inner; ++i) dst[i] = block[i];
}

// Quadrant placement: quadrant q of size (a,b) into a (2a,2b) canvas.
// q row-major: 0 TL, 1 TR, 2 BL, 3 BR.
template <typename T>
void place_quadrant(const T* quad, T* out, int64_t planes, int64_t a, int64_t b, int q) {
    int64_t oy = (q / 2) * a;
    int64_t ox = (q % 2) * b;
    for (int64_t p = 0; p < planes; ++p)
        for (int64_t y = 0; y < a; ++y) {
            const T* srow = quad + (p * a + y) * b;
            T* drow = out + (p * 2 * a + oy + y) * 2 * b + ox;
            for (int64_t x = 0; x < b; ++x) drow[x] = srow[x];
        }
}

template <typename T>
void extract_quadrant(const T* unified, T* quad, int64_t planes, int64_t a, int64_t b, int q) {
    int64_t oy = (q / 2) * a;
    int64_t ox = (q % 2) * b;
    for (int64_t p = 0; p < planes; ++p)
        for (int64_t y = 0; y < a; ++y) {
            const T* srow = unified + (p * 2 * a + oy + y) * 2 * b + ox;
            T* drow = quad + (p * a + y) * b;
            for (int64_t x = 0; x < b; ++x) drow[x] = srow[x];
        }
}

} // namespace kernels

// --- tensor-level operations (autograd-aware) -----------------------------

// Slice view block v (0..3 local quadrants, 4 global) out of ⟨5B,C,a,b⟩.
Var view_block(const Var& x, int view);
SplitViews split_views(const Var& x);
Var pack_views(const std::array<Var, 4>& locals, const Var& global);
Var merge_locals(const std::array<Var, 4>& locals);
std::array<Var, 4> scatter_unified(const Var& unified);

// Plain-tensor variants.
Tensor view_block(const Tensor& x, int view);
SplitTensors split_views(const Tensor& x);
Tensor pack_views(const std::array<Tensor, 4>& locals, const Tensor& global);
Tensor merge_locals(const std::array<Tensor, 4>& locals);
std::array<Tensor, 4> scatter_unified(const Tensor& unified);

// Resize raw ⟨B,3,H,W⟩ to (2h,2w), cut exact quadrants, append the raw
// resized to (h,w) as the global view. Bilinear, align-corners disabled.
Tensor make_multiview(const Tensor& raw, int64_t view_h, int64_t view_w);

// The (2h,2w) working-resolution image the local views were cut from.
Tensor unified_local_image(const Tensor& multiview);

} // namespace mvseg::multiview
