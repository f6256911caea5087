#pragma once

#include "mvseg/autograd.hpp"

namespace mvseg::ops {

using ag::Var;

// ---- elementwise / arithmetic ----
Var add(const Var& a, const Var& b);          // same shape
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);          // elementwise, same shape
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var gelu(const Var& a);                       // exact erf form
Var sigmoid(const Var& a);

// ---- reductions ----
Var sum(const Var& a);                        // -> scalar ⟨1⟩
Var mean(const Var& a);                       // -> scalar ⟨1⟩

// ---- shape ----
Var reshape(const Var& a, std::vector<int64_t> shape);

// ---- dense layers ----
// x ⟨..., Din⟩, w ⟨Din, Dout⟩, b ⟨Dout⟩ (optional, pass undefined Var to skip)
Var linear(const Var& x, const Var& w, const Var& b);
// Normalization over the last dimension; gamma/beta ⟨D⟩.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
// Normalization over the channel dim of ⟨B,C,H,W⟩; gamma/beta ⟨C⟩.
Var channel_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// ---- convolutions (zero padding) ----
// x ⟨B,Ci,H,W⟩, w ⟨Co,Ci,kh,kw⟩, b ⟨Co⟩ optional.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// Depth-wise 3x3 (stride 1): w ⟨C,kh,kw⟩, no bias.
Var dwconv2d(const Var& x, const Var& w, int pad);
// Depth-wise conv over a stacked pair (depth kernel 2, stride 2 over depth,
// 3x3 spatial with same padding): w ⟨C,2,kh,kw⟩, no bias.
// out[c] = corr(a[c], w[c,0]) + corr(b[c], w[c,1])
Var dwconv3d_pair(const Var& a, const Var& b, const Var& w, int pad);
// Transposed conv, kernel 2 stride 2: w ⟨Ci,Co,2,2⟩, b ⟨Co⟩ optional.
Var conv_transpose2x2(const Var& x, const Var& w, const Var& b);

// ---- resampling ----
Var avg_pool2x2(const Var& x);
// Bilinear, align_corners = false. Identity short-circuits to a copy-free op.
Var bilinear_resize(const Var& x, int64_t out_h, int64_t out_w);

// ---- attention ----
// q ⟨G,Nq,d⟩, k,v ⟨G,Nk,d⟩; per-row streaming softmax(q·kᵀ·scale)·v.
// Never materializes the Nq×Nk score matrix.
Var attention_rows(const Var& q, const Var& k, const Var& v, double scale);
// ⟨M,N,D⟩ -> ⟨M*heads, N, D/heads⟩ and back.
Var split_heads(const Var& x, int heads);
Var merge_heads(const Var& x, int heads);

// ---- token/map conversion ----
// ⟨M,N,D⟩ with N == H*W (row-major) -> ⟨M,D,H,W⟩ and back.
Var tokens_to_map(const Var& x, int64_t h, int64_t w);
Var map_to_tokens(const Var& x);

// ---- broadcast / selection ----
Var broadcast_rows(const Var& x, int64_t m);  // ⟨T,C⟩ -> ⟨m,T,C⟩; grad sums over m
Var select_token(const Var& x, int64_t t);    // ⟨M,T,C⟩ -> ⟨M,C⟩
// feat ⟨M,C,H,W⟩ · w ⟨M,C⟩ -> ⟨M,1,H,W⟩ per-pixel channel dot product
Var pixel_dot(const Var& feat, const Var& w);

// ---- concatenation ----
Var concat_channels(const Var& a, const Var& b); // ⟨B,Ca,H,W⟩+⟨B,Cb,H,W⟩

// ---- tensor-only helpers (no autograd) ----
// Average pooling with kernel k, stride 1, zero padding (k-1)/2, divisor k*k.
Tensor avg_pool_same(const Tensor& x, int k);
Tensor bilinear_resize_plain(const Tensor& x, int64_t out_h, int64_t out_w);

} // namespace mvseg::ops
