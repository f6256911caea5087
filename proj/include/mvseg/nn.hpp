#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mvseg/ops.hpp"

namespace mvseg::nn {

using ag::Var;

using ParamList = std::vector<std::pair<std::string, Var>>;

inline void add_param(ParamList& out, const std::string& prefix, const std::string& name,
                      const Var& v) {
    out.emplace_back(prefix.empty() ? name : prefix + "." + name, v);
}

Tensor init_linear_weight(int64_t fan_in, std::vector<int64_t> shape, std::mt19937_64& rng);

struct Linear {
    Linear() = default;
    Linear(int64_t din, int64_t dout, std::mt19937_64& rng, bool zero_init = false);
    Var fwd(const Var& x) const { return ops::linear(x, weight, bias); }
    void append_params(const std::string& prefix, ParamList& out) const;
    Var weight, bias;
};

struct LayerNorm {
    LayerNorm() = default;
    explicit LayerNorm(int64_t dim);
    Var fwd(const Var& x) const { return ops::layer_norm(x, gamma, beta); }
    void append_params(const std::string& prefix, ParamList& out) const;
    Var gamma, beta;
};

struct ChannelNorm {
    ChannelNorm() = default;
    explicit ChannelNorm(int64_t channels);
    Var fwd(const Var& x) const { return ops::channel_norm(x, gamma, beta); }
    void append_params(const std::string& prefix, ParamList& out) const;
    Var gamma, beta;
};

struct Conv2d {
    Conv2d() = default;
    Conv2d(int64_t cin, int64_t cout, int kernel, int stride, int pad, std::mt19937_64& rng);
    Var fwd(const Var& x) const { return ops::conv2d(x, weight, bias, stride_, pad_); }
    void append_params(const std::string& prefix, ParamList& out) const;
    Var weight, bias;
    int stride_ = 1, pad_ = 0;
};

struct DWConv2d {
    DWConv2d() = default;
    DWConv2d(int64_t channels, int kernel, std::mt19937_64& rng);
    Var fwd(const Var& x) const { return ops::dwconv2d(x, weight, pad_); }
    void append_params(const std::string& prefix, ParamList& out) const;
    Var weight;
    int pad_ = 1;
};

// Depth-wise 3-D conv over a stacked pair of maps: kernel (2,3,3),
// stride (2,1,1), padding (0,1,1), no bias.
struct DWConv3dPair {
    DWConv3dPair() = default;
    DWConv3dPair(int64_t channels, std::mt19937_64& rng);
    Var fwd(const Var& a, const Var& b) const { return ops::dwconv3d_pair(a, b, weight, 1); }
    void append_params(const std::string& prefix, ParamList& out) const;
    Var weight;
};

struct ConvTranspose2x2 {
    ConvTranspose2x2() = default;
    ConvTranspose2x2(int64_t cin, int64_t cout, std::mt19937_64& rng);
    Var fwd(const Var& x) const { return ops::conv_transpose2x2(x, weight, bias); }
    void append_params(const std::string& prefix, ParamList& out) const;
    Var weight, bias;
};

// Multi-head attention; self-attention when fwd is called with q == kv.
struct Mha {
    Mha() = default;
    Mha(int64_t dim, int heads, std::mt19937_64& rng);
    Var fwd(const Var& q_in, const Var& kv_in) const;
    void append_params(const std::string& prefix, ParamList& out) const;
    Linear q, k, v, out;
    int heads_ = 1;
    int64_t head_dim_ = 0;
};

struct Ffn {
    Ffn() = default;
    Ffn(int64_t dim, int64_t hidden, std::mt19937_64& rng);
    Var fwd(const Var& x) const { return fc2.fwd(ops::gelu(fc1.fwd(x))); }
    void append_params(const std::string& prefix, ParamList& out) const;
    Linear fc1, fc2;
};

} // namespace mvseg::nn
