#include "mvseg/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace mvseg::nn {

Tensor init_linear_weight(int64_t fan_in, std::vector<int64_t> shape, std::mt19937_64& rng) {
    double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::randn(std::move(shape), rng, stddev);
}

Linear::Linear(int64_t din, int64_t dout, std::mt19937_64& rng, bool zero_init) {
    Tensor w = zero_init ? Tensor::zeros({din, dout}) : init_linear_weight(din, {din, dout}, rng);
    weight = Var::param(std::move(w));
    bias = Var::param(Tensor::zeros({dout}));
}

void Linear::append_params(const std::string& prefix, ParamList& out) const {
    add_param(out, prefix, "weight", weight);
    add_param(out, prefix, "bias", bias);
}

LayerNorm::LayerNorm(int64_t dim) {
    gamma = Var::param(Tensor::full({dim}, 1.0));
    beta = Var::param(Tensor::zeros({dim}));
}

void LayerNorm::append_params(const std::string& prefix, ParamList& out) const {
    add_param(out, prefix, "gamma", gamma);
    add_param(out, prefix, "beta", beta);
}

ChannelNorm::ChannelNorm(int64_t channels) {
    gamma = Var::param(Tensor::full({channels}, 1.0));
    beta = Var::param(Tensor::zeros({channels}));
}

void ChannelNorm::append_params(const std::string& prefix, ParamList& out) const {
    add_param(out, prefix, "gamma", gamma);
    add_param(out, prefix, "beta", beta);
}

Conv2d::Conv2d(int64_t cin, int64_t cout, int kernel, int stride, int pad, std::mt19937_64& rng)
    : stride_(stride), pad_(pad) {
    int64_t fan_in = cin * kernel * kernel;
    weight = Var::param(init_linear_weight(fan_in, {cout, cin, kernel, kernel}, rng));
    bias = Var::param(Tensor::zeros({cout}));
}

void Conv2d::append_params(const std::string& prefix, ParamList& out) const {
    add_param(out, prefix, "weight", weight);
    add_param(out, prefix, "bias", bias);
}

DWConv2d::DWConv2d(int64_t channels, int kernel, std::mt19937_64& rng)
    : pad_((kernel - 1) / 2) {
    int64_t fan_in = kernel * kernel;
    weight = Var::param(init_linear_weight(fan_in, {channels, kernel, kernel}, rng));
}

void DWConv2d::append_params(const std::string& prefix, ParamList& out) const {
    add_param(out, prefix, "weight", weight);
}

DWConv3dPair::DWConv3dPair(int64_t channels, std::mt19937_64& rng) {
    weight = Var::param(init_linear_weight(2 * 3 * 3, {channels, 2, 3, 3}, rng));
}

void DWConv3dPair::append_params(const std::string& prefix, ParamList& out) const {
    add_param(out, prefix, "weight", weight);
}

ConvTranspose2x2::ConvTranspose2x2(int64_t cin, int64_t cout, std::mt19937_64& rng) {
    weight = Var::param(init_linear_weight(cin * 4, {cin, cout, 2, 2}, rng));
    bias = Var::param(Tensor::zeros({cout}));
}

void ConvTranspose2x2::append_params(const std::string& prefix, ParamList& out) const {
    add_param(out, prefix, "weight", weight);
    add_param(out, prefix, "bias", bias);
}

Mha::Mha(int64_t dim, int heads, std::mt19937_64& rng)
    : q(dim, dim, rng), k(dim, dim, rng), v(dim, dim, rng), out(dim, dim, rng), heads_(heads) {
    if (heads < 1 || dim % heads != 0)
        throw std::invalid_argument("Mha: dim must be divisible by head count");
    head_dim_ = dim / heads;
}

Var Mha::fwd(const Var& q_in, const Var& kv_in) const {
    Var qh = ops::split_heads(q.fwd(q_in), heads_);
    Var kh = ops::split_heads(k.fwd(kv_in), heads_);
    Var vh = ops::split_heads(v.fwd(kv_in), heads_);
    double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));
    Var att = ops::attention_rows(qh, kh, vh, scale);
    return out.fwd(ops::merge_heads(att, heads_));
}

void Mha::append_params(const std::string& prefix, ParamList& out_list) const {
    q.append_params(prefix + ".q", out_list);
    k.append_params(prefix + ".k", out_list);
    v.append_params(prefix + ".v", out_list);
    out.append_params(prefix + ".out", out_list);
}

Ffn::Ffn(int64_t dim, int64_t hidden, std::mt19937_64& rng)
    : fc1(dim, hidden, rng), fc2(hidden, dim, rng) {}

void Ffn::append_params(const std::string& prefix, ParamList& out) const {
    fc1.append_params(prefix + ".fc1", out);
    fc2.append_params(prefix + ".fc2", out);
}

} // namespace mvseg::nn
