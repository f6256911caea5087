#include "mvseg/optimizer.hpp"

#include <cmath>

namespace mvseg {

AdamW::AdamW(std::vector<Group> groups, double beta1, double beta2, double eps,
             double weight_decay)
    : groups_(std::move(groups)), beta1_(beta1), beta2_(beta2), eps_(eps),
      weight_decay_(weight_decay) {
    for (const Group& g : groups_) {
        std::vector<Tensor> gm, gv;
        for (const ag::Var& p : g.params) {
            gm.push_back(Tensor::zeros(p.value().shape()));
            gv.push_back(Tensor::zeros(p.value().shape()));
        }
        m_.push_back(std::move(gm));
        v_.push_back(std::move(gv));
    }
}

void AdamW::step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t gi = 0; gi < groups_.size(); ++gi) {
        Group& group = groups_[gi];
        for (size_t pi = 0; pi < group.params.size(); ++pi) {
            ag::Var& p = group.params[pi];
            if (!p.has_grad()) continue;
            const double* g = p.grad().data();
            double* m = m_[gi][pi].data();
            double* v = v_[gi][pi].data();
            double* w = p.value_mut().data();
            int64_t n = p.numel();
            for (int64_t i = 0; i < n; ++i) {
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
                double mhat = m[i] / bc1;
                double vhat = v[i] / bc2;
                w[i] -= group.lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * w[i]);
            }
        }
    }
}

void AdamW::zero_grad() {
    for (Group& g : groups_)
        for (ag::Var& p : g.params) p.zero_grad();
}

} // namespace mvseg
