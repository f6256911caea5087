#pragma once

#include <vector>

#include "mvseg/autograd.hpp"

namespace mvseg {

// Adam with decoupled weight decay. Frozen parameters are simply not handed
// to the optimizer.
class AdamW {
public:
    struct Group {
        std::vector<ag::Var> params;
        double lr;
    };

    explicit AdamW(std::vector<Group> groups, double beta1 = 0.9, double beta2 = 0.999,
                   double eps = 1e-8, double weight_decay = 1e-4);

    void step();
    void zero_grad();
    int64_t step_count() const { return t_; }

private:
    std::vector<Group> groups_;
    std::vector<std::vector<Tensor>> m_, v_;
    double beta1_, beta2_, eps_, weight_decay_;
    int64_t t_ = 0;
};

} // namespace mvseg
