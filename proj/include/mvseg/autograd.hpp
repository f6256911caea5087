#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mvseg/tensor.hpp"

namespace mvseg::ag {

struct VarImpl;

// Differentiable handle over a Tensor. Vars form a DAG; backward() walks it
// in reverse topological order, accumulating grads into leaf parameters.
class Var {
public:
    Var() = default;

    // Constant (non-differentiable) wrapper.
    static Var constant(Tensor value);
    // Leaf parameter; grads accumulate into grad().
    static Var param(Tensor value);

    bool defined() const { return impl_ != nullptr; }
    const Tensor& value() const;
    Tensor& value_mut(); // optimizer/init use only
    const Tensor& grad() const;
    bool has_grad() const;
    void zero_grad();
    bool requires_grad() const;

    const std::vector<int64_t>& shape() const { return value().shape(); }
    int64_t numel() const { return value().numel(); }

    std::shared_ptr<VarImpl> impl() const { return impl_; }
    explicit Var(std::shared_ptr<VarImpl> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<VarImpl> impl_;
};

struct VarImpl {
    Tensor value;
    Tensor grad;                    // undefined until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<VarImpl>> parents;
    // Reads this->grad, accumulates into parents' grads. Empty for leaves.
    std::function<void(VarImpl&)> backward_fn;
};

// Builds a tracked result when grad mode is on and any input requires grad;
// otherwise returns a constant.
Var make_op(Tensor value, std::vector<Var> inputs,
            std::function<void(VarImpl&)> backward_fn);

// Runs reverse-mode accumulation from a scalar loss.
void backward(const Var& loss);

// Accumulate `delta` into the node's grad buffer.
void accum_grad(VarImpl& node, const Tensor& delta);

bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

} // namespace mvseg::ag
