#include "mvseg/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace mvseg::ag {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var Var::constant(Tensor value) {
    auto impl = std::make_shared<VarImpl>();
    impl->value = std::move(value);
    return Var(std::move(impl));
}

Var Var::param(Tensor value) {
    auto impl = std::make_shared<VarImpl>();
    impl->value = std::move(value);
    impl->requires_grad = true;
    return Var(std::move(impl));
}

const Tensor& Var::value() const {
    if (!impl_) throw std::logic_error("value() on undefined Var");
    return impl_->value;
}

Tensor& Var::value_mut() {
    if (!impl_) throw std::logic_error("value_mut() on undefined Var");
    return impl_->value;
}

const Tensor& Var::grad() const {
    if (!impl_) throw std::logic_error("grad() on undefined Var");
    return impl_->grad;
}

bool Var::has_grad() const { return impl_ && impl_->grad.defined(); }

void Var::zero_grad() {
    if (impl_) impl_->grad = Tensor();
}

bool Var::requires_grad() const { return impl_ && impl_->requires_grad; }

void accum_grad(VarImpl& node, const Tensor& delta) {
    if (!node.grad.defined()) {
        node.grad = delta.clone();
    } else {
        add_into(node.grad, delta);
    }
}

Var make_op(Tensor value, std::vector<Var> inputs,
            std::function<void(VarImpl&)> backward_fn) {
    bool track = g_grad_enabled;
    if (track) {
        track = false;
        for (const Var& v : inputs)
            if (v.defined() && v.impl()->requires_grad) { track = true; break; }
    }
    auto impl = std::make_shared<VarImpl>();
    impl->value = std::move(value);
    if (track) {
        impl->requires_grad = true;
        impl->parents.reserve(inputs.size());
        for (const Var& v : inputs)
            if (v.defined()) impl->parents.push_back(v.impl());
        impl->backward_fn = std::move(backward_fn);
    }
    return Var(std::move(impl));
}

void backward(const Var& loss) {
    if (!loss.defined()) throw std::invalid_argument("backward on undefined Var");
    if (loss.numel() != 1) throw std::invalid_argument("backward requires a scalar loss");
    if (!loss.impl()->requires_grad) return;

    // Iterative post-order DFS; reversed post-order is a valid topological
    // order for the backward sweep.
    std::vector<VarImpl*> order;
    std::unordered_set<VarImpl*> visited;
    struct Frame { VarImpl* node; size_t next_child; };
    std::vector<Frame> stack;
    stack.push_back({loss.impl().get(), 0});
    visited.insert(loss.impl().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_child < f.node->parents.size()) {
            VarImpl* child = f.node->parents[f.next_child++].get();
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    accum_grad(*loss.impl(), Tensor(loss.value().shape(), 1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        VarImpl* node = *it;
        if (node->backward_fn && node->grad.defined()) node->backward_fn(*node);
    }
}

} // namespace mvseg::ag
