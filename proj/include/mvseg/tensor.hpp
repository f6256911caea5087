#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace mvseg {

// Dense row-major tensor of doubles. Copies share the underlying buffer;
// ops never mutate their inputs, so sharing is safe. Mutation is confined
// to freshly allocated tensors, parameter initialization and the optimizer.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, double fill);
    Tensor(std::vector<int64_t> shape, std::vector<double> values);

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor full(std::vector<int64_t> shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor randn(std::vector<int64_t> shape, std::mt19937_64& rng, double stddev = 1.0);
    static Tensor uniform(std::vector<int64_t> shape, std::mt19937_64& rng, double lo, double hi);

    bool defined() const { return data_ != nullptr; }
    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t dim(size_t i) const { return shape_.at(i); }
    size_t ndim() const { return shape_.size(); }
    int64_t numel() const { return numel_; }

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }

    double& at(std::initializer_list<int64_t> idx);
    double at(std::initializer_list<int64_t> idx) const;

    // New tensor sharing this buffer under a different shape (same numel).
    Tensor reshaped(std::vector<int64_t> shape) const;
    Tensor clone() const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    std::string shape_str() const;
    static std::string shape_str(const std::vector<int64_t>& shape);

private:
    int64_t offset_of(std::initializer_list<int64_t> idx) const;

    std::vector<int64_t> shape_;
    int64_t numel_ = 0;
    std::shared_ptr<std::vector<double>> data_;
};

int64_t shape_numel(const std::vector<int64_t>& shape);

// In-place accumulation helpers used by the autograd engine and optimizer.
void add_into(Tensor& dst, const Tensor& src);
void scale_inplace(Tensor& t, double factor);

bool exact_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

} // namespace mvseg
