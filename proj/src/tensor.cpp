#include "mvseg/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mvseg {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw std::invalid_argument("tensor dimension must be non-negative");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)), numel_(shape_numel(shape_)),
      data_(std::make_shared<std::vector<double>>(static_cast<size_t>(numel_), 0.0)) {}

Tensor::Tensor(std::vector<int64_t> shape, double fill)
    : shape_(std::move(shape)), numel_(shape_numel(shape_)),
      data_(std::make_shared<std::vector<double>>(static_cast<size_t>(numel_), fill)) {}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), numel_(shape_numel(shape_)),
      data_(std::make_shared<std::vector<double>>(std::move(values))) {
    if (static_cast<int64_t>(data_->size()) != numel_)
        throw std::invalid_argument("tensor value count does not match shape");
}

Tensor Tensor::randn(std::vector<int64_t> shape, std::mt19937_64& rng, double stddev) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = dist(rng);
    return t;
}

Tensor Tensor::uniform(std::vector<int64_t> shape, std::mt19937_64& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = dist(rng);
    return t;
}

int64_t Tensor::offset_of(std::initializer_list<int64_t> idx) const {
    if (idx.size() != shape_.size()) throw std::invalid_argument("index rank mismatch");
    int64_t off = 0;
    size_t k = 0;
    for (int64_t i : idx) {
        if (i < 0 || i >= shape_[k]) throw std::out_of_range("tensor index out of range");
        off = off * shape_[k] + i;
        ++k;
    }
    return off;
}

double& Tensor::at(std::initializer_list<int64_t> idx) { return (*data_)[offset_of(idx)]; }
double Tensor::at(std::initializer_list<int64_t> idx) const { return (*data_)[offset_of(idx)]; }

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
    if (shape_numel(shape) != numel_)
        throw std::invalid_argument("reshape changes element count: " + shape_str(shape_) +
                                    " -> " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.numel_ = numel_;
    t.data_ = data_;
    return t;
}

Tensor Tensor::clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.numel_ = numel_;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    return t;
}

bool Tensor::all_finite() const {
    const double* p = data();
    for (int64_t i = 0; i < numel_; ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

std::string Tensor::shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

void add_into(Tensor& dst, const Tensor& src) {
    if (!dst.defined()) {
        dst = src.clone();
        return;
    }
    if (!dst.same_shape(src)) throw std::invalid_argument("add_into shape mismatch");
    double* d = dst.data();
    const double* s = src.data();
    for (int64_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

void scale_inplace(Tensor& t, double factor) {
    double* d = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) d[i] *= factor;
}

bool exact_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    const double* pa = a.data();
    const double* pb = b.data();
    for (int64_t i = 0; i < a.numel(); ++i)
        if (pa[i] != pb[i]) return false;
    return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff shape mismatch");
    double m = 0.0;
    const double* pa = a.data();
    const double* pb = b.data();
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(pa[i] - pb[i]));
    return m;
}

} // namespace mvseg
