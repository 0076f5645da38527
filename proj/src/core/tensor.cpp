#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "core/errors.hpp"

namespace emseg::nn {

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)),
      buf_(std::make_shared<std::vector<float>>(static_cast<std::size_t>(shape_numel(shape_)), 0.f)) {}

Tensor::Tensor(std::vector<int> shape, float fill)
    : shape_(std::move(shape)),
      buf_(std::make_shared<std::vector<float>>(static_cast<std::size_t>(shape_numel(shape_)), fill)) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> values)
    : shape_(std::move(shape)), buf_(std::make_shared<std::vector<float>>(std::move(values))) {
    if (static_cast<std::int64_t>(buf_->size()) != shape_numel(shape_))
        throw ShapeError("tensor init: " + std::to_string(buf_->size()) + " values for shape " + shape_str());
}

int Tensor::dim(int i) const {
    if (i < 0) i += ndim();
    return shape_.at(static_cast<std::size_t>(i));
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    if (shape_numel(shape) != numel())
        throw ShapeError("reshape " + shape_str() + " -> incompatible element count");
    Tensor t;
    t.shape_ = std::move(shape);
    t.buf_ = buf_;
    return t;
}

Tensor Tensor::clone() const {
    Tensor t;
    t.shape_ = shape_;
    if (buf_) t.buf_ = std::make_shared<std::vector<float>>(*buf_);
    return t;
}

void Tensor::fill(float v) {
    if (buf_) std::fill(buf_->begin(), buf_->end(), v);
}

bool Tensor::all_finite() const {
    if (!buf_) return true;
    for (float v : *buf_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ')';
    return os.str();
}

bool same_shape(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape();
}

} // namespace emseg::nn
