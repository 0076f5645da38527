#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace emseg::nn {

std::int64_t shape_numel(const std::vector<int>& shape);

// Dense float32 array with shared storage. reshaped() aliases the buffer,
// clone() copies it. All layouts are row-major contiguous.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, float fill);
    Tensor(std::vector<int> shape, std::vector<float> values);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, float v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(float v) { return Tensor({1}, v); }

    bool defined() const { return buf_ != nullptr; }
    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const;
    std::int64_t numel() const { return defined() ? static_cast<std::int64_t>(buf_->size()) : 0; }

    float* data() { return buf_->data(); }
    const float* data() const { return buf_->data(); }
    float& operator[](std::int64_t i) { return (*buf_)[static_cast<std::size_t>(i)]; }
    float operator[](std::int64_t i) const { return (*buf_)[static_cast<std::size_t>(i)]; }

    Tensor reshaped(std::vector<int> shape) const;
    Tensor clone() const;
    void fill(float v);
    void zero() { fill(0.f); }
    bool all_finite() const;

    std::string shape_str() const;

private:
    std::vector<int> shape_;
    std::shared_ptr<std::vector<float>> buf_;
};

bool same_shape(const Tensor& a, const Tensor& b);

} // namespace emseg::nn
