#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/autograd.hpp"
#include "core/tensor.hpp"

namespace emseg::nn {

// Named weight. `trainable` controls both optimizer visibility and the
// requires_grad flag of the underlying graph leaf.
struct Parameter {
    std::string name;
    Var var;

    Parameter() = default;
    Parameter(std::string n, Tensor value, bool trainable)
        : name(std::move(n)), var(leaf(std::move(value), trainable)) {}

    Tensor& value() { return var->value; }
    const Tensor& value() const { return var->value; }
    bool trainable() const { return var->requires_grad; }
    void set_trainable(bool t) { var->requires_grad = t; }
    std::int64_t numel() const { return var->value.numel(); }
};

std::int64_t count_params(const std::vector<Parameter*>& params, bool trainable_only);

// FNV-1a over the raw float bytes of every non-trainable parameter; used by
// the freeze-discipline tests.
std::uint64_t checksum_frozen(const std::vector<Parameter*>& params);
std::uint64_t checksum_all(const std::vector<Parameter*>& params);

void fill_normal(Tensor& t, float mean, float stddev, std::uint64_t seed);
void fill_uniform(Tensor& t, float lo, float hi, std::uint64_t seed);

// AdamW with decoupled weight decay.
class AdamW {
public:
    AdamW(std::vector<Parameter*> params, float lr, float weight_decay,
          float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f);

    void step();
    void zero_grad();
    float lr() const { return lr_; }

private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_, v_;
    float lr_, wd_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

} // namespace emseg::nn
