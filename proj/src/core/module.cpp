#include "core/module.hpp"

#include <cmath>
#include <cstring>

#include "core/rng.hpp"

namespace emseg::nn {

std::int64_t count_params(const std::vector<Parameter*>& params, bool trainable_only) {
    std::int64_t n = 0;
    for (const Parameter* p : params)
        if (!trainable_only || p->trainable()) n += p->numel();
    return n;
}

namespace {

std::uint64_t fnv1a_bytes(std::uint64_t h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace

std::uint64_t checksum_frozen(const std::vector<Parameter*>& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Parameter* p : params) {
        if (p->trainable()) continue;
        h = fnv1a_bytes(h, p->value().data(), sizeof(float) * static_cast<std::size_t>(p->numel()));
    }
    return h;
}

std::uint64_t checksum_all(const std::vector<Parameter*>& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Parameter* p : params)
        h = fnv1a_bytes(h, p->value().data(), sizeof(float) * static_cast<std::size_t>(p->numel()));
    return h;
}

void fill_normal(Tensor& t, float mean, float stddev, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(mean, stddev);
    const std::int64_t n = t.numel();
    for (std::int64_t i = 0; i < n; ++i) t[i] = dist(rng);
}

void fill_uniform(Tensor& t, float lo, float hi, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(lo, hi);
    const std::int64_t n = t.numel();
    for (std::int64_t i = 0; i < n; ++i) t[i] = dist(rng);
}

AdamW::AdamW(std::vector<Parameter*> params, float lr, float weight_decay, float beta1, float beta2,
             float eps)
    : params_(std::move(params)), lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Parameter* p : params_) {
        m_.emplace_back(p->value().shape());
        v_.emplace_back(p->value().shape());
    }
}

void AdamW::step() {
    ++t_;
    const float bc1 = 1.f - std::pow(beta1_, static_cast<float>(t_));
    const float bc2 = 1.f - std::pow(beta2_, static_cast<float>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter* p = params_[i];
        if (!p->trainable() || !p->var->grad.defined()) continue;
        Tensor& w = p->value();
        const Tensor& g = p->var->grad;
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        const std::int64_t n = w.numel();
        for (std::int64_t j = 0; j < n; ++j) {
            m[j] = beta1_ * m[j] + (1.f - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.f - beta2_) * g[j] * g[j];
            const float mhat = m[j] / bc1;
            const float vhat = v[j] / bc2;
            w[j] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * w[j]);
        }
    }
}

void AdamW::zero_grad() {
    for (Parameter* p : params_) p->var->zero_grad();
}

} // namespace emseg::nn
