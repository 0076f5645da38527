#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "core/tensor.hpp"

namespace emseg::nn {

struct Node;
using Var = std::shared_ptr<Node>;

// One value in the dynamic compute graph. Intermediate nodes are created per
// forward pass; leaves (parameters, inputs) persist and accumulate gradients
// across backward calls until explicitly zeroed.
struct Node {
    Tensor value;
    Tensor grad; // allocated on first use, same shape as value
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop; // reads this->grad, accumulates into parents

    Tensor& ensure_grad();
    void add_grad(const Tensor& g);
    void zero_grad();
};

Var leaf(Tensor value, bool requires_grad = false);

bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Reverse pass from a scalar root (numel == 1).
void backward(const Var& root);

// ---- elementwise / scalar ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var divide(const Var& a, const Var& b);
Var scale(const Var& a, float s);
Var add_const(const Var& a, float c);
Var rsub_const(float c, const Var& a); // c - a
Var relu(const Var& a);
Var gelu(const Var& a);
Var dropout(const Var& a, float p, std::uint64_t seed); // train-time only; p in [0,1)

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);                      // (m,k)x(k,n)
Var linear(const Var& x, const Var& w, const Var& b);        // x:(...,din), w:(dout,din), b:(dout) or null
Var bmm(const Var& a, const Var& b);                         // (B,m,k)x(B,k,n)
Var bmm_nt(const Var& a, const Var& b);                      // (B,m,k)x(B,n,k)^T -> (B,m,n)

// ---- normalization / activation over structured dims ----
Var softmax_last(const Var& a);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, float eps);
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, float eps);

// ---- conv / spatial ----
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad); // x:(B,C,H,W), w:(Cout,Cin,k,k)
Var upsample_bilinear(const Var& x, int factor);                           // align_corners=false
Var extract_patches(const Var& x, int patch);                              // (B,C,H,W)->(B*h*w, C*P*P)

// ---- token-grid plumbing for the transformer ----
Var reshape(const Var& x, std::vector<int> shape);    // aliasing view
Var tokens_to_grid(const Var& x, int gh, int gw);     // (B,T,D)->(B,D,gh,gw)
Var slice_qkv(const Var& qkv, int which, int heads);  // (B,T,3D)->(B*h,T,dh)
Var merge_heads(const Var& x, int batch);             // (B*h,T,dh)->(B,T,h*dh)
Var concat_tokens(const Var& a, const Var& b);        // along dim 1 of (B,T,D)
Var drop_tokens(const Var& x, int count);             // drop leading tokens
Var expand_rows(const Var& x, int batch);             // (T,D)->(B,T,D)
Var add_rowvec(const Var& x, const Var& v);           // (...,D) + (D)
Var mul_rowvec(const Var& x, const Var& v);           // layerscale

// ---- segmentation-head plumbing ----
Var softmax_channel(const Var& x); // softmax over dim 1 of (B,C,H,W)
Var channel(const Var& x, int c);  // (B,C,H,W)->(B,H,W)

// ---- reductions ----
Var sum_per_sample(const Var& x); // (B,...)->(B)
Var mean_all(const Var& x);       // -> (1)

} // namespace emseg::nn
