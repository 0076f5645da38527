#include <doctest.h>

#include <cmath>

#include "core/autograd.hpp"
#include "core/module.hpp"
#include "testutil.hpp"

using namespace emseg;
using namespace emseg::nn;
using emseg::testutil::gradcheck;
using emseg::testutil::random_tensor;

namespace {
constexpr double kTol = 2e-2; // fp32 central differences
}

TEST_CASE("elementwise ops match finite differences") {
    auto a = leaf(random_tensor({3, 4}, 1), true);
    auto b = leaf(random_tensor({3, 4}, 2), true);

    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(add(v[0], v[1])); }, {a, b}) < kTol);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(sub(v[0], v[1])); }, {a, b}) < kTol);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(mul(v[0], v[1])); }, {a, b}) < kTol);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(scale(v[0], -2.5f)); }, {a}) < kTol);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(rsub_const(1.f, v[0])); }, {a}) < kTol);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(gelu(v[0])); }, {a}) < kTol);

    auto pos = leaf(random_tensor({3, 4}, 3, 0.5f, 2.f), true);
    auto den = leaf(random_tensor({3, 4}, 4, 1.f, 3.f), true);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(divide(v[0], v[1])); }, {pos, den}) < kTol);
    // keep relu inputs away from the kink
    auto far = leaf(random_tensor({3, 4}, 5, 0.2f, 1.f), true);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(relu(v[0])); }, {far}) < kTol);
}

TEST_CASE("matmul family matches finite differences") {
    auto a = leaf(random_tensor({3, 5}, 10), true);
    auto b = leaf(random_tensor({5, 4}, 11), true);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(matmul(v[0], v[1])); }, {a, b}) < kTol);

    auto x = leaf(random_tensor({2, 3, 5}, 12), true);
    auto w = leaf(random_tensor({4, 5}, 13), true);
    auto bias = leaf(random_tensor({4}, 14), true);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(linear(v[0], v[1], v[2])); },
                    {x, w, bias}) < kTol);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(linear(v[0], v[1], nullptr)); },
                    {x, w}) < kTol);

    auto ba = leaf(random_tensor({2, 3, 4}, 15), true);
    auto bb = leaf(random_tensor({2, 4, 5}, 16), true);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(bmm(v[0], v[1])); }, {ba, bb}) < kTol);
    auto bc = leaf(random_tensor({2, 5, 4}, 17), true);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(bmm_nt(v[0], v[1])); }, {ba, bc}) < kTol);
}

TEST_CASE("softmax and norms match finite differences") {
    auto a = leaf(random_tensor({4, 6}, 20), true);
    // weighted sum so the softmax grad is non-trivial
    auto wgt = leaf(random_tensor({4, 6}, 21), false);
    CHECK(gradcheck([&](const std::vector<Var>& v) { return mean_all(mul(softmax_last(v[0]), wgt)); },
                    {a}) < kTol);

    auto x = leaf(random_tensor({2, 3, 6}, 22), true);
    auto g = leaf(random_tensor({6}, 23, 0.5f, 1.5f), true);
    auto b = leaf(random_tensor({6}, 24), true);
    auto wln = leaf(random_tensor({2, 3, 6}, 25), false);
    CHECK(gradcheck([&](const std::vector<Var>& v) {
              return mean_all(mul(layer_norm(v[0], v[1], v[2], 1e-5f), wln));
          },
          {x, g, b}) < kTol);

    auto xc = leaf(random_tensor({2, 4, 3, 3}, 26), true);
    auto gc = leaf(random_tensor({4}, 27, 0.5f, 1.5f), true);
    auto bc = leaf(random_tensor({4}, 28), true);
    auto wc = leaf(random_tensor({2, 4, 3, 3}, 29), false);
    CHECK(gradcheck([&](const std::vector<Var>& v) {
              return mean_all(mul(group_norm(v[0], v[1], v[2], 2, 1e-5f), wc));
          },
          {xc, gc, bc}) < kTol);
}

TEST_CASE("conv2d matches finite differences") {
    auto x = leaf(random_tensor({2, 3, 5, 5}, 30), true);
    auto w = leaf(random_tensor({4, 3, 3, 3}, 31), true);
    auto b = leaf(random_tensor({4}, 32), true);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(conv2d(v[0], v[1], v[2], 1, 1)); },
                    {x, w, b}) < kTol);
    // stride-2, no padding
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(conv2d(v[0], v[1], nullptr, 2, 0)); },
                    {x, w}) < kTol);
}

TEST_CASE("conv2d forward matches direct convolution") {
    auto x = leaf(random_tensor({1, 2, 4, 4}, 33));
    auto w = leaf(random_tensor({3, 2, 3, 3}, 34));
    auto b = leaf(random_tensor({3}, 35));
    Var y = conv2d(x, w, b, 1, 1);
    REQUIRE(y->value.shape() == std::vector<int>{1, 3, 4, 4});
    for (int co = 0; co < 3; ++co) {
        for (int oy = 0; oy < 4; ++oy) {
            for (int ox = 0; ox < 4; ++ox) {
                double acc = b->value[co];
                for (int ci = 0; ci < 2; ++ci)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int iy = oy + ky - 1, ix = ox + kx - 1;
                            if (iy < 0 || iy >= 4 || ix < 0 || ix >= 4) continue;
                            acc += x->value[(ci * 4 + iy) * 4 + ix] *
                                   w->value[((co * 2 + ci) * 3 + ky) * 3 + kx];
                        }
                CHECK(y->value[(co * 4 + oy) * 4 + ox] == doctest::Approx(acc).epsilon(1e-4));
            }
        }
    }
}

TEST_CASE("spatial and token ops match finite differences") {
    auto x = leaf(random_tensor({1, 2, 3, 3}, 40), true);
    auto wgt = leaf(random_tensor({1, 2, 6, 6}, 41), false);
    CHECK(gradcheck([&](const std::vector<Var>& v) {
              return mean_all(mul(upsample_bilinear(v[0], 2), wgt));
          },
          {x}) < kTol);

    auto img = leaf(random_tensor({2, 3, 4, 4}, 42), true);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(extract_patches(v[0], 2)); },
                    {img}) < kTol);

    auto qkv = leaf(random_tensor({2, 3, 12}, 43), true); // D=4, heads=2
    CHECK(gradcheck([](const std::vector<Var>& v) {
              auto q = slice_qkv(v[0], 0, 2);
              auto k = slice_qkv(v[0], 1, 2);
              auto vv = slice_qkv(v[0], 2, 2);
              return mean_all(bmm(softmax_last(scale(bmm_nt(q, k), 0.7f)), vv));
          },
          {qkv}) < kTol);

    auto heads = leaf(random_tensor({4, 3, 2}, 44), true);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(merge_heads(v[0], 2)); },
                    {heads}) < kTol);

    auto ta = leaf(random_tensor({2, 2, 3}, 45), true);
    auto tb = leaf(random_tensor({2, 4, 3}, 46), true);
    CHECK(gradcheck([](const std::vector<Var>& v) {
              return mean_all(drop_tokens(concat_tokens(v[0], v[1]), 1));
          },
          {ta, tb}) < kTol);

    auto row = leaf(random_tensor({3, 4}, 47), true);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(expand_rows(v[0], 3)); },
                    {row}) < kTol);

    auto xv = leaf(random_tensor({2, 3, 4}, 48), true);
    auto vec = leaf(random_tensor({4}, 49), true);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(add_rowvec(v[0], v[1])); },
                    {xv, vec}) < kTol);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(mul_rowvec(v[0], v[1])); },
                    {xv, vec}) < kTol);
}

TEST_CASE("head plumbing ops match finite differences") {
    auto x = leaf(random_tensor({2, 2, 3, 3}, 50), true);
    auto wgt = leaf(random_tensor({2, 2, 3, 3}, 51), false);
    CHECK(gradcheck([&](const std::vector<Var>& v) {
              return mean_all(mul(softmax_channel(v[0]), wgt));
          },
          {x}) < kTol);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(channel(v[0], 1)); }, {x}) < kTol);
    CHECK(gradcheck([](const std::vector<Var>& v) { return mean_all(sum_per_sample(v[0])); }, {x}) < kTol);
}

TEST_CASE("backward accumulates across repeated use of a leaf") {
    auto a = leaf(Tensor({2}, {1.f, 2.f}), true);
    Var y = mean_all(add(a, a));
    backward(y);
    CHECK(a->grad[0] == doctest::Approx(1.0)); // 2 paths * 1/2
    CHECK(a->grad[1] == doctest::Approx(1.0));
}

TEST_CASE("NoGradGuard skips graph construction") {
    auto a = leaf(random_tensor({2, 2}, 60), true);
    NoGradGuard ng;
    Var y = mean_all(mul(a, a));
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
}

TEST_CASE("dropout scales kept activations and is seed-deterministic") {
    auto a = leaf(Tensor({1000}, 1.f), true);
    Var d1 = dropout(a, 0.4f, 7);
    Var d2 = dropout(a, 0.4f, 7);
    double sum = 0.0;
    for (std::int64_t i = 0; i < d1->value.numel(); ++i) {
        CHECK(d1->value[i] == d2->value[i]);
        sum += d1->value[i];
    }
    CHECK(sum / 1000.0 == doctest::Approx(1.0).epsilon(0.1));
    CHECK(dropout(a, 0.f, 7) == a);
}

TEST_CASE("AdamW decoupled weight decay shrinks weights with zero grad") {
    Parameter p("w", Tensor({2}, {1.f, -1.f}), true);
    p.var->ensure_grad().zero();
    AdamW opt({&p}, 0.1f, 0.5f);
    opt.step();
    // grad = 0 -> update is pure decay: w -= lr*wd*w
    CHECK(p.value()[0] == doctest::Approx(1.f - 0.1f * 0.5f * 1.f));
    CHECK(p.value()[1] == doctest::Approx(-1.f + 0.1f * 0.5f * 1.f));
}

TEST_CASE("AdamW minimizes a quadratic") {
    Parameter p("w", Tensor({2}, {3.f, -2.f}), true);
    AdamW opt({&p}, 0.05f, 0.f);
    for (int i = 0; i < 500; ++i) {
        opt.zero_grad();
        Var w = p.var;
        Var loss = mean_all(mul(w, w));
        backward(loss);
        opt.step();
    }
    CHECK(std::abs(p.value()[0]) < 1e-2);
    CHECK(std::abs(p.value()[1]) < 1e-2);
}
