#include "core/autograd.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <unordered_set>

#include "core/errors.hpp"

namespace emseg::nn {

namespace {

using RMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RMat>;
using CMapM = Eigen::Map<const RMat>;
using MapV = Eigen::Map<Eigen::VectorXf>;
using CMapV = Eigen::Map<const Eigen::VectorXf>;

thread_local int g_no_grad_depth = 0;

bool any_requires_grad(const std::vector<Var>& vars) {
    for (const auto& v : vars)
        if (v && v->requires_grad) return true;
    return false;
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> back) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (grad_enabled() && any_requires_grad(parents)) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backprop = std::move(back);
    }
    return n;
}

void check(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

// Flattens all leading dims: (..., d) -> (rows, d).
std::int64_t lead_rows(const Tensor& t) {
    return t.numel() / t.dim(-1);
}

} // namespace

Tensor& Node::ensure_grad() {
    if (!grad.defined()) grad = Tensor(value.shape());
    return grad;
}

void Node::add_grad(const Tensor& g) {
    Tensor& dst = ensure_grad();
    MapV(dst.data(), dst.numel()) += CMapV(g.data(), g.numel());
}

void Node::zero_grad() {
    if (grad.defined()) grad.zero();
}

Var leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

bool grad_enabled() { return g_no_grad_depth == 0; }
NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

void backward(const Var& root) {
    if (!root || root->value.numel() != 1)
        throw ShapeError("backward: root must be a scalar");
    if (!root->requires_grad) return;

    // Post-order DFS so the reversed list runs consumers before producers.
    std::vector<Node*> topo;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p && p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad().fill(1.f);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->grad.defined()) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// elementwise

Var add(const Var& a, const Var& b) {
    check(same_shape(a->value, b->value), "add: shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
    Tensor out = a->value.clone();
    MapV(out.data(), out.numel()) += CMapV(b->value.data(), b->value.numel());
    return make_node(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->add_grad(n.grad);
        if (n.parents[1]->requires_grad) n.parents[1]->add_grad(n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check(same_shape(a->value, b->value), "sub: shape mismatch");
    Tensor out = a->value.clone();
    MapV(out.data(), out.numel()) -= CMapV(b->value.data(), b->value.numel());
    return make_node(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->add_grad(n.grad);
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            MapV(g.data(), g.numel()) -= CMapV(n.grad.data(), n.grad.numel());
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check(same_shape(a->value, b->value), "mul: shape mismatch");
    Tensor out(a->value.shape());
    MapV(out.data(), out.numel()) =
        CMapV(a->value.data(), a->value.numel()).cwiseProduct(CMapV(b->value.data(), b->value.numel()));
    Tensor av = a->value, bv = b->value;
    return make_node(std::move(out), {a, b}, [av, bv](Node& n) {
        CMapV g(n.grad.data(), n.grad.numel());
        if (n.parents[0]->requires_grad) {
            Tensor& ga = n.parents[0]->ensure_grad();
            MapV(ga.data(), ga.numel()) += g.cwiseProduct(CMapV(bv.data(), bv.numel()));
        }
        if (n.parents[1]->requires_grad) {
            Tensor& gb = n.parents[1]->ensure_grad();
            MapV(gb.data(), gb.numel()) += g.cwiseProduct(CMapV(av.data(), av.numel()));
        }
    });
}

Var divide(const Var& a, const Var& b) {
    check(same_shape(a->value, b->value), "divide: shape mismatch");
    Tensor out(a->value.shape());
    MapV(out.data(), out.numel()) =
        CMapV(a->value.data(), a->value.numel()).cwiseQuotient(CMapV(b->value.data(), b->value.numel()));
    Tensor av = a->value, bv = b->value;
    return make_node(std::move(out), {a, b}, [av, bv](Node& n) {
        CMapV g(n.grad.data(), n.grad.numel());
        CMapV bm(bv.data(), bv.numel());
        if (n.parents[0]->requires_grad) {
            Tensor& ga = n.parents[0]->ensure_grad();
            MapV(ga.data(), ga.numel()) += g.cwiseQuotient(bm);
        }
        if (n.parents[1]->requires_grad) {
            Tensor& gb = n.parents[1]->ensure_grad();
            CMapV am(av.data(), av.numel());
            MapV(gb.data(), gb.numel()) -= g.cwiseProduct(am).cwiseQuotient(bm.cwiseProduct(bm));
        }
    });
}

Var scale(const Var& a, float s) {
    Tensor out(a->value.shape());
    MapV(out.data(), out.numel()) = CMapV(a->value.data(), a->value.numel()) * s;
    return make_node(std::move(out), {a}, [s](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor& g = n.parents[0]->ensure_grad();
        MapV(g.data(), g.numel()) += CMapV(n.grad.data(), n.grad.numel()) * s;
    });
}

Var add_const(const Var& a, float c) {
    Tensor out(a->value.shape());
    MapV(out.data(), out.numel()) = CMapV(a->value.data(), a->value.numel()).array() + c;
    return make_node(std::move(out), {a}, [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->add_grad(n.grad);
    });
}

Var rsub_const(float c, const Var& a) {
    Tensor out(a->value.shape());
    MapV(out.data(), out.numel()) = c - CMapV(a->value.data(), a->value.numel()).array();
    return make_node(std::move(out), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor& g = n.parents[0]->ensure_grad();
        MapV(g.data(), g.numel()) -= CMapV(n.grad.data(), n.grad.numel());
    });
}

Var relu(const Var& a) {
    Tensor out(a->value.shape());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = a->value[i] > 0.f ? a->value[i] : 0.f;
    Tensor av = a->value;
    return make_node(std::move(out), {a}, [av](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        Tensor& g = nd.parents[0]->ensure_grad();
        const std::int64_t m = g.numel();
        for (std::int64_t i = 0; i < m; ++i)
            if (av[i] > 0.f) g[i] += nd.grad[i];
    });
}

Var gelu(const Var& a) {
    constexpr float kInvSqrt2 = 0.70710678118654752f;
    constexpr float kInvSqrt2Pi = 0.39894228040143268f;
    Tensor out(a->value.shape());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        const float x = a->value[i];
        out[i] = 0.5f * x * (1.f + std::erf(x * kInvSqrt2));
    }
    Tensor av = a->value;
    return make_node(std::move(out), {a}, [av](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        Tensor& g = nd.parents[0]->ensure_grad();
        const std::int64_t m = g.numel();
        for (std::int64_t i = 0; i < m; ++i) {
            const float x = av[i];
            const float cdf = 0.5f * (1.f + std::erf(x * kInvSqrt2));
            const float pdf = kInvSqrt2Pi * std::exp(-0.5f * x * x);
            g[i] += nd.grad[i] * (cdf + x * pdf);
        }
    });
}

Var dropout(const Var& a, float p, std::uint64_t seed) {
    if (p <= 0.f) return a;
    check(p < 1.f, "dropout: p must be < 1");
    const float keep = 1.f - p;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> uni(0.f, 1.f);
    Tensor mask(a->value.shape());
    Tensor out(a->value.shape());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        mask[i] = uni(rng) < keep ? 1.f / keep : 0.f;
        out[i] = a->value[i] * mask[i];
    }
    return make_node(std::move(out), {a}, [mask](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        Tensor& g = nd.parents[0]->ensure_grad();
        MapV(g.data(), g.numel()) +=
            CMapV(nd.grad.data(), nd.grad.numel()).cwiseProduct(CMapV(mask.data(), mask.numel()));
    });
}

// ---------------------------------------------------------------------------
// linear algebra

Var matmul(const Var& a, const Var& b) {
    check(a->value.ndim() == 2 && b->value.ndim() == 2 && a->value.dim(1) == b->value.dim(0),
          "matmul: bad shapes " + a->value.shape_str() + " x " + b->value.shape_str());
    const int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
    Tensor out({m, n});
    MapM(out.data(), m, n).noalias() = CMapM(a->value.data(), m, k) * CMapM(b->value.data(), k, n);
    Tensor av = a->value, bv = b->value;
    return make_node(std::move(out), {a, b}, [av, bv, m, k, n](Node& nd) {
        CMapM g(nd.grad.data(), m, n);
        if (nd.parents[0]->requires_grad) {
            Tensor& ga = nd.parents[0]->ensure_grad();
            MapM(ga.data(), m, k).noalias() += g * CMapM(bv.data(), k, n).transpose();
        }
        if (nd.parents[1]->requires_grad) {
            Tensor& gb = nd.parents[1]->ensure_grad();
            MapM(gb.data(), k, n).noalias() += CMapM(av.data(), m, k).transpose() * g;
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    const int din = x->value.dim(-1);
    check(w->value.ndim() == 2 && w->value.dim(1) == din,
          "linear: weight " + w->value.shape_str() + " vs input " + x->value.shape_str());
    const int dout = w->value.dim(0);
    const std::int64_t rows = lead_rows(x->value);
    if (b) check(b->value.numel() == dout, "linear: bias size mismatch");

    std::vector<int> out_shape = x->value.shape();
    out_shape.back() = dout;
    Tensor out(out_shape);
    MapM y(out.data(), rows, dout);
    y.noalias() = CMapM(x->value.data(), rows, din) * CMapM(w->value.data(), dout, din).transpose();
    if (b) y.rowwise() += CMapV(b->value.data(), dout).transpose();

    Tensor xv = x->value, wv = w->value;
    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_node(std::move(out), std::move(parents), [xv, wv, rows, din, dout](Node& nd) {
        CMapM g(nd.grad.data(), rows, dout);
        if (nd.parents[0]->requires_grad) {
            Tensor& gx = nd.parents[0]->ensure_grad();
            MapM(gx.data(), rows, din).noalias() += g * CMapM(wv.data(), dout, din);
        }
        if (nd.parents[1]->requires_grad) {
            Tensor& gw = nd.parents[1]->ensure_grad();
            MapM(gw.data(), dout, din).noalias() += g.transpose() * CMapM(xv.data(), rows, din);
        }
        if (nd.parents.size() > 2 && nd.parents[2]->requires_grad) {
            Tensor& gb = nd.parents[2]->ensure_grad();
            MapV(gb.data(), dout) += g.colwise().sum().transpose();
        }
    });
}

namespace {

Var bmm_impl(const Var& a, const Var& b, bool transpose_b) {
    check(a->value.ndim() == 3 && b->value.ndim() == 3 && a->value.dim(0) == b->value.dim(0),
          "bmm: bad shapes");
    const int B = a->value.dim(0), m = a->value.dim(1), k = a->value.dim(2);
    const int n = transpose_b ? b->value.dim(1) : b->value.dim(2);
    check(transpose_b ? b->value.dim(2) == k : b->value.dim(1) == k, "bmm: inner dim mismatch");

    Tensor out({B, m, n});
    for (int i = 0; i < B; ++i) {
        CMapM ai(a->value.data() + static_cast<std::int64_t>(i) * m * k, m, k);
        MapM oi(out.data() + static_cast<std::int64_t>(i) * m * n, m, n);
        if (transpose_b) {
            CMapM bi(b->value.data() + static_cast<std::int64_t>(i) * n * k, n, k);
            oi.noalias() = ai * bi.transpose();
        } else {
            CMapM bi(b->value.data() + static_cast<std::int64_t>(i) * k * n, k, n);
            oi.noalias() = ai * bi;
        }
    }
    Tensor av = a->value, bv = b->value;
    return make_node(std::move(out), {a, b}, [av, bv, B, m, k, n, transpose_b](Node& nd) {
        for (int i = 0; i < B; ++i) {
            CMapM g(nd.grad.data() + static_cast<std::int64_t>(i) * m * n, m, n);
            CMapM ai(av.data() + static_cast<std::int64_t>(i) * m * k, m, k);
            if (transpose_b) {
                CMapM bi(bv.data() + static_cast<std::int64_t>(i) * n * k, n, k);
                if (nd.parents[0]->requires_grad)
                    MapM(nd.parents[0]->ensure_grad().data() + static_cast<std::int64_t>(i) * m * k, m, k)
                        .noalias() += g * bi;
                if (nd.parents[1]->requires_grad)
                    MapM(nd.parents[1]->ensure_grad().data() + static_cast<std::int64_t>(i) * n * k, n, k)
                        .noalias() += g.transpose() * ai;
            } else {
                CMapM bi(bv.data() + static_cast<std::int64_t>(i) * k * n, k, n);
                if (nd.parents[0]->requires_grad)
                    MapM(nd.parents[0]->ensure_grad().data() + static_cast<std::int64_t>(i) * m * k, m, k)
                        .noalias() += g * bi.transpose();
                if (nd.parents[1]->requires_grad)
                    MapM(nd.parents[1]->ensure_grad().data() + static_cast<std::int64_t>(i) * k * n, k, n)
                        .noalias() += ai.transpose() * g;
            }
        }
    });
}

} // namespace

Var bmm(const Var& a, const Var& b) { return bmm_impl(a, b, false); }
Var bmm_nt(const Var& a, const Var& b) { return bmm_impl(a, b, true); }

// ---------------------------------------------------------------------------
// normalization

Var softmax_last(const Var& a) {
    const int d = a->value.dim(-1);
    const std::int64_t rows = lead_rows(a->value);
    Tensor out(a->value.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
        const float* xi = a->value.data() + r * d;
        float* yi = out.data() + r * d;
        float mx = xi[0];
        for (int j = 1; j < d; ++j) mx = std::max(mx, xi[j]);
        float sum = 0.f;
        for (int j = 0; j < d; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            sum += yi[j];
        }
        const float inv = 1.f / sum;
        for (int j = 0; j < d; ++j) yi[j] *= inv;
    }
    Tensor y = out;
    return make_node(std::move(out), {a}, [y, rows, d](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        Tensor& gx = nd.parents[0]->ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r) {
            const float* yi = y.data() + r * d;
            const float* gi = nd.grad.data() + r * d;
            float dot = 0.f;
            for (int j = 0; j < d; ++j) dot += gi[j] * yi[j];
            float* go = gx.data() + r * d;
            for (int j = 0; j < d; ++j) go[j] += yi[j] * (gi[j] - dot);
        }
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, float eps) {
    const int d = x->value.dim(-1);
    check(gamma->value.numel() == d && beta->value.numel() == d, "layer_norm: affine size mismatch");
    const std::int64_t rows = lead_rows(x->value);

    Tensor out(x->value.shape());
    Tensor xhat(x->value.shape());
    Tensor inv_std({static_cast<int>(rows)});
    const float* gm = gamma->value.data();
    const float* bt = beta->value.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const float* xi = x->value.data() + r * d;
        float mean = 0.f;
        for (int j = 0; j < d; ++j) mean += xi[j];
        mean /= static_cast<float>(d);
        float var = 0.f;
        for (int j = 0; j < d; ++j) {
            const float c = xi[j] - mean;
            var += c * c;
        }
        var /= static_cast<float>(d);
        const float inv = 1.f / std::sqrt(var + eps);
        inv_std[r] = inv;
        float* xh = xhat.data() + r * d;
        float* yo = out.data() + r * d;
        for (int j = 0; j < d; ++j) {
            xh[j] = (xi[j] - mean) * inv;
            yo[j] = gm[j] * xh[j] + bt[j];
        }
    }
    Tensor gv = gamma->value;
    return make_node(std::move(out), {x, gamma, beta}, [xhat, inv_std, gv, rows, d](Node& nd) {
        const bool need_x = nd.parents[0]->requires_grad;
        const bool need_g = nd.parents[1]->requires_grad;
        const bool need_b = nd.parents[2]->requires_grad;
        float* gx = need_x ? nd.parents[0]->ensure_grad().data() : nullptr;
        float* gg = need_g ? nd.parents[1]->ensure_grad().data() : nullptr;
        float* gb = need_b ? nd.parents[2]->ensure_grad().data() : nullptr;
        const float* gm = gv.data();
        for (std::int64_t r = 0; r < rows; ++r) {
            const float* g = nd.grad.data() + r * d;
            const float* xh = xhat.data() + r * d;
            if (need_g || need_b) {
                for (int j = 0; j < d; ++j) {
                    if (gg) gg[j] += g[j] * xh[j];
                    if (gb) gb[j] += g[j];
                }
            }
            if (need_x) {
                float s1 = 0.f, s2 = 0.f;
                for (int j = 0; j < d; ++j) {
                    const float dxh = g[j] * gm[j];
                    s1 += dxh;
                    s2 += dxh * xh[j];
                }
                s1 /= static_cast<float>(d);
                s2 /= static_cast<float>(d);
                const float inv = inv_std[r];
                float* go = gx + r * d;
                for (int j = 0; j < d; ++j) {
                    const float dxh = g[j] * gm[j];
                    go[j] += inv * (dxh - s1 - xh[j] * s2);
                }
            }
        }
    });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, float eps) {
    check(x->value.ndim() == 4, "group_norm: expected (B,C,H,W)");
    const int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    check(C % groups == 0, "group_norm: channels not divisible by groups");
    check(gamma->value.numel() == C && beta->value.numel() == C, "group_norm: affine size mismatch");
    const int cg = C / groups;
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    const std::int64_t gsz = cg * hw;

    Tensor out(x->value.shape());
    Tensor xhat(x->value.shape());
    Tensor inv_std({B, groups});
    const float* gm = gamma->value.data();
    const float* bt = beta->value.data();
    for (int b = 0; b < B; ++b) {
        for (int g = 0; g < groups; ++g) {
            const float* xi = x->value.data() + (static_cast<std::int64_t>(b) * C + g * cg) * hw;
            float mean = 0.f;
            for (std::int64_t i = 0; i < gsz; ++i) mean += xi[i];
            mean /= static_cast<float>(gsz);
            float var = 0.f;
            for (std::int64_t i = 0; i < gsz; ++i) {
                const float c = xi[i] - mean;
                var += c * c;
            }
            var /= static_cast<float>(gsz);
            const float inv = 1.f / std::sqrt(var + eps);
            inv_std[b * groups + g] = inv;
            float* xh = xhat.data() + (static_cast<std::int64_t>(b) * C + g * cg) * hw;
            float* yo = out.data() + (static_cast<std::int64_t>(b) * C + g * cg) * hw;
            for (int c = 0; c < cg; ++c) {
                const float gc = gm[g * cg + c], bc = bt[g * cg + c];
                for (std::int64_t i = 0; i < hw; ++i) {
                    const float v = (xi[c * hw + i] - mean) * inv;
                    xh[c * hw + i] = v;
                    yo[c * hw + i] = gc * v + bc;
                }
            }
        }
    }
    Tensor gv = gamma->value;
    return make_node(std::move(out), {x, gamma, beta},
                     [xhat, inv_std, gv, B, C, groups, cg, hw, gsz](Node& nd) {
        const bool need_x = nd.parents[0]->requires_grad;
        float* gx = need_x ? nd.parents[0]->ensure_grad().data() : nullptr;
        float* gg = nd.parents[1]->requires_grad ? nd.parents[1]->ensure_grad().data() : nullptr;
        float* gb = nd.parents[2]->requires_grad ? nd.parents[2]->ensure_grad().data() : nullptr;
        const float* gm = gv.data();
        for (int b = 0; b < B; ++b) {
            for (int g = 0; g < groups; ++g) {
                const std::int64_t base = (static_cast<std::int64_t>(b) * C + g * cg) * hw;
                const float* grad = nd.grad.data() + base;
                const float* xh = xhat.data() + base;
                if (gg || gb) {
                    for (int c = 0; c < cg; ++c) {
                        float sg = 0.f, sb = 0.f;
                        for (std::int64_t i = 0; i < hw; ++i) {
                            sg += grad[c * hw + i] * xh[c * hw + i];
                            sb += grad[c * hw + i];
                        }
                        if (gg) gg[g * cg + c] += sg;
                        if (gb) gb[g * cg + c] += sb;
                    }
                }
                if (need_x) {
                    float s1 = 0.f, s2 = 0.f;
                    for (int c = 0; c < cg; ++c) {
                        const float gc = gm[g * cg + c];
                        for (std::int64_t i = 0; i < hw; ++i) {
                            const float dxh = grad[c * hw + i] * gc;
                            s1 += dxh;
                            s2 += dxh * xh[c * hw + i];
                        }
                    }
                    s1 /= static_cast<float>(gsz);
                    s2 /= static_cast<float>(gsz);
                    const float inv = inv_std[b * groups + g];
                    float* go = gx + base;
                    for (int c = 0; c < cg; ++c) {
                        const float gc = gm[g * cg + c];
                        for (std::int64_t i = 0; i < hw; ++i) {
                            const float dxh = grad[c * hw + i] * gc;
                            go[c * hw + i] += inv * (dxh - s1 - xh[c * hw + i] * s2);
                        }
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// conv / spatial

namespace {

void im2col(const float* x, int C, int H, int W, int k, int stride, int pad, int oh, int ow,
            float* cols) {
    // cols: (C*k*k, oh*ow)
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                float* row = cols + ((static_cast<std::int64_t>(c) * k + ky) * k + kx) *
                                        (static_cast<std::int64_t>(oh) * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        row[oy * ow + ox] =
                            (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                ? x[(static_cast<std::int64_t>(c) * H + iy) * W + ix]
                                : 0.f;
                    }
                }
            }
        }
    }
}

void col2im_add(const float* cols, int C, int H, int W, int k, int stride, int pad, int oh, int ow,
                float* gx) {
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const float* row = cols + ((static_cast<std::int64_t>(c) * k + ky) * k + kx) *
                                              (static_cast<std::int64_t>(oh) * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= W) continue;
                        gx[(static_cast<std::int64_t>(c) * H + iy) * W + ix] += row[oy * ow + ox];
                    }
                }
            }
        }
    }
}

} // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    check(x->value.ndim() == 4 && w->value.ndim() == 4, "conv2d: expected 4-D input and weight");
    const int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    const int Cout = w->value.dim(0), k = w->value.dim(2);
    check(w->value.dim(1) == C && w->value.dim(3) == k, "conv2d: weight/channel mismatch");
    const int oh = (H + 2 * pad - k) / stride + 1;
    const int ow = (W + 2 * pad - k) / stride + 1;
    const std::int64_t ohw = static_cast<std::int64_t>(oh) * ow;
    const int ck2 = C * k * k;

    Tensor out({B, Cout, oh, ow});
    Tensor cols({B, ck2, static_cast<int>(ohw)});
    CMapM wm(w->value.data(), Cout, ck2);
    for (int i = 0; i < B; ++i) {
        float* ci = cols.data() + static_cast<std::int64_t>(i) * ck2 * ohw;
        im2col(x->value.data() + static_cast<std::int64_t>(i) * C * H * W, C, H, W, k, stride, pad, oh, ow, ci);
        MapM yi(out.data() + static_cast<std::int64_t>(i) * Cout * ohw, Cout, ohw);
        yi.noalias() = wm * CMapM(ci, ck2, ohw);
        if (b) yi.colwise() += CMapV(b->value.data(), Cout);
    }

    Tensor wv = w->value;
    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_node(std::move(out), std::move(parents),
                     [cols, wv, B, C, H, W, Cout, k, stride, pad, oh, ow, ohw, ck2](Node& nd) {
        const bool need_x = nd.parents[0]->requires_grad;
        const bool need_w = nd.parents[1]->requires_grad;
        const bool need_b = nd.parents.size() > 2 && nd.parents[2]->requires_grad;
        CMapM wm(wv.data(), Cout, ck2);
        Tensor gcols;
        if (need_x) gcols = Tensor({ck2, static_cast<int>(ohw)});
        for (int i = 0; i < B; ++i) {
            CMapM g(nd.grad.data() + static_cast<std::int64_t>(i) * Cout * ohw, Cout, ohw);
            const float* ci = cols.data() + static_cast<std::int64_t>(i) * ck2 * ohw;
            if (need_w) {
                MapM gw(nd.parents[1]->ensure_grad().data(), Cout, ck2);
                gw.noalias() += g * CMapM(ci, ck2, ohw).transpose();
            }
            if (need_b) {
                MapV gb(nd.parents[2]->ensure_grad().data(), Cout);
                gb += g.rowwise().sum();
            }
            if (need_x) {
                MapM(gcols.data(), ck2, ohw).noalias() = wm.transpose() * g;
                col2im_add(gcols.data(), C, H, W, k, stride, pad, oh, ow,
                           nd.parents[0]->ensure_grad().data() + static_cast<std::int64_t>(i) * C * H * W);
            }
        }
    });
}

namespace {

struct LerpAxis {
    std::vector<int> i0, i1;
    std::vector<float> w1; // weight on i1
};

LerpAxis bilinear_axis(int out, int in, int factor) {
    LerpAxis ax;
    ax.i0.resize(out);
    ax.i1.resize(out);
    ax.w1.resize(out);
    for (int o = 0; o < out; ++o) {
        float src = (o + 0.5f) / static_cast<float>(factor) - 0.5f;
        if (src < 0.f) src = 0.f;
        const float lim = static_cast<float>(in - 1);
        if (src > lim) src = lim;
        const int i0 = static_cast<int>(src);
        ax.i0[o] = i0;
        ax.i1[o] = std::min(i0 + 1, in - 1);
        ax.w1[o] = src - static_cast<float>(i0);
    }
    return ax;
}

} // namespace

Var upsample_bilinear(const Var& x, int factor) {
    check(x->value.ndim() == 4 && factor >= 1, "upsample_bilinear: expected (B,C,H,W)");
    const int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    const int OH = H * factor, OW = W * factor;
    const LerpAxis ay = bilinear_axis(OH, H, factor);
    const LerpAxis axx = bilinear_axis(OW, W, factor);

    Tensor out({B, C, OH, OW});
    for (int bc = 0; bc < B * C; ++bc) {
        const float* xi = x->value.data() + static_cast<std::int64_t>(bc) * H * W;
        float* yo = out.data() + static_cast<std::int64_t>(bc) * OH * OW;
        for (int oy = 0; oy < OH; ++oy) {
            const float wy1 = ay.w1[oy];
            const float* r0 = xi + static_cast<std::int64_t>(ay.i0[oy]) * W;
            const float* r1 = xi + static_cast<std::int64_t>(ay.i1[oy]) * W;
            for (int ox = 0; ox < OW; ++ox) {
                const float wx1 = axx.w1[ox];
                const float top = r0[axx.i0[ox]] * (1.f - wx1) + r0[axx.i1[ox]] * wx1;
                const float bot = r1[axx.i0[ox]] * (1.f - wx1) + r1[axx.i1[ox]] * wx1;
                yo[static_cast<std::int64_t>(oy) * OW + ox] = top * (1.f - wy1) + bot * wy1;
            }
        }
    }
    return make_node(std::move(out), {x}, [ay, axx, B, C, H, W, OH, OW](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        float* gx = nd.parents[0]->ensure_grad().data();
        for (int bc = 0; bc < B * C; ++bc) {
            const float* g = nd.grad.data() + static_cast<std::int64_t>(bc) * OH * OW;
            float* gi = gx + static_cast<std::int64_t>(bc) * H * W;
            for (int oy = 0; oy < OH; ++oy) {
                const float wy1 = ay.w1[oy];
                float* r0 = gi + static_cast<std::int64_t>(ay.i0[oy]) * W;
                float* r1 = gi + static_cast<std::int64_t>(ay.i1[oy]) * W;
                for (int ox = 0; ox < OW; ++ox) {
                    const float wx1 = axx.w1[ox];
                    const float gv = g[static_cast<std::int64_t>(oy) * OW + ox];
                    r0[axx.i0[ox]] += gv * (1.f - wy1) * (1.f - wx1);
                    r0[axx.i1[ox]] += gv * (1.f - wy1) * wx1;
                    r1[axx.i0[ox]] += gv * wy1 * (1.f - wx1);
                    r1[axx.i1[ox]] += gv * wy1 * wx1;
                }
            }
        }
    });
}

Var extract_patches(const Var& x, int patch) {
    check(x->value.ndim() == 4, "extract_patches: expected (B,C,H,W)");
    const int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    check(H % patch == 0 && W % patch == 0,
          "extract_patches: input " + x->value.shape_str() + " not divisible by patch " + std::to_string(patch));
    const int gh = H / patch, gw = W / patch;
    const int row_len = C * patch * patch;

    Tensor out({B * gh * gw, row_len});
    for (int b = 0; b < B; ++b) {
        const float* xb = x->value.data() + static_cast<std::int64_t>(b) * C * H * W;
        for (int i = 0; i < gh; ++i) {
            for (int j = 0; j < gw; ++j) {
                float* row = out.data() + (static_cast<std::int64_t>(b) * gh * gw + i * gw + j) * row_len;
                for (int c = 0; c < C; ++c)
                    for (int py = 0; py < patch; ++py)
                        for (int px = 0; px < patch; ++px)
                            row[(c * patch + py) * patch + px] =
                                xb[(static_cast<std::int64_t>(c) * H + i * patch + py) * W + j * patch + px];
            }
        }
    }
    return make_node(std::move(out), {x}, [B, C, H, W, patch, gh, gw, row_len](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        float* gx = nd.parents[0]->ensure_grad().data();
        for (int b = 0; b < B; ++b) {
            float* gb = gx + static_cast<std::int64_t>(b) * C * H * W;
            for (int i = 0; i < gh; ++i)
                for (int j = 0; j < gw; ++j) {
                    const float* row =
                        nd.grad.data() + (static_cast<std::int64_t>(b) * gh * gw + i * gw + j) * row_len;
                    for (int c = 0; c < C; ++c)
                        for (int py = 0; py < patch; ++py)
                            for (int px = 0; px < patch; ++px)
                                gb[(static_cast<std::int64_t>(c) * H + i * patch + py) * W + j * patch + px] +=
                                    row[(c * patch + py) * patch + px];
                }
        }
    });
}

// ---------------------------------------------------------------------------
// token plumbing

Var reshape(const Var& x, std::vector<int> shape) {
    Tensor out = x->value.reshaped(std::move(shape));
    return make_node(std::move(out), {x}, [](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        nd.parents[0]->add_grad(nd.grad); // add_grad is flat, shapes share numel
    });
}

Var tokens_to_grid(const Var& x, int gh, int gw) {
    check(x->value.ndim() == 3 && x->value.dim(1) == gh * gw, "tokens_to_grid: bad token count");
    const int B = x->value.dim(0), T = x->value.dim(1), D = x->value.dim(2);
    Tensor out({B, D, gh, gw});
    for (int b = 0; b < B; ++b) {
        const float* xb = x->value.data() + static_cast<std::int64_t>(b) * T * D;
        float* ob = out.data() + static_cast<std::int64_t>(b) * D * T;
        for (int t = 0; t < T; ++t)
            for (int d = 0; d < D; ++d) ob[static_cast<std::int64_t>(d) * T + t] = xb[static_cast<std::int64_t>(t) * D + d];
    }
    return make_node(std::move(out), {x}, [B, T, D](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        float* gx = nd.parents[0]->ensure_grad().data();
        for (int b = 0; b < B; ++b) {
            const float* g = nd.grad.data() + static_cast<std::int64_t>(b) * D * T;
            float* go = gx + static_cast<std::int64_t>(b) * T * D;
            for (int t = 0; t < T; ++t)
                for (int d = 0; d < D; ++d) go[static_cast<std::int64_t>(t) * D + d] += g[static_cast<std::int64_t>(d) * T + t];
        }
    });
}

Var slice_qkv(const Var& qkv, int which, int heads) {
    check(qkv->value.ndim() == 3 && qkv->value.dim(2) % 3 == 0, "slice_qkv: expected (B,T,3D)");
    const int B = qkv->value.dim(0), T = qkv->value.dim(1), D = qkv->value.dim(2) / 3;
    check(D % heads == 0, "slice_qkv: embed dim not divisible by heads");
    const int dh = D / heads;
    const int stride = 3 * D;

    Tensor out({B * heads, T, dh});
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < heads; ++h)
            for (int t = 0; t < T; ++t) {
                const float* src =
                    qkv->value.data() + (static_cast<std::int64_t>(b) * T + t) * stride + which * D + h * dh;
                float* dst = out.data() + ((static_cast<std::int64_t>(b) * heads + h) * T + t) * dh;
                std::copy(src, src + dh, dst);
            }
    return make_node(std::move(out), {qkv}, [B, T, D, heads, dh, which, stride](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        float* gq = nd.parents[0]->ensure_grad().data();
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < heads; ++h)
                for (int t = 0; t < T; ++t) {
                    const float* g = nd.grad.data() + ((static_cast<std::int64_t>(b) * heads + h) * T + t) * dh;
                    float* dst = gq + (static_cast<std::int64_t>(b) * T + t) * stride + which * D + h * dh;
                    for (int e = 0; e < dh; ++e) dst[e] += g[e];
                }
    });
}

Var merge_heads(const Var& x, int batch) {
    check(x->value.ndim() == 3 && x->value.dim(0) % batch == 0, "merge_heads: bad shape");
    const int heads = x->value.dim(0) / batch, T = x->value.dim(1), dh = x->value.dim(2);
    const int D = heads * dh;

    Tensor out({batch, T, D});
    for (int b = 0; b < batch; ++b)
        for (int h = 0; h < heads; ++h)
            for (int t = 0; t < T; ++t) {
                const float* src = x->value.data() + ((static_cast<std::int64_t>(b) * heads + h) * T + t) * dh;
                float* dst = out.data() + (static_cast<std::int64_t>(b) * T + t) * D + h * dh;
                std::copy(src, src + dh, dst);
            }
    return make_node(std::move(out), {x}, [batch, heads, T, dh, D](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        float* gx = nd.parents[0]->ensure_grad().data();
        for (int b = 0; b < batch; ++b)
            for (int h = 0; h < heads; ++h)
                for (int t = 0; t < T; ++t) {
                    const float* g = nd.grad.data() + (static_cast<std::int64_t>(b) * T + t) * D + h * dh;
                    float* dst = gx + ((static_cast<std::int64_t>(b) * heads + h) * T + t) * dh;
                    for (int e = 0; e < dh; ++e) dst[e] += g[e];
                }
    });
}

Var concat_tokens(const Var& a, const Var& b) {
    check(a->value.ndim() == 3 && b->value.ndim() == 3 && a->value.dim(0) == b->value.dim(0) &&
              a->value.dim(2) == b->value.dim(2),
          "concat_tokens: incompatible shapes");
    const int B = a->value.dim(0), Ta = a->value.dim(1), Tb = b->value.dim(1), D = a->value.dim(2);
    Tensor out({B, Ta + Tb, D});
    for (int i = 0; i < B; ++i) {
        std::copy(a->value.data() + static_cast<std::int64_t>(i) * Ta * D,
                  a->value.data() + static_cast<std::int64_t>(i + 1) * Ta * D,
                  out.data() + static_cast<std::int64_t>(i) * (Ta + Tb) * D);
        std::copy(b->value.data() + static_cast<std::int64_t>(i) * Tb * D,
                  b->value.data() + static_cast<std::int64_t>(i + 1) * Tb * D,
                  out.data() + static_cast<std::int64_t>(i) * (Ta + Tb) * D + static_cast<std::int64_t>(Ta) * D);
    }
    return make_node(std::move(out), {a, b}, [B, Ta, Tb, D](Node& nd) {
        for (int i = 0; i < B; ++i) {
            const float* g = nd.grad.data() + static_cast<std::int64_t>(i) * (Ta + Tb) * D;
            if (nd.parents[0]->requires_grad) {
                float* ga = nd.parents[0]->ensure_grad().data() + static_cast<std::int64_t>(i) * Ta * D;
                for (std::int64_t j = 0; j < static_cast<std::int64_t>(Ta) * D; ++j) ga[j] += g[j];
            }
            if (nd.parents[1]->requires_grad) {
                float* gb = nd.parents[1]->ensure_grad().data() + static_cast<std::int64_t>(i) * Tb * D;
                for (std::int64_t j = 0; j < static_cast<std::int64_t>(Tb) * D; ++j)
                    gb[j] += g[static_cast<std::int64_t>(Ta) * D + j];
            }
        }
    });
}

Var drop_tokens(const Var& x, int count) {
    check(x->value.ndim() == 3 && count < x->value.dim(1), "drop_tokens: bad count");
    if (count == 0) return x;
    const int B = x->value.dim(0), T = x->value.dim(1), D = x->value.dim(2);
    const int Tk = T - count;
    Tensor out({B, Tk, D});
    for (int i = 0; i < B; ++i)
        std::copy(x->value.data() + (static_cast<std::int64_t>(i) * T + count) * D,
                  x->value.data() + (static_cast<std::int64_t>(i) * T + T) * D,
                  out.data() + static_cast<std::int64_t>(i) * Tk * D);
    return make_node(std::move(out), {x}, [B, T, Tk, D, count](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        float* gx = nd.parents[0]->ensure_grad().data();
        for (int i = 0; i < B; ++i) {
            const float* g = nd.grad.data() + static_cast<std::int64_t>(i) * Tk * D;
            float* dst = gx + (static_cast<std::int64_t>(i) * T + count) * D;
            for (std::int64_t j = 0; j < static_cast<std::int64_t>(Tk) * D; ++j) dst[j] += g[j];
        }
    });
}

Var expand_rows(const Var& x, int batch) {
    check(x->value.ndim() == 2, "expand_rows: expected (T,D)");
    const int T = x->value.dim(0), D = x->value.dim(1);
    Tensor out({batch, T, D});
    for (int i = 0; i < batch; ++i)
        std::copy(x->value.data(), x->value.data() + static_cast<std::int64_t>(T) * D,
                  out.data() + static_cast<std::int64_t>(i) * T * D);
    return make_node(std::move(out), {x}, [batch, T, D](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        float* gx = nd.parents[0]->ensure_grad().data();
        for (int i = 0; i < batch; ++i) {
            const float* g = nd.grad.data() + static_cast<std::int64_t>(i) * T * D;
            for (std::int64_t j = 0; j < static_cast<std::int64_t>(T) * D; ++j) gx[j] += g[j];
        }
    });
}

Var add_rowvec(const Var& x, const Var& v) {
    const int d = x->value.dim(-1);
    check(v->value.numel() == d, "add_rowvec: size mismatch");
    const std::int64_t rows = lead_rows(x->value);
    Tensor out(x->value.shape());
    MapM(out.data(), rows, d) = CMapM(x->value.data(), rows, d);
    MapM(out.data(), rows, d).rowwise() += CMapV(v->value.data(), d).transpose();
    return make_node(std::move(out), {x, v}, [rows, d](Node& nd) {
        CMapM g(nd.grad.data(), rows, d);
        if (nd.parents[0]->requires_grad) nd.parents[0]->add_grad(nd.grad);
        if (nd.parents[1]->requires_grad) {
            MapV gv(nd.parents[1]->ensure_grad().data(), d);
            gv += g.colwise().sum().transpose();
        }
    });
}

Var mul_rowvec(const Var& x, const Var& v) {
    const int d = x->value.dim(-1);
    check(v->value.numel() == d, "mul_rowvec: size mismatch");
    const std::int64_t rows = lead_rows(x->value);
    Tensor out(x->value.shape());
    MapM(out.data(), rows, d) =
        CMapM(x->value.data(), rows, d).array().rowwise() * CMapV(v->value.data(), d).transpose().array();
    Tensor xv = x->value, vv = v->value;
    return make_node(std::move(out), {x, v}, [xv, vv, rows, d](Node& nd) {
        CMapM g(nd.grad.data(), rows, d);
        if (nd.parents[0]->requires_grad) {
            MapM gx(nd.parents[0]->ensure_grad().data(), rows, d);
            gx.array() += g.array().rowwise() * CMapV(vv.data(), d).transpose().array();
        }
        if (nd.parents[1]->requires_grad) {
            MapV gv(nd.parents[1]->ensure_grad().data(), d);
            gv += g.cwiseProduct(CMapM(xv.data(), rows, d)).colwise().sum().transpose();
        }
    });
}

// ---------------------------------------------------------------------------
// head plumbing

Var softmax_channel(const Var& x) {
    check(x->value.ndim() == 4, "softmax_channel: expected (B,C,H,W)");
    const int B = x->value.dim(0), C = x->value.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(x->value.dim(2)) * x->value.dim(3);
    Tensor out(x->value.shape());
    for (int b = 0; b < B; ++b) {
        const float* xi = x->value.data() + static_cast<std::int64_t>(b) * C * hw;
        float* yo = out.data() + static_cast<std::int64_t>(b) * C * hw;
        for (std::int64_t p = 0; p < hw; ++p) {
            float mx = xi[p];
            for (int c = 1; c < C; ++c) mx = std::max(mx, xi[c * hw + p]);
            float sum = 0.f;
            for (int c = 0; c < C; ++c) {
                const float e = std::exp(xi[c * hw + p] - mx);
                yo[c * hw + p] = e;
                sum += e;
            }
            const float inv = 1.f / sum;
            for (int c = 0; c < C; ++c) yo[c * hw + p] *= inv;
        }
    }
    Tensor y = out;
    return make_node(std::move(out), {x}, [y, B, C, hw](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        float* gx = nd.parents[0]->ensure_grad().data();
        for (int b = 0; b < B; ++b) {
            const float* yi = y.data() + static_cast<std::int64_t>(b) * C * hw;
            const float* gi = nd.grad.data() + static_cast<std::int64_t>(b) * C * hw;
            float* go = gx + static_cast<std::int64_t>(b) * C * hw;
            for (std::int64_t p = 0; p < hw; ++p) {
                float dot = 0.f;
                for (int c = 0; c < C; ++c) dot += gi[c * hw + p] * yi[c * hw + p];
                for (int c = 0; c < C; ++c) go[c * hw + p] += yi[c * hw + p] * (gi[c * hw + p] - dot);
            }
        }
    });
}

Var channel(const Var& x, int c) {
    check(x->value.ndim() == 4 && c < x->value.dim(1), "channel: index out of range");
    const int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    Tensor out({B, H, W});
    for (int b = 0; b < B; ++b)
        std::copy(x->value.data() + (static_cast<std::int64_t>(b) * C + c) * hw,
                  x->value.data() + (static_cast<std::int64_t>(b) * C + c + 1) * hw,
                  out.data() + static_cast<std::int64_t>(b) * hw);
    return make_node(std::move(out), {x}, [B, C, c, hw](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        float* gx = nd.parents[0]->ensure_grad().data();
        for (int b = 0; b < B; ++b) {
            const float* g = nd.grad.data() + static_cast<std::int64_t>(b) * hw;
            float* dst = gx + (static_cast<std::int64_t>(b) * C + c) * hw;
            for (std::int64_t j = 0; j < hw; ++j) dst[j] += g[j];
        }
    });
}

// ---------------------------------------------------------------------------
// reductions

Var sum_per_sample(const Var& x) {
    const int B = x->value.dim(0);
    const std::int64_t per = x->value.numel() / B;
    Tensor out({B});
    for (int b = 0; b < B; ++b)
        out[b] = CMapV(x->value.data() + b * per, per).sum();
    return make_node(std::move(out), {x}, [B, per](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        float* gx = nd.parents[0]->ensure_grad().data();
        for (int b = 0; b < B; ++b) {
            const float g = nd.grad[b];
            float* dst = gx + b * per;
            for (std::int64_t j = 0; j < per; ++j) dst[j] += g;
        }
    });
}

Var mean_all(const Var& x) {
    const std::int64_t n = x->value.numel();
    Tensor out({1});
    out[0] = CMapV(x->value.data(), n).sum() / static_cast<float>(n);
    return make_node(std::move(out), {x}, [n](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        Tensor& g = nd.parents[0]->ensure_grad();
        const float gv = nd.grad[0] / static_cast<float>(n);
        for (std::int64_t j = 0; j < n; ++j) g[j] += gv;
    });
}

} // namespace emseg::nn
