#include "backbones/backbone.hpp"

#include <cmath>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "core/tensor_file.hpp"

namespace emseg::backbones {

using nn::Tensor;
using nn::Var;

std::string to_string(Family f) {
    switch (f) {
        case Family::kDinoV2: return "dinov2";
        case Family::kDinoV3: return "dinov3";
        case Family::kOpenClip: return "openclip";
        case Family::kToy: return "toy";
    }
    return "toy";
}

// ---------------------------------------------------------------------------
// weight providers

nn::Tensor SeededWeightProvider::fetch(const std::string& name, const std::vector<int>& shape) {
    Tensor t(shape);
    const bool is_norm_weight = name.find("norm") != std::string::npos && name.ends_with(".weight");
    const bool is_bias = name.ends_with(".bias");
    const bool is_layerscale = name.find(".ls") != std::string::npos;
    if (is_norm_weight) {
        t.fill(1.f);
    } else if (is_bias) {
        t.zero();
    } else if (is_layerscale) {
        t.fill(1e-5f);
    } else {
        // fan-in scaled init keeps toy activations well conditioned
        const int fan_in = shape.size() >= 2 ? shape.back() : static_cast<int>(t.numel());
        nn::fill_normal(t, 0.f, 1.f / std::sqrt(static_cast<float>(fan_in)),
                        derive_seed(seed_, name));
    }
    return t;
}

FileWeightProvider::FileWeightProvider(const std::string& path) : path_(path) {
    tensors_ = nn::load_tensors(path);
}

nn::Tensor FileWeightProvider::fetch(const std::string& name, const std::vector<int>& shape) {
    const auto it = tensors_.find(name);
    if (it == tensors_.end())
        throw DataError("weight cache " + path_ + " is missing tensor '" + name + "'");
    if (it->second.shape() != shape)
        throw DataError("weight cache " + path_ + ": tensor '" + name + "' has shape " +
                        it->second.shape_str() + ", expected " + Tensor(shape).shape_str());
    return it->second;
}

// ---------------------------------------------------------------------------
// linear layer with optional adapter

nn::Var LinearLayer::forward(const nn::Var& x, bool training, std::uint64_t step_seed) const {
    Var base = nn::linear(x, weight.var, bias.var);
    if (!lora) return base;
    Var inp = x;
    if (training && lora->dropout > 0.f)
        inp = nn::dropout(inp, lora->dropout, derive_seed(step_seed, lora->host_id));
    Var delta = nn::linear(nn::linear(inp, lora->down.var, nullptr), lora->up.var, nullptr);
    return nn::add(base, nn::scale(delta, lora->scaling));
}

void LinearLayer::collect(std::vector<nn::Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
    if (lora) {
        out.push_back(&lora->down);
        out.push_back(&lora->up);
    }
}

// ---------------------------------------------------------------------------
// vision transformer

namespace {

nn::Parameter make_param(const std::string& name, const std::vector<int>& shape, WeightProvider& w) {
    return nn::Parameter(name, w.fetch(name, shape), /*trainable=*/false);
}

LinearLayer make_linear(const std::string& id, int d_out, int d_in, WeightProvider& w) {
    LinearLayer l;
    l.id = id;
    l.weight = make_param(id + ".weight", {d_out, d_in}, w);
    l.bias = make_param(id + ".bias", {d_out}, w);
    return l;
}

} // namespace

VisionTransformer::VisionTransformer(BackboneSpec spec, WeightProvider& w) : spec_(std::move(spec)) {
    const int d = spec_.embed_dim;
    const int p = spec_.patch_size;
    const int hidden = static_cast<int>(std::lround(spec_.mlp_ratio * d));

    patch_w_ = make_param("patch_embed.weight", {d, 3 * p * p}, w);
    patch_b_ = make_param("patch_embed.bias", {d}, w);
    if (spec_.prefix_tokens > 0)
        prefix_tokens_ = make_param("prefix_tokens", {spec_.prefix_tokens, d}, w);
    if (spec_.pos_grid > 0)
        pos_embed_ = make_param("pos_embed", {spec_.prefix_tokens + spec_.pos_grid * spec_.pos_grid, d}, w);
    if (spec_.pre_norm) {
        pre_norm_w_ = make_param("pre_norm.weight", {d}, w);
        pre_norm_b_ = make_param("pre_norm.bias", {d}, w);
    }

    blocks_.reserve(static_cast<std::size_t>(spec_.num_blocks));
    for (int i = 0; i < spec_.num_blocks; ++i) {
        const std::string prefix = "blocks." + std::to_string(i) + ".";
        Block blk;
        blk.norm1_w = make_param(prefix + "norm1.weight", {d}, w);
        blk.norm1_b = make_param(prefix + "norm1.bias", {d}, w);
        blk.qkv = make_linear(prefix + "attn.qkv", 3 * d, d, w);
        blk.proj = make_linear(prefix + "attn.proj", d, d, w);
        blk.norm2_w = make_param(prefix + "norm2.weight", {d}, w);
        blk.norm2_b = make_param(prefix + "norm2.bias", {d}, w);
        blk.fc1 = make_linear(prefix + "mlp.fc1", hidden, d, w);
        blk.fc2 = make_linear(prefix + "mlp.fc2", d, hidden, w);
        if (spec_.layerscale) {
            blk.ls1 = make_param(prefix + "ls1.gamma", {d}, w);
            blk.ls2 = make_param(prefix + "ls2.gamma", {d}, w);
        }
        blocks_.push_back(std::move(blk));
    }
    norm_w_ = make_param("norm.weight", {d}, w);
    norm_b_ = make_param("norm.bias", {d}, w);
}

nn::Var VisionTransformer::block_forward(const Block& blk, nn::Var x, std::uint64_t seed_base) const {
    const int batch = x->value.dim(0);
    const int dh = spec_.embed_dim / spec_.num_heads;
    constexpr float kEps = 1e-6f;

    Var h = nn::layer_norm(x, blk.norm1_w.var, blk.norm1_b.var, kEps);
    Var qkv = blk.qkv.forward(h, training_, seed_base);
    Var q = nn::slice_qkv(qkv, 0, spec_.num_heads);
    Var k = nn::slice_qkv(qkv, 1, spec_.num_heads);
    Var v = nn::slice_qkv(qkv, 2, spec_.num_heads);
    Var attn = nn::softmax_last(nn::scale(nn::bmm_nt(q, k), 1.f / std::sqrt(static_cast<float>(dh))));
    Var ctx = nn::merge_heads(nn::bmm(attn, v), batch);
    Var out = blk.proj.forward(ctx, training_, seed_base);
    if (spec_.layerscale) out = nn::mul_rowvec(out, blk.ls1.var);
    x = nn::add(x, out);

    Var h2 = nn::layer_norm(x, blk.norm2_w.var, blk.norm2_b.var, kEps);
    Var f = blk.fc2.forward(nn::gelu(blk.fc1.forward(h2, training_, seed_base)), training_, seed_base);
    if (spec_.layerscale) f = nn::mul_rowvec(f, blk.ls2.var);
    return nn::add(x, f);
}

nn::Tensor VisionTransformer::interpolated_pos_embed(int gh, int gw) const {
    const int d = spec_.embed_dim;
    const int g = spec_.pos_grid;
    const int prefix = spec_.prefix_tokens;
    const Tensor& pe = pos_embed_.value();

    Tensor out({prefix + gh * gw, d});
    for (int i = 0; i < prefix; ++i)
        std::copy(pe.data() + static_cast<std::int64_t>(i) * d, pe.data() + static_cast<std::int64_t>(i + 1) * d,
                  out.data() + static_cast<std::int64_t>(i) * d);

    // bilinear over the stored grid, align_corners=false
    const float sy = static_cast<float>(g) / gh;
    const float sx = static_cast<float>(g) / gw;
    for (int oy = 0; oy < gh; ++oy) {
        float fy = (oy + 0.5f) * sy - 0.5f;
        fy = std::clamp(fy, 0.f, static_cast<float>(g - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, g - 1);
        const float wy = fy - y0;
        for (int ox = 0; ox < gw; ++ox) {
            float fx = (ox + 0.5f) * sx - 0.5f;
            fx = std::clamp(fx, 0.f, static_cast<float>(g - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, g - 1);
            const float wx = fx - x0;
            float* dst = out.data() + (static_cast<std::int64_t>(prefix) + oy * gw + ox) * d;
            const float* p00 = pe.data() + (static_cast<std::int64_t>(prefix) + y0 * g + x0) * d;
            const float* p01 = pe.data() + (static_cast<std::int64_t>(prefix) + y0 * g + x1) * d;
            const float* p10 = pe.data() + (static_cast<std::int64_t>(prefix) + y1 * g + x0) * d;
            const float* p11 = pe.data() + (static_cast<std::int64_t>(prefix) + y1 * g + x1) * d;
            for (int j = 0; j < d; ++j)
                dst[j] = (1 - wy) * ((1 - wx) * p00[j] + wx * p01[j]) + wy * ((1 - wx) * p10[j] + wx * p11[j]);
        }
    }
    return out;
}

FeatureMap VisionTransformer::extract(const nn::Tensor& batch) const {
    if (batch.ndim() != 4 || batch.dim(1) != 3)
        throw ShapeError("backbone: expected (B,3,H,W) input, got " + batch.shape_str());
    const int p = spec_.patch_size;
    const int H = batch.dim(2), W = batch.dim(3);
    if (H % p != 0 || W % p != 0)
        throw ShapeError("backbone: input " + batch.shape_str() + " not divisible by patch size " +
                         std::to_string(p));
    const int B = batch.dim(0);
    const int gh = H / p, gw = W / p;

    Var x = nn::leaf(batch, false);
    Var tok = nn::linear(nn::extract_patches(x, p), patch_w_.var, patch_b_.var);
    tok = nn::reshape(tok, {B, gh * gw, spec_.embed_dim});

    if (spec_.prefix_tokens > 0)
        tok = nn::concat_tokens(nn::expand_rows(prefix_tokens_.var, B), tok);
    if (spec_.pos_grid > 0) {
        Var pos = nn::leaf(interpolated_pos_embed(gh, gw), false);
        tok = nn::add(tok, nn::expand_rows(pos, B));
    }
    if (spec_.pre_norm) tok = nn::layer_norm(tok, pre_norm_w_.var, pre_norm_b_.var, 1e-6f);

    const std::uint64_t seed_base = derive_seed(step_, "lora_dropout");
    for (const Block& blk : blocks_) tok = block_forward(blk, tok, seed_base);

    tok = nn::layer_norm(tok, norm_w_.var, norm_b_.var, 1e-6f);
    tok = nn::drop_tokens(tok, spec_.prefix_tokens);

    FeatureMap fm;
    fm.tokens = nn::tokens_to_grid(tok, gh, gw);
    fm.patch_size = p;
    fm.source = spec_;
    return fm;
}

std::vector<nn::Parameter*> VisionTransformer::parameters() {
    std::vector<nn::Parameter*> out;
    out.push_back(&patch_w_);
    out.push_back(&patch_b_);
    if (spec_.prefix_tokens > 0) out.push_back(&prefix_tokens_);
    if (spec_.pos_grid > 0) out.push_back(&pos_embed_);
    if (spec_.pre_norm) {
        out.push_back(&pre_norm_w_);
        out.push_back(&pre_norm_b_);
    }
    for (Block& blk : blocks_) {
        out.push_back(&blk.norm1_w);
        out.push_back(&blk.norm1_b);
        blk.qkv.collect(out);
        blk.proj.collect(out);
        if (spec_.layerscale) out.push_back(&blk.ls1);
        out.push_back(&blk.norm2_w);
        out.push_back(&blk.norm2_b);
        blk.fc1.collect(out);
        blk.fc2.collect(out);
        if (spec_.layerscale) out.push_back(&blk.ls2);
    }
    out.push_back(&norm_w_);
    out.push_back(&norm_b_);
    return out;
}

void VisionTransformer::freeze() {
    for (nn::Parameter* p : parameters()) {
        // adapters stay trainable; everything native to the encoder freezes
        const bool is_lora = p->name.find(".lora") != std::string::npos;
        if (!is_lora) p->set_trainable(false);
    }
}

std::uint64_t VisionTransformer::frozen_checksum() {
    return nn::checksum_frozen(parameters());
}

std::vector<VisionTransformer::AttentionLayers> VisionTransformer::attention_layers() {
    std::vector<AttentionLayers> out;
    out.reserve(blocks_.size());
    for (Block& blk : blocks_) out.push_back({&blk.qkv, &blk.proj});
    return out;
}

nn::Tensor pooled_embedding(const FeatureMap& fm) {
    const Tensor& t = fm.tokens->value;
    const int B = t.dim(0), D = t.dim(1);
    const std::int64_t grid = static_cast<std::int64_t>(t.dim(2)) * t.dim(3);
    if (grid == 0) throw ShapeError("pooled_embedding: empty feature map");
    Tensor out({B, D});
    for (int b = 0; b < B; ++b)
        for (int d = 0; d < D; ++d) {
            const float* src = t.data() + (static_cast<std::int64_t>(b) * D + d) * grid;
            double acc = 0.0;
            for (std::int64_t i = 0; i < grid; ++i) acc += src[i];
            out[static_cast<std::int64_t>(b) * D + d] = static_cast<float>(acc / static_cast<double>(grid));
        }
    return out;
}

} // namespace emseg::backbones
