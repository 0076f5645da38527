#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "core/autograd.hpp"
#include "core/module.hpp"
#include "core/tensor.hpp"

namespace emseg::backbones {

enum class Family { kDinoV2, kDinoV3, kOpenClip, kToy };
enum class Variant { kS, kB, kL, kH, kG };

std::string to_string(Family f);

struct BackboneSpec {
    std::string key;
    Family family = Family::kToy;
    Variant variant = Variant::kS;
    int patch_size = 14;
    int embed_dim = 64;
    int num_blocks = 2;
    int num_heads = 4;
    float mlp_ratio = 4.f;
    int prefix_tokens = 0;  // CLS + register tokens; dropped before the grid reshape
    bool layerscale = false;
    bool pre_norm = false;  // extra norm ahead of the blocks (OpenCLIP style)
    int pos_grid = 0;       // learned position-embedding grid side; 0 = none
};

// Patch-token grid produced by a backbone forward pass. Kept as a graph Var
// so adapter training can backpropagate through the encoder.
struct FeatureMap {
    nn::Var tokens; // (B, D, H', W')
    int patch_size = 0;
    BackboneSpec source;

    int batch() const { return tokens->value.dim(0); }
    int channels() const { return tokens->value.dim(1); }
    int grid_h() const { return tokens->value.dim(2); }
    int grid_w() const { return tokens->value.dim(3); }
};

// Mean over the spatial grid per channel: (B,D,H',W') -> (B,D).
nn::Tensor pooled_embedding(const FeatureMap& fm);

// Supplies named weight tensors at construction time. Real encoders read a
// binary cache file; the toy encoder and tests use seeded synthesis.
class WeightProvider {
public:
    virtual ~WeightProvider() = default;
    virtual nn::Tensor fetch(const std::string& name, const std::vector<int>& shape) = 0;
};

class SeededWeightProvider : public WeightProvider {
public:
    explicit SeededWeightProvider(std::uint64_t seed) : seed_(seed) {}
    nn::Tensor fetch(const std::string& name, const std::vector<int>& shape) override;

private:
    std::uint64_t seed_;
};

class FileWeightProvider : public WeightProvider {
public:
    explicit FileWeightProvider(const std::string& path);
    nn::Tensor fetch(const std::string& name, const std::vector<int>& shape) override;

private:
    std::string path_;
    std::map<std::string, nn::Tensor> tensors_;
};

// Low-rank adapter attached to one linear layer: W + (alpha/r) * up * down.
struct LoraAdapter {
    std::string host_id;
    nn::Parameter down; // (r, d_in)
    nn::Parameter up;   // (d_out, r)
    float scaling = 1.f;
    float dropout = 0.f;
};

struct LinearLayer {
    std::string id;
    nn::Parameter weight; // (d_out, d_in)
    nn::Parameter bias;   // (d_out)
    std::unique_ptr<LoraAdapter> lora;

    int d_in() const { return weight.value().dim(1); }
    int d_out() const { return weight.value().dim(0); }
    nn::Var forward(const nn::Var& x, bool training, std::uint64_t step_seed) const;
    void collect(std::vector<nn::Parameter*>& out);
};

class VisionTransformer {
public:
    VisionTransformer(BackboneSpec spec, WeightProvider& weights);

    // batch: normalized (B,3,H,W); H and W must be multiples of the patch size.
    FeatureMap extract(const nn::Tensor& batch) const;

    const BackboneSpec& spec() const { return spec_; }
    std::vector<nn::Parameter*> parameters();
    void freeze();
    std::uint64_t frozen_checksum();

    struct AttentionLayers {
        LinearLayer* qkv;
        LinearLayer* proj;
    };
    std::vector<AttentionLayers> attention_layers();

    void set_training(bool training) { training_ = training; }
    void bump_step() { ++step_; }

private:
    struct Block {
        nn::Parameter norm1_w, norm1_b;
        LinearLayer qkv, proj;
        nn::Parameter ls1;
        nn::Parameter norm2_w, norm2_b;
        LinearLayer fc1, fc2;
        nn::Parameter ls2;
    };

    nn::Var block_forward(const Block& blk, nn::Var x, std::uint64_t seed_base) const;
    nn::Tensor interpolated_pos_embed(int gh, int gw) const;

    BackboneSpec spec_;
    nn::Parameter patch_w_, patch_b_;
    nn::Parameter prefix_tokens_;
    nn::Parameter pos_embed_;
    nn::Parameter pre_norm_w_, pre_norm_b_;
    std::vector<Block> blocks_;
    nn::Parameter norm_w_, norm_b_;
    bool training_ = false;
    std::uint64_t step_ = 0;
};

} // namespace emseg::backbones
