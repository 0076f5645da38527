#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace emseg::data {

enum class DatasetId { kLucchi, kVnc, kOther };
enum class Layout { kLucchiSplitDirs, kVncStacks };
enum class SplitKind { kTrain, kTest, kUnlabelled };

std::string to_string(DatasetId id);
std::string to_string(Layout layout);

// Single-channel images hold the raw grayscale raster; normalize() replicates
// to three channels and applies the ImageNet statistics.
struct ImageF32 {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<float> pixels; // channel-major planes

    float at(int c, int y, int x) const {
        return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float& at(int c, int y, int x) {
        return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

struct MaskU8 {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> values; // {0,1} after binarization

    std::uint8_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct Sample {
    ImageF32 image;
    std::optional<MaskU8> mask;
    DatasetId dataset_id = DatasetId::kOther;
    std::string label; // reporting name, e.g. "lucchi"
    int slice_index = 0;
};

struct DatasetSpec {
    std::filesystem::path root;
    Layout layout = Layout::kLucchiSplitDirs;
    int expected_train_count = 0; // 0 = accept whatever is found (VNC: reserve 3 test slices)
    int expected_test_count = 0;
    DatasetId id = DatasetId::kOther;
    std::string label;
};

struct SplitConfig {
    double validation_fraction = 0.10;
    std::uint64_t seed = 0;
};

enum class ImageInterp { kBilinear };
enum class MaskInterp { kNearest };

struct ResizePolicy {
    int target_longest_edge = 0; // 0 = native longest edge snapped down to a patch multiple
    int patch_size = 14;
    ImageInterp image_interpolation = ImageInterp::kBilinear;
    MaskInterp mask_interpolation = MaskInterp::kNearest;
};

struct LoadedDataset {
    std::vector<Sample> train;
    std::vector<Sample> test;
    std::vector<Sample> unlabelled;
};

inline constexpr std::array<float, 3> kImagenetMean{0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kImagenetStd{0.229f, 0.224f, 0.225f};
inline constexpr int kDefaultBinarizeThreshold = 128;

// Thresholds raw integer mask values at `threshold`; a raster that is already
// binary ({0,1}) passes through unchanged, which makes the op idempotent.
void binarize_mask(std::vector<std::uint8_t>& out, const std::vector<std::uint16_t>& raw, int threshold);

LoadedDataset load_dataset(const DatasetSpec& spec, int binarize_threshold = kDefaultBinarizeThreshold);
std::vector<Sample> load_split(const DatasetSpec& spec, SplitKind split,
                               int binarize_threshold = kDefaultBinarizeThreshold);

// Deterministic index split; val size = max(1, round_half_even(fraction*n)).
struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};
SplitIndices make_split_indices(std::size_t n, const SplitConfig& cfg);
std::pair<std::vector<Sample>, std::vector<Sample>> make_split(std::vector<Sample> samples,
                                                               const SplitConfig& cfg);

long long round_half_even(double v);
std::pair<int, int> resized_dims(int height, int width, const ResizePolicy& policy);
Sample resize_to_patch_grid(const Sample& sample, const ResizePolicy& policy);

Sample normalize(const Sample& sample);

// (3,H,W) tensor from a (possibly single-channel) image; replicates channels.
nn::Tensor image_tensor(const ImageF32& image);

// Nearest-neighbour resize of a {0,1} label raster; used to map predictions
// back to native ground-truth resolution.
std::vector<std::uint8_t> resize_labels_nearest(const std::vector<std::uint8_t>& labels, int h, int w,
                                                int out_h, int out_w);

} // namespace emseg::data
