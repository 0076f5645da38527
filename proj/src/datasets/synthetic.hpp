#pragma once

#include <cstdint>
#include <filesystem>

namespace emseg::data {

// Deterministic blob-segmentation dataset written in the lucchi_split_dirs
// layout. Two styles give the domain-shift diagnostics two distinguishable
// synthetic sources.
struct BlobDatasetSpec {
    int train_count = 16;
    int test_count = 8;
    int height = 112;
    int width = 112;
    std::uint64_t seed = 0;
    int style = 0; // 0 = dark background, 1 = bright variant
};

void generate_blob_dataset(const std::filesystem::path& root, const BlobDatasetSpec& spec);

} // namespace emseg::data
