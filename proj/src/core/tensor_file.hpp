#pragma once

#include <map>
#include <string>

#include "core/tensor.hpp"

namespace emseg::nn {

// Flat binary container of named float32 tensors (little-endian). Used for
// backbone weight caches and training checkpoints; the layout is documented
// in the README so weights can be exported from other toolchains.
void save_tensors(const std::string& path, const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> load_tensors(const std::string& path);

} // namespace emseg::nn
