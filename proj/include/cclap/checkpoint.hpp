#pragma once

#include <map>
#include <string>

#include "cclap/tensor.hpp"

namespace cclap {

using TensorMap = std::map<std::string, Tensor<float>>;

// CCLAPCKPT container: magic "CCLAPCKPT", u32 format version, u32 tensor
// count, then per tensor: u32 name length, UTF-8 name, u32 rank, extents as
// u64, row-major little-endian f32 payload. Round-trips bit-exactly.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const TensorMap& tensors);
TensorMap load_checkpoint(const std::string& path);

// Read-modify-write merge: tensors with the given prefix are replaced.
void merge_into_checkpoint(const std::string& path, const std::string& prefix,
                           const TensorMap& tensors);

// Subset of a map under "prefix/", with the prefix stripped.
TensorMap with_prefix_stripped(const TensorMap& all, const std::string& prefix);

}  // namespace cclap
