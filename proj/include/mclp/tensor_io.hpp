#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mclp/tensor.hpp"

namespace mclp {

// Binary tensor container. Layout, all little-endian:
//   "MCLT" magic, u32 format version,
//   then per record: u32 name length, UTF-8 name, u32 rank, rank x u64 dims,
//   payload of numel scalars.
// Version 1 stores f32 payloads and is the interchange format for embedding
// tables and exports. Version 2 stores f64 payloads so training state
// round-trips bit-exactly; checkpoints use it.
inline constexpr std::uint32_t kTensorFileV1F32 = 1;
inline constexpr std::uint32_t kTensorFileV2F64 = 2;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Writes via a temp file plus rename, so a crash never leaves a torn file.
void write_tensor_file(const std::string& path, const NamedTensors& records,
                       std::uint32_t version = kTensorFileV1F32);

// Reads all records. Unknown versions and truncation raise IoError with the
// path in the message; loaded tensors never require gradients.
NamedTensors read_tensor_file(const std::string& path,
                              std::uint32_t* version_out = nullptr);

}  // namespace mclp
