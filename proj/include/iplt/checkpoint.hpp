#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "iplt/model.hpp"

namespace iplt {

// Binary checkpoint layout (version 1, all integers little-endian):
//   8-byte magic "IPLTCKPT", u32 version, then the model: name, creation
//   seed, epoch counter, input shape, a length-prefixed layer descriptor
//   list with raw float64 parameter tensors and per-conv alive masks, the
//   serialized RNG state, and a trailing CRC-32 over everything before it.
// Round trips are bit-exact.
std::vector<std::uint8_t> serialize_checkpoint(const ModelGraph& model);
ModelGraph deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const ModelGraph& model, const std::filesystem::path& path);
ModelGraph load_checkpoint(const std::filesystem::path& path);

}  // namespace iplt
