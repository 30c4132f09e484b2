#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "gate/core/tensor.hpp"

namespace gate::backend {

// Reader/writer for the common serialized-tensor format used by the v1.5
// model ecosystem: 8-byte little-endian header length, JSON header mapping
// tensor names to {dtype, shape, data_offsets}, then the raw buffer.
// Reads F32/F16/BF16 (converted to float32); writes F32.

std::map<std::string, core::Tensor> load_safetensors(const std::filesystem::path& path);
void save_safetensors(const std::map<std::string, core::Tensor>& tensors,
                      const std::filesystem::path& path);

}  // namespace gate::backend
