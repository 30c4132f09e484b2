#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "gate/backend/clip_text.hpp"
#include "gate/backend/nn.hpp"

namespace gate::backend {

struct LoadedCheckpoint {
    std::string digest;
    std::shared_ptr<BpeTokenizer> bpe;
};

// Loads pretrained weights into the component parameter stores. Accepts the
// two de-facto v1.5 layouts:
//   - a directory with unet/, vae/, text_encoder/ (and optionally
//     controlnet/, tokenizer/) each holding a *.safetensors file;
//   - a single consolidated .safetensors file with legacy key names, which
//     are converted to the per-component naming first.
// Loading is strict: unknown keys, missing parameters and shape mismatches
// are errors.
LoadedCheckpoint load_checkpoint_weights(const std::filesystem::path& path, ParamStore& unet,
                                         ParamStore& vae, ParamStore& text, ParamStore* control);

// Legacy-to-component key conversion, exposed for tests.
std::map<std::string, std::string> convert_legacy_unet_keys(const std::vector<std::string>& keys,
                                                            int stages, int res_blocks);
std::map<std::string, std::string> convert_legacy_vae_keys(const std::vector<std::string>& keys,
                                                           int stages);

}  // namespace gate::backend
