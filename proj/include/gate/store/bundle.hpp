#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gate/core/tensor.hpp"

namespace gate::store {

inline constexpr int kBundleSchemaVersion = 1;
inline constexpr int kManifestSchemaVersion = 1;

struct NamedFeature {
    std::string name;
    core::Tensor map;  // (c, h, w)
};

// Which generation techniques are active for one extraction pass.
struct TechniqueCombo {
    enum class PromptSource { fixed_text, per_image_caption };
    enum class ControlType { canny };

    std::string combo_id;
    PromptSource prompt_source = PromptSource::fixed_text;
    // Fixed prompt text; also the attention-feature prompt when captions drive convs.
    std::string prompt_text;
    bool use_controlnet = false;
    ControlType control_type = ControlType::canny;
    bool use_lora = false;
    std::optional<std::string> lora_id;
    double cfg_scale = 1.0;  // 1 = guidance off
    std::optional<int> denoise_from;

    static TechniqueCombo all_off(std::string id, std::string prompt);
    bool is_all_off() const;

    // Throws InvariantError; extraction_timestep < 0 skips the window check.
    void validate(int extraction_timestep = -1) const;
};

// Named multi-channel feature maps for one (image, combo) pair, with provenance.
struct FeatureBundle {
    std::string image_id;
    std::string combo_id;
    int timestep = 0;
    std::vector<NamedFeature> conv_features;          // equal (h, w) after alignment
    std::optional<core::Tensor> attention_feature;    // (tokens, h, w)
    std::vector<std::string> attention_tokens;        // prompt tokens the map is aligned to
    uint64_t seed = 0;
    std::string model_fingerprint;

    void validate() const;  // throws InvariantError

    // Channel-concatenation of the aligned conv maps, the r_i consumed downstream.
    core::Tensor concat_conv() const;
};

std::string prompt_source_to_string(TechniqueCombo::PromptSource s);
TechniqueCombo::PromptSource prompt_source_from_string(const std::string& s);

}  // namespace gate::store
