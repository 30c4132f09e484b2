#pragma once

#include <optional>
#include <string>

#include "gate/core/image.hpp"
#include "gate/store/bundle.hpp"
#include "gate/techniques/captioner.hpp"
#include "gate/techniques/lora.hpp"

namespace gate::techniques {

// Shared technique resources, read-mostly after startup.
struct TechniqueContext {
    LoraRegistry loras;
    CaptionerAdapter captioner = CaptionerAdapter::make("fixed_stub");
    double canny_low = 100.0;
    double canny_high = 200.0;
};

// The conditioning an extraction or generation pass actually runs with.
struct ResolvedConditioning {
    std::string prompt;
    std::optional<core::Tensor> control_image;  // canny of the input itself
    std::optional<std::string> lora_id;
    std::filesystem::path lora_path;
    double lora_strength = 1.0;
    double cfg_scale = 1.0;
};

ResolvedConditioning apply_combo(const store::TechniqueCombo& combo, const core::Image& image,
                                 const std::string& base_prompt, TechniqueContext& ctx,
                                 const std::string& image_id);

}  // namespace gate::techniques
