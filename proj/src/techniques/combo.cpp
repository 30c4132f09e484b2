#include "gate/techniques/combo.hpp"

#include "gate/techniques/canny.hpp"

namespace gate::techniques {

ResolvedConditioning apply_combo(const store::TechniqueCombo& combo, const core::Image& image,
                                 const std::string& base_prompt, TechniqueContext& ctx,
                                 const std::string& image_id) {
    combo.validate();
    ResolvedConditioning out;
    if (combo.prompt_source == store::TechniqueCombo::PromptSource::per_image_caption) {
        out.prompt = ctx.captioner.caption(image_id);
    } else {
        out.prompt = combo.prompt_text.empty() ? base_prompt : combo.prompt_text;
    }
    if (combo.use_controlnet) {
        out.control_image = compute_canny(image, ctx.canny_low, ctx.canny_high);
    }
    if (combo.use_lora) {
        const LoraEntry& entry = ctx.loras.at(*combo.lora_id);  // throws on unknown id
        out.lora_id = combo.lora_id;
        out.lora_path = entry.path;
        out.lora_strength = entry.strength;
    }
    out.cfg_scale = combo.cfg_scale;
    return out;
}

}  // namespace gate::techniques
