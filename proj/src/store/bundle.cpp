#include "gate/store/bundle.hpp"

#include "gate/store/npz.hpp"

namespace gate::store {

TechniqueCombo TechniqueCombo::all_off(std::string id, std::string prompt) {
    TechniqueCombo c;
    c.combo_id = std::move(id);
    c.prompt_text = std::move(prompt);
    return c;
}

bool TechniqueCombo::is_all_off() const {
    return prompt_source == PromptSource::fixed_text && !use_controlnet && !use_lora &&
           cfg_scale == 1.0 && !denoise_from.has_value();
}

void TechniqueCombo::validate(int extraction_timestep) const {
    if (combo_id.empty()) throw InvariantError("combo_id must not be empty");
    if (cfg_scale < 1.0) throw InvariantError("cfg_scale must be >= 1 (combo '" + combo_id + "')");
    if (use_lora && (!lora_id || lora_id->empty())) {
        throw InvariantError("use_lora set but no lora_id (combo '" + combo_id + "')");
    }
    if (denoise_from && extraction_timestep >= 0 && *denoise_from <= extraction_timestep) {
        throw InvariantError("denoise_from must exceed the extraction timestep (combo '" + combo_id + "')");
    }
}

void FeatureBundle::validate() const {
    if (image_id.empty() || combo_id.empty()) {
        throw InvariantError("bundle requires non-empty image_id and combo_id");
    }
    if (timestep < 0) throw InvariantError("bundle timestep must be >= 0");
    int64_t h = -1, w = -1;
    for (const NamedFeature& f : conv_features) {
        if (f.map.rank() != 3) {
            throw InvariantError("conv feature '" + f.name + "' must be (c, h, w), got " + f.map.shape_str());
        }
        if (h < 0) {
            h = f.map.dim(1);
            w = f.map.dim(2);
        } else if (f.map.dim(1) != h || f.map.dim(2) != w) {
            throw InvariantError("conv features disagree on spatial dims in bundle " + image_id + "/" + combo_id);
        }
    }
    if (attention_feature) {
        if (attention_feature->rank() != 3) {
            throw InvariantError("attention feature must be (tokens, h, w)");
        }
        if (static_cast<int64_t>(attention_tokens.size()) != attention_feature->dim(0)) {
            throw InvariantError("attention token strings must match the token axis");
        }
    } else if (!attention_tokens.empty()) {
        throw InvariantError("attention tokens recorded without an attention feature");
    }
}

core::Tensor FeatureBundle::concat_conv() const {
    std::vector<core::Tensor> maps;
    maps.reserve(conv_features.size());
    for (const NamedFeature& f : conv_features) maps.push_back(f.map);
    return core::concat_channels(maps);
}

std::string prompt_source_to_string(TechniqueCombo::PromptSource s) {
    return s == TechniqueCombo::PromptSource::fixed_text ? "fixed_text" : "per_image_caption";
}

TechniqueCombo::PromptSource prompt_source_from_string(const std::string& s) {
    if (s == "fixed_text") return TechniqueCombo::PromptSource::fixed_text;
    if (s == "per_image_caption") return TechniqueCombo::PromptSource::per_image_caption;
    throw InvariantError("unknown prompt_source: " + s);
}

}  // namespace gate::store
