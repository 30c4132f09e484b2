#include "gate/extract/extract.hpp"

#include <stdexcept>

#include "gate/store/npz.hpp"
#include "gate/techniques/lora.hpp"

namespace gate::extract {

using backend::CaptureSink;
using backend::DiffusionBackend;
using core::Tensor;
using store::FeatureBundle;
using store::NamedFeature;

void ExtractionConfig::validate(const backend::NoiseSchedule& schedule) const {
    if (timestep <= 0 || timestep > schedule.max_timestep()) {
        throw store::InvariantError("extraction timestep " + std::to_string(timestep) +
                                    " outside (0, " + std::to_string(schedule.max_timestep()) + "]");
    }
    combo.validate(timestep);
    if (combo.denoise_from && *combo.denoise_from > schedule.max_timestep()) {
        throw store::InvariantError("denoise_from exceeds the schedule maximum");
    }
    if (combo.cfg_scale > 1.0 && !combo.denoise_from) {
        throw store::InvariantError(
            "cfg_scale > 1 requires a denoising window; a single capture pass has no guidance step");
    }
    if (denoise_window_steps < 1) throw store::InvariantError("denoise_window_steps must be >= 1");
    if (capture_attention && combo.prompt_source == store::TechniqueCombo::PromptSource::per_image_caption &&
        attention_prompt.empty()) {
        throw store::InvariantError("attention capture under per-image captions needs a fixed attention_prompt");
    }
}

Tensor encode_to_latent(const core::Image& rgb, const DiffusionBackend& b) {
    return b.encode_image(rgb);
}

Tensor add_noise(const Tensor& x0, int t, uint64_t seed, const DiffusionBackend& b) {
    return b.schedule().add_noise(x0, t, seed);
}

namespace {

// Runs the optional denoising window, then the capture pass at cfg.timestep.
Tensor run_capture_pass(const Tensor& x0, const ExtractionConfig& cfg, DiffusionBackend& b,
                        const techniques::ResolvedConditioning& cond, const Tensor& context,
                        CaptureSink* sink) {
    const Tensor* hint = cond.control_image ? &*cond.control_image : nullptr;
    Tensor x;
    if (cfg.combo.denoise_from) {
        x = b.schedule().add_noise(x0, *cfg.combo.denoise_from, cfg.seed);
        const std::vector<int> ts =
            b.schedule().window_timesteps(*cfg.combo.denoise_from, cfg.timestep, cfg.denoise_window_steps);
        Tensor uncond_context;
        if (cond.cfg_scale > 1.0) uncond_context = b.encode_prompt(b.tokenize(""));
        for (size_t k = 0; k + 1 < ts.size(); ++k) {
            Tensor eps = b.predict_noise(x, ts[k], context, hint);
            if (cond.cfg_scale > 1.0) {
                Tensor eps_u = b.predict_noise(x, ts[k], uncond_context, hint);
                const float s = static_cast<float>(cond.cfg_scale);
                for (int64_t i = 0; i < eps.numel(); ++i) {
                    eps[i] = eps_u[i] + s * (eps[i] - eps_u[i]);
                }
            }
            x = b.schedule().reverse_step(x, eps, ts[k], ts[k + 1]);
        }
    } else {
        x = b.schedule().add_noise(x0, cfg.timestep, cfg.seed);
    }
    return b.predict_noise(x, cfg.timestep, context, hint, sink);
}

std::vector<NamedFeature> align_stage_outputs(const std::vector<CaptureSink::Named>& stages) {
    int64_t max_h = 0, max_w = 0;
    for (const auto& s : stages) {
        max_h = std::max(max_h, s.value.dim(1));
        max_w = std::max(max_w, s.value.dim(2));
    }
    std::vector<NamedFeature> out;
    out.reserve(stages.size());
    for (const auto& s : stages) {
        Tensor aligned = (s.value.dim(1) == max_h && s.value.dim(2) == max_w)
                             ? s.value
                             : core::bilinear_resize(s.value, max_h, max_w);
        out.push_back({s.name, std::move(aligned)});
    }
    return out;
}

// Mean over layers of token-sliced attention maps, each resized to the target.
Tensor assemble_attention(const std::vector<CaptureSink::AttnMap>& maps, int64_t tokens,
                          std::pair<int64_t, int64_t> resolution) {
    if (maps.empty()) throw std::runtime_error("no cross-attention layers were captured");
    const auto [ah, aw] = resolution;
    Tensor acc = Tensor::zeros({tokens, ah, aw});
    for (const auto& m : maps) {
        if (m.probs.dim(1) < tokens) {
            throw std::runtime_error("attention map has fewer columns than prompt tokens");
        }
        Tensor per_token({tokens, m.h, m.w});
        for (int64_t tk = 0; tk < tokens; ++tk) {
            for (int64_t i = 0; i < m.h * m.w; ++i) {
                per_token.data()[tk * m.h * m.w + i] = m.probs.at(i, tk);
            }
        }
        add_inplace(acc, core::bilinear_resize(per_token, ah, aw));
    }
    scale_inplace(acc, 1.0f / static_cast<float>(maps.size()));
    return acc;
}

}  // namespace

FeatureBundle extract(const core::Image& image, const std::string& image_id,
                      const ExtractionConfig& cfg, DiffusionBackend& b,
                      techniques::TechniqueContext& ctx) {
    cfg.validate(b.schedule());
    const techniques::ResolvedConditioning cond =
        techniques::apply_combo(cfg.combo, image, cfg.base_prompt, ctx, image_id);

    techniques::LoraPatch patch;
    if (cond.lora_id) {
        patch = techniques::LoraPatch::apply(b.unet_params(), cond.lora_path, cond.lora_strength);
    }

    const Tensor x0 = b.encode_image(image);

    FeatureBundle bundle;
    bundle.image_id = image_id;
    bundle.combo_id = cfg.combo.combo_id;
    bundle.timestep = cfg.timestep;
    bundle.seed = cfg.seed;
    bundle.model_fingerprint = b.fingerprint();

    const bool caption_prompts =
        cfg.combo.prompt_source == store::TechniqueCombo::PromptSource::per_image_caption;
    const bool attention_separately = cfg.capture_attention && caption_prompts;

    {
        backend::Tokenization tok = b.tokenize(cond.prompt);
        CaptureSink sink;
        sink.want_stage_outputs = cfg.capture_conv;
        sink.want_cross_attention = cfg.capture_attention && !attention_separately;
        run_capture_pass(x0, cfg, b, cond, b.encode_prompt(tok), &sink);
        if (cfg.capture_conv) bundle.conv_features = align_stage_outputs(sink.stage_outputs);
        if (sink.want_cross_attention) {
            bundle.attention_feature =
                assemble_attention(sink.cross_attention, tok.prompt_len(), cfg.attention_resolution);
            bundle.attention_tokens = tok.tokens;
        }
    }
    if (attention_separately) {
        // Attention features always use the fixed manual prompt, even when the
        // conv pass runs on captions.
        backend::Tokenization tok = b.tokenize(cfg.attention_prompt);
        CaptureSink sink;
        sink.want_cross_attention = true;
        run_capture_pass(x0, cfg, b, cond, b.encode_prompt(tok), &sink);
        bundle.attention_feature =
            assemble_attention(sink.cross_attention, tok.prompt_len(), cfg.attention_resolution);
        bundle.attention_tokens = tok.tokens;
    }

    if (patch.active()) patch.revert();
    bundle.validate();
    return bundle;
}

std::vector<NamedFeature> dump_block_activations(const core::Image& image,
                                                 const ExtractionConfig& cfg, DiffusionBackend& b,
                                                 techniques::TechniqueContext& ctx) {
    cfg.validate(b.schedule());
    const techniques::ResolvedConditioning cond =
        techniques::apply_combo(cfg.combo, image, cfg.base_prompt, ctx, "trace");

    techniques::LoraPatch patch;
    if (cond.lora_id) {
        patch = techniques::LoraPatch::apply(b.unet_params(), cond.lora_path, cond.lora_strength);
    }

    const Tensor x0 = b.encode_image(image);
    const Tensor x_t = b.schedule().add_noise(x0, cfg.timestep, cfg.seed);
    const Tensor* hint = cond.control_image ? &*cond.control_image : nullptr;

    CaptureSink sink;
    sink.want_block_trace = true;
    Tensor context = b.encode_prompt(b.tokenize(cond.prompt));
    Tensor eps = b.predict_noise(x_t, cfg.timestep, context, hint, &sink);

    std::vector<NamedFeature> out;
    out.push_back({"input", x0});
    out.push_back({"noisy", x_t});
    for (auto& n : sink.block_trace) out.push_back({n.name, std::move(n.value)});
    out.push_back({"predicted_noise", std::move(eps)});

    if (patch.active()) patch.revert();
    return out;
}

}  // namespace gate::extract
