#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gate/backend/backend.hpp"
#include "gate/core/image.hpp"
#include "gate/store/bundle.hpp"
#include "gate/techniques/combo.hpp"

namespace gate::extract {

struct ExtractionConfig {
    int timestep = 50;
    store::TechniqueCombo combo;
    bool capture_conv = true;
    bool capture_attention = false;
    uint64_t seed = 0;
    std::pair<int64_t, int64_t> attention_resolution = {64, 64};
    int denoise_window_steps = 5;
    std::string base_prompt;       // raw-pipeline prompt when the combo sets none
    std::string attention_prompt;  // fixed manual prompt for the attention pass

    void validate(const backend::NoiseSchedule& schedule) const;
};

// VAE-encode to latent space; deterministic (distribution mode).
core::Tensor encode_to_latent(const core::Image& rgb, const backend::DiffusionBackend& b);

// Forward diffusion of the backend's schedule.
core::Tensor add_noise(const core::Tensor& x0, int t, uint64_t seed,
                       const backend::DiffusionBackend& b);

// One extraction pass: encode, noise to t (optionally after a short denoising
// window from combo.denoise_from), run the denoiser with capture hooks, and
// assemble the aligned feature bundle.
store::FeatureBundle extract(const core::Image& image, const std::string& image_id,
                             const ExtractionConfig& cfg, backend::DiffusionBackend& b,
                             techniques::TechniqueContext& ctx);

// Fig-4-style trace: input latent, noisy latent, every interior block output,
// and the predicted noise.
std::vector<store::NamedFeature> dump_block_activations(const core::Image& image,
                                                        const ExtractionConfig& cfg,
                                                        backend::DiffusionBackend& b,
                                                        techniques::TechniqueContext& ctx);

}  // namespace gate::extract
