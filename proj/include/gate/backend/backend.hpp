#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "gate/backend/clip_text.hpp"
#include "gate/backend/controlnet.hpp"
#include "gate/backend/schedule.hpp"
#include "gate/backend/unet.hpp"
#include "gate/backend/vae.hpp"

namespace gate::backend {

struct BackendConfig {
    std::string family = "tiny";  // "tiny" or "sd15" (same topology, different width)
    UNetConfig unet;
    VaeConfig vae;
    TextEncoderConfig text;
    std::vector<int64_t> control_hint_channels;
    ScheduleConfig schedule;
    uint64_t init_seed = 0;  // stand-in weight seed when no weights are given

    // Optional pretrained weights: a directory in the per-component layout or
    // a single consolidated tensor file. Empty means seeded random init.
    std::filesystem::path weights;
    bool with_controlnet = true;

    static BackendConfig tiny(uint64_t seed = 20240613);
    static BackendConfig sd15();
};

// A latent diffusion model bundled with its scheduler. Forward passes are
// single-threaded and deterministic given (inputs, seed, weights); one
// instance per thread of work.
class DiffusionBackend {
public:
    explicit DiffusionBackend(BackendConfig cfg);

    const BackendConfig& config() const { return cfg_; }
    const std::string& fingerprint() const { return fingerprint_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    int latent_channels() const { return static_cast<int>(cfg_.vae.latent_channels); }
    int latent_scale() const { return vae_->latent_scale(); }
    const UNet& unet() const { return *unet_; }

    Tensor encode_image(const Tensor& rgb) const;  // VAE mode, deterministic
    Tensor decode_latent(const Tensor& latent) const;
    Tokenization tokenize(const std::string& prompt) const { return text_->tokenize(prompt); }
    Tensor encode_prompt(const Tokenization& tok) const { return text_->encode(tok); }

    // One denoiser evaluation. `control_hint`, when present, routes through
    // the control module.
    Tensor predict_noise(const Tensor& x_t, int t, const Tensor& context,
                         const Tensor* control_hint = nullptr, CaptureSink* sink = nullptr) const;

    ParamStore& unet_params() { return unet_ps_; }
    ParamStore& control_params() { return control_ps_; }
    const ParamStore& unet_params() const { return unet_ps_; }

private:
    BackendConfig cfg_;
    NoiseSchedule schedule_;
    ParamStore unet_ps_, vae_ps_, text_ps_, control_ps_;
    std::unique_ptr<UNet> unet_;
    std::unique_ptr<Vae> vae_;
    std::unique_ptr<TextEncoder> text_;
    std::unique_ptr<ControlNet> control_;
    std::string fingerprint_;
};

}  // namespace gate::backend
