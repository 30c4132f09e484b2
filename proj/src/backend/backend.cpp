#include "gate/backend/backend.hpp"

#include <sstream>

#include "gate/backend/sd_weights.hpp"
#include "gate/core/rng.hpp"

namespace gate::backend {

BackendConfig BackendConfig::tiny(uint64_t seed) {
    BackendConfig c;
    c.family = "tiny";
    c.unet.base_channels = 8;
    c.unet.channel_mult = {1, 2, 4, 4};
    c.unet.stage_attention = {true, true, true, false};
    c.unet.res_blocks = 2;
    c.unet.heads = 2;
    c.unet.context_dim = 16;
    c.unet.norm_groups = 4;
    c.vae.base_channels = 8;
    c.vae.channel_mult = {1, 2, 4, 4};
    c.vae.res_blocks = 1;
    c.vae.norm_groups = 4;
    c.text.dim = 16;
    c.text.heads = 2;
    c.text.layers = 2;
    c.text.vocab_size = 4096;
    c.text.pad_to_max = false;
    c.control_hint_channels = {4, 8, 8, 16};
    c.init_seed = seed;
    return c;
}

BackendConfig BackendConfig::sd15() {
    BackendConfig c;
    c.family = "sd15";
    c.unet.base_channels = 320;
    c.unet.channel_mult = {1, 2, 4, 4};
    c.unet.stage_attention = {true, true, true, false};
    c.unet.res_blocks = 2;
    c.unet.heads = 8;
    c.unet.context_dim = 768;
    c.unet.norm_groups = 32;
    c.vae.base_channels = 128;
    c.vae.channel_mult = {1, 2, 4, 4};
    c.vae.res_blocks = 2;
    c.vae.norm_groups = 32;
    c.text.dim = 768;
    c.text.heads = 12;
    c.text.layers = 12;
    c.text.vocab_size = 49408;
    c.text.max_tokens = 77;
    c.text.pad_to_max = true;
    c.control_hint_channels = {16, 32, 96, 256};
    return c;
}

DiffusionBackend::DiffusionBackend(BackendConfig cfg) : cfg_(std::move(cfg)), schedule_(cfg_.schedule) {
    unet_ = std::make_unique<UNet>(unet_ps_, cfg_.unet);
    vae_ = std::make_unique<Vae>(vae_ps_, cfg_.vae);
    text_ = std::make_unique<TextEncoder>(text_ps_, cfg_.text);
    if (cfg_.with_controlnet) {
        control_ = std::make_unique<ControlNet>(control_ps_, cfg_.unet, cfg_.control_hint_channels);
    }

    if (cfg_.weights.empty()) {
        unet_ps_.seed_init(core::derive_seed(cfg_.init_seed, "unet"));
        vae_ps_.seed_init(core::derive_seed(cfg_.init_seed, "vae"));
        text_ps_.seed_init(core::derive_seed(cfg_.init_seed, "text"));
        if (control_) control_ps_.seed_init(core::derive_seed(cfg_.init_seed, "control"));
        std::ostringstream fp;
        fp << cfg_.family << "-seed" << cfg_.init_seed << "-b" << cfg_.unet.base_channels;
        fingerprint_ = fp.str();
    } else {
        LoadedCheckpoint ck = load_checkpoint_weights(cfg_.weights, unet_ps_, vae_ps_, text_ps_,
                                                      control_ ? &control_ps_ : nullptr);
        if (ck.bpe) text_->attach_bpe(ck.bpe);
        fingerprint_ = cfg_.family + "-" + ck.digest;
    }
}

Tensor DiffusionBackend::encode_image(const Tensor& rgb) const { return vae_->encode_mode(rgb); }

Tensor DiffusionBackend::decode_latent(const Tensor& latent) const { return vae_->decode(latent); }

Tensor DiffusionBackend::predict_noise(const Tensor& x_t, int t, const Tensor& context,
                                       const Tensor* control_hint, CaptureSink* sink) const {
    if (t < 0 || t > schedule_.max_timestep()) {
        throw std::out_of_range("timestep " + std::to_string(t) + " outside schedule");
    }
    if (control_hint && !control_) {
        throw std::runtime_error("control hint given but the backend has no control module");
    }
    std::optional<ControlResiduals> residuals;
    if (control_hint) residuals = control_->forward(x_t, t, context, *control_hint);
    return unet_->forward(x_t, t, context, residuals ? &*residuals : nullptr, sink);
}

}  // namespace gate::backend
