#include "gate/harness/img2img.hpp"

#include <cmath>
#include <stdexcept>

#include "gate/store/npz.hpp"
#include "gate/techniques/lora.hpp"

namespace gate::harness {

using core::Tensor;

core::Image BackendImg2Img::run(const core::Image& input, const std::string& prompt,
                                const store::TechniqueCombo& combo, const Img2ImgParams& params) {
    if (params.strength <= 0.0 || params.strength > 1.0) {
        throw std::invalid_argument("img2img strength must be in (0, 1]");
    }
    if (params.steps < 1) throw std::invalid_argument("img2img needs steps >= 1");
    combo.validate();

    techniques::ResolvedConditioning cond =
        techniques::apply_combo(combo, input, prompt, ctx_, "img2img");

    techniques::LoraPatch patch;
    if (cond.lora_id) {
        patch = techniques::LoraPatch::apply(backend_.unet_params(), cond.lora_path, cond.lora_strength);
    }

    const backend::NoiseSchedule& sched = backend_.schedule();
    const int t_start = std::max(1, static_cast<int>(std::llround(params.strength * sched.max_timestep())));
    const int steps = std::min(params.steps, t_start);

    Tensor x0 = backend_.encode_image(input);
    Tensor x = sched.add_noise(x0, t_start, params.seed);

    Tensor context = backend_.encode_prompt(backend_.tokenize(cond.prompt));
    Tensor uncond;
    if (cond.cfg_scale > 1.0) uncond = backend_.encode_prompt(backend_.tokenize(""));
    const Tensor* hint = cond.control_image ? &*cond.control_image : nullptr;

    const std::vector<int> ts = sched.window_timesteps(t_start, 0, steps);
    for (size_t k = 0; k + 1 < ts.size(); ++k) {
        Tensor eps = backend_.predict_noise(x, ts[k], context, hint);
        if (cond.cfg_scale > 1.0) {
            Tensor eps_u = backend_.predict_noise(x, ts[k], uncond, hint);
            const float s = static_cast<float>(cond.cfg_scale);
            for (int64_t i = 0; i < eps.numel(); ++i) eps[i] = eps_u[i] + s * (eps[i] - eps_u[i]);
        }
        x = sched.reverse_step(x, eps, ts[k], ts[k + 1]);
    }

    core::Image out = backend_.decode_latent(x);
    if (patch.active()) patch.revert();
    return out;
}

}  // namespace gate::harness
