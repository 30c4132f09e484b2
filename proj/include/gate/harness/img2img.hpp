#pragma once

#include <cstdint>

#include "gate/backend/backend.hpp"
#include "gate/core/image.hpp"
#include "gate/store/bundle.hpp"
#include "gate/techniques/combo.hpp"

namespace gate::harness {

struct Img2ImgParams {
    double strength = 0.8;  // in (0, 1]; fraction of the schedule to repaint
    int steps = 30;
    uint64_t seed = 0;
};

// Generation seam: the evaluation protocol only needs "image in, image out
// under a combo", so synthetic runners can stand in for the real backend.
class Img2ImgRunner {
public:
    virtual ~Img2ImgRunner() = default;
    virtual core::Image run(const core::Image& input, const std::string& prompt,
                            const store::TechniqueCombo& combo, const Img2ImgParams& params) = 0;
};

// Strength-scaled repaint: encode, noise to round(strength * T), denoise down
// to 0 under the resolved conditioning (classifier-free guidance when the
// combo asks for it), decode. Deterministic given the seed.
class BackendImg2Img : public Img2ImgRunner {
public:
    BackendImg2Img(backend::DiffusionBackend& b, techniques::TechniqueContext& ctx)
        : backend_(b), ctx_(ctx) {}
    core::Image run(const core::Image& input, const std::string& prompt,
                    const store::TechniqueCombo& combo, const Img2ImgParams& params) override;

private:
    backend::DiffusionBackend& backend_;
    techniques::TechniqueContext& ctx_;
};

}  // namespace gate::harness
