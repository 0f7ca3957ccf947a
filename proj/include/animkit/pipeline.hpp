#pragma once

#include "animkit/model.hpp"

namespace animkit {

// eps_uncond + scale * (eps_cond - eps_uncond)
Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double scale);

struct AnimateParams {
    std::string text;
    int level = 5;       // default intensity level
    int steps = 50;      // DDIM sampling steps; inversion uses the same count
    double scale = 2.0;  // classifier-free guidance scale
    uint64_t seed = 0;
};

// End-to-end inference: encode the reference, invert it for the content
// prior, blend into seeded noise per frame, then classifier-free-guided DDIM
// sampling and decoding. Pure given the model; never mutates checkpoint state.
VideoClip animate(const Model& model, const StillImage& image, const AnimateParams& params);

// terminal noise for all frames after the prior blend (exposed for tests)
Tensor initial_video_noise(const Model& model, const Tensor& inv_r0, uint64_t seed);

}  // namespace animkit
