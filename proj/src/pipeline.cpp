#include "animkit/pipeline.hpp"

#include <cmath>
#include <cstdio>

#include "animkit/rng.hpp"

namespace animkit {

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double scale) {
    check_same_shape(eps_cond, eps_uncond, "cfg_combine");
    Tensor out = eps_uncond;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = eps_uncond.data[i] + scale * (eps_cond.data[i] - eps_uncond.data[i]);
    return out;
}

namespace {

// Noise prediction for the one-frame reference video used by the inversion:
// dropped text, default level 5, frame position 0.
Tensor invert_eps(const Model& model, const Tensor& z, int t, const Tensor& ref,
                  const Tensor& feats) {
    const int hs = model.cfg.latent_size();
    Tensor z5 = z;
    z5.shape = Shape{1, 1, 4, hs, hs};
    Tensor ref4 = ref;
    ref4.shape = Shape{1, 4, hs, hs};
    const Tensor input = assemble_input(z5, ref4, {5}, 1);
    Tensor eps = model.predict_noise(input, {t}, {""}, feats, /*include_motion=*/true);
    eps.shape = z.shape;
    return eps;
}

}  // namespace

Tensor initial_video_noise(const Model& model, const Tensor& inv_r0, uint64_t seed) {
    const int F = model.cfg.frames, hs = model.cfg.latent_size();
    RandomStream rng(derive_seed(seed, "animate-noise"));
    Tensor z(Shape{F, 4, hs, hs});
    rng.fill_normal(z);
    const int64_t fvol = (int64_t)4 * hs * hs;
    for (int f = 0; f < F; ++f) {
        Tensor zf(Shape{4, hs, hs});
        std::copy_n(z.data.begin() + (int64_t)f * fvol, fvol, zf.data.begin());
        Tensor blended = prior_blend(zf, inv_r0, f, F, model.prior);
        std::copy_n(blended.data.begin(), fvol, z.data.begin() + (int64_t)f * fvol);
    }
    return z;
}

VideoClip animate(const Model& model, const StillImage& image, const AnimateParams& params) {
    if (params.level < 1 || params.level > 10)
        throw Error("animate: level must be in [1,10], got " + std::to_string(params.level));
    if (params.steps < 1 || params.steps > model.sched.timesteps)
        throw Error("animate: steps must be in [1,T]");
    image.validate();
    if (image.height() != model.cfg.size || image.width() != model.cfg.size)
        throw Error("animate: image must be preprocessed to " + std::to_string(model.cfg.size) +
                    "x" + std::to_string(model.cfg.size));
    {
        TokenSequence seq = tokenize(params.text, model.vocab, model.cfg.text_len);
        bool any_known = false, any_token = false;
        for (size_t i = 0; i < seq.ids.size(); ++i) {
            if (!seq.mask[i]) continue;
            any_token = true;
            if (seq.ids[i] != kUnkId) any_known = true;
        }
        if (any_token && !any_known)
            std::fprintf(stderr, "animkit: prompt has no in-vocabulary words; "
                                 "conditioning on unknown tokens only\n");
    }

    const int F = model.cfg.frames, hs = model.cfg.latent_size();
    const int64_t fvol = (int64_t)4 * hs * hs;

    const ReferenceLatent r0 = model.ae.encode_reference(image);
    const Tensor feats = model.backbone_features(image);

    DenoiserFn inv_model = [&](const Tensor& z, int t) {
        return invert_eps(model, z, t, r0.data, feats);
    };
    const Tensor inv_r0 = ddim_invert(r0.data, inv_model, params.steps, model.sched);

    Tensor z = initial_video_noise(model, inv_r0, params.seed);  // [F,4,h,w]
    Tensor z5 = z;
    z5.shape = Shape{1, F, 4, hs, hs};
    Tensor ref4 = r0.data;
    ref4.shape = Shape{1, 4, hs, hs};

    const std::vector<int> ts = ddim_timesteps(params.steps, model.sched);
    for (int k = 0; k < params.steps; ++k) {
        const int t = ts[(size_t)k];
        const int t_prev = k + 1 < params.steps ? ts[(size_t)(k + 1)] : -1;
        const Tensor input = assemble_input(z5, ref4, {params.level}, F);
        Tensor eps_c = model.predict_noise(input, {t}, {params.text}, feats, true);
        Tensor eps_u = model.predict_noise(input, {t}, {""}, feats, true);
        eps_c.shape = Shape{(int)(F * fvol)};
        eps_u.shape = eps_c.shape;
        Tensor flat = z5;
        flat.shape = eps_c.shape;
        const Tensor eps = cfg_combine(eps_c, eps_u, params.scale);
        flat = ddim_step(flat, eps, t, t_prev, model.sched);
        flat.shape = Shape{1, F, 4, hs, hs};
        z5 = flat;
    }

    Tensor latents = z5;
    latents.shape = Shape{F, 4, hs, hs};
    Tensor frames = model.ae.decode(latents);  // [F,3,S,S]
    VideoClip clip;
    clip.frames = frames;
    clip.fps = 8;
    return clip;
}

}  // namespace animkit
