#include "animkit/model.hpp"

namespace animkit {

namespace {

DenoiserConfig denoiser_config(const ModelConfig& cfg) {
    DenoiserConfig d;
    d.ctx_dim = cfg.text_dim;
    d.separate_visual_xattn = cfg.separate_visual_xattn;
    d.max_frames = cfg.frames;
    return d;
}

}  // namespace

Model::Model(ModelConfig cfg_, Vocabulary vocab_)
    : cfg(cfg_),
      vocab(std::move(vocab_)),
      reg(cfg_.init_seed),
      ae(reg, cfg_.size),
      backbone(reg, cfg_.size, cfg_.patch, cfg_.backbone_dim),
      vproj(reg, cfg_.backbone_dim, cfg_.text_dim),
      embedder(reg, vocab.size(), cfg_.text_dim),
      reweight(reg, cfg_.text_dim, 4, cfg_.frames),
      denoiser(reg, denoiser_config(cfg_)),
      sched(make_schedule(cfg_.timesteps, cfg_.beta_start, cfg_.beta_end)),
      prior{cfg_.prior_alpha_first, cfg_.prior_alpha_last} {
    ae.latent_scale = cfg.latent_scale;
}

nn::Var Model::text_context_var(nn::Graph& g, const std::vector<std::string>& prompts,
                                int frames) const {
    const int B = (int)prompts.size();
    const int L = cfg.text_len, D = cfg.text_dim;
    Tensor emb(Shape{B, L, D});
    Tensor mask(Shape{B, L});
    for (int b = 0; b < B; ++b) {
        TokenSequence seq = tokenize(prompts[(size_t)b], vocab, L);
        Tensor e = embedder.embed(seq);
        std::copy_n(e.data.begin(), (int64_t)L * D, emb.data.begin() + (int64_t)b * L * D);
        for (int l = 0; l < L; ++l) mask.at2(b, l) = seq.mask[(size_t)l] ? 1.0 : 0.0;
    }
    nn::Var emb_v = g.constant(emb);
    nn::Var w = reweight.weights_var(g, emb_v, mask);        // [B,Fmax,L]
    w = ad::narrow(w, 1, 0, frames);                         // [B,F,L]
    nn::Var weighted = reweight.apply_var(g, w, emb_v);      // [B,F,L,D]
    return ad::reshape(weighted, Shape{B * frames, L, D});
}

nn::Var Model::visual_context_var(nn::Graph& g, const Tensor& backbone_feats) const {
    if (backbone_feats.ndim() != 3) throw Error("visual_context: expects [B,Nv,Dv]");
    return vproj.fwd(g, g.constant(backbone_feats));
}

Tensor Model::backbone_features(const StillImage& image) const {
    Tensor f = backbone.extract(image);
    f.shape = Shape{1, f.dim(0), f.dim(1)};
    return f;
}

Tensor Model::predict_noise(const Tensor& spatial_input, const std::vector<int>& t,
                            const std::vector<std::string>& prompts,
                            const Tensor& backbone_feats, bool include_motion) const {
    if (spatial_input.ndim() != 5) throw Error("predict_noise: expects [B,F,10,h,w]");
    const int F = spatial_input.dim(1);
    nn::Graph g;
    nn::Var text_ctx = text_context_var(g, prompts, F);
    nn::Var vis = visual_context_var(g, backbone_feats);
    return denoiser.fwd(g, g.constant(spatial_input), t, text_ctx, vis, include_motion).val();
}

std::unique_ptr<Model> make_model(const ModelConfig& cfg, const Vocabulary& vocab) {
    return std::make_unique<Model>(cfg, vocab);
}

}  // namespace animkit
