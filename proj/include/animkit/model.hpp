#pragma once

#include <memory>

#include "animkit/conditioning.hpp"
#include "animkit/denoiser.hpp"
#include "animkit/schedule.hpp"
#include "animkit/text_control.hpp"

namespace animkit {

struct ModelConfig {
    int frames = 8;
    int size = 32;
    int text_len = 16;
    int text_dim = 64;
    int patch = 8;
    int backbone_dim = 64;
    int timesteps = 100;
    double beta_start = 0.001;
    double beta_end = 0.2;
    bool separate_visual_xattn = true;
    double latent_scale = 1.0;
    double prior_alpha_first = 0.033;
    double prior_alpha_last = 0.016;
    uint64_t init_seed = 0;

    int latent_size() const { return size / 4; }
};

// The full parameter stack: frozen image model (autoencoder, spatial UNet,
// text embedder, patch backbone) plus the trainable motion modules, visual
// projection, and re-weighting head.
class Model {
public:
    Model(ModelConfig cfg, Vocabulary vocab);

    ModelConfig cfg;
    Vocabulary vocab;
    nn::Registry reg;
    Autoencoder ae;
    PatchBackbone backbone;
    VisualProjection vproj;
    TextEmbedder embedder;
    ReweightHead reweight;
    VideoDenoiser denoiser;
    NoiseSchedule sched;
    PriorBlendSchedule prior;
    BucketTable buckets;
    bool has_buckets = false;

    // weighted per-frame text context for a batch of prompts -> [B*F, L, D]
    nn::Var text_context_var(nn::Graph& g, const std::vector<std::string>& prompts,
                             int frames) const;

    // projected visual tokens from precomputed backbone features [B,Nv,Dv]
    nn::Var visual_context_var(nn::Graph& g, const Tensor& backbone_feats) const;

    Tensor backbone_features(const StillImage& image) const;  // [1,Nv,Dv]

    // Inference-path noise prediction. spatial_input [B,F,10,h,w];
    // include_motion=false gives the frozen per-frame image denoiser.
    Tensor predict_noise(const Tensor& spatial_input, const std::vector<int>& t,
                         const std::vector<std::string>& prompts, const Tensor& backbone_feats,
                         bool include_motion) const;
};

std::unique_ptr<Model> make_model(const ModelConfig& cfg, const Vocabulary& vocab);

}  // namespace animkit
