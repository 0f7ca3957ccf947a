#pragma once

#include "animkit/intensity.hpp"
#include "animkit/media_io.hpp"
#include "animkit/nn.hpp"

namespace animkit {

struct LatentVideo {
    Tensor data;  // [B,F,4,h,w]
    int down = 4;
};

struct ReferenceLatent {
    Tensor data;  // [4,h,w], already in diffusion scale
};

struct VisualTokens {
    Tensor tokens;  // [Nv, D]
};

// Continuous-latent conv autoencoder, 4 latent channels, downsample factor 4.
// Pretrained in-repo, then frozen; `latent_scale` normalizes latents to unit
// spread for the diffusion process.
class Autoencoder {
public:
    Autoencoder() = default;
    Autoencoder(nn::Registry& reg, int image_size);

    // graph paths (used for pretraining); unscaled latents
    nn::Var encode_var(nn::Graph& g, nn::Var images) const;   // [B,3,S,S] -> [B,4,s,s]
    nn::Var decode_var(nn::Graph& g, nn::Var latents) const;  // [B,4,s,s] -> [B,3,S,S]

    // frozen inference; applies latent_scale
    Tensor encode(const Tensor& images) const;          // [B,3,S,S] -> [B,4,s,s]
    Tensor decode(const Tensor& latents) const;         // [B,4,s,s] -> [B,3,S,S], clamped

    ReferenceLatent encode_reference(const StillImage& image) const;
    StillImage decode_latent(const Tensor& latent) const;  // [4,s,s]

    double latent_scale = 1.0;
    int down() const { return 4; }

private:
    nn::Conv2d e1_, e2_, e3_, e4_, e5_;
    nn::Conv2d d1_, d2_, d3_, d4_, d5_;
};

// Frozen random patchifier + two mixing layers; the DINO stand-in.
class PatchBackbone {
public:
    PatchBackbone() = default;
    PatchBackbone(nn::Registry& reg, int image_size, int patch, int dim);

    Tensor extract(const StillImage& image) const;  // [Nv, dim]

    int token_count() const { return tokens_; }
    int dim() const { return dim_; }

private:
    Tensor mix_block(const Tensor& x, int index) const;

    int image_size_ = 0, patch_ = 8, tokens_ = 0, dim_ = 0;
    Parameter* embed_ = nullptr;  // [dim, 3*p*p]
    struct Mixer {
        Parameter *ln1_g, *ln1_b, *token_w, *ln2_g, *ln2_b, *chan_w;
    };
    Mixer mix_[2];
};

// Trainable projection after the frozen backbone.
struct VisualProjection {
    nn::Linear proj;
    VisualProjection() = default;
    VisualProjection(nn::Registry& reg, int in_dim, int out_dim)
        : proj(reg, "visual_projection.proj", "visual_projection", in_dim, out_dim) {}
    nn::Var fwd(nn::Graph& g, nn::Var tokens) const { return proj.fwd(g, tokens); }
};

VisualTokens extract_visual_tokens(const StillImage& image, const PatchBackbone& backbone,
                                   const VisualProjection& projection);

// frame n filled with n/(F-1); F=1 gives a zero map
Tensor frame_embedding(int frames, int height, int width);  // [F,1,h,w]

// Channel order [noise(4) | reference(4) | intensity(1) | frame(1)]; the
// reference latent is tiled identically across frames. `frame_positions`
// (size B*F) overrides the default n/(F-1) frame-channel values, used when a
// single frame is trained at its in-clip position.
Tensor assemble_input(const Tensor& noise, const Tensor& reference,
                      const std::vector<int>& levels, int frames,
                      const std::vector<double>* frame_positions = nullptr);
// noise [B,F,4,h,w], reference [B,4,h,w], levels per sample -> [B,F,10,h,w]

}  // namespace animkit
