#pragma once

#include "animkit/nn.hpp"

namespace animkit {

struct DenoiserConfig {
    int in_ch = 10, out_ch = 4;
    int w0 = 32, w1 = 64;   // channel widths at full / half latent resolution
    int temb_dim = 64;
    int ctx_dim = 64;       // cross-attention width (text and visual tokens)
    int heads = 4;
    int groups = 8;
    int ff_mult = 2;
    bool separate_visual_xattn = true;
    int max_frames = 8;
};

struct ResBlock {
    nn::GroupNorm n1, n2;
    nn::Conv2d c1, c2, skip;
    nn::Linear temb;
    bool has_skip = false;

    ResBlock() = default;
    ResBlock(nn::Registry& r, const std::string& name, const std::string& module, int cin,
             int cout, int groups, int temb_dim);
    nn::Var fwd(nn::Graph& g, nn::Var x, nn::Var t) const;
};

// Spatial transformer block at one resolution: self-attention, text
// cross-attention, optional separate visual cross-attention, feed-forward.
struct AttnBlock {
    nn::LayerNorm ln1, ln2, ln2v, ln3;
    nn::SelfAttention self_attn;
    nn::CrossAttention xattn_text, xattn_vis;
    nn::FeedForward ff;
    bool separate_visual = true;

    AttnBlock() = default;
    AttnBlock(nn::Registry& r, const std::string& name, const std::string& module,
              const DenoiserConfig& cfg);
    nn::Var fwd(nn::Graph& g, nn::Var x, nn::Var text_ctx, nn::Var vis_ctx) const;
};

// Temporal self-attention across the frame axis at every spatial position,
// with sinusoidal frame positions and a zero-initialized output projection so
// the module starts as the identity.
struct MotionModule {
    nn::LayerNorm ln;
    nn::SelfAttention attn;
    int channels = 0;

    MotionModule() = default;
    MotionModule(nn::Registry& r, const std::string& name, int channels, int heads);
    nn::Var fwd(nn::Graph& g, nn::Var x, int batch, int frames) const;  // x [B*F,C,h,w]
};

// Tiny video UNet: frozen spatial stack ("spatial_unet") plus trainable
// motion modules ("motion"). Two resolutions, attention at the lowest one.
class VideoDenoiser {
public:
    VideoDenoiser() = default;
    VideoDenoiser(nn::Registry& reg, const DenoiserConfig& cfg);

    // x [B,F,10,h,w]; t one timestep per sample; text_ctx [B*F,L,D];
    // vis_tokens [B,Nv,D]. Returns [B,F,4,h,w].
    nn::Var fwd(nn::Graph& g, nn::Var x, const std::vector<int>& t, nn::Var text_ctx,
                nn::Var vis_tokens, bool include_motion) const;

    const DenoiserConfig& config() const { return cfg_; }

private:
    DenoiserConfig cfg_;
    nn::Linear temb1_, temb2_;
    nn::Conv2d conv_in_, down_, upconv_, conv_out_;
    nn::GroupNorm norm_out_;
    ResBlock res_d0_, res_d1_, res_mid_, res_u1_, res_u0_;
    AttnBlock attn_d1_, attn_u1_;
    MotionModule m0_, m1_, m2_, m3_;
};

// Disjoint, exhaustive parameter partition; throws if a parameter's module is
// not classified.
std::pair<std::vector<std::string>, std::vector<std::string>> parameter_partition(
    const nn::Registry& reg);

bool is_frozen_module(const std::string& module);
bool is_trainable_module(const std::string& module);

}  // namespace animkit
