#include "animkit/denoiser.hpp"

namespace animkit {

ResBlock::ResBlock(nn::Registry& r, const std::string& name, const std::string& module, int cin,
                   int cout, int groups, int temb_dim)
    : n1(r, name + ".n1", module, cin, groups),
      n2(r, name + ".n2", module, cout, groups),
      c1(r, name + ".c1", module, cin, cout, 3, 1, 1),
      c2(r, name + ".c2", module, cout, cout, 3, 1, 1),
      temb(r, name + ".temb", module, temb_dim, cout),
      has_skip(cin != cout) {
    if (has_skip) skip = nn::Conv2d(r, name + ".skip", module, cin, cout, 1, 1, 0);
}

nn::Var ResBlock::fwd(nn::Graph& g, nn::Var x, nn::Var t) const {
    nn::Var h = c1.fwd(g, ad::silu(n1.fwd(g, x)));
    h = ad::add_channel_bias(h, temb.fwd(g, t));
    h = c2.fwd(g, ad::silu(n2.fwd(g, h)));
    return ad::add(h, has_skip ? skip.fwd(g, x) : x);
}

AttnBlock::AttnBlock(nn::Registry& r, const std::string& name, const std::string& module,
                     const DenoiserConfig& cfg)
    : ln1(r, name + ".ln1", module, cfg.w1),
      ln2(r, name + ".ln2", module, cfg.w1),
      ln3(r, name + ".ln3", module, cfg.w1),
      self_attn(r, name + ".self", module, cfg.w1, cfg.heads),
      xattn_text(r, name + ".xtext", module, cfg.w1, cfg.ctx_dim, cfg.heads),
      ff(r, name + ".ff", module, cfg.w1, cfg.ff_mult * cfg.w1),
      separate_visual(cfg.separate_visual_xattn) {
    if (separate_visual) {
        ln2v = nn::LayerNorm(r, name + ".ln2v", module, cfg.w1);
        xattn_vis = nn::CrossAttention(r, name + ".xvis", module, cfg.w1, cfg.ctx_dim, cfg.heads);
    }
}

nn::Var AttnBlock::fwd(nn::Graph& g, nn::Var x, nn::Var text_ctx, nn::Var vis_ctx) const {
    const Shape& s = x.val().shape;  // [BF,C,hh,ww]
    const int BF = s[0], C = s[1], hh = s[2], ww = s[3];
    nn::Var tok = ad::reshape(ad::permute(x, {0, 2, 3, 1}), Shape{BF, hh * ww, C});
    tok = ad::add(tok, self_attn.fwd(g, ln1.fwd(g, tok)));
    if (separate_visual) {
        tok = ad::add(tok, xattn_text.fwd(g, ln2.fwd(g, tok), text_ctx));
        tok = ad::add(tok, xattn_vis.fwd(g, ln2v.fwd(g, tok), vis_ctx));
    } else {
        nn::Var ctx = ad::concat({text_ctx, vis_ctx}, 1);
        tok = ad::add(tok, xattn_text.fwd(g, ln2.fwd(g, tok), ctx));
    }
    tok = ad::add(tok, ff.fwd(g, ln3.fwd(g, tok)));
    return ad::permute(ad::reshape(tok, Shape{BF, hh, ww, C}), {0, 3, 1, 2});
}

MotionModule::MotionModule(nn::Registry& r, const std::string& name, int channels_, int heads)
    : ln(r, name + ".ln", "motion", channels_),
      attn(r, name + ".attn", "motion", channels_, heads, /*zero_out=*/true),
      channels(channels_) {}

nn::Var MotionModule::fwd(nn::Graph& g, nn::Var x, int batch, int frames) const {
    const Shape& s = x.val().shape;  // [B*F,C,hh,ww]
    const int C = s[1], hh = s[2], ww = s[3];
    nn::Var seq = ad::reshape(x, Shape{batch, frames, C, hh, ww});
    seq = ad::permute(seq, {0, 3, 4, 1, 2});  // [B,hh,ww,F,C]
    seq = ad::reshape(seq, Shape{batch * hh * ww, frames, C});

    std::vector<double> pos((size_t)frames);
    for (int f = 0; f < frames; ++f) pos[(size_t)f] = (double)f;
    const Tensor pe_rows = nn::sinusoidal_embedding(pos, C);
    Tensor pe(Shape{batch * hh * ww, frames, C});
    for (int r = 0; r < batch * hh * ww; ++r)
        std::copy_n(pe_rows.data.begin(), (int64_t)frames * C,
                    pe.data.begin() + (int64_t)r * frames * C);

    nn::Var y = ad::add_const(ln.fwd(g, seq), pe);
    seq = ad::add(seq, attn.fwd(g, y));

    seq = ad::reshape(seq, Shape{batch, hh, ww, frames, C});
    seq = ad::permute(seq, {0, 3, 4, 1, 2});  // [B,F,C,hh,ww]
    return ad::reshape(seq, Shape{batch * frames, C, hh, ww});
}

VideoDenoiser::VideoDenoiser(nn::Registry& reg, const DenoiserConfig& cfg) : cfg_(cfg) {
    const std::string mod = "spatial_unet";
    temb1_ = nn::Linear(reg, "unet.temb1", mod, cfg.temb_dim, cfg.temb_dim);
    temb2_ = nn::Linear(reg, "unet.temb2", mod, cfg.temb_dim, cfg.temb_dim);
    conv_in_ = nn::Conv2d(reg, "unet.conv_in", mod, cfg.in_ch, cfg.w0, 3, 1, 1);
    res_d0_ = ResBlock(reg, "unet.down0.res", mod, cfg.w0, cfg.w0, cfg.groups, cfg.temb_dim);
    down_ = nn::Conv2d(reg, "unet.down1.conv", mod, cfg.w0, cfg.w1, 3, 2, 1);
    res_d1_ = ResBlock(reg, "unet.down1.res", mod, cfg.w1, cfg.w1, cfg.groups, cfg.temb_dim);
    attn_d1_ = AttnBlock(reg, "unet.down1.attn", mod, cfg);
    res_mid_ = ResBlock(reg, "unet.mid.res", mod, cfg.w1, cfg.w1, cfg.groups, cfg.temb_dim);
    res_u1_ = ResBlock(reg, "unet.up1.res", mod, cfg.w1 * 2, cfg.w1, cfg.groups, cfg.temb_dim);
    attn_u1_ = AttnBlock(reg, "unet.up1.attn", mod, cfg);
    upconv_ = nn::Conv2d(reg, "unet.up0.conv", mod, cfg.w1, cfg.w0, 3, 1, 1);
    res_u0_ = ResBlock(reg, "unet.up0.res", mod, cfg.w0 * 2, cfg.w0, cfg.groups, cfg.temb_dim);
    norm_out_ = nn::GroupNorm(reg, "unet.out.norm", mod, cfg.w0, cfg.groups);
    conv_out_ = nn::Conv2d(reg, "unet.out.conv", mod, cfg.w0, cfg.out_ch, 3, 1, 1);
    m0_ = MotionModule(reg, "motion.m0", cfg.w0, cfg.heads);
    m1_ = MotionModule(reg, "motion.m1", cfg.w1, cfg.heads);
    m2_ = MotionModule(reg, "motion.m2", cfg.w1, cfg.heads);
    m3_ = MotionModule(reg, "motion.m3", cfg.w0, cfg.heads);
}

nn::Var VideoDenoiser::fwd(nn::Graph& g, nn::Var x, const std::vector<int>& t, nn::Var text_ctx,
                           nn::Var vis_tokens, bool include_motion) const {
    const Shape& s = x.val().shape;
    if (s.size() != 5 || s[2] != cfg_.in_ch) throw Error("denoiser: expects [B,F,10,h,w]");
    const int B = s[0], F = s[1], h = s[3], w = s[4];
    if ((int)t.size() != B) throw Error("denoiser: one timestep per sample required");
    const int BF = B * F;
    if (text_ctx.val().ndim() != 3 || text_ctx.val().dim(0) != BF)
        throw Error("denoiser: text context must be [B*F,L,D]");
    if (vis_tokens.val().ndim() != 3 || vis_tokens.val().dim(0) != B)
        throw Error("denoiser: visual tokens must be [B,Nv,D]");

    nn::Var x4 = ad::reshape(x, Shape{BF, cfg_.in_ch, h, w});

    // timestep embedding, repeated per frame
    std::vector<double> pos((size_t)BF);
    for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f) pos[(size_t)(b * F + f)] = (double)t[(size_t)b];
    nn::Var temb = g.constant(nn::sinusoidal_embedding(pos, cfg_.temb_dim));
    temb = temb2_.fwd(g, ad::silu(temb1_.fwd(g, temb)));

    nn::Var vis_ctx = ad::repeat_rows3(vis_tokens, F);  // [BF,Nv,D]

    nn::Var d0 = res_d0_.fwd(g, conv_in_.fwd(g, x4), temb);
    if (include_motion) d0 = m0_.fwd(g, d0, B, F);
    nn::Var d1 = res_d1_.fwd(g, down_.fwd(g, d0), temb);
    d1 = attn_d1_.fwd(g, d1, text_ctx, vis_ctx);
    if (include_motion) d1 = m1_.fwd(g, d1, B, F);

    nn::Var m = res_mid_.fwd(g, d1, temb);

    nn::Var u1 = res_u1_.fwd(g, ad::concat({m, d1}, 1), temb);
    u1 = attn_u1_.fwd(g, u1, text_ctx, vis_ctx);
    if (include_motion) u1 = m2_.fwd(g, u1, B, F);

    nn::Var u0 = upconv_.fwd(g, ad::upsample_nearest2(u1));
    u0 = res_u0_.fwd(g, ad::concat({u0, d0}, 1), temb);
    if (include_motion) u0 = m3_.fwd(g, u0, B, F);

    nn::Var out = conv_out_.fwd(g, ad::silu(norm_out_.fwd(g, u0)));
    return ad::reshape(out, Shape{B, F, cfg_.out_ch, h, w});
}

bool is_frozen_module(const std::string& module) {
    return module == "autoencoder" || module == "spatial_unet" || module == "text_embedder" ||
           module == "patch_backbone";
}

bool is_trainable_module(const std::string& module) {
    return module == "motion" || module == "visual_projection" || module == "reweight_head";
}

std::pair<std::vector<std::string>, std::vector<std::string>> parameter_partition(
    const nn::Registry& reg) {
    std::vector<std::string> frozen, trainable;
    for (const auto& p : reg.all()) {
        if (is_frozen_module(p->module)) {
            frozen.push_back(p->name);
        } else if (is_trainable_module(p->module)) {
            trainable.push_back(p->name);
        } else {
            throw Error("parameter_partition: partition incomplete, unclassified parameter " +
                        p->name + " (module " + p->module + ")");
        }
    }
    return {frozen, trainable};
}

}  // namespace animkit
