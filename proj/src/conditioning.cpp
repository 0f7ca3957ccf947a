#include "animkit/conditioning.hpp"

#include <cmath>

namespace animkit {

Autoencoder::Autoencoder(nn::Registry& reg, int image_size) {
    if (image_size % 4 != 0) throw Error("Autoencoder: image size must be divisible by 4");
    e1_ = nn::Conv2d(reg, "autoencoder.enc1", "autoencoder", 3, 32, 3, 1, 1);
    e2_ = nn::Conv2d(reg, "autoencoder.enc2", "autoencoder", 32, 64, 3, 2, 1);
    e3_ = nn::Conv2d(reg, "autoencoder.enc3", "autoencoder", 64, 64, 3, 2, 1);
    e4_ = nn::Conv2d(reg, "autoencoder.enc4", "autoencoder", 64, 64, 3, 1, 1);
    e5_ = nn::Conv2d(reg, "autoencoder.enc5", "autoencoder", 64, 4, 3, 1, 1);
    d1_ = nn::Conv2d(reg, "autoencoder.dec1", "autoencoder", 4, 64, 3, 1, 1);
    d2_ = nn::Conv2d(reg, "autoencoder.dec2", "autoencoder", 64, 64, 3, 1, 1);
    d3_ = nn::Conv2d(reg, "autoencoder.dec3", "autoencoder", 64, 32, 3, 1, 1);
    d4_ = nn::Conv2d(reg, "autoencoder.dec4", "autoencoder", 32, 32, 3, 1, 1);
    d5_ = nn::Conv2d(reg, "autoencoder.dec5", "autoencoder", 32, 3, 3, 1, 1);
}

nn::Var Autoencoder::encode_var(nn::Graph& g, nn::Var x) const {
    x = ad::silu(e1_.fwd(g, x));
    x = ad::silu(e2_.fwd(g, x));
    x = ad::silu(e3_.fwd(g, x));
    x = ad::silu(e4_.fwd(g, x));
    return e5_.fwd(g, x);
}

nn::Var Autoencoder::decode_var(nn::Graph& g, nn::Var z) const {
    z = ad::silu(d1_.fwd(g, z));
    z = ad::silu(d2_.fwd(g, z));
    z = ad::silu(d3_.fwd(g, ad::upsample_nearest2(z)));
    z = ad::silu(d4_.fwd(g, ad::upsample_nearest2(z)));
    return d5_.fwd(g, z);
}

Tensor Autoencoder::encode(const Tensor& images) const {
    if (images.ndim() != 4 || images.dim(1) != 3) throw Error("encode: expects [B,3,S,S]");
    if (images.dim(2) % 4 != 0 || images.dim(3) % 4 != 0)
        throw Error("encode: spatial size must be divisible by 4");
    nn::Graph g;
    Tensor z = encode_var(g, g.constant(images)).val();
    for (auto& v : z.data) v *= latent_scale;
    return z;
}

Tensor Autoencoder::decode(const Tensor& latents) const {
    if (latents.ndim() != 4 || latents.dim(1) != 4) throw Error("decode: expects [B,4,s,s]");
    if (!latents.all_finite()) throw Error("decode: non-finite latent input");
    Tensor z = latents;
    for (auto& v : z.data) v /= latent_scale;
    nn::Graph g;
    Tensor img = decode_var(g, g.constant(z)).val();
    for (auto& v : img.data) v = std::clamp(v, 0.0, 1.0);
    return img;
}

ReferenceLatent Autoencoder::encode_reference(const StillImage& image) const {
    Tensor batch = image.pixels;
    batch.shape = Shape{1, 3, image.height(), image.width()};
    Tensor z = encode(batch);
    ReferenceLatent out;
    out.data = z;
    out.data.shape = Shape{z.dim(1), z.dim(2), z.dim(3)};
    return out;
}

StillImage Autoencoder::decode_latent(const Tensor& latent) const {
    if (latent.ndim() != 3 || latent.dim(0) != 4) throw Error("decode_latent: expects [4,s,s]");
    Tensor batch = latent;
    batch.shape = Shape{1, 4, latent.dim(1), latent.dim(2)};
    Tensor img = decode(batch);
    StillImage out;
    out.pixels = img;
    out.pixels.shape = Shape{3, img.dim(2), img.dim(3)};
    return out;
}

PatchBackbone::PatchBackbone(nn::Registry& reg, int image_size, int patch, int dim)
    : image_size_(image_size), patch_(patch), dim_(dim) {
    if (image_size % patch != 0) throw Error("PatchBackbone: size must be divisible by patch");
    const int side = image_size / patch;
    tokens_ = side * side;
    const int in = 3 * patch * patch;
    embed_ = &reg.create("patch_backbone.embed", "patch_backbone", Shape{dim, in},
                         nn::Init::FanInUniform, (double)in);
    for (int i = 0; i < 2; ++i) {
        const std::string base = "patch_backbone.mix" + std::to_string(i);
        mix_[i].ln1_g = &reg.create(base + ".ln1.gamma", "patch_backbone", Shape{dim}, nn::Init::One);
        mix_[i].ln1_b = &reg.create(base + ".ln1.beta", "patch_backbone", Shape{dim}, nn::Init::Zero);
        mix_[i].token_w = &reg.create(base + ".token.weight", "patch_backbone",
                                      Shape{tokens_, tokens_}, nn::Init::FanInUniform,
                                      (double)tokens_);
        mix_[i].ln2_g = &reg.create(base + ".ln2.gamma", "patch_backbone", Shape{dim}, nn::Init::One);
        mix_[i].ln2_b = &reg.create(base + ".ln2.beta", "patch_backbone", Shape{dim}, nn::Init::Zero);
        mix_[i].chan_w = &reg.create(base + ".chan.weight", "patch_backbone", Shape{dim, dim},
                                     nn::Init::FanInUniform, (double)dim);
    }
}

namespace {

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    const int R = x.dim(0), D = x.dim(1);
    Tensor out(x.shape);
    for (int r = 0; r < R; ++r) {
        double mu = 0.0;
        for (int d = 0; d < D; ++d) mu += x.at2(r, d);
        mu /= D;
        double var = 0.0;
        for (int d = 0; d < D; ++d) {
            const double dv = x.at2(r, d) - mu;
            var += dv * dv;
        }
        var /= D;
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        for (int d = 0; d < D; ++d)
            out.at2(r, d) = (x.at2(r, d) - mu) * inv * gamma[d] + beta[d];
    }
    return out;
}

}  // namespace

Tensor PatchBackbone::mix_block(const Tensor& x, int index) const {
    const Mixer& m = mix_[index];
    const int N = x.dim(0), D = x.dim(1);
    // token mixing over the patch axis
    Tensor y = layer_norm_rows(x, m.ln1_g->value, m.ln1_b->value);
    Tensor t1 = x;
    for (int n = 0; n < N; ++n)
        for (int d = 0; d < D; ++d) {
            double acc = 0.0;
            for (int k = 0; k < N; ++k) acc += m.token_w->value.at2(n, k) * y.at2(k, d);
            t1.at2(n, d) += acc;
        }
    // channel mixing
    Tensor y2 = layer_norm_rows(t1, m.ln2_g->value, m.ln2_b->value);
    Tensor t2 = t1;
    for (int n = 0; n < N; ++n)
        for (int d = 0; d < D; ++d) {
            double acc = 0.0;
            for (int k = 0; k < D; ++k) acc += m.chan_w->value.at2(d, k) * y2.at2(n, k);
            t2.at2(n, d) += acc;
        }
    return t2;
}

Tensor PatchBackbone::extract(const StillImage& image) const {
    if (image.height() != image_size_ || image.width() != image_size_)
        throw Error("PatchBackbone: image size mismatch (expected " +
                    std::to_string(image_size_) + ")");
    const int side = image_size_ / patch_;
    const int in = 3 * patch_ * patch_;
    Tensor patches(Shape{tokens_, in});
    for (int py = 0; py < side; ++py)
        for (int px = 0; px < side; ++px) {
            const int tok = py * side + px;
            int col = 0;
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < patch_; ++y)
                    for (int x = 0; x < patch_; ++x)
                        patches.at2(tok, col++) =
                            image.pixels.at3(c, py * patch_ + y, px * patch_ + x);
        }
    Tensor tokens(Shape{tokens_, dim_});
    for (int n = 0; n < tokens_; ++n)
        for (int d = 0; d < dim_; ++d) {
            double acc = 0.0;
            for (int k = 0; k < in; ++k) acc += embed_->value.at2(d, k) * patches.at2(n, k);
            tokens.at2(n, d) = acc;
        }
    tokens = mix_block(tokens, 0);
    tokens = mix_block(tokens, 1);
    return tokens;
}

VisualTokens extract_visual_tokens(const StillImage& image, const PatchBackbone& backbone,
                                   const VisualProjection& projection) {
    const Tensor feats = backbone.extract(image);
    nn::Graph g;
    VisualTokens out;
    out.tokens = projection.fwd(g, g.constant(feats)).val();
    return out;
}

Tensor frame_embedding(int frames, int height, int width) {
    if (frames < 1) throw Error("frame_embedding: frames must be >= 1");
    Tensor out(Shape{frames, 1, height, width});
    for (int f = 0; f < frames; ++f) {
        const double v = frames == 1 ? 0.0 : (double)f / (double)(frames - 1);
        const int64_t n = (int64_t)height * width;
        std::fill_n(out.data.begin() + (int64_t)f * n, n, v);
    }
    return out;
}

Tensor assemble_input(const Tensor& noise, const Tensor& reference,
                      const std::vector<int>& levels, int frames,
                      const std::vector<double>* frame_positions) {
    if (noise.ndim() != 5 || noise.dim(2) != 4) throw Error("assemble_input: noise [B,F,4,h,w]");
    if (reference.ndim() != 4 || reference.dim(1) != 4)
        throw Error("assemble_input: reference [B,4,h,w]");
    const int B = noise.dim(0), F = noise.dim(1), h = noise.dim(3), w = noise.dim(4);
    if (F != frames) throw Error("assemble_input: frame count mismatch");
    if (reference.dim(0) != B || reference.dim(2) != h || reference.dim(3) != w)
        throw Error("assemble_input: reference shape mismatch");
    if ((int)levels.size() != B) throw Error("assemble_input: one level per sample required");
    if (frame_positions && (int)frame_positions->size() != B * F)
        throw Error("assemble_input: frame_positions must have B*F entries");

    const Tensor femb = frame_embedding(F, h, w);
    const int64_t plane = (int64_t)h * w;
    Tensor out(Shape{B, F, 10, h, w});
    for (int b = 0; b < B; ++b) {
        const Tensor imap = level_to_map(levels[(size_t)b], h, w);
        for (int f = 0; f < F; ++f) {
            double* dst = out.data.data() + (((int64_t)b * F + f) * 10) * plane;
            const double* nz = noise.data.data() + (((int64_t)b * F + f) * 4) * plane;
            std::copy_n(nz, 4 * plane, dst);
            const double* rf = reference.data.data() + ((int64_t)b * 4) * plane;
            std::copy_n(rf, 4 * plane, dst + 4 * plane);
            std::copy_n(imap.data.data(), plane, dst + 8 * plane);
            if (frame_positions) {
                std::fill_n(dst + 9 * plane, plane, (*frame_positions)[(size_t)(b * F + f)]);
            } else {
                std::copy_n(femb.data.data() + (int64_t)f * plane, plane, dst + 9 * plane);
            }
        }
    }
    return out;
}

}  // namespace animkit
