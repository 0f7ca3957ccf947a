#include <cmath>

#include "animkit/denoiser.hpp"
#include "animkit/rng.hpp"
#include "doctest.h"

using namespace animkit;

namespace {

Tensor randn(Shape s, uint64_t seed, double scale = 1.0) {
    RandomStream rs(seed);
    Tensor t(std::move(s));
    for (auto& v : t.data) v = rs.normal() * scale;
    return t;
}

struct Fixture {
    nn::Registry reg;
    DenoiserConfig cfg;
    VideoDenoiser net;

    explicit Fixture(uint64_t seed, bool separate_visual = true)
        : reg(seed), cfg(make_cfg(separate_visual)), net(reg, cfg) {}

    static DenoiserConfig make_cfg(bool separate_visual) {
        DenoiserConfig c;
        c.max_frames = 4;
        c.separate_visual_xattn = separate_visual;
        return c;
    }
};

}  // namespace

TEST_CASE("denoiser: output shape contract") {
    Fixture fx(1);
    const int B = 2, F = 4, h = 8;
    const Tensor x = randn({B, F, 10, h, h}, 2, 0.5);
    const Tensor text = randn({B * F, 16, 64}, 3, 0.3);
    const Tensor vis = randn({B, 16, 64}, 4, 0.3);
    nn::Graph g;
    nn::Var out = fx.net.fwd(g, g.constant(x), {7, 12}, g.constant(text), g.constant(vis), true);
    CHECK(same_shape(out.val().shape, Shape{B, F, 4, h, h}));
}

TEST_CASE("denoiser: zero-initialized motion modules are the identity at start") {
    Fixture fx(5);
    const int B = 1, F = 4, h = 8;
    const Tensor x = randn({B, F, 10, h, h}, 6, 0.5);
    const Tensor text = randn({B * F, 16, 64}, 7, 0.3);
    const Tensor vis = randn({B, 16, 64}, 8, 0.3);

    nn::Graph g1, g2;
    Tensor with_motion =
        fx.net.fwd(g1, g1.constant(x), {9}, g1.constant(text), g1.constant(vis), true).val();
    Tensor without =
        fx.net.fwd(g2, g2.constant(x), {9}, g2.constant(text), g2.constant(vis), false).val();
    CHECK(max_abs_diff(with_motion, without) <= 1e-5);

    // and per-frame: the frozen image model applied to frame n alone agrees
    for (int f = 0; f < F; ++f) {
        Tensor xf(Shape{1, 1, 10, h, h});
        std::copy_n(x.data.begin() + (int64_t)f * 10 * h * h, (int64_t)10 * h * h,
                    xf.data.begin());
        Tensor tf(Shape{1, 16, 64});
        std::copy_n(text.data.begin() + (int64_t)f * 16 * 64, (int64_t)16 * 64, tf.data.begin());
        nn::Graph g;
        Tensor single =
            fx.net.fwd(g, g.constant(xf), {9}, g.constant(tf), g.constant(vis), false).val();
        Tensor slice(Shape{1, 1, 4, h, h});
        std::copy_n(with_motion.data.begin() + (int64_t)f * 4 * h * h, (int64_t)4 * h * h,
                    slice.data.begin());
        CHECK(max_abs_diff(single, slice) <= 1e-5);
    }
}

TEST_CASE("denoiser: nonzero motion modules change the per-frame prediction") {
    Fixture fx(9);
    for (const auto& p : fx.reg.all())
        if (p->module == "motion") {
            RandomStream rs(derive_seed(10, p->name));
            for (auto& v : p->value.data) v = rs.normal() * 0.1;
        }
    const Tensor x = randn({1, 4, 10, 8, 8}, 11, 0.5);
    const Tensor text = randn({4, 16, 64}, 12, 0.3);
    const Tensor vis = randn({1, 16, 64}, 13, 0.3);
    nn::Graph g1, g2;
    Tensor a = fx.net.fwd(g1, g1.constant(x), {3}, g1.constant(text), g1.constant(vis), true).val();
    Tensor b = fx.net.fwd(g2, g2.constant(x), {3}, g2.constant(text), g2.constant(vis), false).val();
    CHECK(max_abs_diff(a, b) > 1e-4);
}

TEST_CASE("denoiser: deterministic and batch-permutation equivariant") {
    Fixture fx(14);
    const int B = 2, F = 4, h = 8;
    const Tensor x = randn({B, F, 10, h, h}, 15, 0.5);
    const Tensor text = randn({B * F, 16, 64}, 16, 0.3);
    const Tensor vis = randn({B, 16, 64}, 17, 0.3);
    auto run = [&](const Tensor& xi, const std::vector<int>& t, const Tensor& ti,
                   const Tensor& vi) {
        nn::Graph g;
        return fx.net.fwd(g, g.constant(xi), t, g.constant(ti), g.constant(vi), true).val();
    };
    Tensor a = run(x, {5, 11}, text, vis);
    Tensor b = run(x, {5, 11}, text, vis);
    CHECK(max_abs_diff(a, b) == 0.0);

    // swap the two batch entries everywhere
    Tensor xs = x, ts = text, vs = vis;
    const int64_t xb = x.numel() / B, tb = text.numel() / B, vb = vis.numel() / B;
    for (int64_t k = 0; k < xb; ++k) std::swap(xs.data[(size_t)k], xs.data[(size_t)(xb + k)]);
    for (int64_t k = 0; k < tb; ++k) std::swap(ts.data[(size_t)k], ts.data[(size_t)(tb + k)]);
    for (int64_t k = 0; k < vb; ++k) std::swap(vs.data[(size_t)k], vs.data[(size_t)(vb + k)]);
    Tensor swapped = run(xs, {11, 5}, ts, vs);
    const int64_t ob = a.numel() / B;
    for (int64_t k = 0; k < ob; ++k) {
        CHECK(swapped.data[(size_t)k] == doctest::Approx(a.data[(size_t)(ob + k)]).epsilon(1e-9));
        CHECK(swapped.data[(size_t)(ob + k)] == doctest::Approx(a.data[(size_t)k]).epsilon(1e-9));
    }
}

TEST_CASE("denoiser: concatenated-context wiring also runs") {
    Fixture fx(18, /*separate_visual=*/false);
    const Tensor x = randn({1, 4, 10, 8, 8}, 19, 0.5);
    const Tensor text = randn({4, 16, 64}, 20, 0.3);
    const Tensor vis = randn({1, 16, 64}, 21, 0.3);
    nn::Graph g;
    Tensor out = fx.net.fwd(g, g.constant(x), {2}, g.constant(text), g.constant(vis), true).val();
    CHECK(same_shape(out.shape, Shape{1, 4, 4, 8, 8}));
    // no separate visual cross-attention parameters were created
    for (const auto& p : fx.reg.all()) CHECK(p->name.find("xvis") == std::string::npos);
}

TEST_CASE("denoiser: shape errors") {
    Fixture fx(22);
    const Tensor x = randn({1, 4, 9, 8, 8}, 23);
    nn::Graph g;
    CHECK_THROWS_AS(
        fx.net.fwd(g, g.constant(x), {1}, g.constant(randn({4, 16, 64}, 24)),
                   g.constant(randn({1, 16, 64}, 25)), true),
        Error);
    const Tensor ok = randn({1, 4, 10, 8, 8}, 26);
    CHECK_THROWS_AS(
        fx.net.fwd(g, g.constant(ok), {1, 2}, g.constant(randn({4, 16, 64}, 27)),
                   g.constant(randn({1, 16, 64}, 28)), true),
        Error);
}

TEST_CASE("denoiser: parameter partition is disjoint and exhaustive") {
    Fixture fx(29);
    // add the other model modules so the partition sees the full stack
    fx.reg.create("autoencoder.enc1.weight_extra", "autoencoder", Shape{2}, nn::Init::Zero);
    fx.reg.create("text_embedder.table_extra", "text_embedder", Shape{2}, nn::Init::Zero);
    fx.reg.create("patch_backbone.embed_extra", "patch_backbone", Shape{2}, nn::Init::Zero);
    fx.reg.create("visual_projection.proj_extra", "visual_projection", Shape{2}, nn::Init::Zero);
    fx.reg.create("reweight_head.proj_extra", "reweight_head", Shape{2}, nn::Init::Zero);

    auto [frozen, trainable] = parameter_partition(fx.reg);
    CHECK(frozen.size() + trainable.size() == fx.reg.all().size());
    for (const auto& f : frozen)
        for (const auto& t : trainable) CHECK(f != t);

    auto contains = [](const std::vector<std::string>& v, const std::string& s) {
        for (const auto& x : v)
            if (x == s) return true;
        return false;
    };
    CHECK(contains(frozen, "autoencoder.enc1.weight_extra"));
    CHECK(contains(frozen, "unet.conv_in.weight"));
    CHECK(contains(trainable, "reweight_head.proj_extra"));
    CHECK(contains(trainable, "motion.m0.attn.out.weight"));
    CHECK(contains(trainable, "visual_projection.proj_extra"));

    fx.reg.create("mystery.param", "mystery", Shape{2}, nn::Init::Zero);
    CHECK_THROWS_WITH_AS(parameter_partition(fx.reg), doctest::Contains("partition incomplete"),
                         Error);
}
