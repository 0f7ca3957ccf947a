#include "animkit/nn.hpp"

#include <cmath>

namespace animkit::nn {

Parameter& Registry::create(const std::string& name, const std::string& module, Shape shape,
                            Init init, double arg) {
    if (by_name_.count(name)) throw Error("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->module = module;
    p->value = Tensor(shape);
    RandomStream rs(derive_seed(seed_, name));
    switch (init) {
        case Init::Zero:
            break;
        case Init::One:
            std::fill(p->value.data.begin(), p->value.data.end(), 1.0);
            break;
        case Init::FanInUniform: {
            const double bound = std::sqrt(1.0 / arg);
            for (auto& v : p->value.data) v = rs.uniform(-bound, bound);
            break;
        }
        case Init::Normal:
            for (auto& v : p->value.data) v = rs.normal() * arg;
            break;
    }
    Parameter* raw = p.get();
    params_.push_back(std::move(p));
    by_name_[name] = raw;
    return *raw;
}

Parameter* Registry::find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

void Registry::set_trainable_modules(const std::vector<std::string>& modules) {
    for (auto& p : params_) {
        p->requires_grad = false;
        for (const auto& m : modules)
            if (p->module == m) p->requires_grad = true;
    }
}

void Registry::zero_grads() {
    for (auto& p : params_)
        if (p->requires_grad) p->zero_grad();
}

std::vector<std::string> Registry::module_names() const {
    std::vector<std::string> out;
    for (const auto& p : params_) {
        bool seen = false;
        for (const auto& m : out) seen = seen || m == p->module;
        if (!seen) out.push_back(p->module);
    }
    return out;
}

void Adam::step(Registry& reg) {
    ++t_;
    keys_.clear();
    const double bc1 = 1.0 - std::pow(beta1_, (double)t_);
    const double bc2 = 1.0 - std::pow(beta2_, (double)t_);
    for (auto& up : reg.all()) {
        Parameter& p = *up;
        if (!p.requires_grad) continue;
        keys_.push_back(p.name);
        if (!p.adam_ready) {
            p.adam_m = Tensor::zeros(p.value.shape);
            p.adam_v = Tensor::zeros(p.value.shape);
            p.adam_ready = true;
        }
        if (!same_shape(p.grad.shape, p.value.shape)) p.zero_grad();
        for (size_t i = 0; i < p.value.data.size(); ++i) {
            const double g = p.grad.data[i];
            p.adam_m.data[i] = beta1_ * p.adam_m.data[i] + (1.0 - beta1_) * g;
            p.adam_v.data[i] = beta2_ * p.adam_v.data[i] + (1.0 - beta2_) * g * g;
            const double mhat = p.adam_m.data[i] / bc1;
            const double vhat = p.adam_v.data[i] / bc2;
            p.value.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

Linear::Linear(Registry& r, const std::string& name, const std::string& module, int in, int out,
               bool zero_init) {
    w = &r.create(name + ".weight", module, Shape{out, in},
                  zero_init ? Init::Zero : Init::FanInUniform, (double)in);
    b = &r.create(name + ".bias", module, Shape{out}, Init::Zero);
}

Var Linear::fwd(Graph& g, Var x) const { return ad::linear(x, g.param(*w), g.param(*b)); }

Conv2d::Conv2d(Registry& r, const std::string& name, const std::string& module, int in, int out,
               int k, int stride_, int pad_, bool zero_init) {
    w = &r.create(name + ".weight", module, Shape{out, in, k, k},
                  zero_init ? Init::Zero : Init::FanInUniform, (double)(in * k * k));
    b = &r.create(name + ".bias", module, Shape{out}, Init::Zero);
    stride = stride_;
    pad = pad_;
}

Var Conv2d::fwd(Graph& g, Var x) const {
    return ad::conv2d(x, g.param(*w), g.param(*b), stride, pad);
}

GroupNorm::GroupNorm(Registry& r, const std::string& name, const std::string& module, int ch,
                     int groups_) {
    gamma = &r.create(name + ".gamma", module, Shape{ch}, Init::One);
    beta = &r.create(name + ".beta", module, Shape{ch}, Init::Zero);
    groups = groups_;
}

Var GroupNorm::fwd(Graph& g, Var x) const {
    return ad::group_norm(x, groups, g.param(*gamma), g.param(*beta));
}

LayerNorm::LayerNorm(Registry& r, const std::string& name, const std::string& module, int dim) {
    gamma = &r.create(name + ".gamma", module, Shape{dim}, Init::One);
    beta = &r.create(name + ".beta", module, Shape{dim}, Init::Zero);
}

Var LayerNorm::fwd(Graph& g, Var x) const {
    return ad::layer_norm(x, g.param(*gamma), g.param(*beta));
}

namespace {

// [B,L,D] -> [B*H, L, dh]
Var split_heads(Graph& g, Var x, int heads) {
    const Shape& s = x.val().shape;
    const int B = s[0], L = s[1], D = s[2];
    const int dh = D / heads;
    Var r = ad::reshape(x, Shape{B, L, heads, dh});
    r = ad::permute(r, {0, 2, 1, 3});  // [B,H,L,dh]
    return ad::reshape(r, Shape{B * heads, L, dh});
}

Var merge_heads(Graph& g, Var x, int B, int heads) {
    const Shape& s = x.val().shape;
    const int L = s[1], dh = s[2];
    Var r = ad::reshape(x, Shape{B, heads, L, dh});
    r = ad::permute(r, {0, 2, 1, 3});
    return ad::reshape(r, Shape{B, L, heads * dh});
}

Var attention(Graph& g, Var q, Var k, Var v, int B, int heads, const Tensor* key_mask) {
    const int dh = q.val().shape[2];
    Var scores = ad::bmm(q, k, /*transpose_b=*/true);
    scores = ad::scale(scores, 1.0 / std::sqrt((double)dh));
    if (key_mask) {
        const int Lq = scores.val().shape[1], Lk = scores.val().shape[2];
        Tensor bias(scores.val().shape);
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < heads; ++h)
                for (int i = 0; i < Lq; ++i)
                    for (int j = 0; j < Lk; ++j)
                        bias.data[(size_t)((((int64_t)(b * heads + h)) * Lq + i) * Lk + j)] =
                            key_mask->at2(b, j) > 0.5 ? 0.0 : -1e9;
        scores = ad::add_const(scores, bias);
    }
    Var p = ad::softmax_last(scores);
    return ad::bmm(p, v, /*transpose_b=*/false);
}

}  // namespace

SelfAttention::SelfAttention(Registry& r, const std::string& name, const std::string& module,
                             int dim_, int heads_, bool zero_out)
    : q(r, name + ".q", module, dim_, dim_),
      k(r, name + ".k", module, dim_, dim_),
      v(r, name + ".v", module, dim_, dim_),
      out(r, name + ".out", module, dim_, dim_, zero_out),
      heads(heads_),
      dim(dim_) {}

Var SelfAttention::fwd(Graph& g, Var x, const Tensor* key_mask) const {
    const int B = x.val().shape[0];
    Var qh = split_heads(g, q.fwd(g, x), heads);
    Var kh = split_heads(g, k.fwd(g, x), heads);
    Var vh = split_heads(g, v.fwd(g, x), heads);
    Var o = attention(g, qh, kh, vh, B, heads, key_mask);
    return out.fwd(g, merge_heads(g, o, B, heads));
}

CrossAttention::CrossAttention(Registry& r, const std::string& name, const std::string& module,
                               int dim_, int ctx_dim, int heads_)
    : q(r, name + ".q", module, dim_, dim_),
      k(r, name + ".k", module, ctx_dim, dim_),
      v(r, name + ".v", module, ctx_dim, dim_),
      out(r, name + ".out", module, dim_, dim_),
      heads(heads_),
      dim(dim_) {}

Var CrossAttention::fwd(Graph& g, Var x, Var ctx) const {
    const int B = x.val().shape[0];
    Var qh = split_heads(g, q.fwd(g, x), heads);
    Var kh = split_heads(g, k.fwd(g, ctx), heads);
    Var vh = split_heads(g, v.fwd(g, ctx), heads);
    Var o = attention(g, qh, kh, vh, B, heads, nullptr);
    return out.fwd(g, merge_heads(g, o, B, heads));
}

FeedForward::FeedForward(Registry& r, const std::string& name, const std::string& module, int dim,
                         int hidden)
    : fc1(r, name + ".fc1", module, dim, hidden), fc2(r, name + ".fc2", module, hidden, dim) {}

Var FeedForward::fwd(Graph& g, Var x) const { return fc2.fwd(g, ad::gelu(fc1.fwd(g, x))); }

EncoderLayer::EncoderLayer(Registry& r, const std::string& name, const std::string& module,
                           int dim, int heads, int ff_hidden)
    : ln1(r, name + ".ln1", module, dim),
      ln2(r, name + ".ln2", module, dim),
      attn(r, name + ".attn", module, dim, heads),
      ff(r, name + ".ff", module, dim, ff_hidden) {}

Var EncoderLayer::fwd(Graph& g, Var x, const Tensor* key_mask) const {
    x = ad::add(x, attn.fwd(g, ln1.fwd(g, x), key_mask));
    x = ad::add(x, ff.fwd(g, ln2.fwd(g, x)));
    return x;
}

Tensor sinusoidal_embedding(const std::vector<double>& positions, int dim, double max_period) {
    if (dim % 2 != 0) throw Error("sinusoidal_embedding: dim must be even");
    const int half = dim / 2;
    Tensor out(Shape{(int)positions.size(), dim});
    for (size_t r = 0; r < positions.size(); ++r) {
        for (int i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(max_period) * (double)i / (double)half);
            out.at2((int)r, i) = std::sin(positions[r] * freq);
            out.at2((int)r, half + i) = std::cos(positions[r] * freq);
        }
    }
    return out;
}

}  // namespace animkit::nn
