#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "animkit/autodiff.hpp"
#include "animkit/rng.hpp"

namespace animkit::nn {

enum class Init { Zero, One, FanInUniform, Normal };

// Owns every Parameter of a model. Creation order is the checkpoint order;
// initialization is seeded per parameter name so it does not depend on order.
class Registry {
public:
    explicit Registry(uint64_t seed) : seed_(seed) {}

    Parameter& create(const std::string& name, const std::string& module, Shape shape, Init init,
                      double arg = 0.0);

    Parameter* find(const std::string& name);
    const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }

    // Sets requires_grad true exactly for parameters whose module is listed.
    void set_trainable_modules(const std::vector<std::string>& modules);
    void zero_grads();

    std::vector<std::string> module_names() const;

private:
    uint64_t seed_;
    std::vector<std::unique_ptr<Parameter>> params_;
    std::unordered_map<std::string, Parameter*> by_name_;
};

// Adam without weight decay; steps only the parameters with requires_grad.
class Adam {
public:
    Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(Registry& reg);
    int64_t t() const { return t_; }
    // names of parameters the optimizer holds state for
    std::vector<std::string> state_keys() const { return keys_; }

private:
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<std::string> keys_;
};

using ad::Graph;
using ad::Var;

struct Linear {
    Parameter *w = nullptr, *b = nullptr;
    Linear() = default;
    Linear(Registry& r, const std::string& name, const std::string& module, int in, int out,
           bool zero_init = false);
    Var fwd(Graph& g, Var x) const;
};

struct Conv2d {
    Parameter *w = nullptr, *b = nullptr;
    int stride = 1, pad = 1;
    Conv2d() = default;
    Conv2d(Registry& r, const std::string& name, const std::string& module, int in, int out,
           int k, int stride, int pad, bool zero_init = false);
    Var fwd(Graph& g, Var x) const;
};

struct GroupNorm {
    Parameter *gamma = nullptr, *beta = nullptr;
    int groups = 8;
    GroupNorm() = default;
    GroupNorm(Registry& r, const std::string& name, const std::string& module, int ch, int groups);
    Var fwd(Graph& g, Var x) const;
};

struct LayerNorm {
    Parameter *gamma = nullptr, *beta = nullptr;
    LayerNorm() = default;
    LayerNorm(Registry& r, const std::string& name, const std::string& module, int dim);
    Var fwd(Graph& g, Var x) const;
};

// Multi-head attention over [B,L,D]. When `key_mask` is given (shape [B,L],
// 1=keep 0=drop), masked keys get -1e9 added to their scores.
struct SelfAttention {
    Linear q, k, v, out;
    int heads = 4, dim = 0;
    SelfAttention() = default;
    SelfAttention(Registry& r, const std::string& name, const std::string& module, int dim,
                  int heads, bool zero_out = false);
    Var fwd(Graph& g, Var x, const Tensor* key_mask = nullptr) const;
};

// Cross attention: queries [B,Lq,D] over context [B,Lk,Dc].
struct CrossAttention {
    Linear q, k, v, out;
    int heads = 4, dim = 0;
    CrossAttention() = default;
    CrossAttention(Registry& r, const std::string& name, const std::string& module, int dim,
                   int ctx_dim, int heads);
    Var fwd(Graph& g, Var x, Var ctx) const;
};

struct FeedForward {
    Linear fc1, fc2;
    FeedForward() = default;
    FeedForward(Registry& r, const std::string& name, const std::string& module, int dim,
                int hidden);
    Var fwd(Graph& g, Var x) const;
};

// Pre-norm transformer encoder layer (self-attention + feed-forward).
struct EncoderLayer {
    LayerNorm ln1, ln2;
    SelfAttention attn;
    FeedForward ff;
    EncoderLayer() = default;
    EncoderLayer(Registry& r, const std::string& name, const std::string& module, int dim,
                 int heads, int ff_hidden);
    Var fwd(Graph& g, Var x, const Tensor* key_mask = nullptr) const;
};

// Sinusoidal position/timestep embedding, dim must be even.
Tensor sinusoidal_embedding(const std::vector<double>& positions, int dim, double max_period = 10000.0);

}  // namespace animkit::nn
