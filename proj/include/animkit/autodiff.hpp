#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "animkit/tensor.hpp"

namespace animkit {

// Named model parameter. `module` tags which subsystem owns it (used for the
// frozen/trainable partition); `requires_grad` is set per training phase.
struct Parameter {
    std::string name;
    std::string module;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;

    // Adam state, lazily initialized by the optimizer.
    Tensor adam_m, adam_v;
    bool adam_ready = false;

    void zero_grad() {
        if (!same_shape(grad.shape, value.shape)) grad = Tensor::zeros(value.shape);
        std::fill(grad.data.begin(), grad.data.end(), 0.0);
    }
};

namespace ad {

struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::function<void()> backfn;  // scatters this->grad into parents
    Parameter* param = nullptr;
};

struct Var;

// Tape of operations. Nodes live in a deque so pointers stay stable; backward
// walks the tape in reverse creation order.
class Graph {
public:
    Var constant(Tensor v);
    Var param(Parameter& p);
    Var make(Tensor v, bool requires_grad, std::function<void()> backfn = nullptr);

    // Runs reverse-mode accumulation from a scalar loss, then adds leaf grads
    // into their Parameters.
    void backward(Var loss);

    static Tensor& grad_of(Node* n) {
        if (!n->has_grad) {
            n->grad = Tensor::zeros(n->value.shape);
            n->has_grad = true;
        }
        return n->grad;
    }

    size_t size() const { return nodes_.size(); }

private:
    std::deque<Node> nodes_;
};

struct Var {
    Graph* g = nullptr;
    Node* n = nullptr;
    const Tensor& val() const { return n->value; }
    bool defined() const { return n != nullptr; }
};

// ---- elementwise ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_const(Var a, const Tensor& c);  // c carries no gradient
Var square(Var a);
Var sigmoid(Var a);
Var silu(Var a);
Var gelu(Var a);

// ---- shape ----
Var reshape(Var a, Shape s);
Var permute(Var a, const std::vector<int>& perm);
Var narrow(Var a, int dim, int start, int len);
Var concat(const std::vector<Var>& xs, int dim);
Var repeat_rows3(Var a, int times);  // [B,N,D] -> [B*times,N,D]

// ---- linear algebra ----
Var matmul(Var a, Var b);                       // [M,K]x[K,N]
Var bmm(Var a, Var b, bool transpose_b);        // [B,M,K]x[B,K,N] or x[B,N,K]^T
Var linear(Var x, Var w, Var b);                // x[...,K], w[O,K], b[O]
Var conv2d(Var x, Var w, Var b, int stride, int pad);  // x[B,C,H,W], w[O,C,k,k]
Var upsample_nearest2(Var x);

// ---- normalization / attention ----
Var group_norm(Var x, int groups, Var gamma, Var beta, double eps = 1e-5);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var softmax_last(Var x);

// ---- broadcast helpers ----
Var add_channel_bias(Var x, Var t);      // x[B,C,H,W] + t[B,C]
Var outer_weight(Var w, Var e);          // w[B,F,L], e[B,L,D] -> [B,F,L,D]

// ---- reductions ----
Var mean_all(Var x);
Var mse(Var a, Var b);

}  // namespace ad
}  // namespace animkit
