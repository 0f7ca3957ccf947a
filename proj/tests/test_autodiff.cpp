#include <cmath>
#include <functional>

#include "animkit/autodiff.hpp"
#include "animkit/nn.hpp"
#include "animkit/rng.hpp"
#include "doctest.h"

using namespace animkit;
using ad::Graph;
using ad::Var;

namespace {

using BuildFn = std::function<Var(Graph&, std::vector<Var>&)>;

double eval(std::vector<Parameter>& leaves, const BuildFn& build) {
    Graph g;
    std::vector<Var> vars;
    for (auto& p : leaves) vars.push_back(g.param(p));
    return build(g, vars).val()[0];
}

// Central-difference check of every coordinate of every leaf.
void check_grads(std::vector<Tensor> leaf_values, const BuildFn& build, double tol = 1e-6,
                 double h = 1e-5) {
    std::vector<Parameter> leaves(leaf_values.size());
    for (size_t i = 0; i < leaf_values.size(); ++i) {
        leaves[i].name = "leaf" + std::to_string(i);
        leaves[i].value = leaf_values[i];
        leaves[i].requires_grad = true;
        leaves[i].zero_grad();
    }
    {
        Graph g;
        std::vector<Var> vars;
        for (auto& p : leaves) vars.push_back(g.param(p));
        Var loss = build(g, vars);
        REQUIRE(loss.val().numel() == 1);
        g.backward(loss);
    }
    for (size_t i = 0; i < leaves.size(); ++i) {
        for (int64_t k = 0; k < leaves[i].value.numel(); ++k) {
            const double orig = leaves[i].value[k];
            leaves[i].value[k] = orig + h;
            const double fp = eval(leaves, build);
            leaves[i].value[k] = orig - h;
            const double fm = eval(leaves, build);
            leaves[i].value[k] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = leaves[i].grad[k];
            const double err = std::fabs(fd - an) / std::max({1.0, std::fabs(fd), std::fabs(an)});
            INFO("leaf ", i, " coord ", k, " analytic ", an, " fd ", fd);
            CHECK(err < tol);
        }
    }
}

Tensor randn(Shape s, uint64_t seed, double scale = 1.0) {
    RandomStream rs(seed);
    Tensor t(std::move(s));
    for (auto& v : t.data) v = rs.normal() * scale;
    return t;
}

// random linear functional to scalarize op outputs
Var project(Graph& g, Var y, uint64_t seed) {
    return ad::mean_all(ad::mul(y, g.constant(randn(y.val().shape, seed))));
}

}  // namespace

TEST_CASE("autodiff: elementwise ops") {
    const Tensor a = randn({3, 4}, 1), b = randn({3, 4}, 2);
    check_grads({a, b}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::add(v[0], v[1]), 10);
    });
    check_grads({a, b}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::sub(v[0], v[1]), 11);
    });
    check_grads({a, b}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::mul(v[0], v[1]), 12);
    });
    check_grads({a}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::scale(v[0], -1.7), 13);
    });
    check_grads({a}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::square(v[0]), 14);
    });
    check_grads({a}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::sigmoid(v[0]), 15);
    });
    check_grads({a}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::silu(v[0]), 16);
    });
    check_grads({a}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::gelu(v[0]), 17);
    });
}

TEST_CASE("autodiff: shape ops") {
    const Tensor a = randn({2, 3, 4}, 3);
    check_grads({a}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::reshape(v[0], {4, 6}), 20);
    });
    check_grads({a}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::permute(v[0], {2, 0, 1}), 21);
    });
    check_grads({a}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::narrow(v[0], 1, 1, 2), 22);
    });
    const Tensor b = randn({2, 2, 4}, 4);
    check_grads({a, b}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::concat({v[0], v[1]}, 1), 23);
    });
    const Tensor c = randn({2, 3, 5}, 5);
    check_grads({c}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::repeat_rows3(v[0], 3), 24);
    });
}

TEST_CASE("autodiff: matmul family") {
    check_grads({randn({3, 4}, 6), randn({4, 5}, 7)}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::matmul(v[0], v[1]), 30);
    });
    check_grads({randn({2, 3, 4}, 8), randn({2, 4, 5}, 9)}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::bmm(v[0], v[1], false), 31);
    });
    check_grads({randn({2, 3, 4}, 10), randn({2, 5, 4}, 11)}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::bmm(v[0], v[1], true), 32);
    });
    check_grads({randn({2, 3, 4}, 12), randn({5, 4}, 13), randn({5}, 14)},
                [](Graph& g, std::vector<Var>& v) {
                    return project(g, ad::linear(v[0], v[1], v[2]), 33);
                });
}

TEST_CASE("autodiff: conv and upsample") {
    check_grads({randn({2, 3, 5, 5}, 15, 0.5), randn({4, 3, 3, 3}, 16, 0.5), randn({4}, 17)},
                [](Graph& g, std::vector<Var>& v) {
                    return project(g, ad::conv2d(v[0], v[1], v[2], 1, 1), 40);
                });
    check_grads({randn({1, 2, 6, 6}, 18, 0.5), randn({3, 2, 3, 3}, 19, 0.5), randn({3}, 20)},
                [](Graph& g, std::vector<Var>& v) {
                    return project(g, ad::conv2d(v[0], v[1], v[2], 2, 1), 41);
                });
    check_grads({randn({2, 3, 4, 4}, 21)}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::upsample_nearest2(v[0]), 42);
    });
}

TEST_CASE("autodiff: normalization and softmax") {
    check_grads({randn({2, 8, 3, 3}, 22), randn({8}, 23, 0.3), randn({8}, 24, 0.3)},
                [](Graph& g, std::vector<Var>& v) {
                    return project(g, ad::group_norm(v[0], 4, v[1], v[2]), 50);
                },
                1e-5);
    check_grads({randn({3, 6}, 25), randn({6}, 26, 0.3), randn({6}, 27, 0.3)},
                [](Graph& g, std::vector<Var>& v) {
                    return project(g, ad::layer_norm(v[0], v[1], v[2]), 51);
                },
                1e-5);
    check_grads({randn({4, 7}, 28)}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::softmax_last(v[0]), 52);
    });
}

TEST_CASE("autodiff: broadcast helpers and reductions") {
    check_grads({randn({2, 3, 4, 4}, 29), randn({2, 3}, 30)}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::add_channel_bias(v[0], v[1]), 60);
    });
    check_grads({randn({2, 3, 5}, 31), randn({2, 5, 4}, 32)}, [](Graph& g, std::vector<Var>& v) {
        return project(g, ad::outer_weight(v[0], v[1]), 61);
    });
    check_grads({randn({3, 4}, 33), randn({3, 4}, 34)}, [](Graph& g, std::vector<Var>& v) {
        return ad::mse(v[0], v[1]);
    });
    check_grads({randn({5}, 35)}, [](Graph& g, std::vector<Var>& v) {
        return ad::mean_all(ad::square(v[0]));
    });
}

TEST_CASE("autodiff: frozen parameters receive no gradient but pass it through") {
    Parameter frozen;
    frozen.name = "frozen";
    frozen.value = randn({4, 4}, 36);
    frozen.requires_grad = false;
    Parameter live;
    live.name = "live";
    live.value = randn({4, 4}, 37);
    live.requires_grad = true;
    live.zero_grad();

    Graph g;
    Var x = g.param(live);
    Var w = g.param(frozen);
    Var y = ad::matmul(w, x);  // gradient must flow through w into x
    g.backward(ad::mean_all(ad::square(y)));

    REQUIRE(same_shape(live.grad.shape, live.value.shape));
    double live_norm = 0.0;
    for (double v : live.grad.data) live_norm += std::fabs(v);
    CHECK(live_norm > 0.0);
    CHECK(frozen.grad.data.empty());
}

TEST_CASE("nn layers: gradcheck through attention and transformer blocks") {
    nn::Registry reg(99);
    nn::SelfAttention attn(reg, "t.attn", "m", 8, 2);
    nn::EncoderLayer enc(reg, "t.enc", "m", 8, 2, 16);
    reg.set_trainable_modules({"m"});

    const Tensor x = randn({2, 5, 8}, 40, 0.7);
    Tensor mask(Shape{2, 5}, 1.0);
    mask.at2(0, 4) = 0.0;  // one padded key

    auto loss_value = [&]() {
        Graph g;
        Var y = enc.fwd(g, attn.fwd(g, g.constant(x), &mask), &mask);
        return project(g, y, 70).val()[0];
    };
    // analytic grads
    reg.zero_grads();
    {
        Graph g;
        Var y = enc.fwd(g, attn.fwd(g, g.constant(x), &mask), &mask);
        Var loss = project(g, y, 70);
        g.backward(loss);
    }
    // spot-check 40 random coordinates across all layer parameters
    RandomStream rs(41);
    int checked = 0;
    std::vector<Parameter*> params;
    for (const auto& p : reg.all()) params.push_back(p.get());
    while (checked < 40) {
        Parameter* p = params[(size_t)rs.randint((int64_t)params.size())];
        const int64_t k = rs.randint(p->value.numel());
        const double orig = p->value[k];
        const double h = 1e-5;
        p->value[k] = orig + h;
        const double fp = loss_value();
        p->value[k] = orig - h;
        const double fm = loss_value();
        p->value[k] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double an = p->grad[k];
        const double err = std::fabs(fd - an) / std::max({1.0, std::fabs(fd), std::fabs(an)});
        INFO(p->name, " coord ", k);
        CHECK(err < 1e-5);
        ++checked;
    }
}

TEST_CASE("adam: steps only trainable parameters") {
    nn::Registry reg(7);
    Parameter& a = reg.create("a", "m1", Shape{3}, nn::Init::One);
    Parameter& b = reg.create("b", "m2", Shape{3}, nn::Init::One);
    reg.set_trainable_modules({"m1"});
    reg.zero_grads();
    a.zero_grad();
    for (auto& v : a.grad.data) v = 1.0;
    nn::Adam opt(0.1);
    opt.step(reg);
    CHECK(a.value[0] != 1.0);
    CHECK(b.value[0] == 1.0);
    const auto keys = opt.state_keys();
    REQUIRE(keys.size() == 1);
    CHECK(keys[0] == "a");
}
