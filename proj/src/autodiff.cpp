#include "animkit/autodiff.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace animkit::ad {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

Var Graph::constant(Tensor v) { return make(std::move(v), false); }

Var Graph::param(Parameter& p) {
    Var v = make(p.value, p.requires_grad);
    v.n->param = &p;
    return v;
}

Var Graph::make(Tensor v, bool requires_grad, std::function<void()> backfn) {
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    n.backfn = std::move(backfn);
    return Var{this, &n};
}

void Graph::backward(Var loss) {
    if (loss.n->value.numel() != 1) throw Error("backward: loss must be scalar");
    grad_of(loss.n).data[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = *it;
        if (n.has_grad && n.backfn) n.backfn();
    }
    for (Node& n : nodes_) {
        if (n.param && n.has_grad && n.param->requires_grad) {
            Parameter& p = *n.param;
            if (!same_shape(p.grad.shape, p.value.shape)) p.zero_grad();
            for (size_t i = 0; i < n.grad.data.size(); ++i) p.grad.data[i] += n.grad.data[i];
        }
    }
}

namespace {

bool needs(Var a) { return a.n->requires_grad; }

Var unary(Var a, Tensor out, std::function<void(const Tensor&, Tensor&)> pull) {
    Graph* g = a.g;
    if (!needs(a)) return g->make(std::move(out), false);
    Node* an = a.n;
    Var r = g->make(std::move(out), true);
    Node* rn = r.n;
    if (pull) rn->backfn = [an, rn, pull]() { pull(rn->grad, Graph::grad_of(an)); };
    return r;
}

}  // namespace

// ---------------- elementwise ----------------

Var add(Var a, Var b) {
    check_same_shape(a.val(), b.val(), "add");
    Tensor out = a.val();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.val().data[i];
    bool rg = needs(a) || needs(b);
    Var r = a.g->make(std::move(out), rg);
    if (!rg) return r;
    Node *an = a.n, *bn = b.n, *rn = r.n;
    rn->backfn = [an, bn, rn]() {
        if (an->requires_grad) {
            Tensor& ga = Graph::grad_of(an);
            for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += rn->grad.data[i];
        }
        if (bn->requires_grad) {
            Tensor& gb = Graph::grad_of(bn);
            for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += rn->grad.data[i];
        }
    };
    return r;
}

Var sub(Var a, Var b) {
    check_same_shape(a.val(), b.val(), "sub");
    Tensor out = a.val();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.val().data[i];
    bool rg = needs(a) || needs(b);
    Var r = a.g->make(std::move(out), rg);
    if (!rg) return r;
    Node *an = a.n, *bn = b.n, *rn = r.n;
    rn->backfn = [an, bn, rn]() {
        if (an->requires_grad) {
            Tensor& ga = Graph::grad_of(an);
            for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += rn->grad.data[i];
        }
        if (bn->requires_grad) {
            Tensor& gb = Graph::grad_of(bn);
            for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= rn->grad.data[i];
        }
    };
    return r;
}

Var mul(Var a, Var b) {
    check_same_shape(a.val(), b.val(), "mul");
    Tensor out = a.val();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.val().data[i];
    bool rg = needs(a) || needs(b);
    Var r = a.g->make(std::move(out), rg);
    if (!rg) return r;
    Node *an = a.n, *bn = b.n, *rn = r.n;
    rn->backfn = [an, bn, rn]() {
        if (an->requires_grad) {
            Tensor& ga = Graph::grad_of(an);
            for (size_t i = 0; i < ga.data.size(); ++i)
                ga.data[i] += rn->grad.data[i] * bn->value.data[i];
        }
        if (bn->requires_grad) {
            Tensor& gb = Graph::grad_of(bn);
            for (size_t i = 0; i < gb.data.size(); ++i)
                gb.data[i] += rn->grad.data[i] * an->value.data[i];
        }
    };
    return r;
}

Var scale(Var a, double c) {
    Tensor out = a.val();
    for (auto& v : out.data) v *= c;
    return unary(a, std::move(out), [c](const Tensor& g, Tensor& ga) {
        for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += c * g.data[i];
    });
}

Var add_const(Var a, const Tensor& c) {
    check_same_shape(a.val(), c, "add_const");
    Tensor out = a.val();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += c.data[i];
    return unary(a, std::move(out), [](const Tensor& g, Tensor& ga) {
        for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i];
    });
}

Var square(Var a) {
    Tensor out = a.val();
    for (auto& v : out.data) v *= v;
    Node* an = a.n;
    return unary(a, std::move(out), [an](const Tensor& g, Tensor& ga) {
        for (size_t i = 0; i < ga.data.size(); ++i)
            ga.data[i] += 2.0 * an->value.data[i] * g.data[i];
    });
}

Var sigmoid(Var a) {
    Tensor out = a.val();
    for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    Var r = unary(a, std::move(out), nullptr);
    if (!needs(a)) return r;
    Node *an = a.n, *rn = r.n;
    rn->backfn = [an, rn]() {
        Tensor& ga = Graph::grad_of(an);
        for (size_t i = 0; i < ga.data.size(); ++i) {
            double y = rn->value.data[i];
            ga.data[i] += rn->grad.data[i] * y * (1.0 - y);
        }
    };
    return r;
}

Var silu(Var a) {
    Tensor out = a.val();
    for (auto& v : out.data) v = v / (1.0 + std::exp(-v));
    Node* an = a.n;
    return unary(a, std::move(out), [an](const Tensor& g, Tensor& ga) {
        for (size_t i = 0; i < ga.data.size(); ++i) {
            double x = an->value.data[i];
            double s = 1.0 / (1.0 + std::exp(-x));
            ga.data[i] += g.data[i] * s * (1.0 + x * (1.0 - s));
        }
    });
}

Var gelu(Var a) {
    Tensor out = a.val();
    for (auto& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
    Node* an = a.n;
    return unary(a, std::move(out), [an](const Tensor& g, Tensor& ga) {
        const double inv_sqrt2pi = 0.3989422804014327;
        for (size_t i = 0; i < ga.data.size(); ++i) {
            double x = an->value.data[i];
            double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
            double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
            ga.data[i] += g.data[i] * (cdf + x * pdf);
        }
    });
}

// ---------------- shape ----------------

Var reshape(Var a, Shape s) {
    if (shape_numel(s) != a.val().numel())
        throw Error("reshape: numel mismatch " + shape_str(a.val().shape) + " -> " + shape_str(s));
    Tensor out = a.val();
    out.shape = s;
    return unary(a, std::move(out), [](const Tensor& g, Tensor& ga) {
        for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i];
    });
}

namespace {

std::vector<int64_t> strides_of(const Shape& s) {
    std::vector<int64_t> st(s.size());
    int64_t acc = 1;
    for (int i = (int)s.size() - 1; i >= 0; --i) {
        st[(size_t)i] = acc;
        acc *= s[(size_t)i];
    }
    return st;
}

void permute_copy(const Tensor& src, Tensor& dst, const std::vector<int>& perm, bool add_into) {
    const int nd = (int)perm.size();
    auto src_st = strides_of(src.shape);
    auto dst_st = strides_of(dst.shape);
    std::vector<int> idx(static_cast<size_t>(nd), 0);
    const int64_t n = src.numel();
    for (int64_t flat = 0; flat < n; ++flat) {
        int64_t rem = flat;
        int64_t doff = 0;
        for (int d = 0; d < nd; ++d) {
            int64_t id = rem / src_st[(size_t)d];
            rem -= id * src_st[(size_t)d];
            // position of src dim d in dst
            for (int k = 0; k < nd; ++k)
                if (perm[(size_t)k] == d) {
                    doff += id * dst_st[(size_t)k];
                    break;
                }
        }
        if (add_into)
            dst.data[(size_t)doff] += src.data[(size_t)flat];
        else
            dst.data[(size_t)doff] = src.data[(size_t)flat];
    }
}

}  // namespace

Var permute(Var a, const std::vector<int>& perm) {
    const Shape& s = a.val().shape;
    if (perm.size() != s.size()) throw Error("permute: rank mismatch");
    Shape os(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) os[i] = s[(size_t)perm[i]];
    Tensor out(os);
    permute_copy(a.val(), out, perm, false);
    Node* an = a.n;
    std::vector<int> p = perm;
    return unary(a, std::move(out), [an, p](const Tensor& g, Tensor& ga) {
        // scatter back: g laid out as perm of ga
        Tensor tmp = Tensor::zeros(ga.shape);
        // inverse permutation
        std::vector<int> inv(p.size());
        for (size_t i = 0; i < p.size(); ++i) inv[(size_t)p[i]] = (int)i;
        permute_copy(g, tmp, inv, false);
        for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += tmp.data[i];
    });
}

Var narrow(Var a, int dim, int start, int len) {
    const Shape& s = a.val().shape;
    if (dim < 0 || dim >= (int)s.size() || start < 0 || start + len > s[(size_t)dim])
        throw Error("narrow: range out of bounds");
    Shape os = s;
    os[(size_t)dim] = len;
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < dim; ++d) outer *= s[(size_t)d];
    for (int d = dim + 1; d < (int)s.size(); ++d) inner *= s[(size_t)d];
    Tensor out(os);
    const int64_t src_stride = (int64_t)s[(size_t)dim] * inner;
    const int64_t dst_stride = (int64_t)len * inner;
    for (int64_t o = 0; o < outer; ++o)
        std::copy_n(a.val().data.begin() + o * src_stride + (int64_t)start * inner,
                    dst_stride, out.data.begin() + o * dst_stride);
    return unary(a, std::move(out),
                 [outer, inner, src_stride, dst_stride, start](const Tensor& g, Tensor& ga) {
                     for (int64_t o = 0; o < outer; ++o)
                         for (int64_t i = 0; i < dst_stride; ++i)
                             ga.data[(size_t)(o * src_stride + (int64_t)start * inner + i)] +=
                                 g.data[(size_t)(o * dst_stride + i)];
                 });
}

Var concat(const std::vector<Var>& xs, int dim) {
    if (xs.empty()) throw Error("concat: empty input");
    Graph* g = xs[0].g;
    const Shape& s0 = xs[0].val().shape;
    Shape os = s0;
    int total = 0;
    for (const Var& x : xs) {
        const Shape& s = x.val().shape;
        if (s.size() != s0.size()) throw Error("concat: rank mismatch");
        for (size_t d = 0; d < s.size(); ++d)
            if ((int)d != dim && s[d] != s0[d]) throw Error("concat: shape mismatch");
        total += s[(size_t)dim];
    }
    os[(size_t)dim] = total;
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < dim; ++d) outer *= s0[(size_t)d];
    for (int d = dim + 1; d < (int)s0.size(); ++d) inner *= s0[(size_t)d];
    Tensor out(os);
    const int64_t out_stride = (int64_t)total * inner;
    int64_t off = 0;
    for (const Var& x : xs) {
        const int64_t blk = (int64_t)x.val().shape[(size_t)dim] * inner;
        for (int64_t o = 0; o < outer; ++o)
            std::copy_n(x.val().data.begin() + o * blk, blk, out.data.begin() + o * out_stride + off);
        off += blk;
    }
    bool rg = false;
    for (const Var& x : xs) rg = rg || needs(x);
    Var r = g->make(std::move(out), rg);
    if (!rg) return r;
    std::vector<Node*> parents;
    for (const Var& x : xs) parents.push_back(x.n);
    Node* rn = r.n;
    rn->backfn = [parents, rn, outer, out_stride]() {
        int64_t off = 0;
        for (Node* p : parents) {
            int64_t pb = p->value.numel() / outer;
            if (p->requires_grad) {
                Tensor& gp = Graph::grad_of(p);
                for (int64_t o = 0; o < outer; ++o)
                    for (int64_t i = 0; i < pb; ++i)
                        gp.data[(size_t)(o * pb + i)] += rn->grad.data[(size_t)(o * out_stride + off + i)];
            }
            off += pb;
        }
    };
    return r;
}

Var repeat_rows3(Var a, int times) {
    const Shape& s = a.val().shape;
    if (s.size() != 3) throw Error("repeat_rows3: expects [B,N,D]");
    const int B = s[0], N = s[1], D = s[2];
    Tensor out(Shape{B * times, N, D});
    const int64_t blk = (int64_t)N * D;
    for (int b = 0; b < B; ++b)
        for (int t = 0; t < times; ++t)
            std::copy_n(a.val().data.begin() + b * blk, blk,
                        out.data.begin() + ((int64_t)b * times + t) * blk);
    return unary(a, std::move(out), [B, times, blk](const Tensor& g, Tensor& ga) {
        for (int b = 0; b < B; ++b)
            for (int t = 0; t < times; ++t)
                for (int64_t i = 0; i < blk; ++i)
                    ga.data[(size_t)(b * blk + i)] +=
                        g.data[(size_t)(((int64_t)b * times + t) * blk + i)];
    });
}

// ---------------- linear algebra ----------------

Var matmul(Var a, Var b) {
    const Shape &sa = a.val().shape, &sb = b.val().shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) throw Error("matmul: bad shapes");
    const int M = sa[0], K = sa[1], N = sb[1];
    Tensor out(Shape{M, N});
    CMapMat A(a.val().data.data(), M, K), B(b.val().data.data(), K, N);
    MapMat(out.data.data(), M, N).noalias() = A * B;
    bool rg = needs(a) || needs(b);
    Var r = a.g->make(std::move(out), rg);
    if (!rg) return r;
    Node *an = a.n, *bn = b.n, *rn = r.n;
    rn->backfn = [an, bn, rn, M, K, N]() {
        CMapMat G(rn->grad.data.data(), M, N);
        if (an->requires_grad) {
            CMapMat B(bn->value.data.data(), K, N);
            MapMat(Graph::grad_of(an).data.data(), M, K).noalias() += G * B.transpose();
        }
        if (bn->requires_grad) {
            CMapMat A(an->value.data.data(), M, K);
            MapMat(Graph::grad_of(bn).data.data(), K, N).noalias() += A.transpose() * G;
        }
    };
    return r;
}

Var bmm(Var a, Var b, bool transpose_b) {
    const Shape &sa = a.val().shape, &sb = b.val().shape;
    if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0]) throw Error("bmm: bad shapes");
    const int B = sa[0], M = sa[1], K = sa[2];
    const int N = transpose_b ? sb[1] : sb[2];
    if ((transpose_b ? sb[2] : sb[1]) != K) throw Error("bmm: inner dim mismatch");
    Tensor out(Shape{B, M, N});
    for (int i = 0; i < B; ++i) {
        CMapMat A(a.val().data.data() + (int64_t)i * M * K, M, K);
        MapMat C(out.data.data() + (int64_t)i * M * N, M, N);
        if (transpose_b) {
            CMapMat Bm(b.val().data.data() + (int64_t)i * N * K, N, K);
            C.noalias() = A * Bm.transpose();
        } else {
            CMapMat Bm(b.val().data.data() + (int64_t)i * K * N, K, N);
            C.noalias() = A * Bm;
        }
    }
    bool rg = needs(a) || needs(b);
    Var r = a.g->make(std::move(out), rg);
    if (!rg) return r;
    Node *an = a.n, *bn = b.n, *rn = r.n;
    rn->backfn = [an, bn, rn, B, M, K, N, transpose_b]() {
        for (int i = 0; i < B; ++i) {
            CMapMat G(rn->grad.data.data() + (int64_t)i * M * N, M, N);
            if (an->requires_grad) {
                MapMat GA(Graph::grad_of(an).data.data() + (int64_t)i * M * K, M, K);
                if (transpose_b) {
                    CMapMat Bm(bn->value.data.data() + (int64_t)i * N * K, N, K);
                    GA.noalias() += G * Bm;
                } else {
                    CMapMat Bm(bn->value.data.data() + (int64_t)i * K * N, K, N);
                    GA.noalias() += G * Bm.transpose();
                }
            }
            if (bn->requires_grad) {
                CMapMat A(an->value.data.data() + (int64_t)i * M * K, M, K);
                if (transpose_b) {
                    MapMat GB(Graph::grad_of(bn).data.data() + (int64_t)i * N * K, N, K);
                    GB.noalias() += G.transpose() * A;
                } else {
                    MapMat GB(Graph::grad_of(bn).data.data() + (int64_t)i * K * N, K, N);
                    GB.noalias() += A.transpose() * G;
                }
            }
        }
    };
    return r;
}

Var linear(Var x, Var w, Var b) {
    const Shape& sx = x.val().shape;
    const Shape& sw = w.val().shape;
    if (sw.size() != 2) throw Error("linear: weight must be [O,K]");
    const int K = sw[1], O = sw[0];
    if (sx.back() != K) throw Error("linear: input last dim != K");
    const int64_t R = x.val().numel() / K;
    if (b.defined() && (b.val().ndim() != 1 || b.val().dim(0) != O))
        throw Error("linear: bias must be [O]");
    Tensor out;
    Shape os = sx;
    os.back() = O;
    out = Tensor(os);
    {
        CMapMat X(x.val().data.data(), R, K), W(w.val().data.data(), O, K);
        MapMat Y(out.data.data(), R, O);
        Y.noalias() = X * W.transpose();
        if (b.defined()) Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.val().data.data(), O);
    }
    bool rg = needs(x) || needs(w) || (b.defined() && needs(b));
    Var r = x.g->make(std::move(out), rg);
    if (!rg) return r;
    Node *xn = x.n, *wn = w.n, *bn = b.defined() ? b.n : nullptr, *rn = r.n;
    rn->backfn = [xn, wn, bn, rn, R, K, O]() {
        CMapMat G(rn->grad.data.data(), R, O);
        if (xn->requires_grad) {
            CMapMat W(wn->value.data.data(), O, K);
            MapMat(Graph::grad_of(xn).data.data(), R, K).noalias() += G * W;
        }
        if (wn->requires_grad) {
            CMapMat X(xn->value.data.data(), R, K);
            MapMat(Graph::grad_of(wn).data.data(), O, K).noalias() += G.transpose() * X;
        }
        if (bn && bn->requires_grad) {
            Eigen::Map<Eigen::RowVectorXd>(Graph::grad_of(bn).data.data(), O) +=
                G.colwise().sum();
        }
    };
    return r;
}

namespace {

// batched im2col: col is [C*k*k, B*OH*OW] with per-image column blocks
void im2col_batch(const double* x, int B, int C, int H, int W, int k, int stride, int pad,
                  int OH, int OW, double* col) {
    const int64_t cols = (int64_t)B * OH * OW;
    for (int i = 0; i < B; ++i) {
        const double* xi = x + (int64_t)i * C * H * W;
        for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    double* dst =
                        col + (((int64_t)c * k + ky) * k + kx) * cols + (int64_t)i * OH * OW;
                    for (int oh = 0; oh < OH; ++oh) {
                        const int iy = oh * stride + ky - pad;
                        if (iy < 0 || iy >= H) {
                            std::fill_n(dst + (int64_t)oh * OW, OW, 0.0);
                            continue;
                        }
                        const double* src = xi + ((int64_t)c * H + iy) * W;
                        for (int ow = 0; ow < OW; ++ow) {
                            const int ix = ow * stride + kx - pad;
                            dst[(int64_t)oh * OW + ow] = (ix >= 0 && ix < W) ? src[ix] : 0.0;
                        }
                    }
                }
    }
}

}  // namespace

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
    const Shape& sx = x.val().shape;
    const Shape& sw = w.val().shape;
    if (sx.size() != 4 || sw.size() != 4 || sw[2] != sw[3]) throw Error("conv2d: bad shapes");
    const int B = sx[0], C = sx[1], H = sx[2], W = sx[3];
    const int O = sw[0], k = sw[2];
    if (sw[1] != C) throw Error("conv2d: channel mismatch");
    const int OH = (H + 2 * pad - k) / stride + 1;
    const int OW = (W + 2 * pad - k) / stride + 1;
    const int CKK = C * k * k;
    const int64_t cols = (int64_t)B * OH * OW;

    Tensor out(Shape{B, O, OH, OW});
    {
        std::vector<double> col((size_t)(CKK * cols));
        im2col_batch(x.val().data.data(), B, C, H, W, k, stride, pad, OH, OW, col.data());
        CMapMat Wm(w.val().data.data(), O, CKK), Cm(col.data(), CKK, cols);
        RowMat Y = Wm * Cm;  // [O, B*OH*OW]
        const double* bias = b.defined() ? b.val().data.data() : nullptr;
        for (int i = 0; i < B; ++i)
            for (int o = 0; o < O; ++o) {
                const double add = bias ? bias[o] : 0.0;
                const double* src = Y.data() + (int64_t)o * cols + (int64_t)i * OH * OW;
                double* dst = out.data.data() + ((int64_t)i * O + o) * OH * OW;
                for (int64_t p = 0; p < (int64_t)OH * OW; ++p) dst[p] = src[p] + add;
            }
    }
    bool rg = needs(x) || needs(w) || (b.defined() && needs(b));
    Var r = x.g->make(std::move(out), rg);
    if (!rg) return r;
    Node *xn = x.n, *wn = w.n, *bn = b.defined() ? b.n : nullptr, *rn = r.n;
    rn->backfn = [xn, wn, bn, rn, B, C, H, W, O, k, stride, pad, OH, OW, CKK, cols]() {
        // gradient laid out as [O, B*OH*OW] column blocks
        RowMat G(O, cols);
        for (int i = 0; i < B; ++i)
            for (int o = 0; o < O; ++o)
                std::copy_n(rn->grad.data.data() + ((int64_t)i * O + o) * OH * OW,
                            (int64_t)OH * OW, G.data() + (int64_t)o * cols + (int64_t)i * OH * OW);
        if (wn->requires_grad) {
            std::vector<double> col((size_t)(CKK * cols));
            im2col_batch(xn->value.data.data(), B, C, H, W, k, stride, pad, OH, OW, col.data());
            CMapMat Cm(col.data(), CKK, cols);
            MapMat(Graph::grad_of(wn).data.data(), O, CKK).noalias() += G * Cm.transpose();
        }
        if (bn && bn->requires_grad) {
            double* gb = Graph::grad_of(bn).data.data();
            for (int o = 0; o < O; ++o) gb[o] += G.row(o).sum();
        }
        if (xn->requires_grad) {
            RowMat Dc(CKK, cols);
            CMapMat Wm(wn->value.data.data(), O, CKK);
            Dc.noalias() = Wm.transpose() * G;
            for (int i = 0; i < B; ++i) {
                // col2im over this image's column block
                double* gx = Graph::grad_of(xn).data.data() + (int64_t)i * C * H * W;
                for (int c = 0; c < C; ++c)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const double* src = Dc.data() +
                                                (((int64_t)c * k + ky) * k + kx) * cols +
                                                (int64_t)i * OH * OW;
                            for (int oh = 0; oh < OH; ++oh) {
                                const int iy = oh * stride + ky - pad;
                                if (iy < 0 || iy >= H) continue;
                                double* dst = gx + ((int64_t)c * H + iy) * W;
                                for (int ow = 0; ow < OW; ++ow) {
                                    const int ix = ow * stride + kx - pad;
                                    if (ix >= 0 && ix < W) dst[ix] += src[(int64_t)oh * OW + ow];
                                }
                            }
                        }
            }
        }
    };
    return r;
}

Var upsample_nearest2(Var x) {
    const Shape& s = x.val().shape;
    if (s.size() != 4) throw Error("upsample_nearest2: expects [B,C,H,W]");
    const int B = s[0], C = s[1], H = s[2], W = s[3];
    Tensor out(Shape{B, C, 2 * H, 2 * W});
    for (int bc = 0; bc < B * C; ++bc) {
        const double* src = x.val().data.data() + (int64_t)bc * H * W;
        double* dst = out.data.data() + (int64_t)bc * 4 * H * W;
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                double v = src[(int64_t)h * W + w];
                double* d = dst + (int64_t)(2 * h) * 2 * W + 2 * w;
                d[0] = v;
                d[1] = v;
                d[2 * W] = v;
                d[2 * W + 1] = v;
            }
    }
    return unary(x, std::move(out), [B, C, H, W](const Tensor& g, Tensor& ga) {
        for (int bc = 0; bc < B * C; ++bc) {
            double* dst = ga.data.data() + (int64_t)bc * H * W;
            const double* src = g.data.data() + (int64_t)bc * 4 * H * W;
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    const double* s2 = src + (int64_t)(2 * h) * 2 * W + 2 * w;
                    dst[(int64_t)h * W + w] += s2[0] + s2[1] + s2[2 * W] + s2[2 * W + 1];
                }
        }
    });
}

// ---------------- normalization ----------------

Var group_norm(Var x, int groups, Var gamma, Var beta, double eps) {
    const Shape& s = x.val().shape;
    if (s.size() != 4) throw Error("group_norm: expects [B,C,H,W]");
    const int B = s[0], C = s[1], H = s[2], W = s[3];
    if (C % groups != 0) throw Error("group_norm: C % groups != 0");
    const int gs = C / groups;
    const int64_t spatial = (int64_t)H * W;
    const int64_t glen = gs * spatial;
    Tensor out(s);
    Tensor mean(Shape{B, groups}), inv_std(Shape{B, groups});
    for (int b = 0; b < B; ++b) {
        for (int g = 0; g < groups; ++g) {
            const double* xs = x.val().data.data() + ((int64_t)b * C + g * gs) * spatial;
            double mu = 0.0;
            for (int64_t i = 0; i < glen; ++i) mu += xs[i];
            mu /= (double)glen;
            double var = 0.0;
            for (int64_t i = 0; i < glen; ++i) {
                double d = xs[i] - mu;
                var += d * d;
            }
            var /= (double)glen;
            double inv = 1.0 / std::sqrt(var + eps);
            mean.at2(b, g) = mu;
            inv_std.at2(b, g) = inv;
            double* ys = out.data.data() + ((int64_t)b * C + g * gs) * spatial;
            for (int c = 0; c < gs; ++c) {
                const double ga_ = gamma.val().data[(size_t)(g * gs + c)];
                const double be_ = beta.val().data[(size_t)(g * gs + c)];
                for (int64_t i = 0; i < spatial; ++i)
                    ys[c * spatial + i] = (xs[c * spatial + i] - mu) * inv * ga_ + be_;
            }
        }
    }
    bool rg = needs(x) || needs(gamma) || needs(beta);
    Var r = x.g->make(std::move(out), rg);
    if (!rg) return r;
    Node *xn = x.n, *gn = gamma.n, *bn = beta.n, *rn = r.n;
    rn->backfn = [xn, gn, bn, rn, B, C, H, W, groups, gs, spatial, glen, mean, inv_std]() {
        for (int b = 0; b < B; ++b) {
            for (int g = 0; g < groups; ++g) {
                const double mu = mean.at2(b, g), inv = inv_std.at2(b, g);
                const double* xs = xn->value.data.data() + ((int64_t)b * C + g * gs) * spatial;
                const double* gr = rn->grad.data.data() + ((int64_t)b * C + g * gs) * spatial;
                if (gn->requires_grad || bn->requires_grad) {
                    for (int c = 0; c < gs; ++c) {
                        double dg = 0.0, db = 0.0;
                        for (int64_t i = 0; i < spatial; ++i) {
                            const double xhat = (xs[c * spatial + i] - mu) * inv;
                            dg += gr[c * spatial + i] * xhat;
                            db += gr[c * spatial + i];
                        }
                        if (gn->requires_grad) Graph::grad_of(gn).data[(size_t)(g * gs + c)] += dg;
                        if (bn->requires_grad) Graph::grad_of(bn).data[(size_t)(g * gs + c)] += db;
                    }
                }
                if (xn->requires_grad) {
                    // dxhat = gr * gamma; dx = inv*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
                    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                    for (int c = 0; c < gs; ++c) {
                        const double ga_ = gn->value.data[(size_t)(g * gs + c)];
                        for (int64_t i = 0; i < spatial; ++i) {
                            const double xhat = (xs[c * spatial + i] - mu) * inv;
                            const double dxh = gr[c * spatial + i] * ga_;
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xhat;
                        }
                    }
                    const double m1 = sum_dxh / (double)glen;
                    const double m2 = sum_dxh_xh / (double)glen;
                    double* gx = Graph::grad_of(xn).data.data() + ((int64_t)b * C + g * gs) * spatial;
                    for (int c = 0; c < gs; ++c) {
                        const double ga_ = gn->value.data[(size_t)(g * gs + c)];
                        for (int64_t i = 0; i < spatial; ++i) {
                            const double xhat = (xs[c * spatial + i] - mu) * inv;
                            const double dxh = gr[c * spatial + i] * ga_;
                            gx[c * spatial + i] += inv * (dxh - m1 - xhat * m2);
                        }
                    }
                }
            }
        }
    };
    return r;
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Shape& s = x.val().shape;
    const int D = s.back();
    const int64_t R = x.val().numel() / D;
    if (gamma.val().numel() != D || beta.val().numel() != D) throw Error("layer_norm: bad affine");
    Tensor out(s);
    Tensor mean(Shape{(int)R}), inv_std(Shape{(int)R});
    for (int64_t r = 0; r < R; ++r) {
        const double* xs = x.val().data.data() + r * D;
        double mu = 0.0;
        for (int i = 0; i < D; ++i) mu += xs[i];
        mu /= D;
        double var = 0.0;
        for (int i = 0; i < D; ++i) {
            double d = xs[i] - mu;
            var += d * d;
        }
        var /= D;
        double inv = 1.0 / std::sqrt(var + eps);
        mean[r] = mu;
        inv_std[r] = inv;
        double* ys = out.data.data() + r * D;
        for (int i = 0; i < D; ++i)
            ys[i] = (xs[i] - mu) * inv * gamma.val().data[(size_t)i] + beta.val().data[(size_t)i];
    }
    bool rg = needs(x) || needs(gamma) || needs(beta);
    Var r = x.g->make(std::move(out), rg);
    if (!rg) return r;
    Node *xn = x.n, *gn = gamma.n, *bn = beta.n, *rn = r.n;
    rn->backfn = [xn, gn, bn, rn, R, D, mean, inv_std]() {
        for (int64_t row = 0; row < R; ++row) {
            const double mu = mean[row], inv = inv_std[row];
            const double* xs = xn->value.data.data() + row * D;
            const double* gr = rn->grad.data.data() + row * D;
            if (gn->requires_grad || bn->requires_grad) {
                for (int i = 0; i < D; ++i) {
                    const double xhat = (xs[i] - mu) * inv;
                    if (gn->requires_grad) Graph::grad_of(gn).data[(size_t)i] += gr[i] * xhat;
                    if (bn->requires_grad) Graph::grad_of(bn).data[(size_t)i] += gr[i];
                }
            }
            if (xn->requires_grad) {
                double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                for (int i = 0; i < D; ++i) {
                    const double xhat = (xs[i] - mu) * inv;
                    const double dxh = gr[i] * gn->value.data[(size_t)i];
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xhat;
                }
                const double m1 = sum_dxh / D, m2 = sum_dxh_xh / D;
                double* gx = Graph::grad_of(xn).data.data() + row * D;
                for (int i = 0; i < D; ++i) {
                    const double xhat = (xs[i] - mu) * inv;
                    const double dxh = gr[i] * gn->value.data[(size_t)i];
                    gx[i] += inv * (dxh - m1 - xhat * m2);
                }
            }
        }
    };
    return r;
}

Var softmax_last(Var x) {
    const Shape& s = x.val().shape;
    const int D = s.back();
    const int64_t R = x.val().numel() / D;
    Tensor out(s);
    for (int64_t r = 0; r < R; ++r) {
        const double* xs = x.val().data.data() + r * D;
        double* ys = out.data.data() + r * D;
        double mx = xs[0];
        for (int i = 1; i < D; ++i) mx = std::max(mx, xs[i]);
        double sum = 0.0;
        for (int i = 0; i < D; ++i) {
            ys[i] = std::exp(xs[i] - mx);
            sum += ys[i];
        }
        for (int i = 0; i < D; ++i) ys[i] /= sum;
    }
    Var r = unary(x, std::move(out), nullptr);
    if (!needs(x)) return r;
    Node *xn = x.n, *rn = r.n;
    rn->backfn = [xn, rn, R, D]() {
        Tensor& gx = Graph::grad_of(xn);
        for (int64_t row = 0; row < R; ++row) {
            const double* y = rn->value.data.data() + row * D;
            const double* g = rn->grad.data.data() + row * D;
            double dot = 0.0;
            for (int i = 0; i < D; ++i) dot += g[i] * y[i];
            double* out = gx.data.data() + row * D;
            for (int i = 0; i < D; ++i) out[i] += y[i] * (g[i] - dot);
        }
    };
    return r;
}

// ---------------- broadcast helpers ----------------

Var add_channel_bias(Var x, Var t) {
    const Shape& s = x.val().shape;
    if (s.size() != 4 || t.val().ndim() != 2 || t.val().dim(0) != s[0] || t.val().dim(1) != s[1])
        throw Error("add_channel_bias: bad shapes");
    const int B = s[0], C = s[1];
    const int64_t spatial = (int64_t)s[2] * s[3];
    Tensor out = x.val();
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const double v = t.val().at2(b, c);
            double* ys = out.data.data() + ((int64_t)b * C + c) * spatial;
            for (int64_t i = 0; i < spatial; ++i) ys[i] += v;
        }
    bool rg = needs(x) || needs(t);
    Var r = x.g->make(std::move(out), rg);
    if (!rg) return r;
    Node *xn = x.n, *tn = t.n, *rn = r.n;
    rn->backfn = [xn, tn, rn, B, C, spatial]() {
        if (xn->requires_grad) {
            Tensor& gx = Graph::grad_of(xn);
            for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += rn->grad.data[i];
        }
        if (tn->requires_grad) {
            Tensor& gt = Graph::grad_of(tn);
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c) {
                    const double* gs = rn->grad.data.data() + ((int64_t)b * C + c) * spatial;
                    double acc = 0.0;
                    for (int64_t i = 0; i < spatial; ++i) acc += gs[i];
                    gt.at2(b, c) += acc;
                }
        }
    };
    return r;
}

Var outer_weight(Var w, Var e) {
    const Shape& sw = w.val().shape;
    const Shape& se = e.val().shape;
    if (sw.size() != 3 || se.size() != 3 || sw[0] != se[0] || sw[2] != se[1])
        throw Error("outer_weight: expects w[B,F,L], e[B,L,D]");
    const int B = sw[0], F = sw[1], L = sw[2], D = se[2];
    Tensor out(Shape{B, F, L, D});
    for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f)
            for (int l = 0; l < L; ++l) {
                const double wv = w.val().at3(b, f, l);
                const double* ev = e.val().data.data() + ((int64_t)b * L + l) * D;
                double* ov = out.data.data() + (((int64_t)b * F + f) * L + l) * D;
                for (int d = 0; d < D; ++d) ov[d] = wv * ev[d];
            }
    bool rg = needs(w) || needs(e);
    Var r = w.g->make(std::move(out), rg);
    if (!rg) return r;
    Node *wn = w.n, *en = e.n, *rn = r.n;
    rn->backfn = [wn, en, rn, B, F, L, D]() {
        for (int b = 0; b < B; ++b)
            for (int f = 0; f < F; ++f)
                for (int l = 0; l < L; ++l) {
                    const double* gv = rn->grad.data.data() + (((int64_t)b * F + f) * L + l) * D;
                    if (wn->requires_grad) {
                        const double* ev = en->value.data.data() + ((int64_t)b * L + l) * D;
                        double acc = 0.0;
                        for (int d = 0; d < D; ++d) acc += gv[d] * ev[d];
                        Graph::grad_of(wn).at3(b, f, l) += acc;
                    }
                    if (en->requires_grad) {
                        const double wv = wn->value.at3(b, f, l);
                        double* ge = Graph::grad_of(en).data.data() + ((int64_t)b * L + l) * D;
                        for (int d = 0; d < D; ++d) ge[d] += wv * gv[d];
                    }
                }
    };
    return r;
}

// ---------------- reductions ----------------

Var mean_all(Var x) {
    const int64_t N = x.val().numel();
    double acc = 0.0;
    for (double v : x.val().data) acc += v;
    Tensor out = Tensor::scalar(acc / (double)N);
    return unary(x, std::move(out), [N](const Tensor& g, Tensor& ga) {
        const double gv = g.data[0] / (double)N;
        for (auto& v : ga.data) v += gv;
    });
}

Var mse(Var a, Var b) { return mean_all(square(sub(a, b))); }

}  // namespace animkit::ad
