#include "hspan/nn.hpp"

#include "hspan/cube.hpp"
#include "hspan/kernels.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

namespace hspan::nn {

float* Node::grad_data() {
    if (!has_grad()) {
        grad.shape = val.shape;
        grad.v.assign(val.v.size(), 0.0f);
    }
    return grad.data();
}

NodeRef constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    n->needs_grad = false;
    n->op = "const";
    return n;
}

NodeRef param(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    n->needs_grad = true;
    n->op = "param";
    return n;
}

static NodeRef make_op(const char* op, Tensor val, std::vector<NodeRef> inputs,
                       std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    n->op = op;
    n->inputs = std::move(inputs);
    for (const auto& in : n->inputs)
        if (in->needs_grad) n->needs_grad = true;
    if (n->needs_grad) n->backprop = std::move(backprop);
    return n;
}

// --------------------------------------------------------------------------
// elementwise
// --------------------------------------------------------------------------

NodeRef add(NodeRef a, NodeRef b) {
    if (!a->val.same_shape(b->val)) throw DimensionError("nn::add: shape mismatch");
    Tensor out(a->val.shape);
    for (int64_t i = 0; i < out.size(); ++i) out.v[i] = a->val.v[i] + b->val.v[i];
    const double hint = a->scalar_hint + b->scalar_hint;  // NaN unless both are losses
    auto n_ = make_op("add", std::move(out), {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            if (!n.inputs[k]->needs_grad) continue;
            float* g = n.inputs[k]->grad_data();
            for (int64_t i = 0; i < n.val.size(); ++i) g[i] += n.grad.v[i];
        }
    });
    n_->scalar_hint = hint;
    return n_;
}

NodeRef scale(NodeRef a, float k) {
    Tensor out(a->val.shape);
    for (int64_t i = 0; i < out.size(); ++i) out.v[i] = k * a->val.v[i];
    const double hint = k * a->scalar_hint;
    auto n_ = make_op("scale", std::move(out), {a}, [k](Node& n) {
        float* g = n.inputs[0]->grad_data();
        for (int64_t i = 0; i < n.val.size(); ++i) g[i] += k * n.grad.v[i];
    });
    n_->scalar_hint = hint;
    return n_;
}

NodeRef reshape(NodeRef a, std::vector<int> shape) {
    if (Tensor::count(shape) != a->val.size())
        throw DimensionError("nn::reshape: element count mismatch");
    Tensor out(std::move(shape));
    out.v = a->val.v;
    return make_op("reshape", std::move(out), {a}, [](Node& n) {
        float* g = n.inputs[0]->grad_data();
        for (int64_t i = 0; i < n.val.size(); ++i) g[i] += n.grad.v[i];
    });
}

NodeRef leaky_relu(NodeRef x, float slope) {
    Tensor out(x->val.shape);
    for (int64_t i = 0; i < out.size(); ++i) {
        const float v = x->val.v[i];
        out.v[i] = v >= 0.0f ? v : slope * v;
    }
    return make_op("leaky_relu", std::move(out), {x}, [slope](Node& n) {
        const float* xv = n.inputs[0]->val.data();
        float* g = n.inputs[0]->grad_data();
        for (int64_t i = 0; i < n.val.size(); ++i)
            g[i] += (xv[i] >= 0.0f ? 1.0f : slope) * n.grad.v[i];
    });
}

NodeRef relu(NodeRef x) { return leaky_relu(std::move(x), 0.0f); }

NodeRef sigmoid(NodeRef x) {
    Tensor out(x->val.shape);
    for (int64_t i = 0; i < out.size(); ++i)
        out.v[i] = 1.0f / (1.0f + std::exp(-x->val.v[i]));
    return make_op("sigmoid", std::move(out), {x}, [](Node& n) {
        float* g = n.inputs[0]->grad_data();
        for (int64_t i = 0; i < n.val.size(); ++i) {
            const float y = n.val.v[i];
            g[i] += y * (1.0f - y) * n.grad.v[i];
        }
    });
}

NodeRef softmax(NodeRef a) {
    if (a->val.ndim() != 1) throw DimensionError("nn::softmax: expects a 1-D tensor");
    const int n = a->val.dim(0);
    Tensor out(a->val.shape);
    float mx = a->val.v[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, a->val.v[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        out.v[i] = std::exp(a->val.v[i] - mx);
        sum += out.v[i];
    }
    for (int i = 0; i < n; ++i) out.v[i] = static_cast<float>(out.v[i] / sum);
    return make_op("softmax", std::move(out), {a}, [n](Node& nd) {
        double dot = 0.0;
        for (int i = 0; i < n; ++i) dot += static_cast<double>(nd.grad.v[i]) * nd.val.v[i];
        float* g = nd.inputs[0]->grad_data();
        for (int i = 0; i < n; ++i)
            g[i] += nd.val.v[i] * static_cast<float>(nd.grad.v[i] - dot);
    });
}

// --------------------------------------------------------------------------
// structure
// --------------------------------------------------------------------------

static void expect_nchw(const Tensor& t, const char* who) {
    if (t.ndim() != 4) throw DimensionError(std::string(who) + ": expects an NCHW tensor");
}

NodeRef concat_channels(NodeRef a, NodeRef b) {
    expect_nchw(a->val, "nn::concat_channels");
    expect_nchw(b->val, "nn::concat_channels");
    const int N = a->val.dim(0), Ca = a->val.dim(1), H = a->val.dim(2), W = a->val.dim(3);
    const int Cb = b->val.dim(1);
    if (b->val.dim(0) != N || b->val.dim(2) != H || b->val.dim(3) != W)
        throw DimensionError("nn::concat_channels: spatial/batch mismatch");
    Tensor out({N, Ca + Cb, H, W});
    const int64_t plane = static_cast<int64_t>(H) * W;
    for (int s = 0; s < N; ++s) {
        std::memcpy(out.data() + (static_cast<int64_t>(s) * (Ca + Cb)) * plane,
                    a->val.data() + static_cast<int64_t>(s) * Ca * plane,
                    static_cast<size_t>(Ca * plane) * sizeof(float));
        std::memcpy(out.data() + (static_cast<int64_t>(s) * (Ca + Cb) + Ca) * plane,
                    b->val.data() + static_cast<int64_t>(s) * Cb * plane,
                    static_cast<size_t>(Cb * plane) * sizeof(float));
    }
    return make_op("concat", std::move(out), {a, b}, [N, Ca, Cb, plane](Node& n) {
        for (int s = 0; s < N; ++s) {
            const float* gy = n.grad.data() + static_cast<int64_t>(s) * (Ca + Cb) * plane;
            if (n.inputs[0]->needs_grad) {
                float* ga = n.inputs[0]->grad_data() + static_cast<int64_t>(s) * Ca * plane;
                for (int64_t i = 0; i < Ca * plane; ++i) ga[i] += gy[i];
            }
            if (n.inputs[1]->needs_grad) {
                float* gb = n.inputs[1]->grad_data() + static_cast<int64_t>(s) * Cb * plane;
                for (int64_t i = 0; i < Cb * plane; ++i) gb[i] += gy[Ca * plane + i];
            }
        }
    });
}

// im2col over an output-row range [y0, y1); col is (C*k*k) x ((y1-y0)*ow)
static void im2col(const float* x, int C, int H, int W, int k, int stride, int pad,
                   int ow, int y0, int y1, float* col) {
    const int64_t T = static_cast<int64_t>(y1 - y0) * ow;
    for (int c = 0; c < C; ++c) {
        const float* xc = x + static_cast<int64_t>(c) * H * W;
        for (int a = 0; a < k; ++a) {
            for (int b = 0; b < k; ++b) {
                float* dst = col + (static_cast<int64_t>(c) * k * k + a * k + b) * T;
                for (int oy = y0; oy < y1; ++oy, dst += ow) {
                    const int iy = oy * stride + a - pad;
                    if (iy < 0 || iy >= H) {
                        std::memset(dst, 0, static_cast<size_t>(ow) * sizeof(float));
                        continue;
                    }
                    const float* src = xc + static_cast<int64_t>(iy) * W;
                    if (stride == 1) {
                        const int off = b - pad;
                        const int lo = std::max(0, -off);           // first valid ox
                        const int hi = std::min(ow, W - off);        // one past last valid ox
                        if (lo > 0) std::memset(dst, 0, static_cast<size_t>(lo) * sizeof(float));
                        if (hi > lo)
                            std::memcpy(dst + lo, src + lo + off,
                                        static_cast<size_t>(hi - lo) * sizeof(float));
                        if (hi < ow)
                            std::memset(dst + std::max(hi, lo), 0,
                                        static_cast<size_t>(ow - std::max(hi, lo)) * sizeof(float));
                    } else {
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride + b - pad;
                            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0f;
                        }
                    }
                }
            }
        }
    }
}

static void col2im_add(const float* col, int C, int H, int W, int k, int stride, int pad,
                       int ow, int y0, int y1, float* gx) {
    const int64_t T = static_cast<int64_t>(y1 - y0) * ow;
    for (int c = 0; c < C; ++c) {
        float* gc = gx + static_cast<int64_t>(c) * H * W;
        for (int a = 0; a < k; ++a) {
            for (int b = 0; b < k; ++b) {
                const float* srow = col + (static_cast<int64_t>(c) * k * k + a * k + b) * T;
                for (int oy = y0; oy < y1; ++oy, srow += ow) {
                    const int iy = oy * stride + a - pad;
                    if (iy < 0 || iy >= H) continue;
                    float* dst = gc + static_cast<int64_t>(iy) * W;
                    if (stride == 1) {
                        const int off = b - pad;
                        const int lo = std::max(0, -off);
                        const int hi = std::min(ow, W - off);
                        for (int ox = lo; ox < hi; ++ox) dst[ox + off] += srow[ox];
                    } else {
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride + b - pad;
                            if (ix >= 0 && ix < W) dst[ix] += srow[ox];
                        }
                    }
                }
            }
        }
    }
}

static int conv_tile_rows(int K, int ow, int oh) {
    // bound the im2col buffer to ~48 MB
    const int64_t budget = (48ll << 20) / 4 / std::max(1, K);
    return std::clamp(static_cast<int>(budget / std::max(1, ow)), 1, oh);
}

NodeRef conv2d(NodeRef x, NodeRef w, NodeRef b, int stride, int pad) {
    expect_nchw(x->val, "nn::conv2d");
    if (w->val.ndim() != 4) throw DimensionError("nn::conv2d: weight must be (Cout,Cin,k,k)");
    const int N = x->val.dim(0), Cin = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    const int Cout = w->val.dim(0), k = w->val.dim(2);
    if (w->val.dim(1) != Cin)
        throw DimensionError("nn::conv2d: weight Cin " + std::to_string(w->val.dim(1)) +
                             " != input channels " + std::to_string(Cin));
    if (w->val.dim(3) != k) throw DimensionError("nn::conv2d: non-square kernel");
    if (b->val.size() != Cout) throw DimensionError("nn::conv2d: bias length != Cout");
    const int oh = (H + 2 * pad - k) / stride + 1;
    const int ow = (W + 2 * pad - k) / stride + 1;
    if (oh < 1 || ow < 1) throw DimensionError("nn::conv2d: empty output");

    const int K = Cin * k * k;
    const int64_t P = static_cast<int64_t>(oh) * ow;
    const int trows = conv_tile_rows(K, ow, oh);

    Tensor out({N, Cout, oh, ow});
    {
        std::unique_ptr<float[]> col(new float[static_cast<size_t>(K) * trows * ow]);
        for (int s = 0; s < N; ++s) {
            const float* xs = x->val.data() + static_cast<int64_t>(s) * Cin * H * W;
            float* ys = out.data() + static_cast<int64_t>(s) * Cout * P;
            for (int y0 = 0; y0 < oh; y0 += trows) {
                const int y1 = std::min(oh, y0 + trows);
                const int T = (y1 - y0) * ow;
                im2col(xs, Cin, H, W, k, stride, pad, ow, y0, y1, col.get());
                cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, Cout, T, K, 1.0f,
                            w->val.data(), K, col.get(), T, 0.0f,
                            ys + static_cast<int64_t>(y0) * ow, static_cast<int>(P));
            }
            for (int c = 0; c < Cout; ++c) {
                const float bias = b->val.v[static_cast<size_t>(c)];
                float* row = ys + static_cast<int64_t>(c) * P;
                for (int64_t p = 0; p < P; ++p) row[p] += bias;
            }
        }
    }

    auto back = [N, Cin, H, W, Cout, k, stride, pad, oh, ow, K, P, trows](Node& n) {
        NodeRef xin = n.inputs[0], win = n.inputs[1], bin = n.inputs[2];
        std::unique_ptr<float[]> col(new float[static_cast<size_t>(K) * trows * ow]);
        std::unique_ptr<float[]> dcol(new float[static_cast<size_t>(K) * trows * ow]);
        float* gw = win->needs_grad ? win->grad_data() : nullptr;
        float* gx_all = xin->needs_grad ? xin->grad_data() : nullptr;
        for (int s = 0; s < N; ++s) {
            const float* xs = xin->val.data() + static_cast<int64_t>(s) * Cin * H * W;
            const float* gys = n.grad.data() + static_cast<int64_t>(s) * Cout * P;
            for (int y0 = 0; y0 < oh; y0 += trows) {
                const int y1 = std::min(oh, y0 + trows);
                const int T = (y1 - y0) * ow;
                if (gw) {
                    im2col(xs, Cin, H, W, k, stride, pad, ow, y0, y1, col.get());
                    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, Cout, K, T, 1.0f,
                                gys + static_cast<int64_t>(y0) * ow, static_cast<int>(P),
                                col.get(), T, 1.0f, gw, K);
                }
                if (gx_all) {
                    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, K, T, Cout, 1.0f,
                                win->val.data(), K, gys + static_cast<int64_t>(y0) * ow,
                                static_cast<int>(P), 0.0f, dcol.get(), T);
                    col2im_add(dcol.get(), Cin, H, W, k, stride, pad, ow, y0, y1,
                               gx_all + static_cast<int64_t>(s) * Cin * H * W);
                }
            }
            if (bin->needs_grad) {
                float* gb = bin->grad_data();
                for (int c = 0; c < Cout; ++c) {
                    double acc = 0.0;
                    const float* row = gys + static_cast<int64_t>(c) * P;
                    for (int64_t p = 0; p < P; ++p) acc += row[p];
                    gb[c] += static_cast<float>(acc);
                }
            }
        }
    };
    return make_op("conv2d", std::move(out), {x, w, b}, std::move(back));
}

// --------------------------------------------------------------------------
// resampling
// --------------------------------------------------------------------------

namespace {
struct LinearTaps {
    std::vector<int> i0, i1;
    std::vector<float> w1;  // weight of i1; i0 gets 1-w1
};

LinearTaps bilinear_taps(int in, int out) {
    LinearTaps t;
    t.i0.resize(out);
    t.i1.resize(out);
    t.w1.resize(out);
    const double r = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double s = (o + 0.5) * r - 0.5;
        if (s < 0.0) s = 0.0;
        if (s > in - 1) s = in - 1;
        const int i0 = static_cast<int>(std::floor(s));
        const int i1 = std::min(i0 + 1, in - 1);
        t.i0[o] = i0;
        t.i1[o] = i1;
        t.w1[o] = static_cast<float>(s - i0);
    }
    return t;
}
}  // namespace

NodeRef bilinear_resize(NodeRef x, int out_h, int out_w) {
    expect_nchw(x->val, "nn::bilinear_resize");
    const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    auto ty = std::make_shared<LinearTaps>(bilinear_taps(H, out_h));
    auto tx = std::make_shared<LinearTaps>(bilinear_taps(W, out_w));

    Tensor out({N, C, out_h, out_w});
    for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
        const float* src = x->val.data() + nc * H * W;
        float* dst = out.data() + nc * static_cast<int64_t>(out_h) * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const float wy = ty->w1[oy];
            const float* r0 = src + static_cast<int64_t>(ty->i0[oy]) * W;
            const float* r1 = src + static_cast<int64_t>(ty->i1[oy]) * W;
            for (int ox = 0; ox < out_w; ++ox) {
                const float wx = tx->w1[ox];
                const float a = r0[tx->i0[ox]] * (1.0f - wx) + r0[tx->i1[ox]] * wx;
                const float b = r1[tx->i0[ox]] * (1.0f - wx) + r1[tx->i1[ox]] * wx;
                dst[static_cast<int64_t>(oy) * out_w + ox] = a * (1.0f - wy) + b * wy;
            }
        }
    }
    auto back = [N, C, H, W, out_h, out_w, ty, tx](Node& n) {
        float* gx = n.inputs[0]->grad_data();
        for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
            float* g = gx + nc * H * W;
            const float* gy = n.grad.data() + nc * static_cast<int64_t>(out_h) * out_w;
            for (int oy = 0; oy < out_h; ++oy) {
                const float wy = ty->w1[oy];
                for (int ox = 0; ox < out_w; ++ox) {
                    const float wx = tx->w1[ox];
                    const float v = gy[static_cast<int64_t>(oy) * out_w + ox];
                    g[static_cast<int64_t>(ty->i0[oy]) * W + tx->i0[ox]] += v * (1 - wy) * (1 - wx);
                    g[static_cast<int64_t>(ty->i0[oy]) * W + tx->i1[ox]] += v * (1 - wy) * wx;
                    g[static_cast<int64_t>(ty->i1[oy]) * W + tx->i0[ox]] += v * wy * (1 - wx);
                    g[static_cast<int64_t>(ty->i1[oy]) * W + tx->i1[ox]] += v * wy * wx;
                }
            }
        }
    };
    return make_op("bilinear", std::move(out), {x}, std::move(back));
}

NodeRef global_avg_pool(NodeRef x) {
    expect_nchw(x->val, "nn::global_avg_pool");
    const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    const int64_t plane = static_cast<int64_t>(H) * W;
    Tensor out({N, C});
    for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
        const float* p = x->val.data() + nc * plane;
        double acc = 0.0;
        for (int64_t i = 0; i < plane; ++i) acc += p[i];
        out.v[static_cast<size_t>(nc)] = static_cast<float>(acc / static_cast<double>(plane));
    }
    return make_op("gap", std::move(out), {x}, [N, C, plane](Node& n) {
        float* gx = n.inputs[0]->grad_data();
        for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
            const float g = n.grad.v[static_cast<size_t>(nc)] / static_cast<float>(plane);
            float* p = gx + nc * plane;
            for (int64_t i = 0; i < plane; ++i) p[i] += g;
        }
    });
}

NodeRef linear(NodeRef w, NodeRef q) {
    if (w->val.ndim() != 2) throw DimensionError("nn::linear: weight must be 2-D");
    const int out = w->val.dim(0), in = w->val.dim(1);
    if (q->val.size() != in) throw DimensionError("nn::linear: input length mismatch");
    Tensor y({out});
    for (int o = 0; o < out; ++o) {
        double acc = 0.0;
        const float* row = w->val.data() + static_cast<int64_t>(o) * in;
        for (int i = 0; i < in; ++i) acc += static_cast<double>(row[i]) * q->val.v[static_cast<size_t>(i)];
        y.v[static_cast<size_t>(o)] = static_cast<float>(acc);
    }
    return make_op("linear", std::move(y), {w, q}, [out, in](Node& n) {
        NodeRef w = n.inputs[0], q = n.inputs[1];
        if (w->needs_grad) {
            float* gw = w->grad_data();
            for (int o = 0; o < out; ++o)
                for (int i = 0; i < in; ++i)
                    gw[static_cast<int64_t>(o) * in + i] +=
                        n.grad.v[static_cast<size_t>(o)] * q->val.v[static_cast<size_t>(i)];
        }
        if (q->needs_grad) {
            float* gq = q->grad_data();
            for (int i = 0; i < in; ++i) {
                double acc = 0.0;
                for (int o = 0; o < out; ++o)
                    acc += static_cast<double>(w->val.v[static_cast<size_t>(o) * in + i]) *
                           n.grad.v[static_cast<size_t>(o)];
                gq[i] += static_cast<float>(acc);
            }
        }
    });
}

NodeRef band_combine(NodeRef x, NodeRef s) {
    expect_nchw(x->val, "nn::band_combine");
    if (x->val.dim(0) != 1) throw DimensionError("nn::band_combine: expects batch 1");
    const int C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    if (s->val.size() != C) throw DimensionError("nn::band_combine: weight length != bands");
    const int64_t plane = static_cast<int64_t>(H) * W;
    Tensor out({1, 1, H, W});
    for (int64_t i = 0; i < plane; ++i) {
        double acc = 0.0;
        for (int c = 0; c < C; ++c)
            acc += static_cast<double>(s->val.v[static_cast<size_t>(c)]) *
                   x->val.data()[static_cast<int64_t>(c) * plane + i];
        out.v[static_cast<size_t>(i)] = static_cast<float>(acc);
    }
    return make_op("band_combine", std::move(out), {x, s}, [C, plane](Node& n) {
        NodeRef x = n.inputs[0], s = n.inputs[1];
        if (x->needs_grad) {
            float* gx = x->grad_data();
            for (int c = 0; c < C; ++c) {
                const float sc = s->val.v[static_cast<size_t>(c)];
                float* g = gx + static_cast<int64_t>(c) * plane;
                for (int64_t i = 0; i < plane; ++i) g[i] += sc * n.grad.v[static_cast<size_t>(i)];
            }
        }
        if (s->needs_grad) {
            float* gs = s->grad_data();
            for (int c = 0; c < C; ++c) {
                const float* p = x->val.data() + static_cast<int64_t>(c) * plane;
                double acc = 0.0;
                for (int64_t i = 0; i < plane; ++i)
                    acc += static_cast<double>(p[i]) * n.grad.v[static_cast<size_t>(i)];
                gs[c] += static_cast<float>(acc);
            }
        }
    });
}

// --------------------------------------------------------------------------
// fixed decimators
// --------------------------------------------------------------------------

// dense 2-D stencil decimation with symmetric-reflect borders
static NodeRef decimate_2d_kernel(NodeRef x, int beta, std::vector<double> kern, int ksize,
                                  int shift) {
    const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    if (H % beta != 0 || W % beta != 0)
        throw DimensionError("nn::downsample: spatial dims not divisible by beta");
    const int oh = H / beta, ow = W / beta;
    auto k = std::make_shared<std::vector<double>>(std::move(kern));

    Tensor out({N, C, oh, ow});
    for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
        const float* src = x->val.data() + nc * H * W;
        float* dst = out.data() + nc * static_cast<int64_t>(oh) * ow;
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (int a = 0; a < ksize; ++a) {
                    const int iy = reflect_index(oy * beta + a - shift, H);
                    for (int b = 0; b < ksize; ++b) {
                        const int ix = reflect_index(ox * beta + b - shift, W);
                        acc += (*k)[static_cast<size_t>(a) * ksize + b] *
                               src[static_cast<int64_t>(iy) * W + ix];
                    }
                }
                dst[static_cast<int64_t>(oy) * ow + ox] = static_cast<float>(acc);
            }
    }
    auto back = [N, C, H, W, oh, ow, beta, ksize, shift, k](Node& n) {
        float* gx = n.inputs[0]->grad_data();
        for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
            float* g = gx + nc * H * W;
            const float* gy = n.grad.data() + nc * static_cast<int64_t>(oh) * ow;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const double v = gy[static_cast<int64_t>(oy) * ow + ox];
                    for (int a = 0; a < ksize; ++a) {
                        const int iy = reflect_index(oy * beta + a - shift, H);
                        for (int b = 0; b < ksize; ++b) {
                            const int ix = reflect_index(ox * beta + b - shift, W);
                            g[static_cast<int64_t>(iy) * W + ix] +=
                                static_cast<float>((*k)[static_cast<size_t>(a) * ksize + b] * v);
                        }
                    }
                }
        }
    };
    return make_op("decimate_gauss", std::move(out), {x}, std::move(back));
}

// separable 1-D taps applied to rows then columns
static NodeRef decimate_separable(NodeRef x, int beta, const Lanczos2Taps& taps) {
    const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    if (H % beta != 0 || W % beta != 0)
        throw DimensionError("nn::downsample: spatial dims not divisible by beta");
    const int oh = H / beta, ow = W / beta;
    auto tp = std::make_shared<Lanczos2Taps>(taps);
    const int nt = static_cast<int>(taps.weights.size());

    Tensor out({N, C, oh, ow});
    std::vector<double> tmp(static_cast<size_t>(H) * ow);
    for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
        const float* src = x->val.data() + nc * H * W;
        // horizontal
        for (int y = 0; y < H; ++y)
            for (int ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (int t = 0; t < nt; ++t) {
                    const int ix = reflect_index(ox * beta + tp->first_offset + t, W);
                    acc += tp->weights[static_cast<size_t>(t)] * src[static_cast<int64_t>(y) * W + ix];
                }
                tmp[static_cast<size_t>(y) * ow + ox] = acc;
            }
        // vertical
        float* dst = out.data() + nc * static_cast<int64_t>(oh) * ow;
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (int t = 0; t < nt; ++t) {
                    const int iy = reflect_index(oy * beta + tp->first_offset + t, H);
                    acc += tp->weights[static_cast<size_t>(t)] * tmp[static_cast<size_t>(iy) * ow + ox];
                }
                dst[static_cast<int64_t>(oy) * ow + ox] = static_cast<float>(acc);
            }
    }
    auto back = [N, C, H, W, oh, ow, beta, nt, tp](Node& n) {
        float* gx = n.inputs[0]->grad_data();
        std::vector<double> gtmp(static_cast<size_t>(H) * ow);
        for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
            std::fill(gtmp.begin(), gtmp.end(), 0.0);
            const float* gy = n.grad.data() + nc * static_cast<int64_t>(oh) * ow;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const double v = gy[static_cast<int64_t>(oy) * ow + ox];
                    for (int t = 0; t < nt; ++t) {
                        const int iy = reflect_index(oy * beta + tp->first_offset + t, H);
                        gtmp[static_cast<size_t>(iy) * ow + ox] += tp->weights[static_cast<size_t>(t)] * v;
                    }
                }
            float* g = gx + nc * H * W;
            for (int y = 0; y < H; ++y)
                for (int ox = 0; ox < ow; ++ox) {
                    const double v = gtmp[static_cast<size_t>(y) * ow + ox];
                    if (v == 0.0) continue;
                    for (int t = 0; t < nt; ++t) {
                        const int ix = reflect_index(ox * beta + tp->first_offset + t, W);
                        g[static_cast<int64_t>(y) * W + ix] +=
                            static_cast<float>(tp->weights[static_cast<size_t>(t)] * v);
                    }
                }
        }
    };
    return make_op("decimate_lanczos2", std::move(out), {x}, std::move(back));
}

NodeRef downsample(NodeRef x, int beta, Downsampler mode) {
    expect_nchw(x->val, "nn::downsample");
    if (beta == 1 && mode == Downsampler::Lanczos2) {
        // identity stencil; keep the graph edge for gradient flow
        return scale(x, 1.0f);
    }
    if (mode == Downsampler::MatchedGaussian) {
        const int ksize = 8;
        const double sigma = 0.4247 * beta;
        return decimate_2d_kernel(std::move(x), beta, gaussian_kernel_2d(ksize, sigma), ksize,
                                  (ksize - 1) / 2);
    }
    return decimate_separable(std::move(x), beta, lanczos2_decimate_taps(beta));
}

NodeRef mean_abs_error(NodeRef a, const Tensor& target) {
    if (!a->val.same_shape(target)) throw DimensionError("nn::mean_abs_error: shape mismatch");
    const int64_t n = a->val.size();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += std::fabs(static_cast<double>(a->val.v[i]) - target.v[i]);
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(n)));
    auto tgt = std::make_shared<Tensor>(target);
    auto n_ = make_op("mean_abs_error", std::move(out), {a}, [n, tgt](Node& nd) {
        const float g = nd.grad.v[0] / static_cast<float>(n);
        float* ga = nd.inputs[0]->grad_data();
        const float* av = nd.inputs[0]->val.data();
        for (int64_t i = 0; i < n; ++i) {
            const float d = av[i] - tgt->v[i];
            if (d > 0.0f)
                ga[i] += g;
            else if (d < 0.0f)
                ga[i] -= g;
        }
    });
    n_->scalar_hint = acc / static_cast<double>(n);
    return n_;
}

// --------------------------------------------------------------------------
// batch normalization
// --------------------------------------------------------------------------

BatchNorm::BatchNorm(int channels)
    : gamma(param(Tensor::full({channels}, 1.0f))),
      beta(param(Tensor::full({channels}, 0.0f))),
      running_mean(Tensor::full({channels}, 0.0f)),
      running_var(Tensor::full({channels}, 1.0f)) {}

void BatchNorm::begin_calibration() { calib_count = 0; }

NodeRef BatchNorm::operator()(NodeRef x, bool training) {
    expect_nchw(x->val, "nn::BatchNorm");
    const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    if (C != gamma->val.size()) throw DimensionError("nn::BatchNorm: channel mismatch");
    const int64_t plane = static_cast<int64_t>(H) * W;
    const int64_t m = static_cast<int64_t>(N) * plane;  // reduction size per channel

    Tensor out({N, C, H, W});
    if (training) {
        auto xhat = std::make_shared<Tensor>(Tensor({N, C, H, W}));
        auto inv_std = std::make_shared<std::vector<float>>(static_cast<size_t>(C));
        for (int c = 0; c < C; ++c) {
            double sum = 0.0, sum2 = 0.0;
            for (int s = 0; s < N; ++s) {
                const float* p = x->val.data() + (static_cast<int64_t>(s) * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    sum += p[i];
                    sum2 += static_cast<double>(p[i]) * p[i];
                }
            }
            const double mean = sum / static_cast<double>(m);
            const double var = std::max(0.0, sum2 / static_cast<double>(m) - mean * mean);
            const double inv = 1.0 / std::sqrt(var + eps);
            (*inv_std)[static_cast<size_t>(c)] = static_cast<float>(inv);

            const float g = gamma->val.v[static_cast<size_t>(c)];
            const float bta = beta->val.v[static_cast<size_t>(c)];
            for (int s = 0; s < N; ++s) {
                const float* p = x->val.data() + (static_cast<int64_t>(s) * C + c) * plane;
                float* xh = xhat->data() + (static_cast<int64_t>(s) * C + c) * plane;
                float* o = out.data() + (static_cast<int64_t>(s) * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    xh[i] = static_cast<float>((p[i] - mean) * inv);
                    o[i] = g * xh[i] + bta;
                }
            }
            // running stats use the unbiased variance, as is conventional
            const double unbiased = m > 1 ? var * static_cast<double>(m) / (m - 1) : var;
            double mom = momentum;
            if (calib_count >= 0 && c == 0) ++calib_count;
            if (calib_count > 0) mom = 1.0 / calib_count;
            running_mean.v[static_cast<size_t>(c)] =
                static_cast<float>((1.0 - mom) * running_mean.v[static_cast<size_t>(c)] + mom * mean);
            running_var.v[static_cast<size_t>(c)] =
                static_cast<float>((1.0 - mom) * running_var.v[static_cast<size_t>(c)] + mom * unbiased);
        }
        auto back = [N, C, plane, m, xhat, inv_std](Node& n) {
            NodeRef x = n.inputs[0], gam = n.inputs[1], bet = n.inputs[2];
            for (int c = 0; c < C; ++c) {
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (int s = 0; s < N; ++s) {
                    const float* gy = n.grad.data() + (static_cast<int64_t>(s) * C + c) * plane;
                    const float* xh = xhat->data() + (static_cast<int64_t>(s) * C + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) {
                        sum_dy += gy[i];
                        sum_dy_xhat += static_cast<double>(gy[i]) * xh[i];
                    }
                }
                if (gam->needs_grad) gam->grad_data()[c] += static_cast<float>(sum_dy_xhat);
                if (bet->needs_grad) bet->grad_data()[c] += static_cast<float>(sum_dy);
                if (x->needs_grad) {
                    const double g = gam->val.v[static_cast<size_t>(c)];
                    const double inv = (*inv_std)[static_cast<size_t>(c)];
                    const double mean_dy = sum_dy / static_cast<double>(m);
                    const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(m);
                    for (int s = 0; s < N; ++s) {
                        const float* gy = n.grad.data() + (static_cast<int64_t>(s) * C + c) * plane;
                        const float* xh = xhat->data() + (static_cast<int64_t>(s) * C + c) * plane;
                        float* gx = x->grad_data() + (static_cast<int64_t>(s) * C + c) * plane;
                        for (int64_t i = 0; i < plane; ++i)
                            gx[i] += static_cast<float>(g * inv * (gy[i] - mean_dy - xh[i] * mean_dy_xhat));
                    }
                }
            }
        };
        return make_op("batchnorm", std::move(out), {x, gamma, beta}, std::move(back));
    }

    // eval mode: normalize with frozen running statistics
    auto rm = std::make_shared<Tensor>(running_mean);
    auto rv = std::make_shared<Tensor>(running_var);
    const float e = eps;
    for (int c = 0; c < C; ++c) {
        const float mean = rm->v[static_cast<size_t>(c)];
        const float inv = 1.0f / std::sqrt(rv->v[static_cast<size_t>(c)] + e);
        const float g = gamma->val.v[static_cast<size_t>(c)];
        const float bta = beta->val.v[static_cast<size_t>(c)];
        for (int s = 0; s < N; ++s) {
            const float* p = x->val.data() + (static_cast<int64_t>(s) * C + c) * plane;
            float* o = out.data() + (static_cast<int64_t>(s) * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) o[i] = g * (p[i] - mean) * inv + bta;
        }
    }
    auto back = [N, C, plane, rm, rv, e](Node& n) {
        NodeRef x = n.inputs[0], gam = n.inputs[1], bet = n.inputs[2];
        for (int c = 0; c < C; ++c) {
            const float mean = rm->v[static_cast<size_t>(c)];
            const float inv = 1.0f / std::sqrt(rv->v[static_cast<size_t>(c)] + e);
            const float g = gam->val.v[static_cast<size_t>(c)];
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int s = 0; s < N; ++s) {
                const float* gy = n.grad.data() + (static_cast<int64_t>(s) * C + c) * plane;
                const float* p = x->val.data() + (static_cast<int64_t>(s) * C + c) * plane;
                float* gx = x->needs_grad ? x->grad_data() + (static_cast<int64_t>(s) * C + c) * plane
                                          : nullptr;
                for (int64_t i = 0; i < plane; ++i) {
                    sum_dy += gy[i];
                    sum_dy_xhat += static_cast<double>(gy[i]) * (p[i] - mean) * inv;
                    if (gx) gx[i] += g * inv * gy[i];
                }
            }
            if (gam->needs_grad) gam->grad_data()[c] += static_cast<float>(sum_dy_xhat);
            if (bet->needs_grad) bet->grad_data()[c] += static_cast<float>(sum_dy);
        }
    };
    return make_op("batchnorm_eval", std::move(out), {x, gamma, beta}, std::move(back));
}

// --------------------------------------------------------------------------
// engine
// --------------------------------------------------------------------------

static void topo_postorder(Node* root, std::vector<Node*>& order) {
    // iterative DFS over the needs_grad subgraph
    std::vector<std::pair<Node*, size_t>> stack;
    std::unordered_map<Node*, bool> visited;
    stack.emplace_back(root, 0);
    visited[root] = true;
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            Node* next = node->inputs[idx++].get();
            if (next->needs_grad && !visited[next]) {
                visited[next] = true;
                stack.emplace_back(next, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

void backward(const NodeRef& root) {
    if (root->val.size() != 1) throw DimensionError("nn::backward: root must be scalar");
    if (!root->needs_grad) return;
    std::vector<Node*> order;
    topo_postorder(root.get(), order);
    root->grad_data()[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->has_grad()) n->backprop(*n);
    }
}

void blas_threads(int n) {
    openblas_set_num_threads(n > 0 ? n : openblas_get_num_procs());
}

double scalar_value(const NodeRef& node) {
    if (node->val.size() != 1) throw DimensionError("nn::scalar_value: not a scalar");
    if (!std::isnan(node->scalar_hint)) return node->scalar_hint;
    return static_cast<double>(node->val.v[0]);
}

void Adam::step(const std::vector<NodeRef>& params) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (const auto& p : params) {
        if (!p->has_grad()) continue;  // parameter untouched by this graph
        auto& slot = slots[p.get()];
        if (slot.m.size() != p->val.size()) {
            slot.m = Tensor(p->val.shape);
            slot.v = Tensor(p->val.shape);
        }
        for (int64_t i = 0; i < p->val.size(); ++i) {
            const double g = static_cast<double>(p->grad.v[i]) + weight_decay * p->val.v[i];
            const double m = beta1 * slot.m.v[i] + (1.0 - beta1) * g;
            const double v = beta2 * slot.v.v[i] + (1.0 - beta2) * g * g;
            slot.m.v[i] = static_cast<float>(m);
            slot.v.v[i] = static_cast<float>(v);
            p->val.v[i] -= static_cast<float>(lr * (m / bc1) / (std::sqrt(v / bc2) + eps));
        }
        p->grad.v.assign(p->grad.v.size(), 0.0f);
    }
}

}  // namespace hspan::nn
