#include "hspan/srf.hpp"

#include <cmath>

namespace hspan {

SRFParams SRFParams::init(int bands, int bottleneck_dim, std::mt19937& rng,
                          SrfActivation activation) {
    if (bands < 1 || bottleneck_dim < 1)
        throw DimensionError("SRFParams: bands and bottleneck_dim must be >= 1");
    SRFParams p;
    p.bottleneck_dim = bottleneck_dim;
    p.activation = activation;
    p.w1 = fan_in_uniform({bottleneck_dim, bands}, bands, rng);
    p.w2 = fan_in_uniform({bands, bottleneck_dim}, bottleneck_dim, rng);
    return p;
}

SRFParams SRFParams::zeros(int bands, int bottleneck_dim, SrfActivation activation) {
    SRFParams p;
    p.bottleneck_dim = bottleneck_dim;
    p.activation = activation;
    p.w1 = Tensor({bottleneck_dim, bands});
    p.w2 = Tensor({bands, bottleneck_dim});
    return p;
}

void SRFParams::check() const {
    if (bottleneck_dim < 1) throw DimensionError("SRFParams: bottleneck_dim must be >= 1");
    if (!w1.all_finite() || !w2.all_finite())
        throw DataError("SRFParams: non-finite weight");
}

std::vector<double> squeeze(const HSICube& x) {
    x.check_valid();
    std::vector<double> q(static_cast<size_t>(x.bands));
    const int64_t plane = x.plane();
    for (int b = 0; b < x.bands; ++b) {
        const float* p = x.band(b);
        double acc = 0.0;
        for (int64_t i = 0; i < plane; ++i) acc += p[i];
        q[static_cast<size_t>(b)] = acc / static_cast<double>(plane);
    }
    return q;
}

SpectralResponse excite(const std::vector<double>& q, const SRFParams& params) {
    params.check();
    const int bands = params.w1.dim(1);
    const int mid = params.bottleneck_dim;
    if (static_cast<int>(q.size()) != bands)
        throw DimensionError("excite: q length " + std::to_string(q.size()) +
                             " != bands " + std::to_string(bands));

    std::vector<double> h(static_cast<size_t>(mid), 0.0);
    for (int m = 0; m < mid; ++m) {
        double acc = 0.0;
        for (int i = 0; i < bands; ++i)
            acc += static_cast<double>(params.w1.v[static_cast<size_t>(m) * bands + i]) * q[static_cast<size_t>(i)];
        h[static_cast<size_t>(m)] = std::max(0.0, acc);
    }
    std::vector<double> a(static_cast<size_t>(bands), 0.0);
    for (int i = 0; i < bands; ++i) {
        double acc = 0.0;
        for (int m = 0; m < mid; ++m)
            acc += static_cast<double>(params.w2.v[static_cast<size_t>(i) * mid + m]) * h[static_cast<size_t>(m)];
        a[static_cast<size_t>(i)] = acc;
    }

    SpectralResponse r;
    r.s.resize(static_cast<size_t>(bands));
    if (params.activation == SrfActivation::Softmax) {
        double mx = a[0];
        for (double v : a) mx = std::max(mx, v);
        double sum = 0.0;
        for (int i = 0; i < bands; ++i) {
            r.s[static_cast<size_t>(i)] = std::exp(a[static_cast<size_t>(i)] - mx);
            sum += r.s[static_cast<size_t>(i)];
        }
        for (double& v : r.s) v /= sum;
    } else {
        for (int i = 0; i < bands; ++i)
            r.s[static_cast<size_t>(i)] = 1.0 / (1.0 + std::exp(-a[static_cast<size_t>(i)]));
    }
    return r;
}

PANImage predict_pan(const HSICube& x, const SpectralResponse& s) {
    x.check_valid();
    if (static_cast<int>(s.s.size()) != x.bands)
        throw DimensionError("predict_pan: response length " + std::to_string(s.s.size()) +
                             " != bands " + std::to_string(x.bands));
    PANImage pan(x.height, x.width);
    const int64_t plane = x.plane();
    for (int64_t i = 0; i < plane; ++i) {
        double acc = 0.0;
        for (int b = 0; b < x.bands; ++b)
            acc += s.s[static_cast<size_t>(b)] * x.data[static_cast<size_t>(b) * plane + i];
        pan.data[static_cast<size_t>(i)] = static_cast<float>(acc);
    }
    return pan;
}

SrfHead::SrfHead(const SRFParams& p, bool trainable) : activation(p.activation) {
    p.check();
    w1 = trainable ? nn::param(p.w1) : nn::constant(p.w1);
    w2 = trainable ? nn::param(p.w2) : nn::constant(p.w2);
}

nn::NodeRef SrfHead::response(nn::NodeRef x) const {
    auto q = nn::reshape(nn::global_avg_pool(std::move(x)), {w1->val.dim(1)});
    auto a = nn::linear(w2, nn::relu(nn::linear(w1, std::move(q))));
    return activation == SrfActivation::Softmax ? nn::softmax(std::move(a))
                                                : nn::sigmoid(std::move(a));
}

nn::NodeRef SrfHead::predicted_pan(nn::NodeRef x) const {
    auto s = response(x);
    return nn::band_combine(std::move(x), std::move(s));
}

std::vector<nn::NodeRef> SrfHead::params() const {
    if (!w1->needs_grad) return {};
    return {w1, w2};
}

SRFParams SrfHead::snapshot() const {
    SRFParams p;
    p.w1 = w1->val;
    p.w2 = w2->val;
    p.bottleneck_dim = w1->val.dim(0);
    p.activation = activation;
    p.trainable = w1->needs_grad;
    return p;
}

}  // namespace hspan
