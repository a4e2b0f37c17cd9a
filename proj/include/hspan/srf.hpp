#pragma once

#include "hspan/cube.hpp"
#include "hspan/nn.hpp"
#include "hspan/tensor.hpp"

#include <random>
#include <vector>

namespace hspan {

// Normalization applied to the bottleneck output. Softmax is the default:
// it makes the response a convex band combination summing to 1. The sigmoid
// variant (no sum-to-one guarantee) is kept for fidelity experiments.
enum class SrfActivation { Softmax, Sigmoid };

// Learnable spectral response state: two bias-free fully-connected layers
// forming a bottleneck around a ReLU.
struct SRFParams {
    Tensor w1;  // (bottleneck_dim, bands)
    Tensor w2;  // (bands, bottleneck_dim)
    int bottleneck_dim = 0;
    SrfActivation activation = SrfActivation::Softmax;
    bool trainable = true;

    static int default_bottleneck(int bands) { return std::max(bands / 8, 4); }
    // Zero-mean uniform init scaled by fan-in; draws w1 then w2.
    static SRFParams init(int bands, int bottleneck_dim, std::mt19937& rng,
                          SrfActivation activation = SrfActivation::Softmax);
    static SRFParams zeros(int bands, int bottleneck_dim,
                           SrfActivation activation = SrfActivation::Softmax);
    void check() const;
};

// Per-band response weights; non-negative, summing to 1 under softmax.
struct SpectralResponse {
    std::vector<double> s;
};

// q[i] = spatial mean of band i (global average pooling).
std::vector<double> squeeze(const HSICube& x);

// s = normalize(w2 . relu(w1 . q)); softmax by default.
SpectralResponse excite(const std::vector<double>& q, const SRFParams& params);

// Pixelwise weighted band sum with weights s.
PANImage predict_pan(const HSICube& x, const SpectralResponse& s);

// Autodiff head used inside the DIP energy: owns the parameter nodes and
// evaluates s / p-hat on a live graph.
struct SrfHead {
    nn::NodeRef w1, w2;
    SrfActivation activation = SrfActivation::Softmax;

    explicit SrfHead(const SRFParams& p, bool trainable);
    nn::NodeRef response(nn::NodeRef x) const;           // (1,C,H,W) -> (C)
    nn::NodeRef predicted_pan(nn::NodeRef x) const;      // (1,C,H,W) -> (1,1,H,W)
    std::vector<nn::NodeRef> params() const;             // empty when frozen
    SRFParams snapshot() const;
};

}  // namespace hspan
