#pragma once

#include "hspan/tensor.hpp"

#include <functional>
#include <limits>
#include <memory>
#include <unordered_map>
#include <vector>

namespace hspan::nn {

// Minimal define-by-run reverse-mode autodiff. Graphs are rebuilt every
// iteration; parameter nodes persist across iterations and keep their
// gradient buffers until the optimizer consumes them.
//
// Image tensors are NCHW. Convolutions run as tiled im2col + BLAS sgemm,
// which also fixes the floating-point summation order, so repeated runs
// with the same seed reproduce bitwise (same build, same BLAS thread count).

struct Node;
using NodeRef = std::shared_ptr<Node>;

struct Node {
    Tensor val;
    Tensor grad;  // allocated on first accumulation
    bool needs_grad = false;
    std::vector<NodeRef> inputs;
    std::function<void(Node&)> backprop;
    const char* op = "leaf";
    // losses keep their double-precision value here so traces and finite
    // differences are not quantized to float32
    double scalar_hint = std::numeric_limits<double>::quiet_NaN();

    float* grad_data();  // ensures allocation
    bool has_grad() const { return grad.size() == val.size(); }
};

NodeRef constant(Tensor t);
NodeRef param(Tensor t);

// Scalar graph ops ------------------------------------------------------
NodeRef add(NodeRef a, NodeRef b);          // same shape
NodeRef scale(NodeRef a, float k);
NodeRef reshape(NodeRef a, std::vector<int> shape);  // same element count

// Activations -----------------------------------------------------------
NodeRef leaky_relu(NodeRef x, float slope);
NodeRef relu(NodeRef x);
NodeRef sigmoid(NodeRef x);
NodeRef softmax(NodeRef a);                 // 1-D

// Structure -------------------------------------------------------------
NodeRef concat_channels(NodeRef a, NodeRef b);              // NCHW, dim 1
NodeRef conv2d(NodeRef x, NodeRef w, NodeRef b, int stride, int pad);  // zero pad
NodeRef bilinear_resize(NodeRef x, int out_h, int out_w);   // align_corners=false
NodeRef global_avg_pool(NodeRef x);                         // (N,C,H,W) -> (N,C)
NodeRef linear(NodeRef w, NodeRef q);                       // (out,in) x (in) -> (out)
NodeRef band_combine(NodeRef x, NodeRef s);                 // (1,C,H,W),(C) -> (1,1,H,W)

// Fixed linear decimators for the spectral fidelity term ----------------
enum class Downsampler { MatchedGaussian, Lanczos2 };
// (N,C,H,W) -> (N,C,H/beta,W/beta); MatchedGaussian reproduces the Wald
// degradation (8x8 kernel, sigma = 0.4247*beta, symmetric-reflect borders,
// phase-0 decimation); Lanczos2 is windowed-sinc decimation.
NodeRef downsample(NodeRef x, int beta, Downsampler mode);

// Losses ----------------------------------------------------------------
// mean |a - target| over all elements, as a scalar node
NodeRef mean_abs_error(NodeRef a, const Tensor& target);

// Batch normalization; owns affine parameters and running statistics.
struct BatchNorm {
    NodeRef gamma, beta;
    Tensor running_mean, running_var;
    float momentum = 0.1f;
    float eps = 1e-5f;
    int calib_count = -1;  // >= 0: cumulative-average mode (stat calibration)

    BatchNorm() = default;  // empty; assign a real instance before use
    explicit BatchNorm(int channels);
    NodeRef operator()(NodeRef x, bool training);

    // Subsequent training-mode passes replace the running statistics with
    // the arithmetic mean of the batch statistics seen since this call;
    // used to pin exact inference stats after the last optimizer step.
    void begin_calibration();
};

// Engine ----------------------------------------------------------------
void backward(const NodeRef& root);  // root must be scalar
double scalar_value(const NodeRef& node);

// Caps BLAS threading; use 1 when optimizing several samples in parallel
// threads (per-sample arithmetic stays identical either way).
void blas_threads(int n);

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    int64_t t = 0;

    struct Slot {
        Tensor m, v;
    };
    std::unordered_map<Node*, Slot> slots;

    // Applies one update from the accumulated gradients, then zeroes them.
    void step(const std::vector<NodeRef>& params);
};

}  // namespace hspan::nn
