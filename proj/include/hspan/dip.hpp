#pragma once

#include "hspan/cube.hpp"
#include "hspan/nn.hpp"
#include "hspan/srf.hpp"

#include <string>
#include <vector>

namespace hspan {

// Deep-image-prior upsampler configuration. Defaults follow the reference
// operating point: 32-channel U(0,0.1) noise input, five stride-2 encoder
// blocks and five bilinear decoder blocks at width 128 / kernel 3, five
// 1x1 skip blocks at width 4, Adam(1e-3, wd 1e-4, beta1 0.9), 1300
// iterations, LeakyReLU slope 0.2, lambda = 0.8.
struct DIPConfig {
    int noise_channels = 32;
    double noise_lo = 0.0, noise_hi = 0.1;
    int levels = 5;
    int down_width = 128;
    int down_kernel = 3;
    int skip_width = 4;
    int skip_kernel = 1;
    int iterations = 1300;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double adam_beta1 = 0.9;  // the "momentum" row
    double adam_beta2 = 0.999;
    float leaky_slope = 0.2f;
    double lambda = 0.8;
    uint32_t seed = 0;
    nn::Downsampler downsampler = nn::Downsampler::MatchedGaussian;
    int srf_bottleneck = 0;  // 0 -> max(bands/8, 4)
    SrfActivation srf_activation = SrfActivation::Softmax;
    bool freeze_srf = false;
};

enum class UpsampleMethod { DipQss, DipSpectral, Nearest, Bicubic };
UpsampleMethod parse_upsample_method(const std::string& name);  // throws DataError

struct EnergySample {
    int iteration;
    double spectral;
    double spatial;
    double total;
};

struct DIPState {
    Tensor z;                  // fixed input noise, never modified
    uint64_t z_hash = 0;
    SRFParams srf;             // final spectral response parameters
    std::vector<double> srf_response;  // s at the final iterate
    int iterations_run = 0;
    std::vector<EnergySample> energy_trace;
};

// U-Net-like generator driven from fixed noise: stride-2 conv encoder,
// bilinear x2 decoder with 1x1 skip connections, BN + LeakyReLU throughout,
// sigmoid output head. Spatial dims must be divisible by 2^levels.
struct DipGenerator {
    struct Block {
        nn::NodeRef w, b;
        nn::BatchNorm bn;
    };
    std::vector<Block> down, up, skip;
    Block head;
    int levels;
    float slope;

    DipGenerator(const DIPConfig& cfg, int out_bands, int in_h, int in_w, std::mt19937& rng);
    nn::NodeRef forward(const nn::NodeRef& z);  // updates BN batch statistics
    std::vector<nn::NodeRef> params() const;
};

// Builds the generator and checks the shape contract; returns the callable
// pieces used by optimize_dip (also handy for tests probing architecture).
DipGenerator build_generator(const DIPConfig& config, int out_bands, int in_h, int in_w,
                             std::mt19937& rng);

// Mean |d(x_dip) - y| with d the configured decimation by beta.
double spectral_energy(const HSICube& x_dip, const HSICube& y, int beta,
                       nn::Downsampler mode = nn::Downsampler::MatchedGaussian);

struct QssBreakdown {
    double spectral;
    double spatial;
    double total;
};
// spectral_energy + lambda * mean |predict_pan(x_dip, excite(squeeze(x_dip))) - p|
QssBreakdown qss_energy(const HSICube& x_dip, const HSICube& y, const PANImage& p,
                        const SRFParams& srf, double lambda, int beta,
                        nn::Downsampler mode = nn::Downsampler::MatchedGaussian);

// Runs Adam jointly over generator and SRF parameters minimizing the
// combined energy; dip-spectral drops the spatial term (and the SRF) from
// the objective but still records it in the trace. Aborts with NumericError
// on a non-finite energy, reporting the iteration and both terms.
std::pair<HSICube, DIPState> optimize_dip(const FusionSample& sample, const DIPConfig& config,
                                          UpsampleMethod method = UpsampleMethod::DipQss);

// Per-band interpolation baselines.
HSICube baseline_upsample(const HSICube& y, int beta, UpsampleMethod method);

}  // namespace hspan
