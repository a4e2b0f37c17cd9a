#pragma once

#include "hspan/cube.hpp"
#include "hspan/nn.hpp"

#include <array>
#include <filesystem>
#include <random>
#include <vector>

namespace hspan {

// Over-complete residual reconstruction network. The encoder grows the
// spatial dimension (2x, 4x, 8x via bilinear upsampling before each conv),
// which shrinks the effective receptive field layer by layer; the decoder
// returns to the input scale with skip concatenations.
//
// widths[0..6] map onto the seven conv+BN+LeakyReLU layers:
//   initial feature extraction, encoder 2x/4x/8x, decoder 4x/2x, and the
//   final residual reconstruction (widths[6] = output band count; 0 means
//   "fill from data").
struct HyperKiteConfig {
    std::array<int, 7> widths{32, 64, 128, 128, 64, 32, 0};
    std::array<int, 7> kernels{3, 3, 3, 3, 3, 3, 3};
    int epochs = 2500;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    int batch_size = 4;
    float leaky_slope = 0.2f;
    uint32_t seed = 0;
};

// Receptive field of the conv filter at encoder layer i (1-based) relative
// to the input: (1/2)^(2(i-1)) * k * k. Strictly decreasing in i.
double receptive_field(int layer_index, int kernel);

struct HyperKiteNet {
    struct Layer {
        nn::NodeRef w, b;
        nn::BatchNorm bn;
    };
    HyperKiteConfig config;
    int in_bands = 0;   // l (PAN channel excluded)
    std::vector<Layer> layers;  // 7

    HyperKiteNet(const HyperKiteConfig& cfg, int bands, std::mt19937& rng);

    // Graph forward on an (N, l+1, H, W) input; training toggles BN mode.
    nn::NodeRef forward_graph(const nn::NodeRef& x_in, bool training);

    // Residual prediction for one sample with frozen statistics.
    HSICube forward(const HSICube& x_dip, const PANImage& p);

    std::vector<nn::NodeRef> params() const;
};

struct HyperKiteTrainItem {
    HSICube x_dip;
    PANImage pan;
    HSICube reference;
};

// Minimizes mean |forward(x_in) - (x_ref - x_dip)| with Adam over shuffled
// batches. Returns the loss history; entry 0 is the pre-update loss over
// the whole set, entries 1..epochs are per-epoch training means. Aborts
// with NumericError naming the epoch if the loss goes non-finite.
std::vector<double> train(HyperKiteNet& net, const std::vector<HyperKiteTrainItem>& samples);

// Elementwise x_dip + x_res; clamps into x_dip.value_range unless disabled.
HSICube fuse(const HSICube& x_dip, const HSICube& x_res, bool clamp = true);

// Single-file weight archive: JSON header (config, seed, tensor index)
// followed by raw little-endian float payloads.
void save_checkpoint(const HyperKiteNet& net, const std::filesystem::path& path);
HyperKiteNet load_checkpoint(const std::filesystem::path& path);

}  // namespace hspan
