#pragma once

#include "hspan/cube.hpp"

#include <string>
#include <vector>

namespace hspan {

// Wald-protocol degradation settings. sigma is tied to the scale factor:
// sigma = 0.4247 * beta.
struct DegradeSpec {
    int beta = 4;
    int kernel_size = 8;
    double sigma = 0.0;       // filled from beta when <= 0
    int pan_band_count = 1;   // bands averaged into the synthetic PAN

    static DegradeSpec make(int beta, int pan_band_count, int kernel_size = 8,
                            double sigma_override = 0.0);
    void check(int reference_bands) const;
};

// size x size isotropic Gaussian, taps summing to exactly 1, grid centered
// between the two middle taps for even sizes. Row-major.
std::vector<double> gaussian_kernel(int size, double sigma);

// Per-band convolution with the spec kernel under symmetric-reflect borders,
// then decimation keeping every beta-th pixel starting at offset 0.
// Tap a of the kernel reads input offset a - (size-1)/2 (integer floor).
HSICube blur_downsample(const HSICube& ref, const DegradeSpec& spec);

// Pixelwise mean of bands [0, pan_band_count).
PANImage synthesize_pan(const HSICube& ref, int pan_band_count);

// Non-overlapping row-major tiling into patch x patch cubes.
std::vector<HSICube> partition_patches(const HSICube& scene, int patch);

FusionSample make_sample(const HSICube& ref, const DegradeSpec& spec,
                         const std::string& patch_id, const std::string& dataset_name);

}  // namespace hspan
