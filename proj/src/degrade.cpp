#include "hspan/degrade.hpp"

#include "hspan/kernels.hpp"

#include <cmath>

namespace hspan {

DegradeSpec DegradeSpec::make(int beta, int pan_band_count, int kernel_size,
                              double sigma_override) {
    DegradeSpec s;
    s.beta = beta;
    s.kernel_size = kernel_size;
    s.sigma = sigma_override > 0.0 ? sigma_override : 0.4247 * beta;
    s.pan_band_count = pan_band_count;
    return s;
}

void DegradeSpec::check(int reference_bands) const {
    if (beta < 1) throw DimensionError("DegradeSpec: beta must be >= 1");
    if (kernel_size < 1) throw DimensionError("DegradeSpec: kernel_size must be >= 1");
    if (!(sigma > 0.0)) throw DataError("DegradeSpec: sigma must be > 0");
    if (pan_band_count < 1 || pan_band_count > reference_bands)
        throw DimensionError("DegradeSpec: pan_band_count " + std::to_string(pan_band_count) +
                             " out of range [1, " + std::to_string(reference_bands) + "]");
}

std::vector<double> gaussian_kernel(int size, double sigma) {
    return gaussian_kernel_2d(size, sigma);
}

HSICube blur_downsample(const HSICube& ref, const DegradeSpec& spec) {
    ref.check_valid();
    if (ref.height % spec.beta != 0 || ref.width % spec.beta != 0)
        throw DimensionError("blur_downsample: spatial dims (" + std::to_string(ref.height) + "," +
                             std::to_string(ref.width) + ") not divisible by beta " +
                             std::to_string(spec.beta));
    const std::vector<double> kern = gaussian_kernel_2d(spec.kernel_size, spec.sigma);
    const int S = spec.kernel_size;
    const int shift = (S - 1) / 2;
    const int oh = ref.height / spec.beta, ow = ref.width / spec.beta;

    HSICube out(ref.bands, oh, ow);
    out.value_range = ref.value_range;
    for (int b = 0; b < ref.bands; ++b) {
        const float* src = ref.band(b);
        float* dst = out.band(b);
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (int a = 0; a < S; ++a) {
                    const int iy = reflect_index(oy * spec.beta + a - shift, ref.height);
                    const double* krow = kern.data() + static_cast<size_t>(a) * S;
                    const float* srow = src + static_cast<int64_t>(iy) * ref.width;
                    for (int c = 0; c < S; ++c)
                        acc += krow[c] * srow[reflect_index(ox * spec.beta + c - shift, ref.width)];
                }
                dst[static_cast<int64_t>(oy) * ow + ox] = static_cast<float>(acc);
            }
    }
    return out;
}

PANImage synthesize_pan(const HSICube& ref, int pan_band_count) {
    ref.check_valid();
    if (pan_band_count < 1 || pan_band_count > ref.bands)
        throw DimensionError("synthesize_pan: pan_band_count " + std::to_string(pan_band_count) +
                             " out of range [1, " + std::to_string(ref.bands) + "]");
    PANImage pan(ref.height, ref.width);
    const int64_t plane = ref.plane();
    for (int64_t i = 0; i < plane; ++i) {
        double acc = 0.0;
        for (int b = 0; b < pan_band_count; ++b) acc += ref.data[static_cast<size_t>(b) * plane + i];
        pan.data[static_cast<size_t>(i)] = static_cast<float>(acc / pan_band_count);
    }
    return pan;
}

std::vector<HSICube> partition_patches(const HSICube& scene, int patch) {
    scene.check_valid();
    if (patch < 1) throw DimensionError("partition_patches: patch must be >= 1");
    if (scene.height % patch != 0 || scene.width % patch != 0)
        throw DimensionError("partition_patches: scene dims (" + std::to_string(scene.height) +
                             "," + std::to_string(scene.width) + ") not divisible by patch " +
                             std::to_string(patch));
    const int rows = scene.height / patch, cols = scene.width / patch;
    std::vector<HSICube> patches;
    patches.reserve(static_cast<size_t>(rows) * cols);
    for (int pr = 0; pr < rows; ++pr)
        for (int pc = 0; pc < cols; ++pc) {
            HSICube p(scene.bands, patch, patch);
            p.value_range = scene.value_range;
            for (int b = 0; b < scene.bands; ++b)
                for (int y = 0; y < patch; ++y)
                    for (int x = 0; x < patch; ++x)
                        p.at(b, y, x) = scene.at(b, pr * patch + y, pc * patch + x);
            patches.push_back(std::move(p));
        }
    return patches;
}

FusionSample make_sample(const HSICube& ref, const DegradeSpec& spec,
                         const std::string& patch_id, const std::string& dataset_name) {
    spec.check(ref.bands);
    FusionSample s;
    s.lr_hsi = blur_downsample(ref, spec);
    s.pan = synthesize_pan(ref, spec.pan_band_count);
    s.reference = ref;
    s.has_reference = true;
    s.beta = spec.beta;
    s.patch_id = patch_id;
    s.dataset_name = dataset_name;
    validate_sample(s);
    return s;
}

}  // namespace hspan
