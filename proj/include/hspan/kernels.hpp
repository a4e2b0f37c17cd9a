#pragma once

#include <vector>

namespace hspan {

// Symmetric reflection (edge pixel not repeated across itself; -1 -> 0,
// -2 -> 1, n -> n-1). Folds repeatedly for footprints wider than the axis.
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

// Isotropic Gaussian sampled on a size x size grid whose geometric center
// sits between the two middle taps when size is even (tap a at offset
// a - (size-1)/2). Normalized so the taps sum to exactly 1.
std::vector<double> gaussian_kernel_2d(int size, double sigma);

// 1-D factor of the same kernel (the 2-D kernel is its outer product).
std::vector<double> gaussian_kernel_1d(int size, double sigma);

// Tap weights for Lanczos2 decimation by an integer factor. Output pixel i
// is centered at input coordinate c = (i+0.5)*beta - 0.5 and draws from the
// integer positions within |t - c| < 2*beta; weights are the windowed sinc
// sinc(u)*sinc(u/2), u = (t-c)/beta, renormalized to sum 1. The stencil is
// shift-invariant: input index = i*beta + first_offset + k. For beta = 1 it
// collapses to the identity.
struct Lanczos2Taps {
    int first_offset = 0;
    std::vector<double> weights;
};
Lanczos2Taps lanczos2_decimate_taps(int beta);

// Catmull-Rom cubic kernel (the common bicubic with a = -0.5).
double catmull_rom(double t);

// Lanczos2 kernel value: sinc(u)*sinc(u/2) for |u| < 2, else 0.
double lanczos2(double u);

}  // namespace hspan
