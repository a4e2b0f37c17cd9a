#include "hspan/kernels.hpp"

#include "hspan/cube.hpp"

#include <cmath>

namespace hspan {

std::vector<double> gaussian_kernel_1d(int size, double sigma) {
    if (size < 1) throw DimensionError("gaussian_kernel: size must be >= 1");
    if (!(sigma > 0.0)) throw DataError("gaussian_kernel: sigma must be > 0");
    std::vector<double> g(size);
    const double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        const double x = i - c;
        g[i] = std::exp(-x * x / (2.0 * sigma * sigma));
        sum += g[i];
    }
    for (double& v : g) v /= sum;
    return g;
}

std::vector<double> gaussian_kernel_2d(int size, double sigma) {
    const std::vector<double> g = gaussian_kernel_1d(size, sigma);
    std::vector<double> k(static_cast<size_t>(size) * size);
    double sum = 0.0;
    for (int a = 0; a < size; ++a)
        for (int b = 0; b < size; ++b) {
            k[static_cast<size_t>(a) * size + b] = g[a] * g[b];
            sum += k[static_cast<size_t>(a) * size + b];
        }
    // exact renormalization absorbs the rounding of the outer product
    for (double& v : k) v /= sum;
    return k;
}

static double sinc(double x) {
    if (x == 0.0) return 1.0;
    const double px = M_PI * x;
    return std::sin(px) / px;
}

double lanczos2(double u) {
    u = std::fabs(u);
    if (u >= 2.0) return 0.0;
    return sinc(u) * sinc(u / 2.0);
}

Lanczos2Taps lanczos2_decimate_taps(int beta) {
    if (beta < 1) throw DimensionError("lanczos2_decimate_taps: beta must be >= 1");
    const double frac = (beta - 1) / 2.0;  // c - i*beta, constant over i
    const int lo = static_cast<int>(std::ceil(frac - 2.0 * beta + 1e-9));
    const int hi = static_cast<int>(std::floor(frac + 2.0 * beta - 1e-9));
    Lanczos2Taps taps;
    taps.first_offset = lo;
    taps.weights.resize(static_cast<size_t>(hi - lo + 1));
    double sum = 0.0;
    for (int d = lo; d <= hi; ++d) {
        const double w = lanczos2((d - frac) / beta);
        taps.weights[static_cast<size_t>(d - lo)] = w;
        sum += w;
    }
    for (double& w : taps.weights) w /= sum;
    return taps;
}

double catmull_rom(double t) {
    t = std::fabs(t);
    if (t < 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
    if (t < 2.0) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
    return 0.0;
}

}  // namespace hspan
