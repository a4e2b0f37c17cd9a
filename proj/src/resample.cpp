#include "hspan/resample.hpp"

#include "hspan/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace hspan {

void plane_upsample_nearest(const float* in, int h, int w, int beta, float* out) {
    const int oh = h * beta, ow = w * beta;
    for (int oy = 0; oy < oh; ++oy) {
        const float* src = in + static_cast<int64_t>(oy / beta) * w;
        float* dst = out + static_cast<int64_t>(oy) * ow;
        for (int ox = 0; ox < ow; ++ox) dst[ox] = src[ox / beta];
    }
}

namespace {
struct CubicTaps {
    std::vector<int> idx;     // 4 clamped source indices per output position
    std::vector<double> wgt;  // 4 Catmull-Rom weights per output position
};

CubicTaps cubic_taps(int in, int beta) {
    const int out = in * beta;
    CubicTaps t;
    t.idx.resize(static_cast<size_t>(out) * 4);
    t.wgt.resize(static_cast<size_t>(out) * 4);
    for (int o = 0; o < out; ++o) {
        const double s = (o + 0.5) / beta - 0.5;
        const int base = static_cast<int>(std::floor(s)) - 1;
        const double f = s - std::floor(s);
        for (int m = 0; m < 4; ++m) {
            t.idx[static_cast<size_t>(o) * 4 + m] = std::clamp(base + m, 0, in - 1);
            t.wgt[static_cast<size_t>(o) * 4 + m] = catmull_rom(static_cast<double>(m - 1) - f);
        }
    }
    return t;
}
}  // namespace

void plane_upsample_bicubic(const float* in, int h, int w, int beta, float* out) {
    const CubicTaps ty = cubic_taps(h, beta);
    const CubicTaps tx = cubic_taps(w, beta);
    const int oh = h * beta, ow = w * beta;
    // horizontal pass
    std::vector<double> tmp(static_cast<size_t>(h) * ow);
    for (int y = 0; y < h; ++y) {
        const float* src = in + static_cast<int64_t>(y) * w;
        double* dst = tmp.data() + static_cast<size_t>(y) * ow;
        for (int ox = 0; ox < ow; ++ox) {
            double acc = 0.0;
            for (int m = 0; m < 4; ++m)
                acc += tx.wgt[static_cast<size_t>(ox) * 4 + m] * src[tx.idx[static_cast<size_t>(ox) * 4 + m]];
            dst[ox] = acc;
        }
    }
    // vertical pass
    for (int oy = 0; oy < oh; ++oy) {
        float* dst = out + static_cast<int64_t>(oy) * ow;
        for (int ox = 0; ox < ow; ++ox) {
            double acc = 0.0;
            for (int m = 0; m < 4; ++m)
                acc += ty.wgt[static_cast<size_t>(oy) * 4 + m] *
                       tmp[static_cast<size_t>(ty.idx[static_cast<size_t>(oy) * 4 + m]) * ow + ox];
            dst[ox] = static_cast<float>(acc);
        }
    }
}

static HSICube upsample_cube(const HSICube& y, int beta,
                             void (*plane_fn)(const float*, int, int, int, float*)) {
    if (beta < 1) throw DimensionError("upsample: beta must be >= 1");
    y.check_valid();
    HSICube out(y.bands, y.height * beta, y.width * beta);
    out.value_range = y.value_range;
    for (int b = 0; b < y.bands; ++b) plane_fn(y.band(b), y.height, y.width, beta, out.band(b));
    return out;
}

HSICube upsample_nearest(const HSICube& y, int beta) {
    return upsample_cube(y, beta, plane_upsample_nearest);
}

HSICube upsample_bicubic(const HSICube& y, int beta) {
    return upsample_cube(y, beta, plane_upsample_bicubic);
}

HSICube lanczos2_downsample(const HSICube& x, int beta) {
    if (beta < 1) throw DimensionError("lanczos2_downsample: beta must be >= 1");
    if (x.height % beta != 0 || x.width % beta != 0)
        throw DimensionError("lanczos2_downsample: spatial dims not divisible by beta");
    const Lanczos2Taps taps = lanczos2_decimate_taps(beta);
    const int nt = static_cast<int>(taps.weights.size());
    const int oh = x.height / beta, ow = x.width / beta;
    HSICube out(x.bands, oh, ow);
    out.value_range = x.value_range;
    std::vector<double> tmp(static_cast<size_t>(x.height) * ow);
    for (int b = 0; b < x.bands; ++b) {
        const float* src = x.band(b);
        for (int y = 0; y < x.height; ++y)
            for (int ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (int t = 0; t < nt; ++t)
                    acc += taps.weights[static_cast<size_t>(t)] *
                           src[static_cast<int64_t>(y) * x.width +
                               reflect_index(ox * beta + taps.first_offset + t, x.width)];
                tmp[static_cast<size_t>(y) * ow + ox] = acc;
            }
        float* dst = out.band(b);
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (int t = 0; t < nt; ++t)
                    acc += taps.weights[static_cast<size_t>(t)] *
                           tmp[static_cast<size_t>(reflect_index(oy * beta + taps.first_offset + t,
                                                                 x.height)) * ow + ox];
                dst[static_cast<int64_t>(oy) * ow + ox] = static_cast<float>(acc);
            }
    }
    return out;
}

}  // namespace hspan
