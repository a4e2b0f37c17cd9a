#include "hspan/toydata.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace hspan {

HSICube make_toy_scene(const ToySceneSpec& spec) {
    if (spec.bands < 1 || spec.patch < 4 || spec.grid_rows < 1 || spec.grid_cols < 1)
        throw DimensionError("make_toy_scene: bad spec");
    const int H = spec.grid_rows * spec.patch;
    const int W = spec.grid_cols * spec.patch;
    const int L = spec.bands;
    HSICube scene(L, H, W);

    std::mt19937 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // smooth background with a mild spectral tilt
    for (int b = 0; b < L; ++b) {
        const double tilt = 0.22 + 0.08 * b / std::max(1, L - 1);
        float* plane = scene.band(b);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                plane[static_cast<int64_t>(y) * W + x] = static_cast<float>(
                    tilt + 0.12 * x / W + 0.08 * y / H);
    }

    auto band_gain = [&](double gamma, int b) {
        const double t = L > 1 ? static_cast<double>(b) / (L - 1) - 0.5 : 0.0;
        return std::clamp(1.0 + gamma * t, 0.15, 2.0);
    };

    for (int pr = 0; pr < spec.grid_rows; ++pr)
        for (int pc = 0; pc < spec.grid_cols; ++pc) {
            const int oy = pr * spec.patch, ox = pc * spec.patch;
            for (int k = 0; k < spec.blobs_per_patch; ++k) {
                const double cy = oy + 2 + unit(rng) * (spec.patch - 4);
                const double cx = ox + 2 + unit(rng) * (spec.patch - 4);
                const double sg = 1.2 + 2.0 * unit(rng);
                const double amp = 0.15 + 0.25 * unit(rng);
                const double gamma = 2.0 * unit(rng) - 1.0;
                const int r = static_cast<int>(std::ceil(3 * sg));
                for (int b = 0; b < L; ++b) {
                    const double a = amp * band_gain(gamma, b);
                    float* plane = scene.band(b);
                    for (int y = std::max(0, static_cast<int>(cy) - r);
                         y <= std::min(H - 1, static_cast<int>(cy) + r); ++y)
                        for (int x = std::max(0, static_cast<int>(cx) - r);
                             x <= std::min(W - 1, static_cast<int>(cx) + r); ++x) {
                            const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                            plane[static_cast<int64_t>(y) * W + x] +=
                                static_cast<float>(a * std::exp(-d2 / (2 * sg * sg)));
                        }
                }
            }
            for (int k = 0; k < spec.rects_per_patch; ++k) {
                const int rh = 3 + static_cast<int>(unit(rng) * (spec.patch / 3));
                const int rw = 3 + static_cast<int>(unit(rng) * (spec.patch / 3));
                const int y0 = oy + static_cast<int>(unit(rng) * (spec.patch - rh));
                const int x0 = ox + static_cast<int>(unit(rng) * (spec.patch - rw));
                const double amp = (unit(rng) < 0.5 ? -1.0 : 1.0) * (0.1 + 0.2 * unit(rng));
                const double gamma = 2.0 * unit(rng) - 1.0;
                for (int b = 0; b < L; ++b) {
                    const double a = amp * band_gain(gamma, b);
                    float* plane = scene.band(b);
                    for (int y = y0; y < y0 + rh; ++y)
                        for (int x = x0; x < x0 + rw; ++x)
                            plane[static_cast<int64_t>(y) * W + x] += static_cast<float>(a);
                }
            }
        }

    for (float& v : scene.data) v = std::clamp(v, 0.0f, 1.0f);
    return scene;
}

}  // namespace hspan
