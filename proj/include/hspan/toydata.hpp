#pragma once

#include "hspan/cube.hpp"

#include <cstdint>

namespace hspan {

// Bundled synthetic scene: Gaussian blobs and sharp rectangles on a smooth
// gradient, with per-object spectral gain profiles so bands are strongly
// correlated but not identical. Deterministic for a fixed seed. The default
// 2x4 grid of 32x32 patches yields the 8-sample toy set used by the
// acceptance runs (beta = 2, PAN = mean of the first 2 bands).
struct ToySceneSpec {
    int bands = 4;
    int patch = 32;
    int grid_rows = 2;
    int grid_cols = 4;
    int blobs_per_patch = 3;
    int rects_per_patch = 3;
    uint32_t seed = 1234;
};

HSICube make_toy_scene(const ToySceneSpec& spec);

}  // namespace hspan
