#pragma once

#include "hspan/cube.hpp"

namespace hspan {

// Per-band interpolation of a cube to beta x its spatial size.
// nearest: block replication, out(i,j) = in(i/beta, j/beta).
// bicubic: separable Catmull-Rom (a = -0.5), source coordinate
//          (o + 0.5)/beta - 0.5, clamped borders.
HSICube upsample_nearest(const HSICube& y, int beta);
HSICube upsample_bicubic(const HSICube& y, int beta);

// Single plane versions used by the cube ops.
void plane_upsample_nearest(const float* in, int h, int w, int beta, float* out);
void plane_upsample_bicubic(const float* in, int h, int w, int beta, float* out);

// Lanczos2 windowed-sinc decimation by an integer factor with
// symmetric-reflect borders (the alternative d(.) of the spectral energy).
HSICube lanczos2_downsample(const HSICube& x, int beta);

}  // namespace hspan
