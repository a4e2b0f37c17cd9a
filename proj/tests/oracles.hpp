// Independent brute-force reference implementations used as test oracles.
// These transliterate the defining formulas directly and deliberately share
// no code with the library paths they check.
#pragma once

#include "hspan/cube.hpp"

#include <cmath>
#include <vector>

namespace oracle {

// symmetric reflection, re-derived here on purpose
inline int reflect(int i, int n) {
    if (n == 1) return 0;
    for (;;) {
        if (i < 0)
            i = -i - 1;
        else if (i >= n)
            i = 2 * n - 1 - i;
        else
            return i;
    }
}

// pointwise unnormalized Gaussian
inline double gauss(double x, double sigma) { return std::exp(-x * x / (2.0 * sigma * sigma)); }

// nested-loop convolution of one plane with an arbitrary 2-D kernel whose
// tap (a,b) reads offset (a - shift, b - shift), reflect borders
inline std::vector<double> conv2d_reflect(const std::vector<double>& img, int h, int w,
                                          const std::vector<double>& kern, int ks, int shift) {
    std::vector<double> out(static_cast<size_t>(h) * w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int a = 0; a < ks; ++a)
                for (int b = 0; b < ks; ++b)
                    acc += kern[static_cast<size_t>(a) * ks + b] *
                           img[static_cast<size_t>(reflect(y + a - shift, h)) * w +
                               reflect(x + b - shift, w)];
            out[static_cast<size_t>(y) * w + x] = acc;
        }
    return out;
}

// blur + decimate oracle: full convolution first, then keep every beta-th
// pixel starting at (0,0)
inline std::vector<double> blur_decimate(const std::vector<double>& img, int h, int w,
                                         const std::vector<double>& kern, int ks, int shift,
                                         int beta) {
    const auto blurred = conv2d_reflect(img, h, w, kern, ks, shift);
    std::vector<double> out;
    for (int y = 0; y < h; y += beta)
        for (int x = 0; x < w; x += beta)
            out.push_back(blurred[static_cast<size_t>(y) * w + x]);
    return out;
}

// direct Catmull-Rom (a = -0.5) evaluator at one output pixel
inline double catmull_rom_at(const std::vector<double>& img, int h, int w, int beta, int oy,
                             int ox) {
    auto kernel = [](double t) {
        t = std::fabs(t);
        constexpr double a = -0.5;
        if (t < 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
        if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
        return 0.0;
    };
    const double sy = (oy + 0.5) / beta - 0.5;
    const double sx = (ox + 0.5) / beta - 0.5;
    const int by = static_cast<int>(std::floor(sy)), bx = static_cast<int>(std::floor(sx));
    double acc = 0.0;
    for (int a = -1; a <= 2; ++a)
        for (int b = -1; b <= 2; ++b) {
            const int yy = std::min(std::max(by + a, 0), h - 1);
            const int xx = std::min(std::max(bx + b, 0), w - 1);
            acc += kernel(sy - (by + a)) * kernel(sx - (bx + b)) *
                   img[static_cast<size_t>(yy) * w + xx];
        }
    return acc;
}

// direct windowed-sinc (Lanczos2) decimator: per output pixel, 2-D sum of
// per-axis normalized sinc(u)*sinc(u/2) weights over the 4*beta support
inline double lanczos2_at(const std::vector<double>& img, int h, int w, int beta, int oy, int ox) {
    auto lcz = [](double u) {
        u = std::fabs(u);
        if (u >= 2.0) return 0.0;
        auto sinc = [](double v) { return v == 0.0 ? 1.0 : std::sin(M_PI * v) / (M_PI * v); };
        return sinc(u) * sinc(u / 2.0);
    };
    const double cy = (oy + 0.5) * beta - 0.5;
    const double cx = (ox + 0.5) * beta - 0.5;
    double acc = 0.0, wy_sum = 0.0, wx_sum = 0.0;
    const int y_lo = static_cast<int>(std::ceil(cy - 2.0 * beta + 1e-9));
    const int y_hi = static_cast<int>(std::floor(cy + 2.0 * beta - 1e-9));
    const int x_lo = static_cast<int>(std::ceil(cx - 2.0 * beta + 1e-9));
    const int x_hi = static_cast<int>(std::floor(cx + 2.0 * beta - 1e-9));
    for (int t = y_lo; t <= y_hi; ++t) wy_sum += lcz((t - cy) / beta);
    for (int t = x_lo; t <= x_hi; ++t) wx_sum += lcz((t - cx) / beta);
    for (int ty = y_lo; ty <= y_hi; ++ty)
        for (int tx = x_lo; tx <= x_hi; ++tx)
            acc += lcz((ty - cy) / beta) / wy_sum * lcz((tx - cx) / beta) / wx_sum *
                   img[static_cast<size_t>(reflect(ty, h)) * w + reflect(tx, w)];
    return acc;
}

// ---- direct-formula scalar metrics -------------------------------------

inline double m_cc(const hspan::HSICube& x, const hspan::HSICube& r) {
    const int64_t n = r.plane();
    double total = 0.0;
    for (int b = 0; b < r.bands; ++b) {
        double ma = 0.0, mb = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            ma += x.band(b)[i];
            mb += r.band(b)[i];
        }
        ma /= static_cast<double>(n);
        mb /= static_cast<double>(n);
        double num = 0.0, da = 0.0, db = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            num += (x.band(b)[i] - ma) * (r.band(b)[i] - mb);
            da += (x.band(b)[i] - ma) * (x.band(b)[i] - ma);
            db += (r.band(b)[i] - mb) * (r.band(b)[i] - mb);
        }
        total += num / std::sqrt(da * db);
    }
    return total / r.bands;
}

inline double m_sam_deg(const hspan::HSICube& x, const hspan::HSICube& r) {
    const int64_t n = r.plane();
    double total = 0.0;
    int64_t used = 0;
    for (int64_t i = 0; i < n; ++i) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int b = 0; b < r.bands; ++b) {
            dot += static_cast<double>(x.band(b)[i]) * r.band(b)[i];
            na += static_cast<double>(x.band(b)[i]) * x.band(b)[i];
            nb += static_cast<double>(r.band(b)[i]) * r.band(b)[i];
        }
        if (na == 0.0 || nb == 0.0) continue;
        double c = dot / std::sqrt(na * nb);
        if (c > 1.0) c = 1.0;
        if (c < -1.0) c = -1.0;
        total += std::acos(c) * 180.0 / M_PI;
        ++used;
    }
    return total / static_cast<double>(used);
}

inline double m_rmse(const hspan::HSICube& x, const hspan::HSICube& r) {
    double acc = 0.0;
    for (int64_t i = 0; i < r.size(); ++i) {
        const double d = static_cast<double>(x.data[static_cast<size_t>(i)]) -
                         r.data[static_cast<size_t>(i)];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(r.size()));
}

inline double m_rsnr(const hspan::HSICube& x, const hspan::HSICube& r) {
    double num = 0.0, den = 0.0;
    for (int64_t i = 0; i < r.size(); ++i) {
        num += static_cast<double>(r.data[static_cast<size_t>(i)]) * r.data[static_cast<size_t>(i)];
        const double d = static_cast<double>(x.data[static_cast<size_t>(i)]) -
                         r.data[static_cast<size_t>(i)];
        den += d * d;
    }
    return 10.0 * std::log10(num / den);
}

inline double m_ergas(const hspan::HSICube& x, const hspan::HSICube& r, int beta) {
    const int64_t n = r.plane();
    double acc = 0.0;
    for (int b = 0; b < r.bands; ++b) {
        double mu = 0.0, se = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            mu += r.band(b)[i];
            const double d = static_cast<double>(x.band(b)[i]) - r.band(b)[i];
            se += d * d;
        }
        mu /= static_cast<double>(n);
        const double rmse_i = std::sqrt(se / static_cast<double>(n));
        acc += (rmse_i / mu) * (rmse_i / mu);
    }
    return 100.0 / beta * std::sqrt(acc / r.bands);
}

inline double m_psnr(const hspan::HSICube& x, const hspan::HSICube& r) {
    const int64_t n = r.plane();
    double total = 0.0;
    int used = 0;
    for (int b = 0; b < r.bands; ++b) {
        double mx = r.band(b)[0], se = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            mx = std::max(mx, static_cast<double>(r.band(b)[i]));
            const double d = static_cast<double>(x.band(b)[i]) - r.band(b)[i];
            se += d * d;
        }
        const double rmse_i = std::sqrt(se / static_cast<double>(n));
        if (rmse_i == 0.0) continue;
        total += 10.0 * std::log10((mx / rmse_i) * (mx / rmse_i));
        ++used;
    }
    return used ? total / used : std::numeric_limits<double>::infinity();
}

}  // namespace oracle
