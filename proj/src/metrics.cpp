#include "hspan/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace hspan {

static void expect_same_dims(const HSICube& x, const HSICube& ref, const char* who) {
    if (x.bands != ref.bands)
        throw DimensionError(std::string(who) + ": band axis mismatch (" + std::to_string(x.bands) +
                             " vs " + std::to_string(ref.bands) + ")");
    if (x.height != ref.height || x.width != ref.width)
        throw DimensionError(std::string(who) + ": spatial axis mismatch");
}

static double band_rmse(const HSICube& x, const HSICube& ref, int b) {
    const int64_t n = ref.plane();
    const float* xa = x.band(b);
    const float* ra = ref.band(b);
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(xa[i]) - ra[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(n));
}

double cc(const HSICube& x, const HSICube& ref) {
    expect_same_dims(x, ref, "cc");
    const int64_t n = ref.plane();
    double total = 0.0;
    for (int b = 0; b < ref.bands; ++b) {
        const float* xa = x.band(b);
        const float* ra = ref.band(b);
        double mx = 0.0, mr = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            mx += xa[i];
            mr += ra[i];
        }
        mx /= static_cast<double>(n);
        mr /= static_cast<double>(n);
        double sxr = 0.0, sxx = 0.0, srr = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const double dx = xa[i] - mx, dr = ra[i] - mr;
            sxr += dx * dr;
            sxx += dx * dx;
            srr += dr * dr;
        }
        if (sxx == 0.0 || srr == 0.0)
            throw DataError("cc: constant band " + std::to_string(b) +
                            " makes the correlation undefined");
        total += sxr / std::sqrt(sxx * srr);
    }
    return total / ref.bands;
}

double sam(const HSICube& x, const HSICube& ref) {
    expect_same_dims(x, ref, "sam");
    const int64_t n = ref.plane();
    const int64_t plane = n;
    double total = 0.0;
    int64_t used = 0;
    for (int64_t i = 0; i < n; ++i) {
        double dot = 0.0, nx = 0.0, nr = 0.0;
        for (int b = 0; b < ref.bands; ++b) {
            const double xv = x.data[static_cast<size_t>(b) * plane + i];
            const double rv = ref.data[static_cast<size_t>(b) * plane + i];
            dot += xv * rv;
            nx += xv * xv;
            nr += rv * rv;
        }
        if (nx == 0.0 || nr == 0.0) continue;  // zero spectrum, skipped
        double c = dot / std::sqrt(nx * nr);
        c = std::clamp(c, -1.0, 1.0);
        total += std::acos(c);
        ++used;
    }
    if (used == 0) throw DataError("sam: every pixel has a zero spectrum");
    return total / static_cast<double>(used) * (180.0 / M_PI);
}

double rmse(const HSICube& x, const HSICube& ref) {
    expect_same_dims(x, ref, "rmse");
    double acc = 0.0;
    for (int64_t i = 0; i < ref.size(); ++i) {
        const double d = static_cast<double>(x.data[static_cast<size_t>(i)]) -
                         ref.data[static_cast<size_t>(i)];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(ref.size()));
}

double rsnr(const HSICube& x, const HSICube& ref) {
    expect_same_dims(x, ref, "rsnr");
    double num = 0.0, den = 0.0;
    for (int64_t i = 0; i < ref.size(); ++i) {
        const double r = ref.data[static_cast<size_t>(i)];
        const double d = static_cast<double>(x.data[static_cast<size_t>(i)]) - r;
        num += r * r;
        den += d * d;
    }
    if (den == 0.0) return kMetricInf;
    return 10.0 * std::log10(num / den);
}

double ergas(const HSICube& x, const HSICube& ref, int beta, ErgasFormula formula) {
    expect_same_dims(x, ref, "ergas");
    if (beta < 1) throw DimensionError("ergas: beta must be >= 1");
    const int64_t n = ref.plane();
    double acc = 0.0;
    for (int b = 0; b < ref.bands; ++b) {
        const float* ra = ref.band(b);
        double mu = 0.0;
        for (int64_t i = 0; i < n; ++i) mu += ra[i];
        mu /= static_cast<double>(n);
        if (mu == 0.0)
            throw DataError("ergas: zero-mean reference band " + std::to_string(b));
        const double ratio = band_rmse(x, ref, b) / mu;
        acc += formula == ErgasFormula::Canonical ? ratio * ratio : ratio;
    }
    const double root = std::sqrt(acc / ref.bands);
    if (formula == ErgasFormula::Canonical) return 100.0 / beta * root;
    // literal transcription of the printed formula, reading the resolution
    // ratio as PAN pixels per HS pixel (= beta), hence the 1/beta^2 factor
    return 100.0 / (static_cast<double>(beta) * beta) * root;
}

double psnr(const HSICube& x, const HSICube& ref) {
    expect_same_dims(x, ref, "psnr");
    const int64_t n = ref.plane();
    double total = 0.0;
    int used = 0;
    for (int b = 0; b < ref.bands; ++b) {
        const float* ra = ref.band(b);
        double mx = ra[0];
        for (int64_t i = 1; i < n; ++i) mx = std::max(mx, static_cast<double>(ra[i]));
        if (mx == 0.0) throw DataError("psnr: reference band " + std::to_string(b) + " has max 0");
        const double r = band_rmse(x, ref, b);
        if (r == 0.0) continue;  // ideal band, excluded and flagged by evaluate()
        total += 20.0 * std::log10(mx / r);
        ++used;
    }
    if (used == 0) return kMetricInf;
    return total / used;
}

MetricReport evaluate(const HSICube& x, const HSICube& ref, int beta, bool with_per_band,
                      ErgasFormula formula) {
    expect_same_dims(x, ref, "evaluate");
    MetricReport rep;
    rep.n_bands = ref.bands;
    rep.n_pixels = ref.plane();
    rep.cc = cc(x, ref);
    rep.sam_deg = sam(x, ref);
    rep.rmse = rmse(x, ref);
    rep.rsnr_db = rsnr(x, ref);
    rep.ergas = ergas(x, ref, beta, formula);
    rep.psnr_db = psnr(x, ref);

    // recount SAM skips and PSNR exclusions for the report
    const int64_t plane = ref.plane();
    int64_t skipped = 0;
    for (int64_t i = 0; i < plane; ++i) {
        double nx = 0.0, nr = 0.0;
        for (int b = 0; b < ref.bands; ++b) {
            nx += static_cast<double>(x.data[static_cast<size_t>(b) * plane + i]) *
                  x.data[static_cast<size_t>(b) * plane + i];
            nr += static_cast<double>(ref.data[static_cast<size_t>(b) * plane + i]) *
                  ref.data[static_cast<size_t>(b) * plane + i];
        }
        if (nx == 0.0 || nr == 0.0) ++skipped;
    }
    rep.sam_skipped_pixels = skipped;
    for (int b = 0; b < ref.bands; ++b)
        if (band_rmse(x, ref, b) == 0.0) ++rep.psnr_inf_bands;

    if (with_per_band) {
        std::vector<double> pb_cc(static_cast<size_t>(ref.bands));
        std::vector<double> pb_rmse(static_cast<size_t>(ref.bands));
        std::vector<double> pb_psnr(static_cast<size_t>(ref.bands));
        for (int b = 0; b < ref.bands; ++b) {
            HSICube xb(1, x.height, x.width), rb(1, ref.height, ref.width);
            std::copy(x.band(b), x.band(b) + plane, xb.data.begin());
            std::copy(ref.band(b), ref.band(b) + plane, rb.data.begin());
            pb_cc[static_cast<size_t>(b)] = cc(xb, rb);
            pb_rmse[static_cast<size_t>(b)] = band_rmse(x, ref, b);
            double mx = *std::max_element(rb.data.begin(), rb.data.end());
            pb_psnr[static_cast<size_t>(b)] =
                pb_rmse[static_cast<size_t>(b)] == 0.0 ? kMetricInf
                                                       : 20.0 * std::log10(mx / pb_rmse[static_cast<size_t>(b)]);
        }
        rep.per_band_cc = std::move(pb_cc);
        rep.per_band_rmse = std::move(pb_rmse);
        rep.per_band_psnr = std::move(pb_psnr);
    }
    return rep;
}

}  // namespace hspan
