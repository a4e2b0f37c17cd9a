#pragma once

#include "hspan/cube.hpp"

#include <limits>
#include <optional>
#include <vector>

namespace hspan {

// Reference-based fusion quality measures. All accumulate in double.
// Conventions:
//   - SAM skips zero-spectrum pixels (either side) and counts them.
//   - RSNR and PSNR return +inf when the error is exactly zero; PSNR
//     excludes zero-RMSE bands from the band mean and flags them.
//   - ERGAS defaults to the canonical 100*(1/beta)*sqrt(mean((RMSE_i/mu_i)^2)).

struct MetricReport {
    double cc = 0.0;
    double sam_deg = 0.0;
    double rmse = 0.0;
    double rsnr_db = 0.0;
    double ergas = 0.0;
    double psnr_db = 0.0;
    int n_bands = 0;
    int64_t n_pixels = 0;
    int64_t sam_skipped_pixels = 0;
    int psnr_inf_bands = 0;
    std::optional<std::vector<double>> per_band_cc;
    std::optional<std::vector<double>> per_band_rmse;
    std::optional<std::vector<double>> per_band_psnr;
};

double cc(const HSICube& x, const HSICube& ref);
double sam(const HSICube& x, const HSICube& ref);  // degrees
double rmse(const HSICube& x, const HSICube& ref);
double rsnr(const HSICube& x, const HSICube& ref);  // dB

enum class ErgasFormula { Canonical, AsPrinted };
double ergas(const HSICube& x, const HSICube& ref, int beta,
             ErgasFormula formula = ErgasFormula::Canonical);
double psnr(const HSICube& x, const HSICube& ref);  // dB

MetricReport evaluate(const HSICube& x, const HSICube& ref, int beta,
                      bool with_per_band = false,
                      ErgasFormula formula = ErgasFormula::Canonical);

inline constexpr double kMetricInf = std::numeric_limits<double>::infinity();

}  // namespace hspan
