#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hspan {

// Error classes. Each maps to a distinct CLI exit code (see tools/).
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Hyperspectral cube, band-sequential float32.
// Memory layout: data[band * height * width + row * width + col].
// Bands are contiguous so per-band reductions and PAN synthesis walk
// a single plane. Treated as immutable once filled.
struct HSICube {
    int bands = 0;
    int height = 0;
    int width = 0;
    std::array<double, 2> value_range{0.0, 1.0};
    std::vector<float> data;

    HSICube() = default;
    HSICube(int l, int h, int w)
        : bands(l), height(h), width(w),
          data(static_cast<size_t>(l) * h * w, 0.0f) {
        if (l < 1 || h < 1 || w < 1)
            throw DimensionError("HSICube: bands/height/width must be >= 1");
    }

    int64_t plane() const { return static_cast<int64_t>(height) * width; }
    int64_t size() const { return static_cast<int64_t>(bands) * plane(); }

    float& at(int b, int r, int c) { return data[static_cast<size_t>(b) * plane() + static_cast<size_t>(r) * width + c]; }
    float at(int b, int r, int c) const { return data[static_cast<size_t>(b) * plane() + static_cast<size_t>(r) * width + c]; }

    float* band(int b) { return data.data() + static_cast<size_t>(b) * plane(); }
    const float* band(int b) const { return data.data() + static_cast<size_t>(b) * plane(); }

    // Throws DataError naming the first non-finite element, DimensionError on
    // shape/backing-store mismatch.
    void check_valid() const;
};

// Single-band panchromatic image at the high spatial resolution.
struct PANImage {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    PANImage() = default;
    PANImage(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w, 0.0f) {
        if (h < 1 || w < 1)
            throw DimensionError("PANImage: height/width must be >= 1");
    }

    int64_t size() const { return static_cast<int64_t>(height) * width; }
    float& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
    float at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }

    void check_valid() const;
};

// One Wald-protocol triple: LR input, PAN, optional HR reference, and the
// scale factor tying their shapes together.
struct FusionSample {
    HSICube lr_hsi;
    PANImage pan;
    HSICube reference;       // may be empty at inference
    bool has_reference = false;
    int beta = 1;
    std::string patch_id;
    std::string dataset_name;
};

// Returns silently iff every FusionSample invariant holds:
//   reference dims == beta x lr dims (same band count), pan dims == reference
//   spatial dims, all values finite. Throws DimensionError naming the
//   offending axis or DataError with the first non-finite index.
void validate_sample(const FusionSample& sample);

}  // namespace hspan
