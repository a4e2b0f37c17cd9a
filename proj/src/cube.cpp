#include "hspan/cube.hpp"

#include <cmath>

namespace hspan {

void HSICube::check_valid() const {
    if (bands < 1 || height < 1 || width < 1)
        throw DimensionError("HSICube: bands/height/width must be >= 1");
    if (static_cast<int64_t>(data.size()) != size())
        throw DimensionError("HSICube: data length " + std::to_string(data.size()) +
                             " does not match shape (" + std::to_string(bands) + "," +
                             std::to_string(height) + "," + std::to_string(width) + ")");
    for (int b = 0; b < bands; ++b) {
        const float* p = band(b);
        for (int64_t i = 0; i < plane(); ++i) {
            if (!std::isfinite(p[i]))
                throw DataError("HSICube: non-finite value at (band=" + std::to_string(b) +
                                ", row=" + std::to_string(i / width) +
                                ", col=" + std::to_string(i % width) + ")");
        }
    }
}

void PANImage::check_valid() const {
    if (height < 1 || width < 1)
        throw DimensionError("PANImage: height/width must be >= 1");
    if (static_cast<int64_t>(data.size()) != size())
        throw DimensionError("PANImage: data length does not match shape");
    for (int64_t i = 0; i < size(); ++i) {
        if (!std::isfinite(data[i]))
            throw DataError("PANImage: non-finite value at (row=" + std::to_string(i / width) +
                            ", col=" + std::to_string(i % width) + ")");
    }
}

void validate_sample(const FusionSample& sample) {
    sample.lr_hsi.check_valid();
    sample.pan.check_valid();
    if (sample.beta < 1)
        throw DimensionError("FusionSample: beta must be a positive integer");

    if (sample.has_reference) {
        sample.reference.check_valid();
        if (sample.reference.bands != sample.lr_hsi.bands)
            throw DimensionError("FusionSample: band axis mismatch, reference has " +
                                 std::to_string(sample.reference.bands) + " bands, lr_hsi has " +
                                 std::to_string(sample.lr_hsi.bands));
        if (sample.reference.height != sample.beta * sample.lr_hsi.height)
            throw DimensionError("FusionSample: height axis mismatch, reference " +
                                 std::to_string(sample.reference.height) + " != beta*lr " +
                                 std::to_string(sample.beta * sample.lr_hsi.height));
        if (sample.reference.width != sample.beta * sample.lr_hsi.width)
            throw DimensionError("FusionSample: width axis mismatch, reference " +
                                 std::to_string(sample.reference.width) + " != beta*lr " +
                                 std::to_string(sample.beta * sample.lr_hsi.width));
        if (sample.pan.height != sample.reference.height)
            throw DimensionError("FusionSample: pan height " + std::to_string(sample.pan.height) +
                                 " != reference height " + std::to_string(sample.reference.height));
        if (sample.pan.width != sample.reference.width)
            throw DimensionError("FusionSample: pan width " + std::to_string(sample.pan.width) +
                                 " != reference width " + std::to_string(sample.reference.width));
    } else {
        if (sample.pan.height != sample.beta * sample.lr_hsi.height)
            throw DimensionError("FusionSample: pan height " + std::to_string(sample.pan.height) +
                                 " != beta*lr height " +
                                 std::to_string(sample.beta * sample.lr_hsi.height));
        if (sample.pan.width != sample.beta * sample.lr_hsi.width)
            throw DimensionError("FusionSample: pan width " + std::to_string(sample.pan.width) +
                                 " != beta*lr width " +
                                 std::to_string(sample.beta * sample.lr_hsi.width));
    }
}

}  // namespace hspan
