#pragma once

#include "hspan/cube.hpp"

#include <filesystem>
#include <string>

namespace hspan {

// On-disk cube container: a directory holding
//   meta.json  {bands, height, width, dtype, byte_order, layout, value_range, dataset_name}
//   data.f32   raw little-endian float32, band-sequential, row-major within band
// Write-then-read is bit-exact.

struct CubeMeta {
    int bands = 0;
    int height = 0;
    int width = 0;
    std::string dtype = "float32";
    std::string byte_order = "little-endian";
    std::string layout = "band-sequential";
    std::array<double, 2> value_range{0.0, 1.0};
    std::string dataset_name;
};

void write_cube(const HSICube& cube, const std::filesystem::path& dir,
                const std::string& dataset_name = "");
HSICube read_cube(const std::filesystem::path& dir);
CubeMeta read_cube_meta(const std::filesystem::path& dir);

// PAN images reuse the same container as a 1-band cube.
void write_pan(const PANImage& pan, const std::filesystem::path& dir,
               const std::string& dataset_name = "");
PANImage read_pan(const std::filesystem::path& dir);

}  // namespace hspan
