#include "hspan/container.hpp"

#include <bit>
#include <fstream>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "cube container assumes a little-endian host");

namespace hspan {

namespace fs = std::filesystem;
using nlohmann::json;

static json meta_to_json(const CubeMeta& m) {
    return json{{"bands", m.bands},
                {"height", m.height},
                {"width", m.width},
                {"dtype", m.dtype},
                {"byte_order", m.byte_order},
                {"layout", m.layout},
                {"value_range", m.value_range},
                {"dataset_name", m.dataset_name}};
}

void write_cube(const HSICube& cube, const fs::path& dir, const std::string& dataset_name) {
    cube.check_valid();
    fs::create_directories(dir);

    CubeMeta m;
    m.bands = cube.bands;
    m.height = cube.height;
    m.width = cube.width;
    m.value_range = cube.value_range;
    m.dataset_name = dataset_name;

    {
        std::ofstream os(dir / "meta.json");
        if (!os) throw IoError("write_cube: cannot open " + (dir / "meta.json").string());
        os << meta_to_json(m).dump(2) << "\n";
    }
    {
        std::ofstream os(dir / "data.f32", std::ios::binary);
        if (!os) throw IoError("write_cube: cannot open " + (dir / "data.f32").string());
        os.write(reinterpret_cast<const char*>(cube.data.data()),
                 static_cast<std::streamsize>(cube.data.size() * sizeof(float)));
        if (!os) throw IoError("write_cube: short write to " + (dir / "data.f32").string());
    }
}

CubeMeta read_cube_meta(const fs::path& dir) {
    std::ifstream is(dir / "meta.json");
    if (!is) throw IoError("read_cube: missing meta sidecar " + (dir / "meta.json").string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw IoError("read_cube: corrupt header in " + (dir / "meta.json").string() + ": " + e.what());
    }
    CubeMeta m;
    try {
        m.bands = j.at("bands").get<int>();
        m.height = j.at("height").get<int>();
        m.width = j.at("width").get<int>();
        m.dtype = j.at("dtype").get<std::string>();
        m.byte_order = j.at("byte_order").get<std::string>();
        m.layout = j.at("layout").get<std::string>();
        auto vr = j.at("value_range");
        m.value_range = {vr.at(0).get<double>(), vr.at(1).get<double>()};
        m.dataset_name = j.value("dataset_name", "");
    } catch (const json::exception& e) {
        throw IoError("read_cube: corrupt header (missing or mistyped key): " + std::string(e.what()));
    }
    if (m.bands < 1 || m.height < 1 || m.width < 1)
        throw IoError("read_cube: corrupt header, non-positive dimensions");
    return m;
}

HSICube read_cube(const fs::path& dir) {
    CubeMeta m = read_cube_meta(dir);
    if (m.dtype != "float32")
        throw IoError("read_cube: unsupported dtype '" + m.dtype + "' (only float32)");
    if (m.byte_order != "little-endian")
        throw IoError("read_cube: unsupported byte order '" + m.byte_order + "'");
    if (m.layout != "band-sequential")
        throw IoError("read_cube: unsupported layout '" + m.layout + "'");

    const fs::path payload = dir / "data.f32";
    std::ifstream is(payload, std::ios::binary);
    if (!is) throw IoError("read_cube: missing payload " + payload.string());

    HSICube cube(m.bands, m.height, m.width);
    cube.value_range = m.value_range;
    const auto expected = static_cast<uintmax_t>(cube.size()) * sizeof(float);
    const auto actual = fs::file_size(payload);
    if (actual != expected)
        throw IoError("read_cube: payload size mismatch, expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(actual));
    is.read(reinterpret_cast<char*>(cube.data.data()), static_cast<std::streamsize>(expected));
    if (static_cast<uintmax_t>(is.gcount()) != expected)
        throw IoError("read_cube: payload size mismatch (short read)");
    return cube;
}

void write_pan(const PANImage& pan, const fs::path& dir, const std::string& dataset_name) {
    HSICube c(1, pan.height, pan.width);
    c.data = pan.data;
    write_cube(c, dir, dataset_name);
}

PANImage read_pan(const fs::path& dir) {
    HSICube c = read_cube(dir);
    if (c.bands != 1)
        throw IoError("read_pan: expected a 1-band container, found " + std::to_string(c.bands));
    PANImage p(c.height, c.width);
    p.data = std::move(c.data);
    return p;
}

}  // namespace hspan
