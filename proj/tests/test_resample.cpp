#include <doctest.h>

#include "hspan/resample.hpp"
#include "oracles.hpp"

#include <random>

using namespace hspan;

namespace {
HSICube random_cube(int l, int h, int w, std::mt19937& rng) {
    HSICube c(l, h, w);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    for (auto& v : c.data) v = d(rng);
    return c;
}
}  // namespace

TEST_CASE("nearest upsample block-replicates") {
    HSICube y(1, 2, 2);
    y.data = {1.0f, 2.0f, 3.0f, 4.0f};
    auto up = upsample_nearest(y, 2);
    REQUIRE(up.height == 4);
    REQUIRE(up.width == 4);
    const float expect[16] = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    for (int i = 0; i < 16; ++i) CHECK(up.data[static_cast<size_t>(i)] == expect[i]);
}

TEST_CASE("bicubic preserves constants") {
    HSICube y(2, 3, 5);
    for (auto& v : y.data) v = 0.77f;
    auto up = upsample_bicubic(y, 3);
    CHECK(up.height == 9);
    CHECK(up.width == 15);
    for (float v : up.data) CHECK(v == doctest::Approx(0.77f).epsilon(1e-6));
}

TEST_CASE("bicubic matches the direct Catmull-Rom evaluator everywhere") {
    std::mt19937 rng(41);
    SUBCASE("1-band ramp at beta 2") {
        HSICube y(1, 6, 6);
        for (int i = 0; i < 36; ++i) y.data[static_cast<size_t>(i)] = static_cast<float>(i) / 36.0f;
        auto up = upsample_bicubic(y, 2);
        std::vector<double> img(y.data.begin(), y.data.end());
        for (int oy = 0; oy < 12; ++oy)
            for (int ox = 0; ox < 12; ++ox)
                CHECK(up.at(0, oy, ox) ==
                      doctest::Approx(oracle::catmull_rom_at(img, 6, 6, 2, oy, ox)).epsilon(1e-5));
    }
    SUBCASE("random cubes at beta 3 and 4") {
        for (int beta : {3, 4}) {
            HSICube y = random_cube(3, 5, 7, rng);
            auto up = upsample_bicubic(y, beta);
            for (int b = 0; b < 3; ++b) {
                std::vector<double> img(y.band(b), y.band(b) + y.plane());
                for (int oy = 0; oy < up.height; ++oy)
                    for (int ox = 0; ox < up.width; ++ox)
                        REQUIRE(up.at(b, oy, ox) ==
                                doctest::Approx(oracle::catmull_rom_at(img, 5, 7, beta, oy, ox))
                                    .epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("lanczos2 downsample matches the direct windowed-sinc oracle") {
    std::mt19937 rng(43);
    for (int beta : {2, 3, 4}) {
        HSICube x = random_cube(2, 4 * beta, 3 * beta, rng);
        auto down = lanczos2_downsample(x, beta);
        REQUIRE(down.height == 4);
        REQUIRE(down.width == 3);
        for (int b = 0; b < 2; ++b) {
            std::vector<double> img(x.band(b), x.band(b) + x.plane());
            for (int oy = 0; oy < 4; ++oy)
                for (int ox = 0; ox < 3; ++ox)
                    REQUIRE(down.at(b, oy, ox) ==
                            doctest::Approx(
                                oracle::lanczos2_at(img, x.height, x.width, beta, oy, ox))
                                .epsilon(1e-5));
        }
    }
}

TEST_CASE("lanczos2 downsample at beta 1 is identity") {
    std::mt19937 rng(47);
    HSICube x = random_cube(2, 5, 5, rng);
    auto same = lanczos2_downsample(x, 1);
    for (size_t i = 0; i < x.data.size(); ++i)
        CHECK(same.data[i] == doctest::Approx(x.data[i]).epsilon(1e-6));
}

TEST_CASE("upsample argument validation") {
    HSICube y(1, 2, 2);
    CHECK_THROWS_AS(upsample_nearest(y, 0), DimensionError);
    HSICube odd(1, 5, 4);
    CHECK_THROWS_AS(lanczos2_downsample(odd, 2), DimensionError);
}
