#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "odg/common.hpp"
#include "odg/image.hpp"
#include "odg/rng.hpp"

using namespace odg;

namespace {

Image random_image(int h, int w, uint64_t seed) {
    Rng rng(seed);
    Image img(h, w);
    for (auto& v : img.px) v = rng.uniform();
    return img;
}

}  // namespace

TEST_SUITE("image") {

TEST_CASE("png round trip is exact at 8-bit resolution") {
    Image img = random_image(17, 23, 5);
    // snap to the 8-bit grid first so the round trip is lossless
    for (auto& v : img.px) v = std::round(v * 255.0) / 255.0;
    const auto bytes = encode_png(img);
    const Image back = decode_png(bytes);
    REQUIRE(back.h == img.h);
    REQUIRE(back.w == img.w);
    for (size_t i = 0; i < img.px.size(); ++i)
        CHECK(back.px[i] == doctest::Approx(img.px[i]).epsilon(1e-12));
}

TEST_CASE("file write/read via extension sniffing") {
    const auto dir = std::filesystem::temp_directory_path() / "odg_img_test";
    std::filesystem::create_directories(dir);
    Image img = random_image(12, 9, 6);
    for (auto& v : img.px) v = std::round(v * 255.0) / 255.0;
    for (const char* name : {"a.png", "b.ppm"}) {
        const std::string path = (dir / name).string();
        write_image(img, path);
        const Image back = read_image(path);
        REQUIRE(back.h == img.h);
        double max_err = 0;
        for (size_t i = 0; i < img.px.size(); ++i)
            max_err = std::max(max_err, std::fabs(back.px[i] - img.px[i]));
        CHECK(max_err < 1e-9);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("unsupported format raises") {
    const auto dir = std::filesystem::temp_directory_path() / "odg_img_test2";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "junk.png").string();
    std::ofstream(path) << "not an image";
    CHECK_THROWS_AS(read_image(path), RuntimeFailure);
    std::filesystem::remove_all(dir);
}

TEST_CASE("resize_bilinear shape and constancy") {
    Image img(8, 8, 0.25);
    const Image out = resize_bilinear(img, 20, 14);
    CHECK(out.h == 20);
    CHECK(out.w == 14);
    for (double v : out.px) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("checksum tracks content") {
    Image a = random_image(8, 8, 1);
    Image b = a;
    CHECK(image_checksum(a) == image_checksum(b));
    b.px[5] += 0.5;
    CHECK(image_checksum(a) != image_checksum(b));
}

}  // TEST_SUITE
