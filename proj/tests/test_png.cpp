#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "veingen/png_io.hpp"
#include "veingen/rng.hpp"

using namespace veingen;
namespace fs = std::filesystem;

namespace {

Image<std::uint8_t> random_gray(int w, int h, std::uint64_t seed) {
    Image<std::uint8_t> img(w, h);
    Rng rng(seed);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            img.at(x, y) = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    return img;
}

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() /
               ("veingen-png-" + std::to_string(rd() % 1000000));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("8-bit grayscale survives an encode/decode round trip") {
    const Image<std::uint8_t> img = random_gray(61, 37, 11);
    const auto bytes = encode_png_gray8(img);
    const Image<std::uint8_t> back = decode_png_gray8(bytes);
    CHECK(back == img);
}

TEST_CASE("1-bit masks survive a round trip at awkward widths") {
    for (int w : {1, 7, 8, 9, 63, 64, 65}) {
        Mask m(w, 5);
        Rng rng(static_cast<std::uint64_t>(w));
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < w; ++x)
                m.at(x, y) = rng.next_double() < 0.5 ? 1 : 0;
        const Mask back = decode_png_gray1(encode_png_gray1(m));
        CHECK(back == m);
    }
}

TEST_CASE("nonzero mask values all encode as one") {
    Mask m(4, 1, 0);
    m.at(1, 0) = 1;
    m.at(2, 0) = 7;
    m.at(3, 0) = 255;
    const Mask back = decode_png_gray1(encode_png_gray1(m));
    CHECK(back.at(0, 0) == 0);
    CHECK(back.at(1, 0) == 1);
    CHECK(back.at(2, 0) == 1);
    CHECK(back.at(3, 0) == 1);
}

TEST_CASE("file writes match in-memory encodes byte for byte") {
    TempDir tmp;
    const Image<std::uint8_t> img = random_gray(33, 21, 3);
    const fs::path p = tmp.path / "a.png";
    write_png_gray8(p, img);
    std::ifstream in(p, std::ios::binary);
    std::vector<std::uint8_t> disk((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    CHECK(disk == encode_png_gray8(img));
    CHECK(read_png_gray8(p) == img);

    Mask m(9, 4, 0);
    m.at(2, 1) = 1;
    const fs::path q = tmp.path / "m.png";
    write_png_gray1(q, m);
    CHECK(read_png_gray1(q) == m);
}

TEST_CASE("encoding is deterministic") {
    const Image<std::uint8_t> img = random_gray(40, 40, 8);
    CHECK(encode_png_gray8(img) == encode_png_gray8(img));
}

TEST_CASE("quantization rounds halves to even") {
    ImageF img(6, 1);
    img.at(0, 0) = 0.5f / 255.0f;   // 0.5  -> 0
    img.at(1, 0) = 1.5f / 255.0f;   // 1.5  -> 2
    img.at(2, 0) = 0.5f;            // 127.5 -> 128 (stored 0.5 is exact)
    img.at(3, 0) = -0.25f;          // clamps to 0
    img.at(4, 0) = 1.75f;           // clamps to 255
    img.at(5, 0) = 100.0f / 255.0f; // lands on an integer
    const Image<std::uint8_t> q = quantize_unit(img);
    CHECK(q.at(0, 0) == 0);
    CHECK(q.at(1, 0) == 2);
    CHECK(q.at(2, 0) == 128);
    CHECK(q.at(3, 0) == 0);
    CHECK(q.at(4, 0) == 255);
    CHECK(q.at(5, 0) == 100);
}

TEST_CASE("to_unit then quantize_unit is the identity on bytes") {
    const Image<std::uint8_t> img = random_gray(50, 30, 21);
    CHECK(quantize_unit(to_unit(img)) == img);
}

TEST_CASE("garbage bytes are rejected") {
    std::vector<std::uint8_t> junk = {'n', 'o', 't', ' ', 'a', ' ', 'p', 'n', 'g'};
    CHECK_THROWS_AS(decode_png_gray8(junk), PngError);
    CHECK_THROWS_AS(decode_png_gray1(junk), PngError);

    // Valid signature, truncated body.
    Image<std::uint8_t> img(5, 5, 100);
    auto bytes = encode_png_gray8(img);
    bytes.resize(bytes.size() / 2);
    CHECK_THROWS_AS(decode_png_gray8(bytes), PngError);
}

TEST_CASE("reading a missing file raises PngError") {
    CHECK_THROWS_AS(read_png_gray8("/nonexistent/veingen/missing.png"), PngError);
}
