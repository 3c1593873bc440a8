#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "veingen/image.hpp"

namespace veingen {

struct PngError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Grayscale PNG, bit depth 8, color type 0, no interlace.
std::vector<std::uint8_t> encode_png_gray8(const Image<std::uint8_t>& img);
// Bilevel PNG, bit depth 1; any nonzero mask pixel encodes as 1.
std::vector<std::uint8_t> encode_png_gray1(const Mask& mask);

void write_png_gray8(const std::filesystem::path& path,
                     const Image<std::uint8_t>& img);
void write_png_gray1(const std::filesystem::path& path, const Mask& mask);

Image<std::uint8_t> decode_png_gray8(const std::vector<std::uint8_t>& bytes);
Mask decode_png_gray1(const std::vector<std::uint8_t>& bytes);

Image<std::uint8_t> read_png_gray8(const std::filesystem::path& path);
Mask read_png_gray1(const std::filesystem::path& path);

// Maps [0, 1] to 0..255 with ties rounded to even, the default FPU rounding.
Image<std::uint8_t> quantize_unit(const ImageF& img);
ImageF to_unit(const Image<std::uint8_t>& img);

} // namespace veingen
