#include "veingen/png_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

namespace veingen {

namespace {

constexpr std::uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& payload) {
    put_u32(out, static_cast<std::uint32_t>(payload.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const auto crc =
        crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

std::vector<std::uint8_t> deflate_bytes(const std::vector<std::uint8_t>& raw) {
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> out(bound);
    if (compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                  6) != Z_OK)
        throw PngError("deflate failed");
    out.resize(bound);
    return out;
}

std::vector<std::uint8_t> encode_gray(int width, int height, int bit_depth,
                                      const std::vector<std::uint8_t>& rows) {
    std::vector<std::uint8_t> out(kSignature, kSignature + 8);
    std::vector<std::uint8_t> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(width));
    put_u32(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(static_cast<std::uint8_t>(bit_depth));
    ihdr.push_back(0); // grayscale
    ihdr.push_back(0); // deflate
    ihdr.push_back(0); // adaptive filtering
    ihdr.push_back(0); // no interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", deflate_bytes(rows));
    put_chunk(out, "IEND", {});
    return out;
}

struct ChunkView {
    std::string type;
    const std::uint8_t* data;
    std::size_t len;
};

std::uint32_t get_u32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

struct PngHeader {
    int width, height, bit_depth;
};

PngHeader parse_chunks(const std::vector<std::uint8_t>& bytes,
                       std::vector<std::uint8_t>& compressed) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
        throw PngError("not a PNG file");
    std::size_t pos = 8;
    PngHeader hdr{0, 0, 0};
    bool saw_ihdr = false;
    while (pos + 12 <= bytes.size()) {
        const std::uint32_t len = get_u32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw PngError("truncated chunk");
        ChunkView c{std::string(bytes.begin() + pos + 4, bytes.begin() + pos + 8),
                    bytes.data() + pos + 8, len};
        const auto crc_expect = get_u32(bytes.data() + pos + 8 + len);
        const auto crc_actual =
            crc32(0, bytes.data() + pos + 4, static_cast<uInt>(4 + len));
        if (crc_expect != static_cast<std::uint32_t>(crc_actual))
            throw PngError("chunk CRC mismatch in " + c.type);
        if (c.type == "IHDR") {
            if (len != 13) throw PngError("bad IHDR length");
            hdr.width = static_cast<int>(get_u32(c.data));
            hdr.height = static_cast<int>(get_u32(c.data + 4));
            hdr.bit_depth = c.data[8];
            if (c.data[9] != 0) throw PngError("only grayscale supported");
            if (c.data[12] != 0) throw PngError("interlace not supported");
            if (hdr.width <= 0 || hdr.height <= 0)
                throw PngError("bad dimensions");
            saw_ihdr = true;
        } else if (c.type == "IDAT") {
            compressed.insert(compressed.end(), c.data, c.data + len);
        } else if (c.type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr) throw PngError("missing IHDR");
    if (compressed.empty()) throw PngError("missing IDAT");
    return hdr;
}

std::vector<std::uint8_t> inflate_bytes(const std::vector<std::uint8_t>& in,
                                        std::size_t expected) {
    std::vector<std::uint8_t> out(expected);
    uLongf len = static_cast<uLongf>(expected);
    const int rc =
        uncompress(out.data(), &len, in.data(), static_cast<uLong>(in.size()));
    if (rc != Z_OK || len != expected) throw PngError("inflate failed");
    return out;
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

// In-place scanline unfiltering for 1-byte-per-pixel-or-less rows.
void unfilter(std::vector<std::uint8_t>& raw, int height, int stride) {
    std::vector<std::uint8_t> prev(static_cast<std::size_t>(stride), 0);
    for (int y = 0; y < height; ++y) {
        std::uint8_t* row = raw.data() + static_cast<std::size_t>(y) * (stride + 1);
        const int filter = row[0];
        std::uint8_t* cur = row + 1;
        for (int i = 0; i < stride; ++i) {
            const int left = i > 0 ? cur[i - 1] : 0;
            const int up = prev[i];
            const int upleft = i > 0 ? prev[i - 1] : 0;
            int v = cur[i];
            switch (filter) {
                case 0: break;
                case 1: v += left; break;
                case 2: v += up; break;
                case 3: v += (left + up) / 2; break;
                case 4: v += paeth(left, up, upleft); break;
                default: throw PngError("unknown filter type");
            }
            cur[i] = static_cast<std::uint8_t>(v);
        }
        std::memcpy(prev.data(), cur, static_cast<std::size_t>(stride));
    }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PngError("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw PngError("cannot create " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw PngError("write failed for " + path.string());
}

} // namespace

std::vector<std::uint8_t> encode_png_gray8(const Image<std::uint8_t>& img) {
    const int w = img.width(), h = img.height();
    std::vector<std::uint8_t> rows;
    rows.reserve(static_cast<std::size_t>(h) * (w + 1));
    for (int y = 0; y < h; ++y) {
        rows.push_back(0); // filter: none
        rows.insert(rows.end(), img.row(y), img.row(y) + w);
    }
    return encode_gray(w, h, 8, rows);
}

std::vector<std::uint8_t> encode_png_gray1(const Mask& mask) {
    const int w = mask.width(), h = mask.height();
    const int stride = (w + 7) / 8;
    std::vector<std::uint8_t> rows;
    rows.reserve(static_cast<std::size_t>(h) * (stride + 1));
    for (int y = 0; y < h; ++y) {
        rows.push_back(0);
        for (int b = 0; b < stride; ++b) {
            std::uint8_t byte = 0;
            for (int i = 0; i < 8; ++i) {
                const int x = b * 8 + i;
                if (x < w && mask.at(x, y)) byte |= 0x80 >> i;
            }
            rows.push_back(byte);
        }
    }
    return encode_gray(w, h, 1, rows);
}

void write_png_gray8(const std::filesystem::path& path,
                     const Image<std::uint8_t>& img) {
    write_file(path, encode_png_gray8(img));
}

void write_png_gray1(const std::filesystem::path& path, const Mask& mask) {
    write_file(path, encode_png_gray1(mask));
}

Image<std::uint8_t> decode_png_gray8(const std::vector<std::uint8_t>& bytes) {
    std::vector<std::uint8_t> compressed;
    const PngHeader hdr = parse_chunks(bytes, compressed);
    if (hdr.bit_depth != 8) throw PngError("expected 8-bit grayscale");
    const int stride = hdr.width;
    auto raw = inflate_bytes(
        compressed, static_cast<std::size_t>(hdr.height) * (stride + 1));
    unfilter(raw, hdr.height, stride);
    Image<std::uint8_t> img(hdr.width, hdr.height, 0);
    for (int y = 0; y < hdr.height; ++y)
        std::memcpy(img.row(y), raw.data() + static_cast<std::size_t>(y) * (stride + 1) + 1,
                    static_cast<std::size_t>(stride));
    return img;
}

Mask decode_png_gray1(const std::vector<std::uint8_t>& bytes) {
    std::vector<std::uint8_t> compressed;
    const PngHeader hdr = parse_chunks(bytes, compressed);
    if (hdr.bit_depth != 1) throw PngError("expected 1-bit grayscale");
    const int stride = (hdr.width + 7) / 8;
    auto raw = inflate_bytes(
        compressed, static_cast<std::size_t>(hdr.height) * (stride + 1));
    unfilter(raw, hdr.height, stride);
    Mask mask(hdr.width, hdr.height, 0);
    for (int y = 0; y < hdr.height; ++y) {
        const std::uint8_t* row =
            raw.data() + static_cast<std::size_t>(y) * (stride + 1) + 1;
        for (int x = 0; x < hdr.width; ++x)
            mask.at(x, y) = (row[x / 8] >> (7 - x % 8)) & 1;
    }
    return mask;
}

Image<std::uint8_t> read_png_gray8(const std::filesystem::path& path) {
    return decode_png_gray8(read_file(path));
}

Mask read_png_gray1(const std::filesystem::path& path) {
    return decode_png_gray1(read_file(path));
}

Image<std::uint8_t> quantize_unit(const ImageF& img) {
    Image<std::uint8_t> out(img.width(), img.height(), 0);
    for (std::size_t i = 0; i < img.size(); ++i) {
        // Scale in single precision so byte+half inputs stay exact halves;
        // nearbyint then resolves them with the default ties-to-even mode.
        const float v = std::clamp(img.data()[i], 0.0f, 1.0f);
        out.data()[i] = static_cast<std::uint8_t>(std::nearbyint(v * 255.0f));
    }
    return out;
}

ImageF to_unit(const Image<std::uint8_t>& img) {
    ImageF out(img.width(), img.height(), 0.0f);
    for (std::size_t i = 0; i < img.size(); ++i)
        out.data()[i] = static_cast<float>(img.data()[i]) / 255.0f;
    return out;
}

} // namespace veingen
