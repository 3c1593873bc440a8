#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "veingen/geometry.hpp"

namespace veingen {

template <typename T>
class Image {
public:
    Image() = default;
    Image(int width, int height, T fill = T{})
        : width_(width), height_(height),
          px_(static_cast<std::size_t>(width) * height, fill) {
        if (width <= 0 || height <= 0)
            throw std::invalid_argument("image dimensions must be positive");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return px_.size(); }

    T& at(int x, int y) { return px_[static_cast<std::size_t>(y) * width_ + x]; }
    const T& at(int x, int y) const {
        return px_[static_cast<std::size_t>(y) * width_ + x];
    }
    bool in_bounds(int x, int y) const {
        return x >= 0 && x < width_ && y >= 0 && y < height_;
    }

    T* data() { return px_.data(); }
    const T* data() const { return px_.data(); }
    T* row(int y) { return px_.data() + static_cast<std::size_t>(y) * width_; }
    const T* row(int y) const {
        return px_.data() + static_cast<std::size_t>(y) * width_;
    }

    void fill(T v) { std::fill(px_.begin(), px_.end(), v); }

    bool operator==(const Image& o) const {
        return width_ == o.width_ && height_ == o.height_ && px_ == o.px_;
    }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> px_;
};

using ImageF = Image<float>;
using Mask = Image<std::uint8_t>; // values 0/1

// Bilinear sample with clamp-to-edge; coordinates are pixel indices
// (the center of pixel (i, j) is at (i, j)).
float sample_bilinear(const ImageF& img, double x, double y);

// Exact Euclidean distance to the nearest zero pixel (0 on background).
ImageF distance_transform(const Mask& mask);

Mask dilate(const Mask& mask, double radius);
Mask erode(const Mask& mask, double radius);

// Summed-area table, (w+1)x(h+1), S(x, y) = sum over [0,x) x [0,y).
Image<double> integral_image(const ImageF& img);

// Mean over the clamped window [x-r, x+r] x [y-r, y+r] using an integral image.
double box_mean(const Image<double>& integral, int x, int y, int r);

// Box-mean filter of half-width r with clamped windows.
ImageF box_filter(const ImageF& img, int r);

// Dense convolution kernel with taps laid out on a (2r+1)^2 grid.
struct Kernel {
    int radius = 0;
    std::vector<float> taps; // (2r+1)*(2r+1), row-major, may hold zeros

    float tap(int dx, int dy) const {
        return taps[static_cast<std::size_t>(dy + radius) * (2 * radius + 1) +
                    (dx + radius)];
    }
    double sum() const;
    void normalize();
};

Kernel exponential_kernel(double scale, int radius); // exp(-r/scale), normalized
Kernel disc_kernel(double radius);                   // uniform disc, normalized
Kernel line_kernel(double length, double angle);     // motion streak, normalized

// Convolution with per-pixel renormalization over the in-bounds part of the
// kernel, so constant images stay constant near borders.
ImageF convolve(const ImageF& img, const Kernel& k);

// Warps src through the inverse map (out pixel -> src position), bilinear,
// with a constant border value.
ImageF warp_affine(const ImageF& src, const Affine& out_to_src, int out_w,
                   int out_h, float border);
Mask warp_affine_mask(const Mask& src, const Affine& out_to_src, int out_w,
                      int out_h);

// Resamples src through an axis-aligned scale+translate map using exact box
// integration over each destination pixel's preimage (alias-free for
// downscaling). Map: src_x = (x + 0.5) * sx + tx - 0.5, same for y.
ImageF resample_area(const ImageF& src, double sx, double sy, double tx,
                     double ty, int out_w, int out_h);

double mean(const ImageF& img);
double mean_where(const ImageF& img, const Mask& region);
int count_nonzero(const Mask& mask);

void clamp01(ImageF& img);

} // namespace veingen
