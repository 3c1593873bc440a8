#include "veingen/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace veingen {

float sample_bilinear(const ImageF& img, double x, double y) {
    const int w = img.width(), h = img.height();
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const int x0 = std::min(static_cast<int>(x), w - 2 >= 0 ? w - 2 : 0);
    const int y0 = std::min(static_cast<int>(y), h - 2 >= 0 ? h - 2 : 0);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0, fy = y - y0;
    const double v00 = img.at(x0, y0), v10 = img.at(x1, y0);
    const double v01 = img.at(x0, y1), v11 = img.at(x1, y1);
    return static_cast<float>((v00 * (1 - fx) + v10 * fx) * (1 - fy) +
                              (v01 * (1 - fx) + v11 * fx) * fy);
}

namespace {

// Large finite sentinel for "no source here"; keeps the envelope
// arithmetic free of infinity corner cases.
constexpr double kFar = 1e12;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower-envelope distance transform of a 1D sampled function.
void dt1d(const std::vector<double>& f, std::vector<double>& d,
          std::vector<int>& v, std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double s = (f[q] + double(q) * q - (f[v[k]] + double(v[k]) * v[k])) /
                   (2.0 * q - 2.0 * v[k]);
        while (s <= z[k]) {
            --k;
            s = (f[q] + double(q) * q - (f[v[k]] + double(v[k]) * v[k])) /
                (2.0 * q - 2.0 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        d[q] = (q - v[k]) * static_cast<double>(q - v[k]) + f[v[k]];
    }
}

} // namespace

ImageF distance_transform(const Mask& mask) {
    const int w = mask.width(), h = mask.height();
    Image<double> sq(w, h, 0.0);

    std::vector<double> f(std::max(w, h)), d(std::max(w, h));
    std::vector<int> v(std::max(w, h));
    std::vector<double> z(std::max(w, h) + 1);

    for (int x = 0; x < w; ++x) {
        f.resize(h);
        for (int y = 0; y < h; ++y) f[y] = mask.at(x, y) ? kFar : 0.0;
        dt1d(f, d, v, z);
        for (int y = 0; y < h; ++y) sq.at(x, y) = d[y];
    }
    for (int y = 0; y < h; ++y) {
        f.resize(w);
        for (int x = 0; x < w; ++x) f[x] = sq.at(x, y);
        dt1d(f, d, v, z);
        for (int x = 0; x < w; ++x)
            sq.at(x, y) = d[x];
    }

    ImageF out(w, h, 0.0f);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.at(x, y) = static_cast<float>(std::sqrt(sq.at(x, y)));
    return out;
}

Mask dilate(const Mask& mask, double radius) {
    const int w = mask.width(), h = mask.height();
    Mask inv(w, h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) inv.at(x, y) = mask.at(x, y) ? 0 : 1;
    const ImageF d = distance_transform(inv);
    Mask out(w, h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.at(x, y) = (mask.at(x, y) || d.at(x, y) <= radius) ? 1 : 0;
    return out;
}

Mask erode(const Mask& mask, double radius) {
    const ImageF d = distance_transform(mask);
    Mask out(mask.width(), mask.height(), 0);
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            out.at(x, y) = d.at(x, y) > radius ? 1 : 0;
    return out;
}

Image<double> integral_image(const ImageF& img) {
    const int w = img.width(), h = img.height();
    Image<double> s(w + 1, h + 1, 0.0);
    for (int y = 0; y < h; ++y) {
        double rowsum = 0.0;
        for (int x = 0; x < w; ++x) {
            rowsum += img.at(x, y);
            s.at(x + 1, y + 1) = s.at(x + 1, y) + rowsum;
        }
    }
    return s;
}

double box_mean(const Image<double>& integral, int x, int y, int r) {
    const int w = integral.width() - 1, h = integral.height() - 1;
    const int x0 = std::max(0, x - r), x1 = std::min(w - 1, x + r);
    const int y0 = std::max(0, y - r), y1 = std::min(h - 1, y + r);
    const double sum = integral.at(x1 + 1, y1 + 1) - integral.at(x0, y1 + 1) -
                       integral.at(x1 + 1, y0) + integral.at(x0, y0);
    return sum / (static_cast<double>(x1 - x0 + 1) * (y1 - y0 + 1));
}

ImageF box_filter(const ImageF& img, int r) {
    const Image<double> s = integral_image(img);
    ImageF out(img.width(), img.height(), 0.0f);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            out.at(x, y) = static_cast<float>(box_mean(s, x, y, r));
    return out;
}

double Kernel::sum() const {
    double s = 0.0;
    for (float t : taps) s += t;
    return s;
}

void Kernel::normalize() {
    const double s = sum();
    if (s <= 0.0) throw std::invalid_argument("kernel has non-positive mass");
    for (float& t : taps) t = static_cast<float>(t / s);
}

Kernel exponential_kernel(double scale, int radius) {
    if (scale <= 0.0 || radius < 1)
        throw std::invalid_argument("bad exponential kernel parameters");
    Kernel k;
    k.radius = radius;
    const int n = 2 * radius + 1;
    k.taps.assign(static_cast<std::size_t>(n) * n, 0.0f);
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            const double r = std::sqrt(double(dx) * dx + double(dy) * dy);
            if (r <= radius + 1e-12)
                k.taps[static_cast<std::size_t>(dy + radius) * n +
                       (dx + radius)] = static_cast<float>(std::exp(-r / scale));
        }
    k.normalize();
    return k;
}

Kernel disc_kernel(double radius) {
    if (radius <= 0.0) throw std::invalid_argument("disc radius must be positive");
    Kernel k;
    k.radius = static_cast<int>(std::ceil(radius));
    const int n = 2 * k.radius + 1;
    k.taps.assign(static_cast<std::size_t>(n) * n, 0.0f);
    for (int dy = -k.radius; dy <= k.radius; ++dy)
        for (int dx = -k.radius; dx <= k.radius; ++dx) {
            int cover = 0;
            for (int sy = 0; sy < 4; ++sy)
                for (int sx = 0; sx < 4; ++sx) {
                    const double px = dx - 0.375 + sx * 0.25;
                    const double py = dy - 0.375 + sy * 0.25;
                    if (px * px + py * py <= radius * radius) ++cover;
                }
            k.taps[static_cast<std::size_t>(dy + k.radius) * n +
                   (dx + k.radius)] = cover / 16.0f;
        }
    k.normalize();
    return k;
}

Kernel line_kernel(double length, double angle) {
    if (length < 1.0) throw std::invalid_argument("line length must be >= 1");
    Kernel k;
    const int steps = std::max(1, static_cast<int>(std::lround(length)));
    k.radius = std::max(1, static_cast<int>(std::ceil(length / 2.0)));
    const int n = 2 * k.radius + 1;
    k.taps.assign(static_cast<std::size_t>(n) * n, 0.0f);
    const double co = std::cos(angle), si = std::sin(angle);
    for (int i = 0; i < steps; ++i) {
        const double t = steps == 1 ? 0.0 : i - (steps - 1) / 2.0;
        const int dx = static_cast<int>(std::lround(t * co));
        const int dy = static_cast<int>(std::lround(t * si));
        k.taps[static_cast<std::size_t>(dy + k.radius) * n + (dx + k.radius)] +=
            1.0f;
    }
    k.normalize();
    return k;
}

ImageF convolve(const ImageF& img, const Kernel& k) {
    const int w = img.width(), h = img.height(), r = k.radius;
    const int n = 2 * r + 1;

    // Sparse tap list; per-row prefix sums support border renormalization.
    struct Tap {
        int dx, dy;
        float wgt;
    };
    std::vector<Tap> taps;
    taps.reserve(k.taps.size());
    std::vector<std::vector<double>> rowprefix(
        n, std::vector<double>(static_cast<std::size_t>(n) + 1, 0.0));
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
            const float t = k.tap(dx, dy);
            rowprefix[dy + r][dx + r + 1] = rowprefix[dy + r][dx + r] + t;
            if (t != 0.0f) taps.push_back({dx, dy, t});
        }
    }

    ImageF out(w, h, 0.0f);
    for (int y = 0; y < h; ++y) {
        const bool yedge = y < r || y >= h - r;
        for (int x = 0; x < w; ++x) {
            const bool edge = yedge || x < r || x >= w - r;
            double acc = 0.0;
            if (!edge) {
                for (const Tap& t : taps)
                    acc += t.wgt * img.at(x + t.dx, y + t.dy);
                out.at(x, y) = static_cast<float>(acc);
            } else {
                const int dylo = std::max(-r, -y), dyhi = std::min(r, h - 1 - y);
                const int dxlo = std::max(-r, -x), dxhi = std::min(r, w - 1 - x);
                double norm = 0.0;
                for (int dy = dylo; dy <= dyhi; ++dy) {
                    norm += rowprefix[dy + r][dxhi + r + 1] -
                            rowprefix[dy + r][dxlo + r];
                    for (int dx = dxlo; dx <= dxhi; ++dx)
                        acc += k.tap(dx, dy) * img.at(x + dx, y + dy);
                }
                out.at(x, y) = norm > 0.0 ? static_cast<float>(acc / norm) : 0.0f;
            }
        }
    }
    return out;
}

ImageF warp_affine(const ImageF& src, const Affine& out_to_src, int out_w,
                   int out_h, float border) {
    ImageF out(out_w, out_h, border);
    const int w = src.width(), h = src.height();
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            const Vec2 q = out_to_src.apply({double(x), double(y)});
            if (q.x < 0.0 || q.x > w - 1.0 || q.y < 0.0 || q.y > h - 1.0)
                continue;
            out.at(x, y) = sample_bilinear(src, q.x, q.y);
        }
    return out;
}

Mask warp_affine_mask(const Mask& src, const Affine& out_to_src, int out_w,
                      int out_h) {
    Mask out(out_w, out_h, 0);
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            const Vec2 q = out_to_src.apply({double(x), double(y)});
            const int qx = static_cast<int>(std::lround(q.x));
            const int qy = static_cast<int>(std::lround(q.y));
            if (src.in_bounds(qx, qy)) out.at(x, y) = src.at(qx, qy);
        }
    return out;
}

namespace {

struct Overlap {
    int first;
    std::vector<double> weights;
    double total;
};

Overlap axis_overlaps(double lo, double hi, int src_n) {
    Overlap o;
    lo = std::clamp(lo, 0.0, static_cast<double>(src_n));
    hi = std::clamp(hi, 0.0, static_cast<double>(src_n));
    if (hi <= lo) {
        const int i = std::clamp(static_cast<int>(lo), 0, src_n - 1);
        return {i, {1.0}, 1.0};
    }
    o.first = static_cast<int>(lo);
    const int last = std::min(src_n - 1, static_cast<int>(std::ceil(hi)) - 1);
    o.total = 0.0;
    for (int i = o.first; i <= last; ++i) {
        const double wgt = std::min(hi, i + 1.0) - std::max(lo, double(i));
        o.weights.push_back(std::max(0.0, wgt));
        o.total += std::max(0.0, wgt);
    }
    return o;
}

} // namespace

ImageF resample_area(const ImageF& src, double sx, double sy, double tx,
                     double ty, int out_w, int out_h) {
    ImageF out(out_w, out_h, 0.0f);
    std::vector<Overlap> cols(out_w), rows(out_h);
    for (int x = 0; x < out_w; ++x)
        cols[x] = axis_overlaps(x * sx + tx, (x + 1) * sx + tx, src.width());
    for (int y = 0; y < out_h; ++y)
        rows[y] = axis_overlaps(y * sy + ty, (y + 1) * sy + ty, src.height());

    for (int y = 0; y < out_h; ++y) {
        const Overlap& ry = rows[y];
        for (int x = 0; x < out_w; ++x) {
            const Overlap& rx = cols[x];
            double acc = 0.0;
            for (std::size_t j = 0; j < ry.weights.size(); ++j)
                for (std::size_t i = 0; i < rx.weights.size(); ++i)
                    acc += ry.weights[j] * rx.weights[i] *
                           src.at(rx.first + static_cast<int>(i),
                                  ry.first + static_cast<int>(j));
            const double denom = rx.total * ry.total;
            out.at(x, y) = denom > 0.0 ? static_cast<float>(acc / denom) : 0.0f;
        }
    }
    return out;
}

double mean(const ImageF& img) {
    double s = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i) s += img.data()[i];
    return s / static_cast<double>(img.size());
}

double mean_where(const ImageF& img, const Mask& region) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < img.size(); ++i)
        if (region.data()[i]) {
            s += img.data()[i];
            ++n;
        }
    if (n == 0) throw std::invalid_argument("empty region");
    return s / static_cast<double>(n);
}

int count_nonzero(const Mask& mask) {
    int n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask.data()[i]) ++n;
    return n;
}

void clamp01(ImageF& img) {
    for (std::size_t i = 0; i < img.size(); ++i)
        img.data()[i] = std::clamp(img.data()[i], 0.0f, 1.0f);
}

} // namespace veingen
