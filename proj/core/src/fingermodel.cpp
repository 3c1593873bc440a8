#include "veingen/fingermodel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "veingen/errors.hpp"
#include "veingen/rng.hpp"

namespace veingen {

namespace {

double smoothstep01(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

} // namespace

FingerShape sample_finger(std::uint64_t seed, const FingerShapeConfig& cfg) {
    Rng rng(seed);
    const double base_half = rng.uniform(cfg.base_half_min, cfg.base_half_max);
    const double taper = rng.uniform(cfg.taper_min, cfg.taper_max);
    const double tip_margin =
        rng.uniform(cfg.tip_margin_min, cfg.tip_margin_max);
    double amp[3], phase[3];
    for (int k = 0; k < 3; ++k) {
        amp[k] = rng.uniform(0.0, cfg.ripple_max);
        phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    const double drift = rng.uniform(-cfg.drift_max, cfg.drift_max);
    const double drift_phase = rng.uniform(0.0, std::numbers::pi);

    FingerShape fs;
    fs.seed = seed;
    fs.x_end = cfg.width - static_cast<int>(std::lround(tip_margin));
    const double L = fs.x_end;

    fs.midline.assign(cfg.width, 0.0f);
    fs.half_width.assign(cfg.width, 0.0f);

    // Tapered profile with low-frequency edge ripple and a rounded
    // elliptical cap over the last section.
    std::vector<double> half(cfg.width, 0.0);
    const double cap_start_half = base_half * (1.0 - taper);
    const double cap_len = cap_start_half * 0.9;
    const double x_cap = L - cap_len;
    for (int x = 0; x < fs.x_end; ++x) {
        double h = base_half * (1.0 - taper * x / L);
        for (int k = 0; k < 3; ++k)
            h += amp[k] * std::cos(2.0 * std::numbers::pi * (k + 1) * x / L +
                                   phase[k]);
        if (x > x_cap) {
            const double t = (x - x_cap) / cap_len;
            h *= std::sqrt(std::max(0.0, 1.0 - t * t));
        }
        half[x] = std::max(0.0, h);
        const double mid =
            cfg.height / 2.0 +
            drift * std::sin(std::numbers::pi * x / L + drift_phase);
        fs.midline[x] = static_cast<float>(mid);
        fs.half_width[x] = static_cast<float>(half[x]);
    }

    fs.mask = Mask(cfg.width, cfg.height, 0);
    for (int x = 0; x < fs.x_end; ++x) {
        const double mid = fs.midline[x], h = half[x];
        const int y0 = std::max(0, static_cast<int>(std::ceil(mid - h)));
        const int y1 =
            std::min(cfg.height - 1, static_cast<int>(std::floor(mid + h)));
        for (int y = y0; y <= y1; ++y) fs.mask.at(x, y) = 1;
    }

    for (int x = 0; x < fs.x_end; ++x)
        if (half[x] > 0.0)
            fs.contour.push_back({double(x), fs.midline[x] - half[x]});
    for (int x = fs.x_end - 1; x >= 0; --x)
        if (half[x] > 0.0)
            fs.contour.push_back({double(x), fs.midline[x] + half[x]});

    return fs;
}

FingerShape shape_from_mask(const Mask& mask, std::uint64_t seed) {
    FingerShape fs;
    fs.seed = seed;
    fs.mask = mask;
    fs.midline.assign(mask.width(), 0.0f);
    fs.half_width.assign(mask.width(), 0.0f);
    fs.x_end = 0;
    for (int x = 0; x < mask.width(); ++x) {
        int top = -1, bottom = -1;
        for (int y = 0; y < mask.height(); ++y)
            if (mask.at(x, y)) {
                if (top < 0) top = y;
                bottom = y;
            }
        if (top < 0) continue;
        fs.midline[x] = static_cast<float>(0.5 * (top + bottom));
        fs.half_width[x] = static_cast<float>(0.5 * (bottom - top));
        fs.x_end = x + 1;
    }
    for (int x = 0; x < fs.x_end; ++x)
        if (fs.half_width[x] > 0.0f)
            fs.contour.push_back({double(x), fs.midline[x] - fs.half_width[x]});
    for (int x = fs.x_end - 1; x >= 0; --x)
        if (fs.half_width[x] > 0.0f)
            fs.contour.push_back({double(x), fs.midline[x] + fs.half_width[x]});
    return fs;
}

std::vector<Joint> place_joints(std::uint64_t seed, const FingerShape& shape,
                                const JointConfig& cfg) {
    Rng rng(seed);
    const double L = shape.x_end;
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        const double f1 = rng.uniform(cfg.f1_min, cfg.f1_max);
        const double f2 = rng.uniform(cfg.f2_min, cfg.f2_max);
        if (f2 - f1 < cfg.min_separation) continue;

        std::vector<Joint> joints;
        bool ok = true;
        for (const double f : {f1, f2}) {
            const int x = static_cast<int>(std::lround(f * L));
            if (x < 0 || x >= shape.x_end || shape.half_width[x] <= 0.0f) {
                ok = false;
                break;
            }
            double r = rng.uniform(cfg.radius_min, cfg.radius_max);
            // The equal-area ring around the bump must stay inside the finger.
            const double fit = (shape.half_width[x] - 2.0) / std::numbers::sqrt2;
            r = std::min(r, fit);
            if (r < cfg.radius_min * 0.6) {
                ok = false;
                break;
            }
            const double a = rng.uniform(cfg.amplitude_min, cfg.amplitude_max);
            joints.push_back({{double(x), shape.midline[x]}, r, a});
        }
        if (ok) return joints;
    }
    throw GenerationError("joint placement failed after " +
                          std::to_string(cfg.max_attempts) + " attempts");
}

ImageF BrightnessField::total(double bump_scale) const {
    ImageF out = base_part;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] += static_cast<float>(bump_scale) * bump_sum.data()[i];
    return out;
}

BrightnessField brightness_field(const FingerShape& shape,
                                 const std::vector<Joint>& joints,
                                 const BrightnessConfig& cfg) {
    const int w = shape.width(), h = shape.height();
    BrightnessField bf;
    bf.base = cfg.base;
    bf.base_part = ImageF(w, h, 0.0f);
    bf.bump_sum = ImageF(w, h, 0.0f);
    bf.bump_norm = ImageF(w, h, 0.0f);

    const ImageF depth = distance_transform(shape.mask);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double t = smoothstep01(depth.at(x, y) / cfg.falloff_px);
            bf.base_part.at(x, y) = static_cast<float>(
                cfg.base * (cfg.edge_floor + (1.0 - cfg.edge_floor) * t));
        }

    for (const Joint& j : joints) {
        const int x0 = std::max(0, static_cast<int>(j.center.x - 2.0 * j.radius) - 1);
        const int x1 = std::min(w - 1, static_cast<int>(j.center.x + 2.0 * j.radius) + 1);
        const int y0 = std::max(0, static_cast<int>(j.center.y - 2.0 * j.radius) - 1);
        const int y1 = std::min(h - 1, static_cast<int>(j.center.y + 2.0 * j.radius) + 1);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double u =
                    std::hypot(x - j.center.x, y - j.center.y) / j.radius;
                double profile = 0.0;
                if (u <= 0.5)
                    profile = 1.0;
                else if (u <= 2.0)
                    profile =
                        0.5 * (1.0 + std::cos(std::numbers::pi * (u - 0.5) / 1.5));
                if (profile <= 0.0) continue;
                bf.bump_sum.at(x, y) +=
                    static_cast<float>(j.amplitude * profile);
                bf.bump_norm.at(x, y) = std::max(
                    bf.bump_norm.at(x, y), static_cast<float>(profile));
            }
    }
    return bf;
}

} // namespace veingen
