#include "veingen/variations.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "veingen/errors.hpp"
#include "veingen/rng.hpp"

namespace veingen {

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v;
    if (n == 1) {
        v.push_back(0.5 * (lo + hi));
        return v;
    }
    for (int i = 0; i < n; ++i)
        v.push_back(lo + (hi - lo) * i / (n - 1));
    return v;
}

} // namespace

std::vector<VariationParams> build_plan(std::uint64_t seed,
                                        const PlanConfig& cfg) {
    Rng rng(seed);
    std::vector<VariationParams> plan;

    for (double v : linspace(-cfg.shift_max, cfg.shift_max, cfg.shift_count)) {
        VariationParams p;
        p.shift_x = v;
        p.category = VariationCategory::shift;
        plan.push_back(p);
    }
    for (double v :
         linspace(1.0 - cfg.scale_delta, 1.0 + cfg.scale_delta, cfg.scale_count)) {
        VariationParams p;
        p.scale = v;
        p.category = VariationCategory::scale;
        plan.push_back(p);
    }
    for (double v : linspace(-cfg.roll_max, cfg.roll_max, cfg.roll_count)) {
        VariationParams p;
        p.roll_deg = v;
        p.category = VariationCategory::roll;
        plan.push_back(p);
    }
    for (double v :
         linspace(-cfg.rotation_max, cfg.rotation_max, cfg.rotation_count)) {
        VariationParams p;
        p.rotation_deg = v;
        p.category = VariationCategory::rotation;
        plan.push_back(p);
    }
    for (double v : linspace(cfg.under_min, cfg.under_max, cfg.under_count)) {
        VariationParams p;
        p.exposure_gain = v;
        p.category = VariationCategory::exposure;
        plan.push_back(p);
    }
    for (double v : linspace(cfg.over_min, cfg.over_max, cfg.over_count)) {
        VariationParams p;
        p.exposure_gain = v;
        p.category = VariationCategory::exposure;
        plan.push_back(p);
    }
    for (double v : linspace(cfg.motion_min, cfg.motion_max, cfg.motion_count)) {
        VariationParams p;
        p.blur = BlurKind::motion;
        p.blur_length = v;
        p.blur_angle_deg = rng.uniform(0.0, 180.0);
        p.category = VariationCategory::motion_blur;
        plan.push_back(p);
    }
    for (double v :
         linspace(cfg.optical_min, cfg.optical_max, cfg.optical_count)) {
        VariationParams p;
        p.blur = BlurKind::optical;
        p.blur_radius = v;
        p.category = VariationCategory::optical_blur;
        plan.push_back(p);
    }
    for (double v : linspace(cfg.scattering_min, cfg.scattering_max,
                             cfg.scattering_count)) {
        VariationParams p;
        p.blur = BlurKind::scattering;
        p.blur_scale = v;
        p.category = VariationCategory::scattering_blur;
        plan.push_back(p);
    }

    for (int i = 0; i < cfg.combo_count; ++i) {
        VariationParams p;
        p.combo = true;
        p.category = VariationCategory::combo;

        const int geo_effects = rng.bernoulli(cfg.combo_two_geo_prob) ? 2 : 1;
        int first = -1;
        for (int e = 0; e < geo_effects; ++e) {
            int kind;
            do {
                kind = static_cast<int>(rng.uniform_int(0, 3));
            } while (kind == first);
            if (e == 0) first = kind;
            switch (kind) {
                case 0:
                    p.shift_x = rng.uniform(-cfg.shift_max, cfg.shift_max);
                    break;
                case 1:
                    p.scale = rng.uniform(1.0 - cfg.scale_delta,
                                          1.0 + cfg.scale_delta);
                    break;
                case 2:
                    p.roll_deg = rng.uniform(-cfg.roll_max, cfg.roll_max);
                    break;
                default:
                    p.rotation_deg =
                        rng.uniform(-cfg.rotation_max, cfg.rotation_max);
                    break;
            }
        }
        switch (rng.uniform_int(0, 3)) {
            case 0:
                p.exposure_gain =
                    rng.bernoulli(0.5)
                        ? rng.uniform(cfg.under_min, cfg.under_max)
                        : rng.uniform(cfg.over_min, cfg.over_max);
                break;
            case 1:
                p.blur = BlurKind::motion;
                p.blur_length = rng.uniform(cfg.motion_min, cfg.motion_max);
                p.blur_angle_deg = rng.uniform(0.0, 180.0);
                break;
            case 2:
                p.blur = BlurKind::optical;
                p.blur_radius = rng.uniform(cfg.optical_min, cfg.optical_max);
                break;
            default:
                p.blur = BlurKind::scattering;
                p.blur_scale =
                    rng.uniform(cfg.scattering_min, cfg.scattering_max);
                break;
        }
        plan.push_back(p);
    }
    return plan;
}

namespace {

Vec2 finger_center(const FingerShape& shape) {
    double ybar = 0.0;
    int n = 0;
    for (int x = 0; x < shape.x_end; ++x)
        if (shape.half_width[x] > 0.0f) {
            ybar += shape.midline[x];
            ++n;
        }
    return {shape.x_end * 0.5, n > 0 ? ybar / n : shape.height() * 0.5};
}

} // namespace

Affine variation_affine(const FingerShape& shape, const VariationParams& p) {
    const Vec2 c = finger_center(shape);
    const Affine s = Affine::scaling(p.scale, p.scale, c);
    const Affine r = Affine::rotation(deg_to_rad(p.rotation_deg), c);
    const Affine t = Affine::translation(p.shift_x, 0.0);
    return t.compose(r.compose(s));
}

ImageF roll_warp(const ImageF& image, const FingerShape& shape,
                 double roll_deg) {
    const double theta = deg_to_rad(roll_deg);
    ImageF out = image;
    for (int x = 0; x < std::min(image.width(), shape.x_end); ++x) {
        const double R = shape.half_width[x];
        if (R <= 1.0) continue;
        const double mid = shape.midline[x];
        for (int y = 0; y < image.height(); ++y) {
            const double v = (y - mid) / R;
            if (v <= -1.0 || v >= 1.0) continue;
            const double phi = std::asin(v);
            const double src_phi =
                std::clamp(phi - theta, -std::numbers::pi / 2,
                           std::numbers::pi / 2);
            const double sy = mid + R * std::sin(src_phi);
            out.at(x, y) = sample_bilinear(image, x, sy);
        }
    }
    return out;
}

Vec2 transform_point(const FingerShape& shape, const VariationParams& p,
                     Vec2 q) {
    if (p.roll_deg != 0.0) {
        const int x = std::clamp(static_cast<int>(std::lround(q.x)), 0,
                                 shape.width() - 1);
        const double R = x < shape.x_end ? shape.half_width[x] : 0.0;
        if (R > 1.0) {
            const double v = std::clamp((q.y - shape.midline[x]) / R, -1.0, 1.0);
            const double phi = std::asin(v) + deg_to_rad(p.roll_deg);
            q.y = shape.midline[x] +
                  R * std::sin(std::clamp(phi, -std::numbers::pi / 2,
                                          std::numbers::pi / 2));
        }
    }
    return variation_affine(shape, p).apply(q);
}

Vec2 untransform_point(const FingerShape& shape, const VariationParams& p,
                       Vec2 q) {
    q = variation_affine(shape, p).inverse().apply(q);
    if (p.roll_deg != 0.0) {
        const int x = std::clamp(static_cast<int>(std::lround(q.x)), 0,
                                 shape.width() - 1);
        const double R = x < shape.x_end ? shape.half_width[x] : 0.0;
        if (R > 1.0) {
            const double v = std::clamp((q.y - shape.midline[x]) / R, -1.0, 1.0);
            const double phi = std::asin(v) - deg_to_rad(p.roll_deg);
            q.y = shape.midline[x] +
                  R * std::sin(std::clamp(phi, -std::numbers::pi / 2,
                                          std::numbers::pi / 2));
        }
    }
    return q;
}

Kernel blur_kernel(const VariationParams& p) {
    switch (p.blur) {
        case BlurKind::motion:
            return line_kernel(p.blur_length, deg_to_rad(p.blur_angle_deg));
        case BlurKind::optical:
            return disc_kernel(p.blur_radius);
        case BlurKind::scattering:
            return exponential_kernel(
                p.blur_scale,
                std::max(2, static_cast<int>(std::ceil(2.5 * p.blur_scale))));
        case BlurKind::none:
            break;
    }
    throw ConfigError("blur_kernel called without a blur kind");
}

ImageF apply_geometric(const ImageF& image, const FingerShape& shape,
                       const VariationParams& p, float background) {
    ImageF cur = image;
    if (p.roll_deg != 0.0) cur = roll_warp(cur, shape, p.roll_deg);
    const Affine inv = variation_affine(shape, p).inverse();
    return warp_affine(cur, inv, image.width(), image.height(), background);
}

ImageF undo_geometric(const ImageF& sample_image, const FingerShape& shape,
                      const VariationParams& p, float background) {
    const Affine fwd = variation_affine(shape, p);
    ImageF cur = warp_affine(sample_image, fwd, sample_image.width(),
                             sample_image.height(), background);
    if (p.roll_deg != 0.0) cur = roll_warp(cur, shape, -p.roll_deg);
    return cur;
}

Mask apply_geometric_mask(const Mask& mask, const FingerShape& shape,
                          const VariationParams& p) {
    Mask cur = mask;
    if (p.roll_deg != 0.0) {
        const double theta = deg_to_rad(p.roll_deg);
        Mask rolled = cur;
        for (int x = 0; x < std::min(cur.width(), shape.x_end); ++x) {
            const double R = shape.half_width[x];
            if (R <= 1.0) continue;
            const double mid = shape.midline[x];
            for (int y = 0; y < cur.height(); ++y) {
                const double v = (y - mid) / R;
                if (v <= -1.0 || v >= 1.0) continue;
                const double src_phi =
                    std::clamp(std::asin(v) - theta, -std::numbers::pi / 2,
                               std::numbers::pi / 2);
                const int sy = static_cast<int>(
                    std::lround(mid + R * std::sin(src_phi)));
                rolled.at(x, y) =
                    cur.in_bounds(x, sy) ? cur.at(x, sy) : 0;
            }
        }
        cur = std::move(rolled);
    }
    const Affine inv = variation_affine(shape, p).inverse();
    return warp_affine_mask(cur, inv, mask.width(), mask.height());
}

ImageF apply_variation(const ImageF& center_image, const FingerShape& shape,
                       const VariationParams& p, std::uint64_t seed,
                       const VariationConfig& cfg) {
    ImageF img = apply_geometric(center_image, shape, p, cfg.background);

    if (p.exposure_gain) {
        for (std::size_t i = 0; i < img.size(); ++i)
            img.data()[i] =
                static_cast<float>(*p.exposure_gain * img.data()[i]);
    }
    if (p.blur != BlurKind::none) img = convolve(img, blur_kernel(p));

    if (cfg.sample_noise_sigma > 0.0) {
        Rng rng(seed);
        for (std::size_t i = 0; i < img.size(); ++i)
            img.data()[i] += static_cast<float>(
                rng.gaussian(0.0, cfg.sample_noise_sigma));
    }
    clamp01(img);
    return img;
}

} // namespace veingen
