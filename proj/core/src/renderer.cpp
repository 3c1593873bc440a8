#include "veingen/renderer.hpp"

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

// Full-depth-plus-taper stroke profile from the distance to the support.
float stroke_profile(float dist, const RenderConfig& cfg) {
    if (dist <= cfg.plateau) return 1.0f;
    const double t = (dist - cfg.plateau) / cfg.taper;
    if (t >= 1.0) return 0.0f;
    return static_cast<float>(0.5 * (1.0 + std::cos(std::numbers::pi * t)));
}

Mask complement(const Mask& m) {
    Mask out(m.width(), m.height(), 0);
    for (std::size_t i = 0; i < m.size(); ++i)
        out.data()[i] = m.data()[i] ? 0 : 1;
    return out;
}

} // namespace

MarginRegions margin_regions(const FingerModel& model, const Mask& support,
                             const Mask& stroke_band) {
    const int w = model.shape.width(), h = model.shape.height();
    const ImageF depth = distance_transform(model.shape.mask);
    const ImageF band_dist = distance_transform(complement(stroke_band));

    MarginRegions r{Mask(w, h, 0), Mask(w, h, 0), Mask(w, h, 0), Mask(w, h, 0)};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double joint_zone = 0.0; // 1 disc, 2 annulus, 3 outer bump area
            for (const Joint& j : model.joints) {
                const double d = std::hypot(x - j.center.x, y - j.center.y);
                if (d <= j.radius)
                    joint_zone = 1.0;
                else if (d <= j.radius * std::numbers::sqrt2)
                    joint_zone = std::max(joint_zone, 2.0);
                else if (d <= j.radius * 2.0)
                    joint_zone = std::max(joint_zone, 3.0);
            }
            if (joint_zone == 1.0) r.discs.at(x, y) = 1;
            if (joint_zone == 2.0 && depth.at(x, y) > 2.0)
                r.annuli.at(x, y) = 1;
            if (support.at(x, y) && depth.at(x, y) > 3.0)
                r.strokes.at(x, y) = 1;
            if (depth.at(x, y) > 4.0 && band_dist.at(x, y) > 3.0 &&
                joint_zone == 0.0)
                r.tissue.at(x, y) = 1;
        }
    return r;
}

double joint_margin(const ImageF& image, const MarginRegions& r) {
    return mean_where(image, r.discs) - mean_where(image, r.annuli);
}

std::optional<double> vein_margin(const ImageF& image, const MarginRegions& r) {
    if (count_nonzero(r.strokes) == 0) return std::nullopt;
    return mean_where(image, r.tissue) - mean_where(image, r.strokes);
}

double region_margin(const ImageF& image, const RegionSpec& spec) {
    if (spec.bright.width() != image.width() ||
        spec.bright.height() != image.height() ||
        spec.dark.width() != image.width() ||
        spec.dark.height() != image.height())
        throw ConfigError("region masks do not match the image");
    if (count_nonzero(spec.bright) == 0 || count_nonzero(spec.dark) == 0)
        throw ConfigError("empty margin region");
    return mean_where(image, spec.bright) - mean_where(image, spec.dark);
}

double margin_penalty(const std::vector<const ImageF*>& images,
                      const std::vector<RegionSpec>& specs) {
    if (images.empty() || images.size() != specs.size())
        throw ConfigError("margin_penalty needs one spec per image");
    double acc = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i)
        acc += std::max(0.0, specs[i].margin - region_margin(*images[i], specs[i]));
    return acc / static_cast<double>(images.size());
}

namespace {

struct MappedPattern {
    ImageF coverage;
    Mask support;
    Affine pattern_to_shape;
};

MappedPattern map_pattern(const FingerModel& model, const PatternMask& pattern,
                          const RenderConfig& cfg) {
    const FingerShape& shape = model.shape;
    const int w = shape.width(), h = shape.height();
    const int pw = pattern.mask.width(), ph = pattern.mask.height();

    double h_min = 1e30;
    const int x_hi = std::max(8, static_cast<int>(0.9 * shape.x_end));
    for (int x = 4; x < x_hi; ++x)
        if (shape.half_width[x] > 0.0f)
            h_min = std::min(h_min, double(shape.half_width[x]));
    if (h_min > 1e29)
        throw GenerationError("finger shape has no usable columns");

    double ybar = 0.0;
    for (int x = 0; x < shape.x_end; ++x) ybar += shape.midline[x];
    ybar /= std::max(1, shape.x_end);

    const double sy = cfg.pattern_scale * 2.0 * h_min / ph;
    const double sx = (shape.x_end - 6.0) / pw;
    const double ty = ybar - 0.5 * ph * sy;

    MappedPattern mp;
    mp.pattern_to_shape = {sx, 0.0, 0.0, 0.0, sy, ty};

    ImageF patf(pw, ph, 0.0f);
    for (std::size_t i = 0; i < patf.size(); ++i)
        patf.data()[i] = pattern.mask.data()[i] ? 1.0f : 0.0f;

    // Corner-space parameters of the inverse map for area resampling.
    const double isx = 1.0 / sx, isy = 1.0 / sy;
    const double itx = (-0.5 - 0.0) * isx + 0.5;
    const double ity = (-0.5 - ty) * isy + 0.5;
    mp.coverage = resample_area(patf, isx, isy, itx, ity, w, h);

    mp.support = Mask(w, h, 0);
    for (std::size_t i = 0; i < mp.coverage.size(); ++i)
        mp.support.data()[i] =
            mp.coverage.data()[i] >= cfg.support_threshold ? 1 : 0;
    return mp;
}

RoiBox derive_roi(const FingerShape& shape, double pattern_scale,
                  double h_min, double ybar) {
    RoiBox roi;
    const double extent = shape.x_end - 6.0;
    roi.cx = extent * 0.5;
    roi.width = extent * 0.94;
    double half_y = pattern_scale * h_min + 8.0;
    double h_roi_min = 1e30;
    const int x0 = std::max(0, static_cast<int>(roi.cx - roi.width / 2));
    const int x1 = std::min(shape.x_end - 1,
                            static_cast<int>(roi.cx + roi.width / 2));
    for (int x = x0; x <= x1; ++x)
        if (shape.half_width[x] > 0.0f)
            h_roi_min = std::min(h_roi_min, double(shape.half_width[x]));
    half_y = std::min(half_y, h_roi_min - 2.0);
    roi.cy = ybar;
    roi.height = 2.0 * half_y;
    return roi;
}

} // namespace

RenderedSample render(const FingerModel& model, const PatternMask& pattern,
                      std::uint64_t noise_seed, const RenderConfig& cfg) {
    const FingerShape& shape = model.shape;
    const int w = shape.width(), h = shape.height();

    MappedPattern mp = map_pattern(model, pattern, cfg);

    const ImageF dist_to_support = distance_transform(complement(mp.support));
    ImageF stroke(w, h, 0.0f);
    Mask band(w, h, 0);
    for (std::size_t i = 0; i < stroke.size(); ++i) {
        stroke.data()[i] = stroke_profile(dist_to_support.data()[i], cfg);
        band.data()[i] = stroke.data()[i] > 0.02f ? 1 : 0;
    }

    const ImageF local_cover = box_filter(mp.coverage, 3);
    ImageF width_factor(w, h, 0.0f);
    for (std::size_t i = 0; i < width_factor.size(); ++i) {
        const double t = std::clamp(local_cover.data()[i] / 0.8, 0.0, 1.0);
        width_factor.data()[i] = static_cast<float>(
            cfg.width_factor_min +
            (cfg.width_factor_max - cfg.width_factor_min) * t);
    }

    const ImageF depth = distance_transform(shape.mask);
    const Kernel psf = exponential_kernel(cfg.psf_scale, cfg.psf_radius);
    const MarginRegions regions = margin_regions(model, mp.support, band);

    double h_min = 1e30;
    for (int x = 4; x < std::max(8, static_cast<int>(0.9 * shape.x_end)); ++x)
        if (shape.half_width[x] > 0.0f)
            h_min = std::min(h_min, double(shape.half_width[x]));
    double ybar = 0.0;
    for (int x = 0; x < shape.x_end; ++x) ybar += shape.midline[x];
    ybar /= std::max(1, shape.x_end);

    double bump_scale = 1.0;
    double atten = cfg.attenuation;
    for (int attempt = 0; attempt < cfg.repair_attempts; ++attempt) {
        const ImageF field = model.brightness.total(bump_scale);
        ImageF img(w, h, 0.0f);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double a =
                    std::min(cfg.attenuation_cap,
                             atten * width_factor.at(x, y)) *
                    stroke.at(x, y) *
                    (1.0 - cfg.joint_suppression *
                               model.brightness.bump_norm.at(x, y));
                const double v = field.at(x, y) * (1.0 - a);
                const double sil = smoothstep01(depth.at(x, y) / 3.0);
                img.at(x, y) =
                    static_cast<float>(cfg.ambient + (v - cfg.ambient) * sil);
            }

        img = convolve(img, psf);

        Rng noise(noise_seed);
        for (std::size_t i = 0; i < img.size(); ++i)
            img.data()[i] +=
                static_cast<float>(noise.gaussian(0.0, cfg.noise_sigma));
        clamp01(img);

        const double mj = joint_margin(img, regions);
        const std::optional<double> mv = vein_margin(img, regions);
        // Downstream samples re-measure these margins after resampling,
        // which perturbs them by up to ~0.01; repair until the margins clear
        // the configured floors with room for that.
        constexpr double kResampleHeadroom = 0.02;
        const bool joint_ok = mj >= cfg.margin_joint + kResampleHeadroom;
        const bool vein_ok =
            !mv.has_value() || *mv >= cfg.margin_vein + kResampleHeadroom;
        if (joint_ok && vein_ok) {
            RenderedSample out;
            out.image = std::move(img);
            out.support = mp.support;
            out.stroke_band = band;
            out.pattern_to_shape = mp.pattern_to_shape;
            out.roi = derive_roi(shape, cfg.pattern_scale, h_min, ybar);
            out.margin_joint = mj;
            out.margin_vein = mv;
            out.bump_scale = bump_scale;
            out.attenuation_used = atten;
            return out;
        }
        if (!joint_ok) bump_scale *= 1.2;
        if (!vein_ok) atten = std::min(atten * 1.15, cfg.attenuation_cap);
        if (attempt + 1 == cfg.repair_attempts)
            throw GenerationError(
                "render margins unsatisfiable after adjustment: joint " +
                std::to_string(mj) + " (target " +
                std::to_string(cfg.margin_joint) + "), vein " +
                (mv ? std::to_string(*mv) : std::string("n/a")) + " (target " +
                std::to_string(cfg.margin_vein) + ")");
    }
    throw GenerationError("render repair loop exhausted");
}

ImageF render_template(const PatternMask& pattern, std::uint64_t noise_seed,
                       const RenderConfig& cfg) {
    const int w = pattern.mask.width(), h = pattern.mask.height();

    const ImageF dist_to_support =
        distance_transform(complement(pattern.mask));
    ImageF cover(w, h, 0.0f);
    for (std::size_t i = 0; i < cover.size(); ++i)
        cover.data()[i] = pattern.mask.data()[i] ? 1.0f : 0.0f;
    const ImageF local_cover = box_filter(cover, 3);

    ImageF img(w, h, 0.0f);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const float s = stroke_profile(dist_to_support.data()[i], cfg);
        const double t = std::clamp(local_cover.data()[i] / 0.8, 0.0, 1.0);
        const double wf =
            cfg.width_factor_min +
            (cfg.width_factor_max - cfg.width_factor_min) * t;
        const double a =
            std::min(cfg.attenuation_cap, cfg.attenuation * wf) * s;
        img.data()[i] = static_cast<float>(0.52 * (1.0 - a));
    }

    img = convolve(img, exponential_kernel(cfg.psf_scale, cfg.psf_radius));
    Rng noise(noise_seed);
    for (std::size_t i = 0; i < img.size(); ++i)
        img.data()[i] += static_cast<float>(noise.gaussian(0.0, cfg.noise_sigma));
    clamp01(img);
    return img;
}

ImageF crop_roi(const ImageF& image, const RoiBox& roi, int out_w, int out_h) {
    const double x0 = roi.cx - roi.width / 2.0;
    const double y0 = roi.cy - roi.height / 2.0;
    if (roi.width <= 0.0 || roi.height <= 0.0)
        throw ConfigError("roi has non-positive extent");
    if (x0 < -0.5 - 1e-9 || y0 < -0.5 - 1e-9 ||
        x0 + roi.width > image.width() - 0.5 + 1e-9 ||
        y0 + roi.height > image.height() - 0.5 + 1e-9)
        throw ConfigError("roi reaches outside the image");

    ImageF out(out_w, out_h, 0.0f);
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            const double sx = x0 + (x + 0.5) * roi.width / out_w - 0.5;
            const double sy = y0 + (y + 0.5) * roi.height / out_h - 0.5;
            out.at(x, y) = sample_bilinear(image, sx, sy);
        }
    return out;
}

} // namespace veingen
