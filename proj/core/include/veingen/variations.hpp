#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "veingen/fingermodel.hpp"
#include "veingen/geometry.hpp"
#include "veingen/image.hpp"

namespace veingen {

enum class BlurKind { none, motion, optical, scattering };

enum class VariationCategory {
    shift,
    scale,
    roll,
    rotation,
    exposure,
    motion_blur,
    optical_blur,
    scattering_blur,
    combo
};

struct VariationParams {
    double shift_x = 0.0;       // px
    double rotation_deg = 0.0;  // about the finger center
    double scale = 1.0;         // about the finger center
    double roll_deg = 0.0;      // cylindrical roll about the finger axis
    std::optional<double> exposure_gain;
    BlurKind blur = BlurKind::none;
    double blur_length = 0.0;    // motion streak, px
    double blur_angle_deg = 0.0; // motion direction
    double blur_radius = 0.0;    // defocus disc, px
    double blur_scale = 0.0;     // scattering decay, px
    bool combo = false;
    VariationCategory category = VariationCategory::shift;
};

struct PlanConfig {
    int shift_count = 5;
    double shift_max = 20.0;
    int scale_count = 5;
    double scale_delta = 0.15;
    int roll_count = 9;
    double roll_max = 20.0;
    int rotation_count = 11;
    double rotation_max = 20.0;
    int under_count = 3;
    double under_min = 0.55, under_max = 0.80;
    int over_count = 2;
    double over_min = 1.25, over_max = 1.75;
    int motion_count = 5;
    double motion_min = 3.0, motion_max = 15.0;
    int optical_count = 5;
    double optical_min = 1.5, optical_max = 5.5;
    int scattering_count = 5;
    double scattering_min = 3.0, scattering_max = 6.0;
    int combo_count = 50;
    double combo_two_geo_prob = 0.3; // else one geometric effect
};

// Per-identity acquisition plan: a fixed grid of single-effect samples (50
// with the default counts) followed by seeded combination samples mixing one
// or two geometric effects with one photometric effect. Single-effect grids
// are evenly spaced over the configured ranges; only motion-blur angles and
// the combination samples consume randomness.
std::vector<VariationParams> build_plan(std::uint64_t seed,
                                        const PlanConfig& cfg = {});

struct VariationConfig {
    double sample_noise_sigma = 0.004;
    float background = 0.015f;
};

// Center-frame -> sample-frame affine (shift, rotation, scale about the
// finger center; roll is handled separately).
Affine variation_affine(const FingerShape& shape, const VariationParams& p);

// Cylindrical roll of the finger surface texture by roll_deg around the
// finger axis; columns outside the silhouette pass through unchanged.
ImageF roll_warp(const ImageF& image, const FingerShape& shape,
                 double roll_deg);

// Where a center-frame point lands in the sample frame (roll, then affine).
Vec2 transform_point(const FingerShape& shape, const VariationParams& p,
                     Vec2 q);
// Inverse of transform_point.
Vec2 untransform_point(const FingerShape& shape, const VariationParams& p,
                       Vec2 q);

// Full sample synthesis from the identity's center view: roll, affine,
// exposure gain, blur kernel, sensor noise. Deterministic in `seed`.
ImageF apply_variation(const ImageF& center_image, const FingerShape& shape,
                       const VariationParams& p, std::uint64_t seed,
                       const VariationConfig& cfg = {});

// Geometric part only, applied to a region mask (nearest-neighbour).
Mask apply_geometric_mask(const Mask& mask, const FingerShape& shape,
                          const VariationParams& p);

// Geometric part only, applied to an image (no exposure, blur, or noise).
ImageF apply_geometric(const ImageF& image, const FingerShape& shape,
                       const VariationParams& p, float background = 0.015f);

// Undoes the geometric part of a sample (affine, then roll).
ImageF undo_geometric(const ImageF& sample_image, const FingerShape& shape,
                      const VariationParams& p, float background = 0.015f);

Kernel blur_kernel(const VariationParams& p); // p.blur must not be none

} // namespace veingen
