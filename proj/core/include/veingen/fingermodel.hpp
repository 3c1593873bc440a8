#pragma once

#include <cstdint>
#include <vector>

#include "veingen/geometry.hpp"
#include "veingen/image.hpp"

namespace veingen {

// Horizontal finger silhouette: base flush with the left frame edge,
// rounded tip on the right, y growing downward.
struct FingerShape {
    Mask mask; // 1 inside the finger
    std::vector<Vec2> contour; // closed outline, upper edge then lower edge
    std::vector<float> midline;    // per-column center y, valid on [0, x_end)
    std::vector<float> half_width; // per-column half thickness, 0 past the tip
    int x_end = 0; // first column past the tip
    std::uint64_t seed = 0;

    int width() const { return mask.width(); }
    int height() const { return mask.height(); }
};

struct FingerShapeConfig {
    int width = 600;
    int height = 200;
    double base_half_min = 54.0, base_half_max = 72.0;
    double taper_min = 0.18, taper_max = 0.30;
    double ripple_max = 3.0;     // per-harmonic edge ripple amplitude, px
    double drift_max = 6.0;      // midline bow amplitude, px
    double tip_margin_min = 8.0, tip_margin_max = 30.0;
};

FingerShape sample_finger(std::uint64_t seed,
                          const FingerShapeConfig& cfg = {});

// Rebuilds the per-column profile data from an arbitrary silhouette mask
// (one column-connected region per column assumed).
FingerShape shape_from_mask(const Mask& mask, std::uint64_t seed = 0);

struct Joint {
    Vec2 center;
    double radius = 0.0;
    double amplitude = 0.0; // brightness bump height
};

struct JointConfig {
    double f1_min = 0.30, f1_max = 0.40; // first joint, fraction of length
    double f2_min = 0.60, f2_max = 0.72; // second joint
    double min_separation = 0.25;        // fraction of length
    double radius_min = 14.0, radius_max = 20.0;
    double amplitude_min = 0.38, amplitude_max = 0.50;
    int max_attempts = 40;
};

// Places two joint cavities on the midline. Separation and fit constraints
// are enforced by bounded resampling; exhaustion throws GenerationError.
std::vector<Joint> place_joints(std::uint64_t seed, const FingerShape& shape,
                                const JointConfig& cfg = {});

// Tissue brightness prior: base level with a gentle falloff toward the
// silhouette edge, plus one radial bump per joint cavity (plateau to half
// the radius, cosine taper out to twice the radius).
struct BrightnessField {
    ImageF base_part;  // edge-falloff tissue term
    ImageF bump_sum;   // amplitude-weighted joint bumps
    ImageF bump_norm;  // max of unweighted bump profiles, in [0, 1]
    double base = 0.55;

    ImageF total(double bump_scale = 1.0) const;
};

struct BrightnessConfig {
    double base = 0.55;
    double edge_floor = 0.70;   // fraction of base kept at the silhouette edge
    double falloff_px = 30.0;
};

BrightnessField brightness_field(const FingerShape& shape,
                                 const std::vector<Joint>& joints,
                                 const BrightnessConfig& cfg = {});

struct FingerModel {
    FingerShape shape;
    std::vector<Joint> joints;
    BrightnessField brightness;
};

} // namespace veingen
