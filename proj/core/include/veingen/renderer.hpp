#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "veingen/fingermodel.hpp"
#include "veingen/geometry.hpp"
#include "veingen/image.hpp"
#include "veingen/veinpattern.hpp"

namespace veingen {

struct RenderConfig {
    double pattern_scale = 0.85; // vein band height as a fraction of finger
    double psf_scale = 3.0;      // skin scattering decay length, px
    int psf_radius = 9;
    double attenuation = 0.97;     // vein darkening at full stroke depth
    double attenuation_cap = 0.99;
    double plateau = 2.5; // full-depth halo around the stroke support, px
    double taper = 4.0;   // cosine falloff width beyond the plateau, px
    double width_factor_min = 0.85, width_factor_max = 1.15;
    double support_threshold = 0.25; // coverage needed to count as stroke
    double joint_suppression = 0.55; // vein washout inside joint cavities
    double noise_sigma = 0.008;
    double ambient = 0.015; // background level outside the finger
    double margin_joint = 0.10;
    double margin_vein = 0.30;
    int repair_attempts = 5;
};

struct RoiBox {
    double cx = 0.0, cy = 0.0;
    double width = 0.0, height = 0.0;
};

struct RenderedSample {
    ImageF image;            // finger-shaped frame, values in [0, 1]
    Mask support;            // mapped stroke support, same frame
    Mask stroke_band;        // pixels with any vein attenuation
    Affine pattern_to_shape; // template -> shape frame map
    RoiBox roi;
    double margin_joint = 0.0;
    std::optional<double> margin_vein; // empty when the pattern is empty
    double bump_scale = 1.0;           // repair bookkeeping
    double attenuation_used = 0.0;
};

// Region masks behind the two contrast margins: joint discs vs equal-area
// rings, and stroke pixels vs clean tissue 3 px clear of any stroke.
struct MarginRegions {
    Mask discs, annuli, strokes, tissue;
};

MarginRegions margin_regions(const FingerModel& model, const Mask& support,
                             const Mask& stroke_band);

double joint_margin(const ImageF& image, const MarginRegions& r);
std::optional<double> vein_margin(const ImageF& image, const MarginRegions& r);

// A brighter-than contrast requirement between two pixel sets.
struct RegionSpec {
    Mask bright; // region expected brighter
    Mask dark;
    double margin = 0.0;
};

// mean(bright) - mean(dark); an empty region is a ConfigError.
double region_margin(const ImageF& image, const RegionSpec& spec);

// Mean hinge penalty max(0, margin - region_margin) over an image batch;
// zero exactly when every image satisfies its margin.
double margin_penalty(const std::vector<const ImageF*>& images,
                      const std::vector<RegionSpec>& specs);

// Composites the vein pattern into the finger model: maps the template into
// the finger band, attenuates tissue brightness along strokes, applies the
// scattering point-spread function and sensor noise. Brightness contrast
// margins below target trigger a bounded adjustment loop; exhaustion throws
// GenerationError carrying both measured margins.
RenderedSample render(const FingerModel& model, const PatternMask& pattern,
                      std::uint64_t noise_seed, const RenderConfig& cfg = {});

// Flat template-frame view of the pattern under the same stroke and
// scattering model, without any finger geometry.
ImageF render_template(const PatternMask& pattern, std::uint64_t noise_seed,
                       const RenderConfig& cfg = {});

// Axis-aligned crop resampled bilinearly to out_w x out_h. A box reaching
// outside the image is a ConfigError. Integer-aligned crops at native scale
// are pixel-exact.
ImageF crop_roi(const ImageF& image, const RoiBox& roi, int out_w = 600,
                int out_h = 200);

} // namespace veingen
