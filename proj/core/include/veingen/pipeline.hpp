#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "veingen/annotations.hpp"
#include "veingen/fingermodel.hpp"
#include "veingen/metrics.hpp"
#include "veingen/renderer.hpp"
#include "veingen/variations.hpp"
#include "veingen/veinpattern.hpp"

namespace veingen {

struct PipelineConfig {
    std::uint64_t master_seed = 1;
    int identities = 1;
    int workers = 1;
    std::filesystem::path out_dir;
    bool emit_full = false; // the shaped image is always written
    bool emit_roi = false;
    double failure_rate_bound = 0.001;
    int retries = 3;

    PatternTemplate tmpl;
    VeinPatternConfig veins;
    FingerShapeConfig finger;
    JointConfig joints;
    BrightnessConfig brightness;
    RenderConfig render;
    PlanConfig plan;
    VariationConfig variation;

    int samples_per_identity() const;
};

int plan_size(const PlanConfig& cfg);

// Plain-text config: `[section]` headers, `key = value` lines, ';' comments.
// Every key is optional; unknown sections/keys, malformed values, and
// inconsistent ranges are ConfigErrors.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);
void validate_config(const PipelineConfig& cfg);

// Every generation-relevant setting (not out_dir, workers, identity count)
// as sorted `section.key=value` lines; its SHA-256 stamps the output
// directory so resumed runs can prove they match.
std::string canonical_config(const PipelineConfig& cfg);
std::string config_digest(const PipelineConfig& cfg);

std::uint64_t identity_seed(std::uint64_t master, int identity, int attempt);

// One identity grown end to end: vein pattern, finger model, center-view
// render, and the acquisition plan for its samples.
struct IdentityBundle {
    int identity = 0;
    std::uint64_t seed = 0; // identity seed (master, id, attempt)
    VeinGraph graph;        // smoothed
    PatternMask pattern;
    FingerModel model;
    RenderedSample base;
    std::vector<VariationParams> plan;
};

IdentityBundle generate_identity(const PipelineConfig& cfg, int identity,
                                 int attempt = 0);

struct SampleImage {
    ImageF shaped;
    RoiBox roi; // crop box inside the shaped frame
    AnnotationRecord annotation;
};

// One plan entry applied to the identity's center view, with the annotation
// record describing it.
SampleImage make_sample(const PipelineConfig& cfg, const IdentityBundle& bundle,
                        int sample);

// The base crop box carried through a sample's geometry (axis-aligned hull,
// clamped to the frame).
RoiBox transform_roi(const RoiBox& base, const FingerShape& shape,
                     const VariationParams& p, int frame_w, int frame_h);

// Shaped frame pasted onto a dark tall background with seeded jitter.
ImageF compose_full_frame(const ImageF& shaped, std::uint64_t seed,
                          float background, int full_height = 300);

struct GenerationStats {
    int identities_requested = 0;
    int identities_generated = 0;
    int identities_resumed = 0;
    std::vector<int> failed_identities;
    std::uint64_t samples_written = 0;
    double elapsed_seconds = 0.0;
    double samples_per_second = 0.0;
};

using ProgressFn = std::function<void(int identity, bool ok)>;

// Batch generation under cfg.out_dir: identities in parallel, resumable via
// per-identity completion markers, manifest written last. Output bytes are
// independent of the worker count. Throws GenerationError when the failure
// rate exceeds the configured bound.
GenerationStats generate_dataset(const PipelineConfig& cfg,
                                 const ProgressFn& progress = {});

struct EvalConfig {
    double r = 0.2;
    std::uint64_t seed = 7;
    int max_identities = 0; // 0 = all
    int max_samples = 0;    // 0 = all, else a plan-order prefix
    bool align = true;      // undo recorded geometry before embedding
};

struct EvalReport {
    int identities = 0;
    int samples_per_identity = 0;
    double r = 0.2;
    std::uint64_t seed = 0;
    bool aligned = true;
    UniquenessResult uniqueness;
    double c_intra = 0.0;
    double d_intra = 0.0;         // pairs farther than r (prose direction)
    double d_intra_printed = 0.0; // audit direction, pairs closer than r
    std::optional<double> d_intra_geometric; // single-effect pose samples
    std::optional<double> d_intra_exposure;  // single-effect exposure samples
    ScoreDistributions scores;
};

// Verifies the dataset, embeds every ROI (geometry-normalized via the
// recorded parameters when cfg.align), and runs the full metric suite.
EvalReport evaluate_dataset(const std::filesystem::path& root,
                            const EvalConfig& cfg = {});

std::string format_report(const EvalReport& rep);
void write_report(const std::filesystem::path& path, const EvalReport& rep);

} // namespace veingen
