#pragma once

#include <cstdint>
#include <vector>

#include "veingen/errors.hpp"
#include "veingen/image.hpp"

namespace veingen {

// Output flavours of a rendered sample. `full` is the 600x300 frame with the
// finger composed onto a dark background, `shaped` the tight 600x200 finger
// frame, `roi` the recognition crop (also 600x200).
enum class Variant { full, shaped, roi };

struct VeinImage {
    ImageF image;
    Variant variant = Variant::shaped;
};

// Embeddings are unit-norm; distances are cosine distances (1 - dot).
using FeatureVector = std::vector<float>;

struct EmbedConfig {
    int grid_rows = 16;
    int grid_cols = 48;
    int pool_rows = 2;  // grid cells merged vertically per pooled cell
    int pool_cols = 6;  // grid cells merged horizontally per pooled cell
    int orientations = 8;
    double probe_offset = 3.5;  // px, perpendicular distance of ridge probes
    int lcn_radius = 10;        // 21x21 local contrast window
    double lcn_floor = 0.02;
    double lcn_clamp = 3.0;
    int presmooth_passes = 2;

    int dims() const {
        return (grid_rows / pool_rows) * (grid_cols / pool_cols) * orientations;
    }
};

// Deterministic baseline extractor: local contrast normalization followed by
// oriented ridge-energy responses pooled over a spatial grid, unit-normalized.
// Requires the roi variant at 600x200; throws ConfigError otherwise and
// GenerationError if the response is degenerate (all-zero).
FeatureVector embed(const VeinImage& roi, const EmbedConfig& cfg = {});

double cosine_distance(const FeatureVector& a, const FeatureVector& b);
double dot_similarity(const FeatureVector& a, const FeatureVector& b);

struct ClassSamples {
    int class_id = 0;
    std::vector<FeatureVector> members;
};

struct MetricConfig {
    double r = 0.2;
    // Diversity counts pairs with distance strictly greater than r; the audit
    // switch flips the comparison to d < r for cross-checking.
    bool diversity_count_below = false;
};

// Mean of the members, renormalized to unit length.
FeatureVector class_center(const std::vector<FeatureVector>& members);

struct UniquenessResult {
    double u_class = 0.0;
    int unique_count = 0;
};

// Greedy r-ball packing of class centers, visited in ascending class id; a
// center is accepted when its distance to every accepted center exceeds r.
UniquenessResult class_uniqueness(const std::vector<ClassSamples>& classes,
                                  const MetricConfig& cfg);

// Fraction of samples closer than r to their own class center.
double intra_consistency(const std::vector<ClassSamples>& classes,
                         const MetricConfig& cfg);

// Mean over classes of the fraction of intra-class pairs with distance > r
// (or < r when diversity_count_below is set). Every class must hold the same
// number (>= 2) of samples; throws ConfigError otherwise.
double intra_diversity(const std::vector<ClassSamples>& classes,
                       const MetricConfig& cfg);

struct Histogram {
    double lo = -1.0;
    double bin_width = 0.01;
    std::vector<std::uint64_t> counts = std::vector<std::uint64_t>(200, 0);
    std::uint64_t n = 0;
    double sum = 0.0;
    double sum_sq = 0.0;

    void add(double v);
    double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
    double variance() const;
};

struct ScoreDistributions {
    Histogram genuine;
    Histogram impostor;
    bool impostor_empty = false;       // fewer than two classes
    std::uint64_t impostor_total = 0;  // pair count before any capping
    bool impostor_sampled = false;     // cap applied (sampling, seeded)
};

// Genuine scores are dot similarities over all intra-class pairs; impostor
// scores cover all inter-class pairs, uniformly sampled with replacement once
// their count exceeds `impostor_cap`.
ScoreDistributions score_distributions(const std::vector<ClassSamples>& classes,
                                       std::uint64_t seed,
                                       std::uint64_t impostor_cap = 1000000);

} // namespace veingen
