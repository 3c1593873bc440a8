#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "veingen/geometry.hpp"
#include "veingen/grammar.hpp"
#include "veingen/image.hpp"

namespace veingen {

// Canvas for vein growth: a landscape frame split into three horizontal
// bands. The upper and lower bands seed one main vessel each; the middle
// band hosts the connecting venous network.
struct PatternTemplate {
    int width = 600;
    int height = 300;
    double upper_frac = 0.25;
    double middle_frac = 0.50;
    double min_foreground = 0.02;
    double max_foreground = 0.25;

    Rect upper_band() const {
        return {0.0, 0.0, double(width), height * upper_frac};
    }
    Rect middle_band() const {
        return {0.0, height * upper_frac, double(width),
                height * (upper_frac + middle_frac)};
    }
    Rect lower_band() const {
        return {0.0, height * (upper_frac + middle_frac), double(width),
                double(height)};
    }
};

enum class VeinKind { main, middle };

struct VeinSegment {
    int a = -1;
    int b = -1;
    float width = 1.0f;
    int parent = -1; // segment index, -1 for a chain's first segment
    VeinKind kind = VeinKind::main;
};

struct VeinGraph {
    std::vector<Vec2> nodes;
    std::vector<VeinSegment> segments;
    std::uint64_t seed = 0;
    int frame_width = 0;
    int frame_height = 0;
    bool smoothed = false;
};

struct PatternMask {
    Mask mask;
    std::uint64_t seed = 0;
};

// Turtle reading of an expanded grammar string. 'F' steps forward, '+'
// turns up, '-' turns down, '[' pushes state (scaling width by
// width_decay), ']' pops; all other symbols are ignored. Heading stays
// within axis_angle +/- max_heading. If keep_in is taller than zero the
// vertical component reflects off its top and bottom instead of leaving;
// stepping outside `frame` clips the last segment and ends that branch.
struct TurtleConfig {
    double step = 6.0;
    double turn = deg_to_rad(12.0);
    double start_width = 5.5;
    double width_decay = 0.88;
    double axis_angle = 0.0;
    double max_heading = deg_to_rad(40.0);
    Rect frame{0.0, 0.0, 600.0, 300.0};
    Rect keep_in{0.0, 0.0, 0.0, 0.0};
    VeinKind kind = VeinKind::main;
};

// Start position drawn uniformly from start_band (x first, then y).
VeinGraph interpret(const std::string& s, const TurtleConfig& cfg,
                    Rect start_band, std::uint64_t seed);

struct VeinPatternConfig {
    // Direction probabilities are drawn per identity from these bands.
    double turn_min = deg_to_rad(10.0), turn_max = deg_to_rad(16.0);
    double p_turn_min = 0.10, p_turn_max = 0.22;
    double main_step = 6.0;
    double middle_step = 5.0;
    // Widths leave enough stroke depth after the scattering blur for the
    // rendered vein-contrast floor to stay satisfiable.
    double main_width_min = 6.5, main_width_max = 8.0;
    double middle_width_min = 4.0, middle_width_max = 5.0;
    int main_iterations = 160;
    int middle_iterations = 70;
    int attach_min = 2, attach_max = 4; // sites per main vessel
    double p_two_branches = 0.45;
    double snap_distance = 3.0;
    double min_main_span = 0.8; // fraction of template width
    // Optional stochastic rules loaded from grammar files; empty uses the
    // built-in direction grammar with per-identity probabilities.
    std::string main_grammar_text;
    std::string middle_grammar_text;
};

// Grows two main vessels (upper and lower bands) and a middle venous
// network attached to them with one or two branches per attachment site.
// All randomness derives from `seed`. Throws GenerationError when the
// drawn geometry cannot satisfy the structural guarantees.
VeinGraph compose_identity(std::uint64_t seed, const PatternTemplate& tmpl,
                           const VeinPatternConfig& cfg = {});

// Replaces each polyline run between junctions with piecewise quadratic
// Bezier curves (interior nodes become off-curve control points, joined at
// segment midpoints); endpoints of every run are preserved exactly.
// samples_per_segment points are emitted per curve piece.
VeinGraph smooth(const VeinGraph& g, int samples_per_segment = 8);

// Stamps every segment as a disc brush of its width. Requires a smoothed
// graph. Enforces the template's foreground plausibility band.
PatternMask rasterize(const VeinGraph& g, const PatternTemplate& tmpl);

} // namespace veingen
