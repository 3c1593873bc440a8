#include "veingen/veinpattern.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

#include "veingen/errors.hpp"
#include "veingen/rng.hpp"

namespace veingen {

namespace {

struct TurtleState {
    Vec2 pos;
    double heading = 0.0;
    double width = 1.0;
    int node = -1;
    int last_segment = -1;
    bool live = true;
};

// Largest t in [0, 1] keeping pos + t*d inside rect.
double clip_step(Vec2 pos, Vec2 d, const Rect& r) {
    double t = 1.0;
    if (d.x > 0.0) t = std::min(t, (r.x1 - pos.x) / d.x);
    if (d.x < 0.0) t = std::min(t, (r.x0 - pos.x) / d.x);
    if (d.y > 0.0) t = std::min(t, (r.y1 - pos.y) / d.y);
    if (d.y < 0.0) t = std::min(t, (r.y0 - pos.y) / d.y);
    return std::max(0.0, t);
}

} // namespace

VeinGraph interpret(const std::string& s, const TurtleConfig& cfg,
                    Rect start_band, std::uint64_t seed) {
    VeinGraph g;
    g.seed = seed;
    g.frame_width = static_cast<int>(cfg.frame.x1) + 1;
    g.frame_height = static_cast<int>(cfg.frame.y1) + 1;

    Rng rng(seed);
    TurtleState cur;
    cur.pos = {rng.uniform(start_band.x0, start_band.x1),
               rng.uniform(start_band.y0, start_band.y1)};
    cur.heading = cfg.axis_angle;
    cur.width = cfg.start_width;
    g.nodes.push_back(cur.pos);
    cur.node = 0;

    const bool steer = cfg.keep_in.height() > 0.0;
    std::vector<TurtleState> stack;

    for (char c : s) {
        switch (c) {
            case '+':
                if (cur.live) cur.heading -= cfg.turn;
                break;
            case '-':
                if (cur.live) cur.heading += cfg.turn;
                break;
            case '[':
                stack.push_back(cur);
                cur.width *= cfg.width_decay;
                break;
            case ']':
                if (stack.empty())
                    throw ConfigError("']' without matching '[' in vein string");
                cur = stack.back();
                stack.pop_back();
                break;
            case 'F': {
                if (!cur.live) break;
                cur.heading = std::clamp(cur.heading,
                                         cfg.axis_angle - cfg.max_heading,
                                         cfg.axis_angle + cfg.max_heading);
                double ny = cur.pos.y + cfg.step * std::sin(cur.heading);
                if (steer && (ny < cfg.keep_in.y0 || ny > cfg.keep_in.y1)) {
                    cur.heading = 2.0 * cfg.axis_angle - cur.heading;
                    ny = cur.pos.y + cfg.step * std::sin(cur.heading);
                    if (ny < cfg.keep_in.y0 || ny > cfg.keep_in.y1)
                        cur.heading = cfg.axis_angle;
                }
                const Vec2 d{cfg.step * std::cos(cur.heading),
                             cfg.step * std::sin(cur.heading)};
                Vec2 next = cur.pos + d;
                bool ends_branch = false;
                if (!cfg.frame.contains(next)) {
                    const double t = clip_step(cur.pos, d, cfg.frame);
                    if (t * cfg.step < 0.75) {
                        cur.live = false;
                        break;
                    }
                    next = cur.pos + d * t;
                    ends_branch = true;
                }
                g.nodes.push_back(next);
                const int nid = static_cast<int>(g.nodes.size()) - 1;
                g.segments.push_back({cur.node, nid,
                                      static_cast<float>(cur.width),
                                      cur.last_segment, cfg.kind});
                cur.last_segment = static_cast<int>(g.segments.size()) - 1;
                cur.node = nid;
                cur.pos = next;
                if (ends_branch) cur.live = false;
                break;
            }
            default:
                break; // constants carry no turtle action
        }
    }
    return g;
}

namespace {

Grammar direction_grammar(double p_up, double p_down) {
    Grammar g;
    g.alphabet = "XF+-";
    g.axiom = "X";
    g.rules = {{'X', "FX", 1.0 - p_up - p_down},
               {'X', "+FX", p_up},
               {'X', "-FX", p_down}};
    validate(g);
    return g;
}

double span_x(const VeinGraph& g) {
    double lo = 1e30, hi = -1e30;
    for (const Vec2& p : g.nodes) {
        lo = std::min(lo, p.x);
        hi = std::max(hi, p.x);
    }
    return g.nodes.empty() ? 0.0 : hi - lo;
}

int nearest_node_by_x(const VeinGraph& g, double x) {
    int best = 0;
    double bd = 1e30;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const double d = std::abs(g.nodes[i].x - x);
        if (d < bd) {
            bd = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

// Appends `sub` to `out`, fusing sub's root node onto existing node
// `attach_node` whose incoming segment is `attach_segment`.
void merge_chain(VeinGraph& out, const VeinGraph& sub, int attach_node,
                 int attach_segment) {
    const int node_base = static_cast<int>(out.nodes.size());
    const int seg_base = static_cast<int>(out.segments.size());
    for (std::size_t i = 1; i < sub.nodes.size(); ++i)
        out.nodes.push_back(sub.nodes[i]);
    for (const VeinSegment& s : sub.segments) {
        VeinSegment ns = s;
        ns.a = s.a == 0 ? attach_node : node_base + s.a - 1;
        ns.b = s.b == 0 ? attach_node : node_base + s.b - 1;
        ns.parent = s.parent < 0 ? attach_segment : seg_base + s.parent;
        out.segments.push_back(ns);
    }
}

} // namespace

VeinGraph compose_identity(std::uint64_t seed, const PatternTemplate& tmpl,
                           const VeinPatternConfig& cfg) {
    const double W = tmpl.width, H = tmpl.height;
    Rng rng(seed);

    // Identity-level draws, in a fixed order.
    const double turn_main = rng.uniform(cfg.turn_min, cfg.turn_max);
    const double turn_middle =
        rng.uniform(cfg.turn_min, cfg.turn_max) + deg_to_rad(4.0);
    const double pu_main = rng.uniform(cfg.p_turn_min, cfg.p_turn_max);
    const double pd_main = rng.uniform(cfg.p_turn_min, cfg.p_turn_max);
    const double pu_mid = rng.uniform(cfg.p_turn_min, cfg.p_turn_max);
    const double pd_mid = rng.uniform(cfg.p_turn_min, cfg.p_turn_max);
    const double w_upper = rng.uniform(cfg.main_width_min, cfg.main_width_max);
    const double w_lower = rng.uniform(cfg.main_width_min, cfg.main_width_max);
    const double w_middle =
        rng.uniform(cfg.middle_width_min, cfg.middle_width_max);

    const Grammar main_grammar = cfg.main_grammar_text.empty()
                                     ? direction_grammar(pu_main, pd_main)
                                     : parse_grammar(cfg.main_grammar_text);
    const Grammar middle_grammar = cfg.middle_grammar_text.empty()
                                       ? direction_grammar(pu_mid, pd_mid)
                                       : parse_grammar(cfg.middle_grammar_text);

    const Rect frame{0.0, 0.0, W - 1.0, H - 1.0};

    auto grow_main = [&](bool upper) {
        TurtleConfig tc;
        tc.step = cfg.main_step;
        tc.turn = turn_main;
        tc.start_width = upper ? w_upper : w_lower;
        tc.max_heading = deg_to_rad(40.0);
        tc.frame = frame;
        tc.keep_in = upper ? Rect{0.0, 6.0, W - 1.0, 0.46 * H}
                           : Rect{0.0, 0.54 * H, W - 1.0, H - 7.0};
        tc.kind = VeinKind::main;
        const Rect band = upper ? tmpl.upper_band() : tmpl.lower_band();
        const Rect start{2.0, band.y0 + 10.0, 12.0, band.y1 - 10.0};
        const char* tag = upper ? "main-upper" : "main-lower";
        const std::string s =
            expand(main_grammar, cfg.main_iterations,
                   derive_seed(seed, upper ? 0 : 1, "main-string"));
        VeinGraph m = interpret(s, tc, start,
                                derive_seed(seed, upper ? 0 : 1, tag));
        if (span_x(m) < cfg.min_main_span * W)
            throw GenerationError(
                "main vessel span " + std::to_string(span_x(m)) +
                " px is below the required fraction of template width");
        return m;
    };

    const VeinGraph upper = grow_main(true);
    const VeinGraph lower = grow_main(false);

    VeinGraph g;
    g.seed = seed;
    g.frame_width = tmpl.width;
    g.frame_height = tmpl.height;
    g.nodes = upper.nodes;
    g.segments = upper.segments;
    const int lower_node_base = static_cast<int>(g.nodes.size());
    const int lower_seg_base = static_cast<int>(g.segments.size());
    for (const Vec2& p : lower.nodes) g.nodes.push_back(p);
    for (VeinSegment s : lower.segments) {
        s.a += lower_node_base;
        s.b += lower_node_base;
        if (s.parent >= 0) s.parent += lower_seg_base;
        g.segments.push_back(s);
    }

    // Node id -> incoming segment id, for parent links at attachment sites.
    std::map<int, int> incoming;
    for (std::size_t i = 0; i < g.segments.size(); ++i)
        incoming[g.segments[i].b] = static_cast<int>(i);

    int site_counter = 0;
    for (int side = 0; side < 2; ++side) {
        const bool from_upper = side == 0;
        const int node_base = from_upper ? 0 : lower_node_base;
        const std::size_t node_count =
            from_upper ? upper.nodes.size() : lower.nodes.size();
        const VeinGraph& host = from_upper ? upper : lower;
        const VeinGraph& other = from_upper ? lower : upper;

        const int sites =
            static_cast<int>(rng.uniform_int(cfg.attach_min, cfg.attach_max));
        for (int i = 0; i < sites; ++i) {
            const double fx = (i + rng.uniform(0.2, 0.8)) / sites;
            const double x_target = W * (0.06 + 0.80 * fx);
            const int local = nearest_node_by_x(host, x_target);
            const int attach = node_base + local;
            (void)node_count;

            const int branches = rng.bernoulli(cfg.p_two_branches) ? 2 : 1;
            const double base_angle = rng.uniform(deg_to_rad(30.0), deg_to_rad(70.0));
            const double spread =
                branches == 2 ? rng.uniform(deg_to_rad(18.0), deg_to_rad(40.0))
                              : 0.0;
            for (int b = 0; b < branches; ++b) {
                double angle = base_angle + (b == 0 ? -0.5 : 0.5) * spread;
                if (!from_upper) angle = -angle;

                TurtleConfig tc;
                tc.step = cfg.middle_step;
                tc.turn = turn_middle;
                tc.start_width = w_middle;
                tc.axis_angle = angle;
                tc.max_heading = deg_to_rad(50.0);
                tc.frame = frame;
                tc.keep_in = {0.0, 4.0, W - 1.0, H - 5.0};
                tc.kind = VeinKind::middle;

                const std::uint64_t branch_tag =
                    static_cast<std::uint64_t>(site_counter) * 4 + b;
                const std::string s =
                    expand(middle_grammar, cfg.middle_iterations,
                           derive_seed(seed, branch_tag, "middle-string"));
                const Vec2 at = g.nodes[attach];
                VeinGraph chain =
                    interpret(s, tc, {at.x, at.y, at.x, at.y},
                              derive_seed(seed, branch_tag, "middle-turtle"));

                // Truncate where the chain first comes close to the opposite
                // main vessel, and fuse onto it when close enough.
                std::optional<int> snap_target;
                std::size_t keep = chain.nodes.size();
                for (std::size_t n = 2; n < chain.nodes.size(); ++n) {
                    double bd = 1e30;
                    int bidx = -1;
                    for (std::size_t m = 0; m < other.nodes.size(); ++m) {
                        const double d = (chain.nodes[n] - other.nodes[m]).norm();
                        if (d < bd) {
                            bd = d;
                            bidx = static_cast<int>(m);
                        }
                    }
                    if (bd <= cfg.snap_distance) {
                        keep = n + 1;
                        if (bd <= cfg.middle_step * 1.3)
                            snap_target =
                                (from_upper ? lower_node_base : 0) + bidx;
                        break;
                    }
                }
                if (keep < chain.nodes.size()) {
                    chain.nodes.resize(keep);
                    std::vector<VeinSegment> trimmed;
                    for (const VeinSegment& cs : chain.segments)
                        if (cs.a < static_cast<int>(keep) &&
                            cs.b < static_cast<int>(keep))
                            trimmed.push_back(cs);
                    chain.segments = std::move(trimmed);
                }
                if (chain.segments.empty()) continue;

                const int attach_seg =
                    incoming.count(attach) ? incoming[attach] : -1;
                const int last_new_node = static_cast<int>(g.nodes.size()) +
                                          static_cast<int>(chain.nodes.size()) - 2;
                merge_chain(g, chain, attach, attach_seg);
                if (snap_target) {
                    g.segments.push_back({last_new_node, *snap_target,
                                          static_cast<float>(w_middle),
                                          static_cast<int>(g.segments.size()) - 1,
                                          VeinKind::middle});
                }
            }
            ++site_counter;
        }
    }
    return g;
}

namespace {

struct RunPoint {
    Vec2 pos;
    double width;
};

Vec2 bezier2(Vec2 s, Vec2 c, Vec2 e, double t) {
    const double u = 1.0 - t;
    return s * (u * u) + c * (2.0 * u * t) + e * (t * t);
}

} // namespace

VeinGraph smooth(const VeinGraph& g, int samples_per_segment) {
    if (samples_per_segment < 1)
        throw ConfigError("samples_per_segment must be >= 1");

    VeinGraph out;
    out.seed = g.seed;
    out.frame_width = g.frame_width;
    out.frame_height = g.frame_height;
    out.smoothed = true;

    const int n_nodes = static_cast<int>(g.nodes.size());
    std::vector<std::vector<int>> outgoing(n_nodes);
    std::vector<int> indegree(n_nodes, 0);
    for (std::size_t i = 0; i < g.segments.size(); ++i) {
        outgoing[g.segments[i].a].push_back(static_cast<int>(i));
        ++indegree[g.segments[i].b];
    }

    auto interior = [&](int node, VeinKind kind) {
        return indegree[node] == 1 && outgoing[node].size() == 1 &&
               g.segments[outgoing[node][0]].kind == kind;
    };

    // old node id -> new node id for run endpoints (junctions, roots, leaves)
    std::vector<int> node_map(n_nodes, -1);
    auto map_node = [&](int old) {
        if (node_map[old] < 0) {
            out.nodes.push_back(g.nodes[old]);
            node_map[old] = static_cast<int>(out.nodes.size()) - 1;
        }
        return node_map[old];
    };
    // new node id -> its incoming new segment id (for parent links)
    std::map<int, int> incoming_new;

    // Runs must be emitted parents-first so parent segment ids exist.
    std::vector<int> start_order;
    for (int n = 0; n < n_nodes; ++n)
        if (indegree[n] == 0) start_order.push_back(n);
    std::vector<bool> seg_done(g.segments.size(), false);

    std::vector<int> queue = start_order;
    while (!queue.empty()) {
        const int start = queue.front();
        queue.erase(queue.begin());
        for (const int first_seg : outgoing[start]) {
            if (seg_done[first_seg]) continue;
            const VeinKind kind = g.segments[first_seg].kind;

            std::vector<RunPoint> pts;
            pts.push_back({g.nodes[start], g.segments[first_seg].width});
            int seg = first_seg;
            while (true) {
                seg_done[seg] = true;
                const VeinSegment& sg = g.segments[seg];
                pts.push_back({g.nodes[sg.b], sg.width});
                if (!interior(sg.b, kind)) break;
                seg = outgoing[sg.b][0];
            }
            const int end_old = g.segments[seg].b;

            // Sample piecewise quadratics through pts.
            std::vector<RunPoint> sampled;
            sampled.push_back(pts.front());
            const int m = static_cast<int>(pts.size()) - 1;
            if (m == 1) {
                for (int j = 1; j <= samples_per_segment; ++j) {
                    const double t = double(j) / samples_per_segment;
                    sampled.push_back(
                        {pts[0].pos + (pts[1].pos - pts[0].pos) * t,
                         pts[0].width + (pts[1].width - pts[0].width) * t});
                }
            } else {
                for (int piece = 1; piece <= m - 1; ++piece) {
                    const Vec2 ctrl = pts[piece].pos;
                    const Vec2 s = piece == 1
                                       ? pts[0].pos
                                       : (pts[piece - 1].pos + pts[piece].pos) * 0.5;
                    const Vec2 e = piece == m - 1
                                       ? pts[m].pos
                                       : (pts[piece].pos + pts[piece + 1].pos) * 0.5;
                    const double ws =
                        piece == 1 ? pts[0].width
                                   : 0.5 * (pts[piece - 1].width + pts[piece].width);
                    const double we =
                        piece == m - 1
                            ? pts[m].width
                            : 0.5 * (pts[piece].width + pts[piece + 1].width);
                    for (int j = 1; j <= samples_per_segment; ++j) {
                        const double t = double(j) / samples_per_segment;
                        sampled.push_back({bezier2(s, ctrl, e, t),
                                           ws + (we - ws) * t});
                    }
                }
            }

            // Emit nodes/segments, reusing mapped endpoints.
            const int new_start = map_node(start);
            int prev_node = new_start;
            int parent = incoming_new.count(new_start) ? incoming_new[new_start]
                                                       : -1;
            for (std::size_t j = 1; j < sampled.size(); ++j) {
                const bool last = j + 1 == sampled.size();
                int nid;
                if (last) {
                    nid = map_node(end_old);
                    out.nodes[nid] = sampled[j].pos; // endpoints coincide
                } else {
                    if ((sampled[j].pos - out.nodes[prev_node]).norm() < 1e-6)
                        continue;
                    out.nodes.push_back(sampled[j].pos);
                    nid = static_cast<int>(out.nodes.size()) - 1;
                }
                out.segments.push_back(
                    {prev_node, nid,
                     static_cast<float>(
                         0.5 * (sampled[j - 1].width + sampled[j].width)),
                     parent, kind});
                parent = static_cast<int>(out.segments.size()) - 1;
                prev_node = nid;
            }
            incoming_new[prev_node] = parent;
            queue.push_back(end_old);
        }
    }
    return out;
}

PatternMask rasterize(const VeinGraph& g, const PatternTemplate& tmpl) {
    if (!g.smoothed)
        throw GenerationError("rasterize requires a smoothed vein graph");

    Mask mask(tmpl.width, tmpl.height, 0);
    auto stamp = [&](Vec2 p, double radius) {
        const int cx = static_cast<int>(std::lround(p.x));
        const int cy = static_cast<int>(std::lround(p.y));
        if (mask.in_bounds(cx, cy)) mask.at(cx, cy) = 1;
        const int lo_y = std::max(0, static_cast<int>(std::ceil(p.y - radius)));
        const int hi_y = std::min(tmpl.height - 1,
                                  static_cast<int>(std::floor(p.y + radius)));
        for (int y = lo_y; y <= hi_y; ++y) {
            const int lo_x = std::max(0, static_cast<int>(std::ceil(p.x - radius)));
            const int hi_x = std::min(tmpl.width - 1,
                                      static_cast<int>(std::floor(p.x + radius)));
            for (int x = lo_x; x <= hi_x; ++x) {
                const double dx = x - p.x, dy = y - p.y;
                if (dx * dx + dy * dy <= radius * radius) mask.at(x, y) = 1;
            }
        }
    };

    for (const VeinSegment& s : g.segments) {
        const Vec2 a = g.nodes[s.a], b = g.nodes[s.b];
        const double radius = std::max(0.5, s.width * 0.5);
        const double len = (b - a).norm();
        const int steps = std::max(1, static_cast<int>(std::ceil(len / 0.5)));
        for (int i = 0; i <= steps; ++i)
            stamp(a + (b - a) * (double(i) / steps), radius);
    }

    const double fraction =
        static_cast<double>(count_nonzero(mask)) / (double(tmpl.width) * tmpl.height);
    if (fraction < tmpl.min_foreground || fraction > tmpl.max_foreground)
        throw GenerationError(
            "vein foreground fraction " + std::to_string(fraction) +
            " outside plausibility band [" + std::to_string(tmpl.min_foreground) +
            ", " + std::to_string(tmpl.max_foreground) + "]");

    return {std::move(mask), g.seed};
}

} // namespace veingen
