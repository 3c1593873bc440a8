#include "veingen/pipeline.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <climits>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include "veingen/errors.hpp"
#include "veingen/png_io.hpp"
#include "veingen/rng.hpp"

namespace fs = std::filesystem;

namespace veingen {

int plan_size(const PlanConfig& cfg) {
    return cfg.shift_count + cfg.scale_count + cfg.roll_count +
           cfg.rotation_count + cfg.under_count + cfg.over_count +
           cfg.motion_count + cfg.optical_count + cfg.scattering_count +
           cfg.combo_count;
}

int PipelineConfig::samples_per_identity() const { return plan_size(plan); }

std::uint64_t identity_seed(std::uint64_t master, int identity, int attempt) {
    const std::uint64_t base =
        derive_seed(master, static_cast<std::uint64_t>(identity), "identity");
    return derive_seed(base, static_cast<std::uint64_t>(attempt), "attempt");
}

namespace {

std::string tag4(int n) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d", n);
    return buf;
}

std::string trimmed(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

double parse_double(const std::string& raw, const std::string& key) {
    const std::string s = trimmed(raw);
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size())
            throw ConfigError("trailing characters in value for " + key);
        if (!std::isfinite(v))
            throw ConfigError("non-finite value for " + key);
        return v;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("malformed number '" + s + "' for " + key);
    }
}

long long parse_ll(const std::string& raw, const std::string& key) {
    const std::string s = trimmed(raw);
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size())
            throw ConfigError("trailing characters in value for " + key);
        return v;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("malformed integer '" + s + "' for " + key);
    }
}

std::uint64_t parse_u64(const std::string& raw, const std::string& key) {
    const std::string s = trimmed(raw);
    if (!s.empty() && s[0] == '-')
        throw ConfigError("negative value for " + key);
    try {
        std::size_t pos = 0;
        const std::uint64_t v = std::stoull(s, &pos);
        if (pos != s.size())
            throw ConfigError("trailing characters in value for " + key);
        return v;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("malformed integer '" + s + "' for " + key);
    }
}

bool parse_bool(const std::string& raw, const std::string& key) {
    const std::string s = trimmed(raw);
    if (s == "1" || s == "true") return true;
    if (s == "0" || s == "false") return false;
    throw ConfigError("expected 0/1/true/false for " + key);
}

std::string fmt_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Binding {
    std::string key;
    std::function<void(PipelineConfig&, const std::string&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

template <class F> Binding bind_double(const char* key, F field) {
    return {key,
            [key, field](PipelineConfig& c, const std::string& v) {
                field(c) = parse_double(v, key);
            },
            [field](const PipelineConfig& c) {
                return fmt_double(field(const_cast<PipelineConfig&>(c)));
            }};
}

template <class F> Binding bind_float(const char* key, F field) {
    return {key,
            [key, field](PipelineConfig& c, const std::string& v) {
                field(c) = static_cast<float>(parse_double(v, key));
            },
            [field](const PipelineConfig& c) {
                return fmt_double(field(const_cast<PipelineConfig&>(c)));
            }};
}

// Degrees in the file, radians in the struct.
template <class F> Binding bind_angle(const char* key, F field) {
    return {key,
            [key, field](PipelineConfig& c, const std::string& v) {
                field(c) = deg_to_rad(parse_double(v, key));
            },
            [field](const PipelineConfig& c) {
                return fmt_double(field(const_cast<PipelineConfig&>(c)) *
                                  180.0 / std::numbers::pi);
            }};
}

template <class F> Binding bind_int(const char* key, F field) {
    return {key,
            [key, field](PipelineConfig& c, const std::string& v) {
                const long long x = parse_ll(v, key);
                if (x < INT_MIN || x > INT_MAX)
                    throw ConfigError("value out of range for " +
                                      std::string(key));
                field(c) = static_cast<int>(x);
            },
            [field](const PipelineConfig& c) {
                return std::to_string(field(const_cast<PipelineConfig&>(c)));
            }};
}

template <class F> Binding bind_u64(const char* key, F field) {
    return {key,
            [key, field](PipelineConfig& c, const std::string& v) {
                field(c) = parse_u64(v, key);
            },
            [field](const PipelineConfig& c) {
                return std::to_string(field(const_cast<PipelineConfig&>(c)));
            }};
}

template <class F> Binding bind_bool(const char* key, F field) {
    return {key,
            [key, field](PipelineConfig& c, const std::string& v) {
                field(c) = parse_bool(v, key);
            },
            [field](const PipelineConfig& c) {
                return field(const_cast<PipelineConfig&>(c)) ? "1" : "0";
            }};
}

const std::vector<Binding>& bindings() {
    static const std::vector<Binding> table = [] {
        std::vector<Binding> t;
        auto D = [&](const char* k, auto f) { t.push_back(bind_double(k, f)); };
        auto F = [&](const char* k, auto f) { t.push_back(bind_float(k, f)); };
        auto A = [&](const char* k, auto f) { t.push_back(bind_angle(k, f)); };
        auto I = [&](const char* k, auto f) { t.push_back(bind_int(k, f)); };
        auto U = [&](const char* k, auto f) { t.push_back(bind_u64(k, f)); };
        auto B = [&](const char* k, auto f) { t.push_back(bind_bool(k, f)); };
        using C = PipelineConfig;

        U("pipeline.master_seed", [](C& c) -> auto& { return c.master_seed; });
        I("pipeline.identities", [](C& c) -> auto& { return c.identities; });
        I("pipeline.workers", [](C& c) -> auto& { return c.workers; });
        B("pipeline.emit_full", [](C& c) -> auto& { return c.emit_full; });
        B("pipeline.emit_roi", [](C& c) -> auto& { return c.emit_roi; });
        D("pipeline.failure_rate_bound",
          [](C& c) -> auto& { return c.failure_rate_bound; });
        I("pipeline.retries", [](C& c) -> auto& { return c.retries; });

        I("template.width", [](C& c) -> auto& { return c.tmpl.width; });
        I("template.height", [](C& c) -> auto& { return c.tmpl.height; });
        D("template.upper_frac", [](C& c) -> auto& { return c.tmpl.upper_frac; });
        D("template.middle_frac",
          [](C& c) -> auto& { return c.tmpl.middle_frac; });
        D("template.min_foreground",
          [](C& c) -> auto& { return c.tmpl.min_foreground; });
        D("template.max_foreground",
          [](C& c) -> auto& { return c.tmpl.max_foreground; });

        A("veins.turn_min_deg", [](C& c) -> auto& { return c.veins.turn_min; });
        A("veins.turn_max_deg", [](C& c) -> auto& { return c.veins.turn_max; });
        D("veins.p_turn_min", [](C& c) -> auto& { return c.veins.p_turn_min; });
        D("veins.p_turn_max", [](C& c) -> auto& { return c.veins.p_turn_max; });
        D("veins.main_step", [](C& c) -> auto& { return c.veins.main_step; });
        D("veins.middle_step", [](C& c) -> auto& { return c.veins.middle_step; });
        D("veins.main_width_min",
          [](C& c) -> auto& { return c.veins.main_width_min; });
        D("veins.main_width_max",
          [](C& c) -> auto& { return c.veins.main_width_max; });
        D("veins.middle_width_min",
          [](C& c) -> auto& { return c.veins.middle_width_min; });
        D("veins.middle_width_max",
          [](C& c) -> auto& { return c.veins.middle_width_max; });
        I("veins.main_iterations",
          [](C& c) -> auto& { return c.veins.main_iterations; });
        I("veins.middle_iterations",
          [](C& c) -> auto& { return c.veins.middle_iterations; });
        I("veins.attach_min", [](C& c) -> auto& { return c.veins.attach_min; });
        I("veins.attach_max", [](C& c) -> auto& { return c.veins.attach_max; });
        D("veins.p_two_branches",
          [](C& c) -> auto& { return c.veins.p_two_branches; });
        D("veins.snap_distance",
          [](C& c) -> auto& { return c.veins.snap_distance; });
        D("veins.min_main_span",
          [](C& c) -> auto& { return c.veins.min_main_span; });

        I("finger.width", [](C& c) -> auto& { return c.finger.width; });
        I("finger.height", [](C& c) -> auto& { return c.finger.height; });
        D("finger.base_half_min",
          [](C& c) -> auto& { return c.finger.base_half_min; });
        D("finger.base_half_max",
          [](C& c) -> auto& { return c.finger.base_half_max; });
        D("finger.taper_min", [](C& c) -> auto& { return c.finger.taper_min; });
        D("finger.taper_max", [](C& c) -> auto& { return c.finger.taper_max; });
        D("finger.ripple_max", [](C& c) -> auto& { return c.finger.ripple_max; });
        D("finger.drift_max", [](C& c) -> auto& { return c.finger.drift_max; });
        D("finger.tip_margin_min",
          [](C& c) -> auto& { return c.finger.tip_margin_min; });
        D("finger.tip_margin_max",
          [](C& c) -> auto& { return c.finger.tip_margin_max; });

        D("joints.f1_min", [](C& c) -> auto& { return c.joints.f1_min; });
        D("joints.f1_max", [](C& c) -> auto& { return c.joints.f1_max; });
        D("joints.f2_min", [](C& c) -> auto& { return c.joints.f2_min; });
        D("joints.f2_max", [](C& c) -> auto& { return c.joints.f2_max; });
        D("joints.min_separation",
          [](C& c) -> auto& { return c.joints.min_separation; });
        D("joints.radius_min", [](C& c) -> auto& { return c.joints.radius_min; });
        D("joints.radius_max", [](C& c) -> auto& { return c.joints.radius_max; });
        D("joints.amplitude_min",
          [](C& c) -> auto& { return c.joints.amplitude_min; });
        D("joints.amplitude_max",
          [](C& c) -> auto& { return c.joints.amplitude_max; });
        I("joints.max_attempts",
          [](C& c) -> auto& { return c.joints.max_attempts; });

        D("brightness.base", [](C& c) -> auto& { return c.brightness.base; });
        D("brightness.edge_floor",
          [](C& c) -> auto& { return c.brightness.edge_floor; });
        D("brightness.falloff_px",
          [](C& c) -> auto& { return c.brightness.falloff_px; });

        D("render.pattern_scale",
          [](C& c) -> auto& { return c.render.pattern_scale; });
        D("render.psf_scale", [](C& c) -> auto& { return c.render.psf_scale; });
        I("render.psf_radius", [](C& c) -> auto& { return c.render.psf_radius; });
        D("render.attenuation",
          [](C& c) -> auto& { return c.render.attenuation; });
        D("render.attenuation_cap",
          [](C& c) -> auto& { return c.render.attenuation_cap; });
        D("render.plateau", [](C& c) -> auto& { return c.render.plateau; });
        D("render.taper", [](C& c) -> auto& { return c.render.taper; });
        D("render.width_factor_min",
          [](C& c) -> auto& { return c.render.width_factor_min; });
        D("render.width_factor_max",
          [](C& c) -> auto& { return c.render.width_factor_max; });
        D("render.support_threshold",
          [](C& c) -> auto& { return c.render.support_threshold; });
        D("render.joint_suppression",
          [](C& c) -> auto& { return c.render.joint_suppression; });
        D("render.noise_sigma",
          [](C& c) -> auto& { return c.render.noise_sigma; });
        D("render.ambient", [](C& c) -> auto& { return c.render.ambient; });
        D("render.margin_joint",
          [](C& c) -> auto& { return c.render.margin_joint; });
        D("render.margin_vein",
          [](C& c) -> auto& { return c.render.margin_vein; });
        I("render.repair_attempts",
          [](C& c) -> auto& { return c.render.repair_attempts; });

        I("plan.shift_count", [](C& c) -> auto& { return c.plan.shift_count; });
        D("plan.shift_max", [](C& c) -> auto& { return c.plan.shift_max; });
        I("plan.scale_count", [](C& c) -> auto& { return c.plan.scale_count; });
        D("plan.scale_delta", [](C& c) -> auto& { return c.plan.scale_delta; });
        I("plan.roll_count", [](C& c) -> auto& { return c.plan.roll_count; });
        D("plan.roll_max", [](C& c) -> auto& { return c.plan.roll_max; });
        I("plan.rotation_count",
          [](C& c) -> auto& { return c.plan.rotation_count; });
        D("plan.rotation_max", [](C& c) -> auto& { return c.plan.rotation_max; });
        I("plan.under_count", [](C& c) -> auto& { return c.plan.under_count; });
        D("plan.under_min", [](C& c) -> auto& { return c.plan.under_min; });
        D("plan.under_max", [](C& c) -> auto& { return c.plan.under_max; });
        I("plan.over_count", [](C& c) -> auto& { return c.plan.over_count; });
        D("plan.over_min", [](C& c) -> auto& { return c.plan.over_min; });
        D("plan.over_max", [](C& c) -> auto& { return c.plan.over_max; });
        I("plan.motion_count", [](C& c) -> auto& { return c.plan.motion_count; });
        D("plan.motion_min", [](C& c) -> auto& { return c.plan.motion_min; });
        D("plan.motion_max", [](C& c) -> auto& { return c.plan.motion_max; });
        I("plan.optical_count",
          [](C& c) -> auto& { return c.plan.optical_count; });
        D("plan.optical_min", [](C& c) -> auto& { return c.plan.optical_min; });
        D("plan.optical_max", [](C& c) -> auto& { return c.plan.optical_max; });
        I("plan.scattering_count",
          [](C& c) -> auto& { return c.plan.scattering_count; });
        D("plan.scattering_min",
          [](C& c) -> auto& { return c.plan.scattering_min; });
        D("plan.scattering_max",
          [](C& c) -> auto& { return c.plan.scattering_max; });
        I("plan.combo_count", [](C& c) -> auto& { return c.plan.combo_count; });
        D("plan.combo_two_geo_prob",
          [](C& c) -> auto& { return c.plan.combo_two_geo_prob; });

        D("variation.sample_noise_sigma",
          [](C& c) -> auto& { return c.variation.sample_noise_sigma; });
        F("variation.background",
          [](C& c) -> auto& { return c.variation.background; });

        std::sort(t.begin(), t.end(),
                  [](const Binding& a, const Binding& b) { return a.key < b.key; });
        return t;
    }();
    return table;
}

const Binding* find_binding(const std::string& key) {
    const auto& t = bindings();
    const auto it = std::lower_bound(
        t.begin(), t.end(), key,
        [](const Binding& b, const std::string& k) { return b.key < k; });
    if (it != t.end() && it->key == key) return &*it;
    return nullptr;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

PipelineConfig parse_config_impl(const std::string& text,
                                 const fs::path& base_dir) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }

    PipelineConfig cfg;
    for (const auto& [section, node] : tree) {
        if (node.empty()) {
            if (!node.data().empty())
                throw ConfigError("config key '" + section +
                                  "' appears outside any section");
            continue;
        }
        for (const auto& [key, value] : node) {
            const std::string full = section + "." + key;
            if (full == "veins.main_grammar_file") {
                cfg.veins.main_grammar_text =
                    read_text_file(base_dir / trimmed(value.data()));
                continue;
            }
            if (full == "veins.middle_grammar_file") {
                cfg.veins.middle_grammar_text =
                    read_text_file(base_dir / trimmed(value.data()));
                continue;
            }
            const Binding* b = find_binding(full);
            if (!b) throw ConfigError("unknown config key '" + full + "'");
            b->set(cfg, value.data());
        }
    }
    validate_config(cfg);
    return cfg;
}

} // namespace

PipelineConfig parse_config(const std::string& text) {
    return parse_config_impl(text, fs::current_path());
}

PipelineConfig load_config(const fs::path& path) {
    const std::string text = read_text_file(path);
    const fs::path dir = path.has_parent_path() ? path.parent_path()
                                                : fs::current_path();
    return parse_config_impl(text, dir);
}

void validate_config(const PipelineConfig& cfg) {
    auto fail = [](const std::string& what) { throw ConfigError(what); };
    auto band = [&](double lo, double hi, const char* what) {
        if (!(lo <= hi)) fail(std::string(what) + ": min exceeds max");
    };

    if (cfg.identities < 1) fail("identities must be at least 1");
    if (cfg.workers < 1) fail("workers must be at least 1");
    if (cfg.retries < 0) fail("retries must not be negative");
    if (cfg.failure_rate_bound < 0.0 || cfg.failure_rate_bound > 1.0)
        fail("failure_rate_bound must lie in [0, 1]");

    const PatternTemplate& t = cfg.tmpl;
    if (t.width < 64 || t.height < 64) fail("template frame too small");
    if (t.upper_frac <= 0.0 || t.middle_frac <= 0.0 ||
        t.upper_frac + t.middle_frac >= 1.0)
        fail("template band fractions must be positive and sum below 1");
    if (t.min_foreground < 0.0 || t.max_foreground <= t.min_foreground ||
        t.max_foreground > 1.0)
        fail("template foreground band is inconsistent");

    const VeinPatternConfig& v = cfg.veins;
    if (v.turn_min <= 0.0) fail("turn band must be positive");
    band(v.turn_min, v.turn_max, "turn band");
    if (v.p_turn_min < 0.0 || v.p_turn_max > 1.0) fail("p_turn outside [0, 1]");
    band(v.p_turn_min, v.p_turn_max, "p_turn band");
    if (v.main_step <= 0.0 || v.middle_step <= 0.0) fail("steps must be positive");
    if (v.main_width_min <= 0.0 || v.middle_width_min <= 0.0)
        fail("vein widths must be positive");
    band(v.main_width_min, v.main_width_max, "main width band");
    band(v.middle_width_min, v.middle_width_max, "middle width band");
    if (v.main_iterations < 1 || v.middle_iterations < 1)
        fail("iterations must be at least 1");
    if (v.attach_min < 1) fail("attach_min must be at least 1");
    if (v.attach_max < v.attach_min) fail("attach band: min exceeds max");
    if (v.p_two_branches < 0.0 || v.p_two_branches > 1.0)
        fail("p_two_branches outside [0, 1]");
    if (v.snap_distance < 0.0) fail("snap_distance must not be negative");
    if (v.min_main_span <= 0.0 || v.min_main_span > 1.0)
        fail("min_main_span outside (0, 1]");

    const FingerShapeConfig& f = cfg.finger;
    if (f.width < 64 || f.height < 64) fail("finger frame too small");
    if (f.base_half_min <= 0.0) fail("base_half must be positive");
    band(f.base_half_min, f.base_half_max, "base_half band");
    if (f.taper_min < 0.0 || f.taper_max >= 1.0) fail("taper outside [0, 1)");
    band(f.taper_min, f.taper_max, "taper band");
    if (f.ripple_max < 0.0 || f.drift_max < 0.0)
        fail("ripple and drift must not be negative");
    if (f.tip_margin_min < 0.0) fail("tip_margin must not be negative");
    band(f.tip_margin_min, f.tip_margin_max, "tip_margin band");
    if (f.base_half_max + 3.0 * f.ripple_max + f.drift_max >
        f.height / 2.0 - 2.0)
        fail("finger profile can exceed the frame; shrink base_half, ripple "
             "or drift");

    const JointConfig& j = cfg.joints;
    if (j.f1_min <= 0.0 || j.f2_max >= 1.0) fail("joint fractions outside (0, 1)");
    band(j.f1_min, j.f1_max, "f1 band");
    band(j.f2_min, j.f2_max, "f2 band");
    if (j.f1_max >= j.f2_min) fail("joint bands must not overlap");
    if (j.min_separation < 0.0) fail("min_separation must not be negative");
    if (j.radius_min <= 0.0) fail("joint radius must be positive");
    band(j.radius_min, j.radius_max, "radius band");
    if (j.amplitude_min <= 0.0) fail("joint amplitude must be positive");
    band(j.amplitude_min, j.amplitude_max, "amplitude band");
    if (j.max_attempts < 1) fail("max_attempts must be at least 1");

    const BrightnessConfig& b = cfg.brightness;
    if (b.base <= 0.0 || b.base > 1.0) fail("brightness base outside (0, 1]");
    if (b.edge_floor <= 0.0 || b.edge_floor > 1.0)
        fail("edge_floor outside (0, 1]");
    if (b.falloff_px <= 0.0) fail("falloff_px must be positive");

    const RenderConfig& r = cfg.render;
    if (r.pattern_scale <= 0.0 || r.pattern_scale > 1.0)
        fail("pattern_scale outside (0, 1]");
    if (r.psf_scale <= 0.0) fail("psf_scale must be positive");
    if (r.psf_radius < 1) fail("psf_radius must be at least 1");
    if (r.attenuation <= 0.0 || r.attenuation >= 1.0)
        fail("attenuation outside (0, 1)");
    if (r.attenuation_cap < r.attenuation || r.attenuation_cap >= 1.0)
        fail("attenuation_cap must lie in [attenuation, 1)");
    if (r.plateau < 0.0 || r.taper < 0.0)
        fail("stroke profile widths must not be negative");
    if (r.width_factor_min <= 0.0) fail("width_factor must be positive");
    band(r.width_factor_min, r.width_factor_max, "width_factor band");
    if (r.support_threshold <= 0.0 || r.support_threshold >= 1.0)
        fail("support_threshold outside (0, 1)");
    if (r.joint_suppression < 0.0 || r.joint_suppression > 1.0)
        fail("joint_suppression outside [0, 1]");
    if (r.noise_sigma < 0.0) fail("noise_sigma must not be negative");
    if (r.ambient < 0.0 || r.ambient >= 1.0) fail("ambient outside [0, 1)");
    if (r.margin_joint < 0.0 || r.margin_vein < 0.0)
        fail("margins must not be negative");
    if (r.repair_attempts < 1) fail("repair_attempts must be at least 1");

    const PlanConfig& p = cfg.plan;
    for (int count : {p.shift_count, p.scale_count, p.roll_count,
                      p.rotation_count, p.under_count, p.over_count,
                      p.motion_count, p.optical_count, p.scattering_count,
                      p.combo_count})
        if (count < 0) fail("plan counts must not be negative");
    if (plan_size(p) < 1) fail("the variation plan is empty");
    if (p.shift_max < 0.0 || p.shift_max > 20.0)
        fail("shift_max outside [0, 20]");
    if (p.scale_delta < 0.0 || p.scale_delta > 0.15)
        fail("scale_delta outside [0, 0.15]");
    if (p.roll_max < 0.0 || p.roll_max > 20.0) fail("roll_max outside [0, 20]");
    if (p.rotation_max < 0.0 || p.rotation_max > 20.0)
        fail("rotation_max outside [0, 20]");
    if (p.under_min < 0.5 || p.under_max > 1.0)
        fail("under-exposure gains outside [0.5, 1]");
    band(p.under_min, p.under_max, "under-exposure band");
    if (p.over_min < 1.0 || p.over_max > 2.0)
        fail("over-exposure gains outside [1, 2]");
    band(p.over_min, p.over_max, "over-exposure band");
    if (p.motion_min < 1.0) fail("motion length must be at least 1 px");
    band(p.motion_min, p.motion_max, "motion band");
    if (p.optical_min <= 0.0) fail("optical radius must be positive");
    band(p.optical_min, p.optical_max, "optical band");
    if (p.scattering_min <= 0.0) fail("scattering scale must be positive");
    band(p.scattering_min, p.scattering_max, "scattering band");
    if (p.combo_two_geo_prob < 0.0 || p.combo_two_geo_prob > 1.0)
        fail("combo_two_geo_prob outside [0, 1]");

    if (cfg.variation.sample_noise_sigma < 0.0)
        fail("sample_noise_sigma must not be negative");
    if (cfg.variation.background < 0.0f || cfg.variation.background >= 1.0f)
        fail("variation background outside [0, 1)");
    if (cfg.emit_full && cfg.tmpl.height < cfg.finger.height)
        fail("full frame shorter than the finger frame");
}

std::string canonical_config(const PipelineConfig& cfg) {
    std::vector<std::string> lines;
    for (const Binding& b : bindings()) {
        if (b.key == "pipeline.identities" || b.key == "pipeline.workers")
            continue;
        lines.push_back(b.key + "=" + b.get(cfg));
    }
    auto grammar_line = [](const char* key, const std::string& text) {
        return std::string(key) + "=" +
               (text.empty() ? "-" : sha256_hex(text.data(), text.size()));
    };
    lines.push_back(grammar_line("veins.main_grammar_sha256",
                                 cfg.veins.main_grammar_text));
    lines.push_back(grammar_line("veins.middle_grammar_sha256",
                                 cfg.veins.middle_grammar_text));
    std::sort(lines.begin(), lines.end());
    std::string out;
    for (const std::string& l : lines) {
        out += l;
        out += '\n';
    }
    return out;
}

std::string config_digest(const PipelineConfig& cfg) {
    const std::string text = canonical_config(cfg);
    return sha256_hex(text.data(), text.size());
}

IdentityBundle generate_identity(const PipelineConfig& cfg, int identity,
                                 int attempt) {
    IdentityBundle b;
    b.identity = identity;
    b.seed = identity_seed(cfg.master_seed, identity, attempt);
    const VeinGraph grown =
        compose_identity(derive_seed(b.seed, 0, "pattern"), cfg.tmpl, cfg.veins);
    b.graph = smooth(grown);
    b.pattern = rasterize(b.graph, cfg.tmpl);
    FingerShape shape = sample_finger(derive_seed(b.seed, 0, "shape"), cfg.finger);
    std::vector<Joint> joints =
        place_joints(derive_seed(b.seed, 0, "joints"), shape, cfg.joints);
    BrightnessField field = brightness_field(shape, joints, cfg.brightness);
    b.model = FingerModel{std::move(shape), std::move(joints), std::move(field)};
    b.base = render(b.model, b.pattern, derive_seed(b.seed, 0, "render"),
                    cfg.render);
    b.plan = build_plan(derive_seed(b.seed, 0, "plan"), cfg.plan);
    return b;
}

RoiBox transform_roi(const RoiBox& base, const FingerShape& shape,
                     const VariationParams& p, int frame_w, int frame_h) {
    const double x0 = base.cx - base.width / 2.0;
    const double x1 = base.cx + base.width / 2.0;
    const double y0 = base.cy - base.height / 2.0;
    const double y1 = base.cy + base.height / 2.0;
    double lo_x = 1e30, hi_x = -1e30, lo_y = 1e30, hi_y = -1e30;
    for (const Vec2 corner :
         {Vec2{x0, y0}, Vec2{x1, y0}, Vec2{x0, y1}, Vec2{x1, y1}}) {
        const Vec2 q = transform_point(shape, p, corner);
        lo_x = std::min(lo_x, q.x);
        hi_x = std::max(hi_x, q.x);
        lo_y = std::min(lo_y, q.y);
        hi_y = std::max(hi_y, q.y);
    }
    lo_x = std::clamp(lo_x, -0.49, frame_w - 0.51);
    hi_x = std::clamp(hi_x, -0.49, frame_w - 0.51);
    lo_y = std::clamp(lo_y, -0.49, frame_h - 0.51);
    hi_y = std::clamp(hi_y, -0.49, frame_h - 0.51);
    if (hi_x - lo_x < 8.0 || hi_y - lo_y < 8.0)
        throw GenerationError("sample crop box degenerated");
    RoiBox out;
    out.cx = (lo_x + hi_x) / 2.0;
    out.cy = (lo_y + hi_y) / 2.0;
    out.width = hi_x - lo_x;
    out.height = hi_y - lo_y;
    return out;
}

SampleImage make_sample(const PipelineConfig& cfg, const IdentityBundle& bundle,
                        int sample) {
    if (sample < 0 || sample >= static_cast<int>(bundle.plan.size()))
        throw ConfigError("sample index out of range");
    const VariationParams& p = bundle.plan[sample];
    const FingerShape& shape = bundle.model.shape;

    SampleImage si;
    si.shaped = apply_variation(
        bundle.base.image, shape, p,
        derive_seed(bundle.seed, static_cast<std::uint64_t>(sample), "sample"),
        cfg.variation);
    si.roi = transform_roi(bundle.base.roi, shape, p, si.shaped.width(),
                           si.shaped.height());

    AnnotationRecord& rec = si.annotation;
    rec.identity = bundle.identity;
    rec.sample = sample;
    const std::string id4 = tag4(bundle.identity);
    rec.image_path = id4 + "/" + tag4(sample) + ".png";
    rec.pattern_mask_path = "masks/" + id4 + "/pattern.png";
    rec.shape_mask_path = "masks/" + id4 + "/shape.png";
    for (const Joint& j : bundle.model.joints) {
        Joint tj;
        tj.center = transform_point(shape, p, j.center);
        tj.radius = j.radius * p.scale;
        tj.amplitude = j.amplitude;
        rec.joints.push_back(tj);
    }
    rec.roi = si.roi;
    rec.base_roi = bundle.base.roi;
    rec.params = p;
    return si;
}

ImageF compose_full_frame(const ImageF& shaped, std::uint64_t seed,
                          float background, int full_height) {
    if (full_height < shaped.height())
        throw ConfigError("full frame shorter than the shaped image");
    Rng rng(seed);
    const int slack = (full_height - shaped.height()) / 2;
    const int dx = static_cast<int>(rng.uniform_int(-8, 8));
    const int dy =
        slack + static_cast<int>(rng.uniform_int(-std::min(12, slack),
                                                 std::min(12, slack)));
    ImageF out(shaped.width(), full_height, background);
    for (int y = 0; y < shaped.height(); ++y) {
        const int ty = y + dy;
        if (ty < 0 || ty >= full_height) continue;
        for (int x = 0; x < shaped.width(); ++x) {
            const int tx = x + dx;
            if (tx < 0 || tx >= shaped.width()) continue;
            out.at(tx, ty) = shaped.at(x, y);
        }
    }
    return out;
}

namespace {

void write_identity(const PipelineConfig& cfg, const IdentityBundle& b,
                    const fs::path& id_dir, const fs::path& mask_dir) {
    fs::create_directories(id_dir);
    fs::create_directories(mask_dir);
    write_png_gray1(mask_dir / "pattern.png", b.base.support);
    write_png_gray1(mask_dir / "shape.png", b.model.shape.mask);
    for (int s = 0; s < static_cast<int>(b.plan.size()); ++s) {
        const SampleImage si = make_sample(cfg, b, s);
        const std::string stem = tag4(s);
        write_png_gray8(id_dir / (stem + ".png"), quantize_unit(si.shaped));
        if (cfg.emit_full) {
            const ImageF full = compose_full_frame(
                si.shaped,
                derive_seed(b.seed, static_cast<std::uint64_t>(s), "full"),
                cfg.variation.background, cfg.tmpl.height);
            write_png_gray8(id_dir / (stem + "_full.png"), quantize_unit(full));
        }
        if (cfg.emit_roi)
            write_png_gray8(id_dir / (stem + "_roi.png"),
                            quantize_unit(crop_roi(si.shaped, si.roi)));
        write_annotation(id_dir / (stem + ".xml"), si.annotation);
    }
}

struct StampData {
    std::uint64_t master_seed = 0;
    std::string config_sha256;
};

void write_stamp(const fs::path& path, const StampData& s) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot create " + path.string());
    out << "# run-stamp v1\n";
    out << "master_seed " << s.master_seed << "\n";
    out << "config_sha256 " << s.config_sha256 << "\n";
}

StampData read_stamp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    StampData s;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "master_seed") ls >> s.master_seed;
        else if (key == "config_sha256") ls >> s.config_sha256;
    }
    return s;
}

} // namespace

GenerationStats generate_dataset(const PipelineConfig& cfg,
                                 const ProgressFn& progress) {
    validate_config(cfg);
    if (cfg.out_dir.empty()) throw ConfigError("output directory not set");
    const auto t0 = std::chrono::steady_clock::now();

    fs::create_directories(cfg.out_dir);
    fs::create_directories(cfg.out_dir / "masks");
    const std::string digest = config_digest(cfg);
    const fs::path stamp_path = cfg.out_dir / "run.stamp";
    if (fs::exists(stamp_path)) {
        const StampData existing = read_stamp(stamp_path);
        if (existing.master_seed != cfg.master_seed ||
            existing.config_sha256 != digest)
            throw ConfigError("output directory belongs to a different run "
                              "(seed or config mismatch); refusing to mix");
    } else {
        write_stamp(stamp_path, {cfg.master_seed, digest});
    }

    enum class State { pending, fresh, resumed, failed };
    struct Outcome {
        State state = State::pending;
        std::string error;
    };
    std::vector<Outcome> outcomes(cfg.identities);
    std::atomic<int> next{0};
    std::atomic<bool> abort{false};
    std::mutex mu;
    std::string fatal;

    auto work = [&] {
        while (!abort.load(std::memory_order_relaxed)) {
            const int id = next.fetch_add(1);
            if (id >= cfg.identities) break;
            const fs::path id_dir = cfg.out_dir / tag4(id);
            const fs::path mask_dir = cfg.out_dir / "masks" / tag4(id);
            try {
                if (fs::exists(id_dir / ".done")) {
                    outcomes[id].state = State::resumed;
                } else {
                    std::error_code ec;
                    fs::remove_all(id_dir, ec);
                    fs::remove_all(mask_dir, ec);
                    std::string last;
                    for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
                        try {
                            const IdentityBundle b =
                                generate_identity(cfg, id, attempt);
                            write_identity(cfg, b, id_dir, mask_dir);
                            std::ofstream marker(id_dir / ".done",
                                                 std::ios::binary);
                            if (!marker)
                                throw std::runtime_error(
                                    "cannot write completion marker for " +
                                    id_dir.string());
                            marker << "ok attempt " << attempt << "\n";
                            outcomes[id].state = State::fresh;
                            break;
                        } catch (const GenerationError& e) {
                            last = e.what();
                            std::error_code ec2;
                            fs::remove_all(id_dir, ec2);
                            fs::remove_all(mask_dir, ec2);
                        }
                    }
                    if (outcomes[id].state == State::pending) {
                        outcomes[id].state = State::failed;
                        outcomes[id].error = last;
                    }
                }
            } catch (const std::exception& e) {
                std::error_code ec;
                fs::remove_all(id_dir, ec);
                fs::remove_all(mask_dir, ec);
                const std::lock_guard<std::mutex> lk(mu);
                if (fatal.empty()) fatal = e.what();
                abort.store(true);
                return;
            }
            if (progress) {
                const std::lock_guard<std::mutex> lk(mu);
                progress(id, outcomes[id].state != State::failed);
            }
        }
    };

    const int nworkers = std::max(1, std::min(cfg.workers, cfg.identities));
    std::vector<std::thread> pool;
    pool.reserve(nworkers - 1);
    for (int i = 1; i < nworkers; ++i) pool.emplace_back(work);
    work();
    for (std::thread& th : pool) th.join();
    if (!fatal.empty())
        throw GenerationError("generation aborted: " + fatal);

    GenerationStats stats;
    stats.identities_requested = cfg.identities;
    for (int id = 0; id < cfg.identities; ++id) {
        switch (outcomes[id].state) {
            case State::fresh: ++stats.identities_generated; break;
            case State::resumed: ++stats.identities_resumed; break;
            case State::failed: stats.failed_identities.push_back(id); break;
            case State::pending: break;
        }
    }
    const double rate = static_cast<double>(stats.failed_identities.size()) /
                        static_cast<double>(cfg.identities);
    if (rate > cfg.failure_rate_bound) {
        std::string msg = "failure rate " + std::to_string(rate) +
                          " exceeds the bound " +
                          std::to_string(cfg.failure_rate_bound) + ";";
        for (std::size_t i = 0;
             i < std::min<std::size_t>(stats.failed_identities.size(), 8); ++i)
            msg += " identity " + std::to_string(stats.failed_identities[i]);
        throw GenerationError(msg);
    }

    std::vector<std::string> suffixes = {".png"};
    if (cfg.emit_full) suffixes.push_back("_full.png");
    if (cfg.emit_roi) suffixes.push_back("_roi.png");
    const Manifest manifest = build_manifest(
        cfg.out_dir, cfg.master_seed, digest, cfg.identities,
        cfg.samples_per_identity(), suffixes, stats.failed_identities);
    write_manifest(cfg.out_dir / "manifest.txt", manifest);

    stats.samples_written = static_cast<std::uint64_t>(
                                stats.identities_generated) *
                            cfg.samples_per_identity();
    stats.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    stats.samples_per_second =
        stats.elapsed_seconds > 0.0
            ? static_cast<double>(stats.samples_written) / stats.elapsed_seconds
            : 0.0;
    return stats;
}

namespace {

bool is_geometric_single(const VariationParams& p) {
    if (p.combo) return false;
    return p.category == VariationCategory::shift ||
           p.category == VariationCategory::scale ||
           p.category == VariationCategory::roll ||
           p.category == VariationCategory::rotation;
}

std::optional<double> subset_diversity(const std::vector<ClassSamples>& subset,
                                       const MetricConfig& mc) {
    if (subset.empty()) return std::nullopt;
    const std::size_t n = subset.front().members.size();
    if (n < 2) return std::nullopt;
    for (const ClassSamples& cls : subset)
        if (cls.members.size() != n) return std::nullopt;
    return intra_diversity(subset, mc);
}

} // namespace

EvalReport evaluate_dataset(const fs::path& root, const EvalConfig& cfg) {
    if (cfg.r <= 0.0 || cfg.r >= 2.0)
        throw ConfigError("r must lie in (0, 2)");
    verify_dataset(root);
    const Manifest m = read_manifest(root / "manifest.txt");
    const std::set<int> failed(m.failed_identities.begin(),
                               m.failed_identities.end());

    std::vector<ClassSamples> all, geo, expo;
    int scount = m.samples_per_identity;
    if (cfg.max_samples > 0) scount = std::min(scount, cfg.max_samples);
    for (int id = 0; id < m.identities; ++id) {
        if (failed.count(id)) continue;
        if (cfg.max_identities > 0 &&
            static_cast<int>(all.size()) >= cfg.max_identities)
            break;
        const std::string id4 = tag4(id);
        const Mask shape_mask =
            read_png_gray1(root / "masks" / id4 / "shape.png");
        const FingerShape shape = shape_from_mask(shape_mask);

        ClassSamples ca{id, {}}, cg{id, {}}, ce{id, {}};
        for (int s = 0; s < scount; ++s) {
            const AnnotationRecord rec =
                read_annotation(root / id4 / (tag4(s) + ".xml"));
            const ImageF img = to_unit(read_png_gray8(root / rec.image_path));
            ImageF roi_img;
            if (cfg.align) {
                const ImageF undone = undo_geometric(img, shape, rec.params);
                roi_img = crop_roi(undone, rec.base_roi);
            } else {
                roi_img = crop_roi(img, rec.roi);
            }
            FeatureVector f = embed({std::move(roi_img), Variant::roi});
            if (is_geometric_single(rec.params)) cg.members.push_back(f);
            else if (!rec.params.combo &&
                     rec.params.category == VariationCategory::exposure)
                ce.members.push_back(f);
            ca.members.push_back(std::move(f));
        }
        if (!cg.members.empty()) geo.push_back(std::move(cg));
        if (!ce.members.empty()) expo.push_back(std::move(ce));
        all.push_back(std::move(ca));
    }
    if (all.empty()) throw IntegrityError("dataset holds no evaluable identities");

    EvalReport rep;
    rep.identities = static_cast<int>(all.size());
    rep.samples_per_identity = scount;
    rep.r = cfg.r;
    rep.seed = cfg.seed;
    rep.aligned = cfg.align;
    const MetricConfig mc{cfg.r, false};
    const MetricConfig mc_printed{cfg.r, true};
    rep.uniqueness = class_uniqueness(all, mc);
    rep.c_intra = intra_consistency(all, mc);
    if (scount >= 2) {
        rep.d_intra = intra_diversity(all, mc);
        rep.d_intra_printed = intra_diversity(all, mc_printed);
    }
    rep.d_intra_geometric = subset_diversity(geo, mc);
    rep.d_intra_exposure = subset_diversity(expo, mc);
    rep.scores = score_distributions(all, cfg.seed);
    return rep;
}

namespace {

std::string fmt6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void histogram_table(std::ostringstream& out, const char* name,
                     const Histogram& h) {
    out << "histogram " << name << " bin_width " << h.bin_width << "\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i)
        if (h.counts[i] > 0)
            out << fmt6(h.lo + static_cast<double>(i) * h.bin_width) << " "
                << h.counts[i] << "\n";
    out << "end\n";
}

} // namespace

std::string format_report(const EvalReport& rep) {
    std::ostringstream out;
    out << "# evaluation report v1\n";
    out << "identities " << rep.identities << "\n";
    out << "samples_per_identity " << rep.samples_per_identity << "\n";
    out << "r " << fmt6(rep.r) << "\n";
    out << "distance cosine\n";
    out << "seed " << rep.seed << "\n";
    out << "aligned " << (rep.aligned ? 1 : 0) << "\n";
    out << "u_class " << fmt6(rep.uniqueness.u_class) << "\n";
    out << "unique_count " << rep.uniqueness.unique_count << "\n";
    out << "c_intra " << fmt6(rep.c_intra) << "\n";
    out << "d_intra " << fmt6(rep.d_intra) << "\n";
    out << "d_intra_printed " << fmt6(rep.d_intra_printed) << "\n";
    out << "d_intra_geometric "
        << (rep.d_intra_geometric ? fmt6(*rep.d_intra_geometric) : "-") << "\n";
    out << "d_intra_exposure "
        << (rep.d_intra_exposure ? fmt6(*rep.d_intra_exposure) : "-") << "\n";
    out << "genuine_n " << rep.scores.genuine.n << "\n";
    out << "genuine_mean " << fmt6(rep.scores.genuine.mean()) << "\n";
    out << "genuine_variance " << fmt6(rep.scores.genuine.variance()) << "\n";
    out << "impostor_n " << rep.scores.impostor.n << "\n";
    out << "impostor_mean " << fmt6(rep.scores.impostor.mean()) << "\n";
    out << "impostor_variance " << fmt6(rep.scores.impostor.variance()) << "\n";
    out << "impostor_total_pairs " << rep.scores.impostor_total << "\n";
    out << "impostor_sampled " << (rep.scores.impostor_sampled ? 1 : 0) << "\n";
    out << "impostor_empty " << (rep.scores.impostor_empty ? 1 : 0) << "\n";
    histogram_table(out, "genuine", rep.scores.genuine);
    histogram_table(out, "impostor", rep.scores.impostor);
    return out.str();
}

void write_report(const fs::path& path, const EvalReport& rep) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot create " + path.string());
    out << format_report(rep);
}

} // namespace veingen
