#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "veingen/annotations.hpp"
#include "veingen/errors.hpp"
#include "veingen/metrics.hpp"
#include "veingen/pipeline.hpp"
#include "veingen/png_io.hpp"
#include "veingen/renderer.hpp"
#include "veingen/variations.hpp"

using namespace veingen;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() /
               ("veingen-pipe-" + std::to_string(rd()) + "-" +
                std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    REQUIRE(out.good());
    out << text;
}

template <class Fn> std::string error_text(Fn&& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

bool contains(const std::string& hay, const std::string& needle) {
    return hay.find(needle) != std::string::npos;
}

// A one-sample-per-category plan (plus two combos): 11 samples per identity,
// small enough that a two-identity dataset builds in a couple of seconds.
PipelineConfig tiny_config() {
    PipelineConfig cfg;
    cfg.master_seed = 424242;
    cfg.identities = 2;
    cfg.workers = 2;
    cfg.emit_full = true;
    cfg.emit_roi = true;
    cfg.plan.shift_count = 1;
    cfg.plan.scale_count = 1;
    cfg.plan.roll_count = 1;
    cfg.plan.rotation_count = 1;
    cfg.plan.under_count = 1;
    cfg.plan.over_count = 1;
    cfg.plan.motion_count = 1;
    cfg.plan.optical_count = 1;
    cfg.plan.scattering_count = 1;
    cfg.plan.combo_count = 2;
    return cfg;
}

// Identities occasionally fail to generate (the grower gives up on bad
// draws), so probe a window of ids and keep the first that works.
IdentityBundle first_good_identity(const PipelineConfig& cfg, int from = 0) {
    for (int id = from; id < from + 40; ++id) {
        try {
            return generate_identity(cfg, id);
        } catch (const GenerationError&) {
        }
    }
    REQUIRE_MESSAGE(false, "no identity generated in a 40-id window");
    return {};
}

bool params_equal(const VariationParams& a, const VariationParams& b) {
    return a.shift_x == b.shift_x && a.rotation_deg == b.rotation_deg &&
           a.scale == b.scale && a.roll_deg == b.roll_deg &&
           a.exposure_gain == b.exposure_gain && a.blur == b.blur &&
           a.blur_length == b.blur_length &&
           a.blur_angle_deg == b.blur_angle_deg &&
           a.blur_radius == b.blur_radius && a.blur_scale == b.blur_scale &&
           a.combo == b.combo && a.category == b.category;
}

std::vector<fs::path> relative_files(const fs::path& root) {
    std::vector<fs::path> out;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file())
            out.push_back(fs::relative(entry.path(), root));
    std::sort(out.begin(), out.end());
    return out;
}

// Built once and shared by the read-only dataset tests; mutation tests work
// on copies.
struct DatasetFixture {
    TempDir dir;
    PipelineConfig cfg;
    GenerationStats stats;
    std::vector<std::pair<int, bool>> progress;

    DatasetFixture() {
        cfg = tiny_config();
        cfg.out_dir = dir.path / "ds";
        stats = generate_dataset(cfg, [this](int id, bool ok) {
            progress.emplace_back(id, ok);
        });
    }
};

const DatasetFixture& dataset_fixture() {
    static DatasetFixture f;
    return f;
}

void copy_dataset(const fs::path& from, const fs::path& to) {
    fs::copy(from, to, fs::copy_options::recursive);
}

} // namespace

TEST_CASE("plan size counts every category") {
    CHECK(plan_size(PlanConfig{}) == 100);
    CHECK(PipelineConfig{}.samples_per_identity() == 100);

    const PipelineConfig tiny = tiny_config();
    CHECK(plan_size(tiny.plan) == 11);
    CHECK(tiny.samples_per_identity() == 11);

    PipelineConfig empty = tiny_config();
    empty.plan.shift_count = 0;
    empty.plan.scale_count = 0;
    empty.plan.roll_count = 0;
    empty.plan.rotation_count = 0;
    empty.plan.under_count = 0;
    empty.plan.over_count = 0;
    empty.plan.motion_count = 0;
    empty.plan.optical_count = 0;
    empty.plan.scattering_count = 0;
    empty.plan.combo_count = 0;
    CHECK(plan_size(empty.plan) == 0);
    CHECK_THROWS_AS(validate_config(empty), ConfigError);
    CHECK(contains(error_text([&] { validate_config(empty); }), "plan"));
}

TEST_CASE("config text round trips into the expected fields") {
    const std::string text =
        "; acquisition run\n"
        "[pipeline]\n"
        "master_seed = 909\n"
        "identities = 7\n"
        "workers=3\n"
        "emit_full = true\n"
        "emit_roi = 0\n"
        "retries = 5\n"
        "failure_rate_bound = 0.25\n"
        "\n"
        "[veins]\n"
        "turn_min_deg = 10\n"
        "turn_max_deg = 45\n"
        "main_width_min = 6.25\n"
        "\n"
        "[finger]\n"
        "base_half_min = 60\n"
        "\n"
        "[render]\n"
        "attenuation = 0.9\n"
        "attenuation_cap = 0.95\n"
        "\n"
        "[plan]\n"
        "combo_count = 12\n"
        "\n"
        "[variation]\n"
        "background = 0.125\n";

    const PipelineConfig cfg = parse_config(text);
    CHECK(cfg.master_seed == 909);
    CHECK(cfg.identities == 7);
    CHECK(cfg.workers == 3);
    CHECK(cfg.emit_full);
    CHECK_FALSE(cfg.emit_roi);
    CHECK(cfg.retries == 5);
    CHECK(cfg.failure_rate_bound == doctest::Approx(0.25));
    CHECK(cfg.veins.turn_min ==
          doctest::Approx(10.0 * std::numbers::pi / 180.0).epsilon(1e-12));
    CHECK(cfg.veins.turn_max ==
          doctest::Approx(45.0 * std::numbers::pi / 180.0).epsilon(1e-12));
    CHECK(cfg.veins.main_width_min == doctest::Approx(6.25));
    CHECK(cfg.finger.base_half_min == doctest::Approx(60.0));
    CHECK(cfg.render.attenuation == doctest::Approx(0.9));
    CHECK(cfg.render.attenuation_cap == doctest::Approx(0.95));
    CHECK(cfg.plan.combo_count == 12);
    CHECK(cfg.variation.background == doctest::Approx(0.125f));

    // Untouched keys keep their defaults.
    CHECK(cfg.plan.shift_count == PlanConfig{}.shift_count);
    CHECK(cfg.finger.width == FingerShapeConfig{}.width);

    // An empty document is the default configuration.
    const PipelineConfig dflt = parse_config("");
    CHECK(config_digest(dflt) == config_digest(PipelineConfig{}));
}

TEST_CASE("malformed configs are rejected as ConfigError") {
    SUBCASE("unknown key in a known section") {
        const std::string msg = error_text(
            [] { parse_config("[pipeline]\nbogus = 1\n"); });
        CHECK(contains(msg, "unknown config key"));
        CHECK(contains(msg, "pipeline.bogus"));
        CHECK_THROWS_AS(parse_config("[pipeline]\nbogus = 1\n"), ConfigError);
    }
    SUBCASE("unknown section") {
        CHECK_THROWS_AS(parse_config("[florp]\nx = 1\n"), ConfigError);
        CHECK(contains(error_text([] { parse_config("[florp]\nx = 1\n"); }),
                       "florp.x"));
    }
    SUBCASE("key outside any section") {
        const std::string text = "stray = 1\n[pipeline]\nworkers = 2\n";
        CHECK_THROWS_AS(parse_config(text), ConfigError);
        CHECK(contains(error_text([&] { parse_config(text); }),
                       "outside any section"));
    }
    SUBCASE("malformed numeric values") {
        CHECK_THROWS_AS(parse_config("[veins]\nmain_step = fish\n"),
                        ConfigError);
        CHECK_THROWS_AS(parse_config("[pipeline]\nworkers = 2.5\n"),
                        ConfigError);
        CHECK_THROWS_AS(parse_config("[pipeline]\nemit_full = yes\n"),
                        ConfigError);
    }
    SUBCASE("values that parse but violate a range check") {
        CHECK_THROWS_AS(parse_config("[plan]\nshift_max = 25\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[plan]\nunder_min = 0.4\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[joints]\nf1_max = 0.7\n"), ConfigError);
        CHECK_THROWS_AS(
            parse_config("[render]\nattenuation = 0.99\n"
                         "attenuation_cap = 0.9\n"),
            ConfigError);
        CHECK_THROWS_AS(parse_config("[pipeline]\nworkers = 0\n"), ConfigError);
    }
    SUBCASE("missing config file") {
        CHECK_THROWS_AS(load_config("/nonexistent/veingen.cfg"), ConfigError);
    }
}

TEST_CASE("grammar files are loaded relative to the config file") {
    TempDir tmp;
    const std::string grammar =
        "alphabet: X F + -\n"
        "axiom: X\n"
        "rule: X -> F X 0.8\n"
        "rule: X -> + F X 0.1\n"
        "rule: X -> - F X 0.1\n";
    spit(tmp.path / "main.grammar", grammar);
    spit(tmp.path / "run.cfg",
         "[pipeline]\nmaster_seed = 5\n"
         "[veins]\nmain_grammar_file = main.grammar\n");

    const PipelineConfig cfg = load_config(tmp.path / "run.cfg");
    CHECK(cfg.veins.main_grammar_text == grammar);

    // The grammar text participates in the canonical form (as a digest), so
    // swapping it changes the config digest.
    PipelineConfig plain = cfg;
    plain.veins.main_grammar_text.clear();
    CHECK(config_digest(cfg) != config_digest(plain));
    CHECK(contains(canonical_config(plain), "veins.main_grammar_sha256=-"));
    CHECK_FALSE(contains(canonical_config(cfg),
                         "veins.main_grammar_sha256=-"));

    // A dangling grammar reference is a config error.
    spit(tmp.path / "bad.cfg", "[veins]\nmain_grammar_file = missing.grammar\n");
    CHECK_THROWS_AS(load_config(tmp.path / "bad.cfg"), ConfigError);
}

TEST_CASE("canonical config ignores deployment knobs and tracks content") {
    PipelineConfig a = tiny_config();
    a.out_dir = "/somewhere/a";

    PipelineConfig b = a;
    b.out_dir = "/elsewhere/b";
    b.workers = 16;
    b.identities = 9999;
    CHECK(canonical_config(a) == canonical_config(b));
    CHECK(config_digest(a) == config_digest(b));

    PipelineConfig c = a;
    c.master_seed += 1;
    CHECK(config_digest(c) != config_digest(a));

    PipelineConfig d = a;
    d.render.attenuation = 0.9;
    CHECK(config_digest(d) != config_digest(a));

    const std::string canon = canonical_config(a);
    CHECK(contains(canon, "pipeline.master_seed=424242"));
    CHECK(contains(canon, "plan.combo_count=2"));
    CHECK_FALSE(contains(canon, "pipeline.workers"));
    CHECK_FALSE(contains(canon, "pipeline.identities"));
    CHECK_FALSE(contains(canon, "out_dir"));

    // Sorted line set, one key=value per line, trailing newline.
    CHECK(!canon.empty());
    CHECK(canon.back() == '\n');
    std::vector<std::string> lines;
    std::istringstream in(canon);
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    CHECK(std::is_sorted(lines.begin(), lines.end()));
    for (const std::string& line : lines)
        CHECK(line.find('=') != std::string::npos);

    // The digest is the SHA-256 of the canonical text: 64 hex characters,
    // stable across calls.
    const std::string digest = config_digest(a);
    CHECK(digest.size() == 64);
    CHECK(digest.find_first_not_of("0123456789abcdef") == std::string::npos);
    CHECK(config_digest(a) == digest);
}

TEST_CASE("identity seeds never collide across ids, attempts, masters") {
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t master : {1ull, 424242ull})
        for (int id = 0; id < 50; ++id)
            for (int attempt = 0; attempt < 3; ++attempt)
                seeds.push_back(identity_seed(master, id, attempt));
    CHECK(identity_seed(1, 7, 0) == identity_seed(1, 7, 0));
    std::sort(seeds.begin(), seeds.end());
    CHECK(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end());
}

TEST_CASE("generate_identity is deterministic and satisfies its contract") {
    const PipelineConfig cfg = tiny_config();
    const IdentityBundle b = first_good_identity(cfg);
    CHECK(b.seed == identity_seed(cfg.master_seed, b.identity, 0));
    CHECK(static_cast<int>(b.plan.size()) == cfg.samples_per_identity());
    CHECK(b.base.image.width() == cfg.finger.width);
    CHECK(b.base.image.height() == cfg.finger.height);
    CHECK(b.base.margin_joint >= cfg.render.margin_joint);
    REQUIRE(b.base.margin_vein.has_value());
    CHECK(*b.base.margin_vein >= cfg.render.margin_vein);
    const double frac =
        static_cast<double>(count_nonzero(b.pattern.mask)) /
        (static_cast<double>(cfg.tmpl.width) * cfg.tmpl.height);
    CHECK(frac >= cfg.tmpl.min_foreground);
    CHECK(frac <= cfg.tmpl.max_foreground);

    const IdentityBundle again = generate_identity(cfg, b.identity);
    REQUIRE(again.base.image == b.base.image);
    REQUIRE(again.plan.size() == b.plan.size());
    for (std::size_t s = 0; s < b.plan.size(); ++s)
        CHECK(params_equal(again.plan[s], b.plan[s]));

    // A different attempt re-draws everything.
    const IdentityBundle retry = generate_identity(cfg, b.identity, 1);
    CHECK(retry.seed != b.seed);
}

TEST_CASE("make_sample stamps the annotation and stays deterministic") {
    const PipelineConfig cfg = tiny_config();
    const IdentityBundle b = first_good_identity(cfg, 100);

    CHECK_THROWS_AS(make_sample(cfg, b, -1), ConfigError);
    CHECK_THROWS_AS(make_sample(cfg, b, static_cast<int>(b.plan.size())),
                    ConfigError);

    for (int s : {0, 4, 9, 10}) {
        const SampleImage si = make_sample(cfg, b, s);
        const AnnotationRecord& rec = si.annotation;
        CHECK(rec.identity == b.identity);
        CHECK(rec.sample == s);

        char img_path[32], mask_path[32];
        std::snprintf(img_path, sizeof img_path, "%04d/%04d.png", b.identity, s);
        std::snprintf(mask_path, sizeof mask_path, "masks/%04d/shape.png",
                      b.identity);
        CHECK(rec.image_path == img_path);
        CHECK(rec.shape_mask_path == mask_path);
        CHECK(contains(rec.pattern_mask_path, "pattern.png"));

        CHECK(params_equal(rec.params, b.plan[s]));
        REQUIRE(rec.joints.size() == b.model.joints.size());
        for (std::size_t j = 0; j < rec.joints.size(); ++j)
            CHECK(rec.joints[j].radius ==
                  doctest::Approx(b.model.joints[j].radius * rec.params.scale));

        // The recorded crop boxes: base box equals the render's, and the
        // transformed box stays inside the shaped frame.
        CHECK(rec.base_roi.cx == b.base.roi.cx);
        CHECK(rec.base_roi.width == b.base.roi.width);
        CHECK(si.shaped.width() == b.base.image.width());
        CHECK(si.shaped.height() == b.base.image.height());
        CHECK(rec.roi.cx - rec.roi.width / 2.0 >= -0.5);
        CHECK(rec.roi.cx + rec.roi.width / 2.0 <= si.shaped.width() - 0.5);
        CHECK(rec.roi.cy - rec.roi.height / 2.0 >= -0.5);
        CHECK(rec.roi.cy + rec.roi.height / 2.0 <= si.shaped.height() - 0.5);

        const SampleImage same = make_sample(cfg, b, s);
        CHECK(same.shaped == si.shaped);
    }
}

TEST_CASE("undoing a sample's recorded geometry recovers the center view") {
    PipelineConfig cfg = tiny_config();
    cfg.plan.shift_count = 2; // sample 0 becomes a full -20 px shift
    const IdentityBundle b = first_good_identity(cfg, 200);
    REQUIRE(b.plan[0].category == VariationCategory::shift);
    REQUIRE(b.plan[0].shift_x == doctest::Approx(-20.0));

    const SampleImage si = make_sample(cfg, b, 0);
    const ImageF undone = undo_geometric(si.shaped, b.model.shape,
                                         si.annotation.params);
    double worst = 0.0;
    for (int y = 40; y < 160; ++y)
        for (int x = 80; x < 520; ++x)
            worst = std::max(
                worst, std::abs(static_cast<double>(undone.at(x, y)) -
                                b.base.image.at(x, y)));
    CHECK(worst < 0.05); // sample noise plus interpolation residue
}

TEST_CASE("transform_roi clamps to the frame and rejects degenerate boxes") {
    const PipelineConfig cfg = tiny_config();
    const IdentityBundle b = first_good_identity(cfg, 300);
    const VariationParams identity_params{};

    const RoiBox same = transform_roi(b.base.roi, b.model.shape,
                                      identity_params, 600, 200);
    CHECK(same.cx == doctest::Approx(b.base.roi.cx).epsilon(1e-9));
    CHECK(same.cy == doctest::Approx(b.base.roi.cy).epsilon(1e-9));
    CHECK(same.width == doctest::Approx(b.base.roi.width).epsilon(1e-9));
    CHECK(same.height == doctest::Approx(b.base.roi.height).epsilon(1e-9));

    RoiBox outside = b.base.roi;
    outside.cx = -500.0;
    CHECK_THROWS_AS(
        transform_roi(outside, b.model.shape, identity_params, 600, 200),
        GenerationError);
}

TEST_CASE("compose_full_frame pads deterministically onto the background") {
    ImageF shaped(64, 32, 0.75f);
    const ImageF full = compose_full_frame(shaped, 99, 0.02f, 96);
    CHECK(full.width() == 64);
    CHECK(full.height() == 96);

    // The jitter keeps the content well inside, so the top band is pure
    // background.
    for (int x = 0; x < full.width(); ++x)
        CHECK(full.at(x, 0) == 0.02f);
    double content = 0.0;
    for (std::size_t i = 0; i < full.size(); ++i)
        if (full.data()[i] == 0.75f) content += 1.0;
    CHECK(content == doctest::Approx(64.0 * 32.0).epsilon(0.2));

    const ImageF again = compose_full_frame(shaped, 99, 0.02f, 96);
    CHECK(again == full);
    const ImageF other = compose_full_frame(shaped, 100, 0.02f, 96);
    CHECK(!(other == full));

    CHECK_THROWS_AS(compose_full_frame(shaped, 1, 0.02f, 31), ConfigError);
}

TEST_CASE("generate_dataset lays out the tree and reports its stats") {
    const DatasetFixture& f = dataset_fixture();
    const fs::path root = f.cfg.out_dir;

    CHECK(f.stats.identities_requested == 2);
    CHECK(f.stats.identities_generated == 2);
    CHECK(f.stats.identities_resumed == 0);
    CHECK(f.stats.failed_identities.empty());
    CHECK(f.stats.samples_written == 22);
    CHECK(f.stats.elapsed_seconds > 0.0);
    CHECK(f.stats.samples_per_second > 0.0);

    // The progress callback saw each identity exactly once, all successful.
    std::set<int> seen;
    for (const auto& [id, ok] : f.progress) {
        CHECK(ok);
        seen.insert(id);
    }
    CHECK(seen == std::set<int>{0, 1});

    CHECK(fs::exists(root / "run.stamp"));
    CHECK(fs::exists(root / "manifest.txt"));
    for (int id = 0; id < 2; ++id) {
        char id4[8];
        std::snprintf(id4, sizeof id4, "%04d", id);
        CHECK(fs::exists(root / id4 / ".done"));
        CHECK(fs::exists(root / "masks" / id4 / "pattern.png"));
        CHECK(fs::exists(root / "masks" / id4 / "shape.png"));
        for (int s = 0; s < 11; ++s) {
            char s4[8];
            std::snprintf(s4, sizeof s4, "%04d", s);
            CHECK(fs::exists(root / id4 / (std::string(s4) + ".png")));
            CHECK(fs::exists(root / id4 / (std::string(s4) + ".xml")));
            CHECK(fs::exists(root / id4 / (std::string(s4) + "_full.png")));
            CHECK(fs::exists(root / id4 / (std::string(s4) + "_roi.png")));
        }
    }

    // Emitted frames have the advertised geometries.
    const Image<std::uint8_t> shaped = read_png_gray8(root / "0000" / "0000.png");
    CHECK(shaped.width() == 600);
    CHECK(shaped.height() == 200);
    const Image<std::uint8_t> fullf =
        read_png_gray8(root / "0000" / "0000_full.png");
    CHECK(fullf.width() == 600);
    CHECK(fullf.height() == 300);
    const Image<std::uint8_t> roi =
        read_png_gray8(root / "0000" / "0000_roi.png");
    CHECK(roi.width() == 600);
    CHECK(roi.height() == 200);

    // The full frame pads with a constant background band at the top.
    bool top_constant = true;
    for (int x = 1; x < fullf.width(); ++x)
        top_constant = top_constant && fullf.at(x, 0) == fullf.at(0, 0);
    CHECK(top_constant);

    // The manifest agrees with the run and the verifier accepts the tree.
    const Manifest m = read_manifest(root / "manifest.txt");
    CHECK(m.master_seed == f.cfg.master_seed);
    CHECK(m.config_sha256 == config_digest(f.cfg));
    CHECK(m.identities == 2);
    CHECK(m.samples_per_identity == 11);
    CHECK(m.failed_identities.empty());
    CHECK(m.entries.size() == 92); // 2 * (11 * 4 + 2)
    CHECK_NOTHROW(verify_dataset(root));

    // Annotations on disk match what make_sample produces in memory.
    const AnnotationRecord rec = read_annotation(root / "0001" / "0003.xml");
    CHECK(rec.identity == 1);
    CHECK(rec.sample == 3);
    const IdentityBundle b = generate_identity(f.cfg, 1);
    CHECK(params_equal(rec.params, b.plan[3]));
}

TEST_CASE("a resumed, extended run reproduces a fresh run byte for byte") {
    const DatasetFixture& f = dataset_fixture();
    TempDir tmp;
    PipelineConfig cfg = f.cfg;
    cfg.out_dir = tmp.path / "ds";
    cfg.identities = 1;
    cfg.workers = 1;

    const GenerationStats first = generate_dataset(cfg);
    CHECK(first.identities_generated == 1);

    cfg.identities = 2;
    cfg.workers = 2;
    const GenerationStats second = generate_dataset(cfg);
    CHECK(second.identities_generated == 1);
    CHECK(second.identities_resumed == 1);
    CHECK(second.samples_written == 11); // only the fresh identity

    const std::vector<fs::path> fresh = relative_files(f.cfg.out_dir);
    const std::vector<fs::path> resumed = relative_files(cfg.out_dir);
    REQUIRE(fresh == resumed);
    for (const fs::path& rel : fresh)
        if (rel.filename() != ".done") // markers note the attempt, not content
            CHECK_MESSAGE(slurp(f.cfg.out_dir / rel) == slurp(cfg.out_dir / rel),
                          "differs: " << rel.string());
}

TEST_CASE("a second identical run resumes everything and rewrites nothing") {
    const DatasetFixture& f = dataset_fixture();
    TempDir tmp;
    copy_dataset(f.cfg.out_dir, tmp.path / "ds");
    PipelineConfig cfg = f.cfg;
    cfg.out_dir = tmp.path / "ds";

    const GenerationStats stats = generate_dataset(cfg);
    CHECK(stats.identities_generated == 0);
    CHECK(stats.identities_resumed == 2);
    CHECK(stats.samples_written == 0);
    CHECK_NOTHROW(verify_dataset(cfg.out_dir));
}

TEST_CASE("a stale partial identity is discarded and regenerated") {
    const DatasetFixture& f = dataset_fixture();
    TempDir tmp;
    copy_dataset(f.cfg.out_dir, tmp.path / "ds");
    PipelineConfig cfg = f.cfg;
    cfg.out_dir = tmp.path / "ds";

    // Simulate an interrupted writer: no completion marker, one sample
    // corrupted, one mask missing.
    fs::remove(cfg.out_dir / "0000" / ".done");
    spit(cfg.out_dir / "0000" / "0003.png", "garbage");
    fs::remove(cfg.out_dir / "masks" / "0000" / "shape.png");

    const GenerationStats stats = generate_dataset(cfg);
    CHECK(stats.identities_generated == 1);
    CHECK(stats.identities_resumed == 1);
    CHECK_NOTHROW(verify_dataset(cfg.out_dir));
    CHECK(slurp(cfg.out_dir / "0000" / "0003.png") ==
          slurp(f.cfg.out_dir / "0000" / "0003.png"));
    CHECK(fs::exists(cfg.out_dir / "masks" / "0000" / "shape.png"));
}

TEST_CASE("an output directory never mixes runs") {
    const DatasetFixture& f = dataset_fixture();
    TempDir tmp;
    copy_dataset(f.cfg.out_dir, tmp.path / "ds");

    PipelineConfig reseeded = f.cfg;
    reseeded.out_dir = tmp.path / "ds";
    reseeded.master_seed += 1;
    CHECK_THROWS_AS(generate_dataset(reseeded), ConfigError);
    CHECK(contains(error_text([&] { generate_dataset(reseeded); }),
                   "refusing to mix"));

    PipelineConfig retuned = f.cfg;
    retuned.out_dir = tmp.path / "ds";
    retuned.render.attenuation = 0.9;
    CHECK_THROWS_AS(generate_dataset(retuned), ConfigError);

    // More identities with the same seed and config is NOT a mix: the
    // stamp stays valid because deployment knobs are outside the digest.
    PipelineConfig extended = f.cfg;
    extended.out_dir = tmp.path / "ds";
    extended.workers = 1;
    CHECK_NOTHROW(generate_dataset(extended));
}

TEST_CASE("exceeding the failure bound raises a GenerationError") {
    TempDir tmp;
    PipelineConfig cfg = tiny_config();
    cfg.out_dir = tmp.path / "ds";
    cfg.identities = 1;
    cfg.workers = 1;
    cfg.retries = 0;
    cfg.failure_rate_bound = 0.0;
    cfg.render.margin_vein = 0.95; // unsatisfiable contrast demand

    const std::string msg = error_text([&] { generate_dataset(cfg); });
    CHECK(contains(msg, "failure rate"));
    CHECK(contains(msg, "identity 0"));
    CHECK_FALSE(fs::exists(cfg.out_dir / "0000")); // cleaned up
    CHECK(fs::exists(cfg.out_dir / "run.stamp"));
}

TEST_CASE("evaluate_dataset reports the metric suite deterministically") {
    const DatasetFixture& f = dataset_fixture();
    const fs::path root = f.cfg.out_dir;

    EvalConfig ec;
    ec.r = 0.2;
    ec.seed = 7;
    const EvalReport rep = evaluate_dataset(root, ec);
    CHECK(rep.identities == 2);
    CHECK(rep.samples_per_identity == 11);
    CHECK(rep.r == doctest::Approx(0.2));
    CHECK(rep.seed == 7);
    CHECK(rep.aligned);
    CHECK(rep.uniqueness.unique_count >= 1);
    CHECK(rep.uniqueness.unique_count <= 2);
    CHECK(rep.uniqueness.u_class == doctest::Approx(
              static_cast<double>(rep.uniqueness.unique_count) / 2.0));
    CHECK(rep.c_intra >= 0.0);
    CHECK(rep.c_intra <= 1.0);
    CHECK(rep.d_intra >= 0.0);
    CHECK(rep.d_intra <= 1.0);
    CHECK(rep.d_intra + rep.d_intra_printed == doctest::Approx(1.0));
    REQUIRE(rep.d_intra_geometric.has_value());  // 4 pose samples per class
    REQUIRE(rep.d_intra_exposure.has_value());   // 2 exposure samples per class
    CHECK(rep.scores.genuine.n == 2 * (11 * 10 / 2));
    CHECK(rep.scores.impostor.n == 11 * 11);
    CHECK(rep.scores.impostor_total == 11 * 11);
    CHECK_FALSE(rep.scores.impostor_sampled);
    CHECK_FALSE(rep.scores.impostor_empty);

    const EvalReport again = evaluate_dataset(root, ec);
    CHECK(format_report(again) == format_report(rep));

    SUBCASE("identity and sample caps take prefixes") {
        EvalConfig capped = ec;
        capped.max_identities = 1;
        capped.max_samples = 4;
        const EvalReport small = evaluate_dataset(root, capped);
        CHECK(small.identities == 1);
        CHECK(small.samples_per_identity == 4);
        // The 4-sample prefix of the tiny plan is all pose singles, so the
        // exposure subset is empty and impostor pairs vanish.
        CHECK(small.d_intra_geometric.has_value());
        CHECK_FALSE(small.d_intra_exposure.has_value());
        CHECK(small.scores.impostor_empty);
        CHECK(small.scores.genuine.n == 4 * 3 / 2);
    }
    SUBCASE("alignment can be switched off") {
        EvalConfig raw = ec;
        raw.align = false;
        const EvalReport unaligned = evaluate_dataset(root, raw);
        CHECK_FALSE(unaligned.aligned);
        CHECK(unaligned.identities == 2);
        CHECK(std::isfinite(unaligned.c_intra));
        // Undoing the recorded geometry must not hurt within-class
        // consistency.
        CHECK(rep.c_intra >= unaligned.c_intra - 1e-9);
    }
    SUBCASE("the match radius is validated") {
        EvalConfig bad = ec;
        bad.r = 0.0;
        CHECK_THROWS_AS(evaluate_dataset(root, bad), ConfigError);
        bad.r = 2.5;
        CHECK_THROWS_AS(evaluate_dataset(root, bad), ConfigError);
    }
    SUBCASE("a tampered dataset fails before any metric runs") {
        TempDir tmp;
        copy_dataset(root, tmp.path / "ds");
        spit(tmp.path / "ds" / "0001" / "0002.png", "junk");
        CHECK_THROWS_AS(evaluate_dataset(tmp.path / "ds", ec), IntegrityError);
    }
}

TEST_CASE("reports serialize with every headline number") {
    const DatasetFixture& f = dataset_fixture();
    EvalConfig ec;
    const EvalReport rep = evaluate_dataset(f.cfg.out_dir, ec);
    const std::string text = format_report(rep);

    CHECK(contains(text, "# evaluation report v1"));
    CHECK(contains(text, "identities 2"));
    CHECK(contains(text, "samples_per_identity 11"));
    CHECK(contains(text, "distance cosine"));
    CHECK(contains(text, "u_class "));
    CHECK(contains(text, "c_intra "));
    CHECK(contains(text, "d_intra "));
    CHECK(contains(text, "d_intra_geometric "));
    CHECK(contains(text, "d_intra_exposure "));
    CHECK(contains(text, "genuine_mean "));
    CHECK(contains(text, "impostor_mean "));
    CHECK(contains(text, "histogram genuine"));
    CHECK(contains(text, "histogram impostor"));

    // Two histogram tables, each closed by an end marker.
    std::size_t ends = 0;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);)
        if (line == "end") ++ends;
    CHECK(ends == 2);

    TempDir tmp;
    write_report(tmp.path / "report.txt", rep);
    CHECK(slurp(tmp.path / "report.txt") == text);
    CHECK_THROWS_AS(write_report(tmp.path / "nodir" / "report.txt", rep),
                    ConfigError);
}
