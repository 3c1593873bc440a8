// Microbenchmarks for the hot path of dataset generation: grammar
// expansion, identity growth, rendering, per-sample variation synthesis,
// and the baseline embedding.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <optional>
#include <stdexcept>

#include "veingen/errors.hpp"
#include "veingen/grammar.hpp"
#include "veingen/metrics.hpp"
#include "veingen/pipeline.hpp"
#include "veingen/png_io.hpp"
#include "veingen/renderer.hpp"
#include "veingen/rng.hpp"
#include "veingen/variations.hpp"

using namespace veingen;

namespace {

// One representative identity, grown once and shared by all benchmarks.
// Identity growth can give up on unlucky seeds, so probe a short window.
struct Fixture {
    PipelineConfig cfg;
    IdentityBundle bundle;
    ImageF roi;
};

const Fixture& fixture() {
    static const Fixture f = [] {
        Fixture out;
        out.cfg.master_seed = 20260819;
        for (int id = 0; id < 40; ++id) {
            try {
                out.bundle = generate_identity(out.cfg, id);
                out.roi = crop_roi(out.bundle.base.image, out.bundle.base.roi);
                return out;
            } catch (const GenerationError&) {
            }
        }
        throw std::runtime_error("no identity generated in a 40-id window");
    }();
    return f;
}

VariationParams pose_params() {
    VariationParams p;
    p.shift_x = 12.0;
    p.rotation_deg = 8.0;
    p.scale = 1.05;
    p.roll_deg = 6.0;
    p.category = VariationCategory::rotation;
    p.combo = true;
    return p;
}

VariationParams scattering_params() {
    VariationParams p;
    p.blur = BlurKind::scattering;
    p.blur_scale = 5.0;
    p.category = VariationCategory::scattering_blur;
    return p;
}

void BM_grammar_expand(benchmark::State& state) {
    Grammar g;
    g.alphabet = "ab";
    g.axiom = "a";
    g.rules = {{'a', "ab", 1.0}, {'b', "a", 1.0}};
    for (auto _ : state) {
        benchmark::DoNotOptimize(expand(g, 20, 1));
    }
}
BENCHMARK(BM_grammar_expand);

void BM_identity_pattern(benchmark::State& state) {
    const Fixture& f = fixture();
    const std::uint64_t seed = derive_seed(f.bundle.seed, 0, "pattern");
    for (auto _ : state) {
        const VeinGraph grown = compose_identity(seed, f.cfg.tmpl, f.cfg.veins);
        const VeinGraph smoothed = smooth(grown);
        benchmark::DoNotOptimize(rasterize(smoothed, f.cfg.tmpl));
    }
}
BENCHMARK(BM_identity_pattern);

void BM_render(benchmark::State& state) {
    const Fixture& f = fixture();
    const std::uint64_t seed = derive_seed(f.bundle.seed, 0, "render");
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            render(f.bundle.model, f.bundle.pattern, seed, f.cfg.render));
    }
}
BENCHMARK(BM_render);

void BM_sample_pose(benchmark::State& state) {
    const Fixture& f = fixture();
    const VariationParams p = pose_params();
    for (auto _ : state) {
        benchmark::DoNotOptimize(apply_variation(
            f.bundle.base.image, f.bundle.model.shape, p, 7, f.cfg.variation));
    }
}
BENCHMARK(BM_sample_pose);

void BM_sample_scattering(benchmark::State& state) {
    const Fixture& f = fixture();
    const VariationParams p = scattering_params();
    for (auto _ : state) {
        benchmark::DoNotOptimize(apply_variation(
            f.bundle.base.image, f.bundle.model.shape, p, 7, f.cfg.variation));
    }
}
BENCHMARK(BM_sample_scattering);

void BM_full_sample(benchmark::State& state) {
    const Fixture& f = fixture();
    int s = 0;
    for (auto _ : state) {
        const SampleImage si = make_sample(f.cfg, f.bundle, s);
        benchmark::DoNotOptimize(quantize_unit(si.shaped));
        s = (s + 1) % static_cast<int>(f.bundle.plan.size());
    }
}
BENCHMARK(BM_full_sample);

void BM_embed(benchmark::State& state) {
    const Fixture& f = fixture();
    for (auto _ : state) {
        benchmark::DoNotOptimize(embed({f.roi, Variant::roi}));
    }
}
BENCHMARK(BM_embed);

} // namespace

BENCHMARK_MAIN();
