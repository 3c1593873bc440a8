#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "veingen/annotations.hpp"
#include "veingen/errors.hpp"
#include "veingen/pipeline.hpp"
#include "veingen/png_io.hpp"

namespace fs = std::filesystem;
using namespace veingen;

namespace {

template <class F> int run_guarded(F&& body) {
    try {
        body();
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const GrammarError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const GenerationError& e) {
        std::cerr << "generation error: " << e.what() << "\n";
        return 2;
    } catch (const IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return 3;
    } catch (const PngError& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

void apply_variants(PipelineConfig& cfg, const std::string& csv) {
    cfg.emit_full = false;
    cfg.emit_roi = false;
    std::istringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto a = item.find_first_not_of(" \t");
        const auto b = item.find_last_not_of(" \t");
        const std::string name =
            (a == std::string::npos) ? "" : item.substr(a, b - a + 1);
        if (name == "shaped") continue; // always written
        if (name == "full") cfg.emit_full = true;
        else if (name == "roi") cfg.emit_roi = true;
        else throw ConfigError("unknown variant '" + name +
                               "' (expected full, shaped or roi)");
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Seeded synthetic finger-vein dataset generator"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("generate", "Generate a dataset");
    std::string gen_config, gen_out, gen_variants = "shaped";
    std::uint64_t gen_seed = 0;
    int gen_ids = 0, gen_workers = 0;
    gen->add_option("--config", gen_config, "Config file (defaults apply)");
    auto* seed_opt = gen->add_option("--seed", gen_seed, "Master seed");
    auto* ids_opt = gen->add_option("--ids", gen_ids, "Identity count");
    gen->add_option("--out", gen_out, "Output directory")->required();
    auto* workers_opt = gen->add_option("--workers", gen_workers, "Worker threads");
    gen->add_option("--variants", gen_variants,
                    "Comma list of image variants: full, shaped, roi");

    auto* eval = app.add_subcommand("evaluate", "Evaluate a dataset");
    std::string eval_dataset, eval_report;
    EvalConfig eval_cfg;
    bool eval_raw = false;
    eval->add_option("--dataset", eval_dataset, "Dataset directory")->required();
    eval->add_option("--r", eval_cfg.r, "Match radius in cosine distance");
    eval->add_option("--report", eval_report, "Report file (default stdout)");
    eval->add_option("--seed", eval_cfg.seed, "Impostor sampling seed");
    eval->add_option("--max-identities", eval_cfg.max_identities,
                     "Evaluate only the first n identities (0 = all)");
    eval->add_option("--max-samples", eval_cfg.max_samples,
                     "Evaluate only the first n samples per identity (0 = all)");
    eval->add_flag("--raw", eval_raw,
                   "Embed recorded sample crops without undoing geometry");

    auto* ver = app.add_subcommand("verify", "Check dataset integrity");
    std::string ver_dataset;
    ver->add_option("--dataset", ver_dataset, "Dataset directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (gen->parsed()) {
        return run_guarded([&] {
            PipelineConfig cfg = gen_config.empty()
                                     ? PipelineConfig{}
                                     : load_config(gen_config);
            if (seed_opt->count()) cfg.master_seed = gen_seed;
            if (ids_opt->count()) cfg.identities = gen_ids;
            if (workers_opt->count()) cfg.workers = gen_workers;
            apply_variants(cfg, gen_variants);
            cfg.out_dir = gen_out;
            validate_config(cfg);

            const GenerationStats stats = generate_dataset(cfg, {});
            std::printf("identities %d generated, %d resumed, %zu failed\n",
                        stats.identities_generated, stats.identities_resumed,
                        stats.failed_identities.size());
            std::printf("samples %llu written in %.1f s (%.1f samples/s)\n",
                        static_cast<unsigned long long>(stats.samples_written),
                        stats.elapsed_seconds, stats.samples_per_second);
        });
    }
    if (eval->parsed()) {
        return run_guarded([&] {
            eval_cfg.align = !eval_raw;
            const EvalReport rep = evaluate_dataset(eval_dataset, eval_cfg);
            if (eval_report.empty()) {
                std::cout << format_report(rep);
            } else {
                write_report(eval_report, rep);
                std::printf("report written to %s\n", eval_report.c_str());
            }
        });
    }
    return run_guarded([&] {
        const VerifyReport rep = verify_dataset(ver_dataset);
        std::printf("ok: %d files, %llu bytes\n", rep.files_checked,
                    static_cast<unsigned long long>(rep.bytes_checked));
    });
}
