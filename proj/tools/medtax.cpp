// medtax: stage-wise pipeline from condition mentions to a taxonomy and validated health scores.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "medtax/pipeline.hpp"
#include "medtax/synth.hpp"

namespace {

struct GlobalFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::string output;
    bool strict = false;
    bool quiet = false;
};

medtax::pipeline::PipelineConfig effective_config(const GlobalFlags &g) {
    if (g.config.empty())
        throw medtax::ValidationError("--config PATH is required");
    auto cfg = medtax::pipeline::load_config(g.config);
    if (g.seed)
        cfg.seed = *g.seed;
    if (g.threads)
        cfg.threads = *g.threads;
    if (g.strict)
        cfg.strictness = medtax::Strictness::strict;
    if (!g.output.empty())
        cfg.paths.output = g.output;
    return cfg;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"medtax: condition co-occurrence taxonomy and population health scores"};
    app.require_subcommand(1);
    GlobalFlags g;
    app.add_option("--config", g.config, "Pipeline configuration file (INI sections per stage)");
    app.add_option("--seed", g.seed, "Master seed (overrides run.seed)");
    app.add_option("--threads", g.threads, "Worker threads (overrides run.threads)")->check(CLI::PositiveNumber);
    app.add_option("--output", g.output, "Output directory (overrides paths.output)");
    app.add_flag("--strict", g.strict, "Treat malformed input lines as fatal");
    app.add_flag("--quiet", g.quiet, "Only print warnings and errors");

    std::optional<medtax::pipeline::Stage> stage;
    for (auto s : medtax::pipeline::ordered_stages) {
        auto *sub = app.add_subcommand(medtax::pipeline::to_string(s));
        sub->callback([&stage, s] { stage = s; });
    }
    app.add_subcommand("all", "Run every stage in order")->callback([&stage] {
        stage = medtax::pipeline::Stage::all;
    });
    app.get_subcommand("extract")->description("Load documents, locate users, extract condition mentions");
    app.get_subcommand("graph")->description("Build the co-occurrence graph");
    app.get_subcommand("backbone")->description("Noise-corrected backbone and its giant component");
    app.get_subcommand("cluster")->description("Hierarchical map-equation clustering and taxonomy");
    app.get_subcommand("centrality")->description("Condition centrality on the backbone");
    app.get_subcommand("score")->description("Per-location health scores per category");
    app.get_subcommand("correlate")->description("Pearson correlations with official statistics");
    app.get_subcommand("causal")->description("Propensity-matched effects and the results table");

    medtax::synth::SynthOptions synth_opts;
    std::string synth_dir;
    bool run_synth = false;
    auto *synth = app.add_subcommand("synth", "Write a synthetic corpus with planted structure");
    synth->add_option("--dir", synth_dir, "Destination directory")->required();
    synth->add_option("--documents", synth_opts.documents, "Number of documents");
    synth->add_option("--users", synth_opts.users, "Number of users");
    synth->add_option("--synth-seed", synth_opts.seed, "Generator seed");
    synth->callback([&run_synth] { run_synth = true; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return 1;
    }

    medtax::pipeline::Log log;
    log.quiet = g.quiet;
    try {
        if (run_synth) {
            medtax::synth::write_corpus(synth_dir, synth_opts);
            log.info("synth: wrote corpus to " + synth_dir);
            return 0;
        }
        auto cfg = effective_config(g);
        medtax::pipeline::run_stage(*stage, cfg, log);
        return 0;
    } catch (const medtax::ValidationError &e) {
        std::cerr << "medtax: error: " << e.what() << "\n";
        return 1;
    } catch (const medtax::ComputeError &e) {
        std::cerr << "medtax: error: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error &e) {
        std::cerr << "medtax: error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception &e) {
        std::cerr << "medtax: error: " << e.what() << "\n";
        return 2;
    }
}
