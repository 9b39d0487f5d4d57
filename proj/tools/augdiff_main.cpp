#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "augdiff/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"AugDiff: diffusion-based feature augmentation for MIL training"};
    app.require_subcommand(1);

    struct Options {
        std::string config;
        std::string out;
        uint64_t seed = 0;
        bool seed_set = false;
        std::vector<std::string> overrides;
    };

    const std::vector<std::string> names = {
        "gen-synthetic",      "train-dae", "augment",       "train-mil",
        "eval",               "sweep",     "bench-augment", "export-projection"};
    const std::vector<std::string> descriptions = {
        "generate the synthetic corpus, bags, manifest and splits",
        "train the denoising autoencoder on a feature corpus",
        "augment every bag in a manifest once (offline)",
        "train one MIL aggregator with the configured augmentation policy",
        "evaluate a MIL checkpoint on a split",
        "run the policy x variant x K x seed grid and emit results.csv",
        "measure augmentation throughput over bag sizes",
        "export a 2-D PCA projection CSV of feature sets"};

    std::vector<std::shared_ptr<Options>> opts;
    for (size_t i = 0; i < names.size(); ++i) {
        auto o = std::make_shared<Options>();
        CLI::App* sub = app.add_subcommand(names[i], descriptions[i]);
        sub->add_option("--config", o->config, "JSON run configuration")->required();
        sub->add_option("--out", o->out, "output directory (overrides config out_dir)");
        sub->add_option("--seed", o->seed, "base RNG seed (overrides config seed)")
            ->each([o](const std::string&) { o->seed_set = true; });
        sub->add_option("--override", o->overrides,
                        "config override as dotted.key=json-value; repeatable");
        opts.push_back(o);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? 1 : 0;
    }

    for (size_t i = 0; i < names.size(); ++i) {
        CLI::App* sub = app.get_subcommand(names[i]);
        if (!sub->parsed()) continue;
        const Options& o = *opts[i];
        std::string error;
        int code = augdiff::run_cli(
            names[i], o.config, o.overrides,
            o.out.empty() ? std::nullopt : std::optional<std::string>(o.out),
            o.seed_set ? std::optional<uint64_t>(o.seed) : std::nullopt, &error);
        if (code != 0) {
            std::cerr << "augdiff " << names[i] << ": " << error << " (exit " << code
                      << ")\n";
        }
        return code;
    }
    return 1;
}
