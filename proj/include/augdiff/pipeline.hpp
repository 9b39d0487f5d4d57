#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "augdiff/dae.hpp"
#include "augdiff/dataset.hpp"
#include "augdiff/metrics.hpp"
#include "augdiff/mil.hpp"
#include "augdiff/sampler.hpp"
#include "augdiff/synthetic.hpp"

namespace augdiff {

// Raised for configuration problems (schema violations, unknown keys,
// missing sections). Maps to exit code 1.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Validated run configuration. The JSON is schema-checked with unknown keys
// rejected before any work starts.
struct RunConfig {
    nlohmann::json raw;
    std::string out_dir;
    uint64_t seed = 0;
    std::vector<uint64_t> seeds;  // sweep; defaults to {seed}
    uint64_t config_hash = 0;
};

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides,
                          const std::optional<std::string>& out_override,
                          const std::optional<uint64_t>& seed_override);

// Typed section readers (validate + default-fill).
SyntheticSpec synthetic_from_config(const RunConfig& cfg);
DaeTrainConfig dae_from_config(const RunConfig& cfg);
AugmentConfig augment_from_config(const RunConfig& cfg);
MilTrainConfig mil_from_config(const RunConfig& cfg);
SplitPlan split_from_config(const RunConfig& cfg);

// Subcommands. Each writes its artifacts plus run_manifest.json under
// cfg.out_dir and returns 0 on success; failures surface as exceptions that
// the CLI maps to exit codes.
int cmd_gen_synthetic(const RunConfig& cfg);
int cmd_train_dae(const RunConfig& cfg);
int cmd_augment(const RunConfig& cfg);
int cmd_train_mil(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg);
int cmd_sweep(const RunConfig& cfg);
int cmd_bench_augment(const RunConfig& cfg);
int cmd_export_projection(const RunConfig& cfg);

int run_subcommand(const std::string& name, const RunConfig& cfg);

// Exception-to-exit-code mapping shared by the CLI and tests:
// 0 success, 1 config error, 2 missing artifact, 3 numeric failure.
int run_cli(const std::string& subcommand, const std::string& config_path,
            const std::vector<std::string>& overrides,
            const std::optional<std::string>& out_override,
            const std::optional<uint64_t>& seed_override, std::string* error_out = nullptr);

// One MIL training + test evaluation cell; shared by train-mil, eval and
// sweep so a sweep cell is bit-identical to the standalone run.
struct MilRunOutput {
    MilTrainResult train;
    EvalReport test_eval;
    double wall_seconds = 0.0;
};

MilRunOutput run_mil_once(const std::vector<Bag>& train_bags,
                          const std::vector<Bag>& val_bags,
                          const std::vector<Bag>& test_bags, const MilTrainConfig& cfg,
                          const DaeModel* dae);

}  // namespace augdiff
