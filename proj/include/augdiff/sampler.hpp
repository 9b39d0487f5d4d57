#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "augdiff/dataset.hpp"
#include "augdiff/denoiser.hpp"
#include "augdiff/schedule.hpp"
#include "augdiff/tensor.hpp"

namespace augdiff {

enum class ConditionMode {
    Unconditional,       // embedding row 0, no condition draw used
    Fixed,               // one condition id for every instance
    PerInstanceRandom,   // uniform over {1..6}, fresh per instance per epoch
};

struct AugmentConfig {
    int T = 20;
    int K = 4;  // 0 <= K < T; K = 0 is the explicit identity
    ConditionMode mode = ConditionMode::Unconditional;
    int condition = 0;  // used when mode == Fixed
    uint64_t seed = 0;
};

const char* condition_mode_name(ConditionMode m);
ConditionMode condition_mode_from_name(const std::string& name);

// Deterministic (eta = 0) DDIM update:
//   x0_hat  = (z_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)
//   z_{t-1} = sqrt(abar_{t-1}) x0_hat + sqrt(1 - abar_{t-1}) eps_hat
// Elementwise; works on single rows and batches alike. t >= 1.
Tensor ddim_step(const Tensor& z_t, int t, const Tensor& eps_hat,
                 const NoiseSchedule& sched);

using BatchDenoiserFn =
    std::function<Tensor(const Tensor& z_t, int t, const std::vector<int>& y)>;

// Runs ddim_step for t = K..1 with eps_hat from `denoiser`. Injectable so
// tests can substitute an oracle denoiser.
Tensor ddim_denoise_from(const Tensor& z_start, int K, const std::vector<int>& y,
                         const BatchDenoiserFn& denoiser, const NoiseSchedule& sched);

struct AugmentStats {
    uint64_t denoiser_evals = 0;  // instance-level denoiser evaluations
};

// K-step diffusion + K-step DDIM denoising of one raw instance feature.
// Deterministic given (cfg.seed, epoch, bag_id, instance_index).
Tensor augment_instance(const Tensor& z0_raw, const DaeModel& model,
                        const AugmentConfig& cfg, uint64_t epoch,
                        const std::string& bag_id, size_t instance_index,
                        AugmentStats* stats = nullptr);

// Per-bag provenance for reproducibility audits.
struct AugmentProvenance {
    int T = 0;
    int K = 0;
    std::string condition_mode;
    int condition = 0;
    uint64_t seed = 0;
    uint64_t epoch = 0;
    std::string dae_checkpoint_hash;  // empty if the model never touched disk
};

struct AugmentedBag {
    Bag bag;
    AugmentProvenance provenance;
};

// Augments every instance independently with its derived seed stream; label
// and instance order preserved. Instances are batched through the denoiser
// step by step, which leaves per-instance results unchanged (all ops are
// row-independent).
AugmentedBag augment_bag(const Bag& bag, const DaeModel& model, const AugmentConfig& cfg,
                         uint64_t epoch, AugmentStats* stats = nullptr,
                         const std::string& checkpoint_hash = "");

struct RetentionStats {
    double mean_cosine = 0.0;
    double min_cosine = 0.0;
    std::vector<double> cosine;     // per aligned pair
    std::vector<double> distance;   // euclidean per pair
    bool zero_norm_flag = false;    // any pair hit a zero-norm vector
};

RetentionStats retention_score(const Bag& original, const Bag& augmented);

}  // namespace augdiff
