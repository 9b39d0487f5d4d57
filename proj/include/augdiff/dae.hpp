#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "augdiff/denoiser.hpp"
#include "augdiff/rng.hpp"
#include "augdiff/schedule.hpp"
#include "augdiff/tensor.hpp"

namespace augdiff {

// Instance features paired with their condition ids (0 = original, 1..6 =
// augmentation family) and, when known, ground-truth instance classes.
struct FeatureCorpus {
    Tensor features;             // N x D
    std::vector<int> condition;  // size N
    std::vector<int> instance_class;  // size N or empty

    size_t size() const { return features.rows(); }
    int dim() const { return static_cast<int>(features.cols()); }
};

// corpus.json plus one AUGB file per condition set.
void write_corpus(const std::string& dir, const FeatureCorpus& corpus);
FeatureCorpus read_corpus(const std::string& corpus_json_path);

struct DaeTrainConfig {
    int batch_size = 1200;
    double base_lr = 5.0e-8;  // effective lr = base_lr * batch_size
    int epochs = 1;
    uint64_t seed = 0;
    bool conditional = true;
    int schedule_T = 20;
    double schedule_s = 0.008;
    int depth = 4;
    int width = 256;
    int embed = 64;
    // cosine-decay the learning rate to ~0 over the run; the effective lr
    // above is the peak
    bool lr_decay = false;
};

struct DaeTrainLog {
    std::vector<double> epoch_loss;  // mean training loss per epoch
    // loss on a frozen validation batch with frozen (t, eps) draws, one entry
    // per epoch; empty unless a validation corpus was supplied
    std::vector<double> frozen_val_loss;
};

// One noised training batch: t ~ Uniform{1..T} per row, eps ~ N(0, I).
struct NoisedBatch {
    Tensor z_t;
    Tensor eps;
    std::vector<int> t;
};

NoisedBatch make_noised_batch(const Tensor& z0_rows, const NoiseSchedule& sched, Rng& rng);

// Epsilon-prediction loss: mean over batch and dimensions of
// ||eps - eps_hat||^2. The _with variant accepts an arbitrary denoiser so
// tests can plug in oracles.
using BatchDenoiser =
    std::function<Tensor(const Tensor& z_t, const std::vector<int>& t,
                         const std::vector<int>& y)>;

double dae_loss_with(const BatchDenoiser& denoiser, const Tensor& z0_rows,
                     const std::vector<int>& y, const NoiseSchedule& sched, Rng& rng);

double dae_loss(const DenoiserParams& params, const Tensor& z0_rows,
                const std::vector<int>& y, const NoiseSchedule& sched, Rng& rng);

// Algorithm: per epoch, shuffle the standardized corpus, walk it in batches,
// and for each batch take one Adam step on the epsilon-prediction loss.
// Corpus features must already be standardized. When frozen_val is given,
// its items are noised once (seeded) and re-evaluated after every epoch into
// frozen_val_loss.
std::pair<DenoiserParams, DaeTrainLog> train_dae(const FeatureCorpus& standardized,
                                                 const DaeTrainConfig& cfg,
                                                 const FeatureCorpus* frozen_val = nullptr);

}  // namespace augdiff
