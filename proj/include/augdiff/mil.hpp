#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "augdiff/adam.hpp"
#include "augdiff/dataset.hpp"
#include "augdiff/rng.hpp"
#include "augdiff/sampler.hpp"
#include "augdiff/tape.hpp"
#include "augdiff/tensor.hpp"

namespace augdiff {

enum class MilVariant { Amil, LossAttn, Dsmil };

const char* mil_variant_name(MilVariant v);
MilVariant mil_variant_from_name(const std::string& name);

struct MilArch {
    MilVariant variant = MilVariant::Amil;
    int dim = 0;
    int classes = 2;
    int attn_dim = 64;          // AMIL gate width
    int q_dim = 64;             // DSMIL query width
    int v_dim = 64;             // DSMIL value width
    double temperature = 1.0;   // LossAttn
};

struct MilParams {
    MilArch arch;
    // AMIL: gated attention over raw instance features
    Tensor amil_v, amil_u;  // A x D
    Tensor amil_w;          // 1 x A
    Tensor amil_cls;        // C x D
    // LossAttn: shared instance classifier
    Tensor la_w;  // C x D
    // DSMIL: instance stream + query/value stream
    Tensor ds_wi;  // C x D
    Tensor ds_wq;  // Hq x D
    Tensor ds_wv;  // Hv x D
    Tensor ds_wb;  // C x Hv

    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
    std::vector<std::string> parameter_names() const;
};

MilParams init_mil(const MilArch& arch, uint64_t seed);

// Forward pass recorded on the caller's tape; param_ids must come from
// registering parameters() in order. Returns the probability node and the
// attention weights (1 x N, or C x N for DSMIL's per-class attention).
struct MilForwardNodes {
    int p = -1;
    Tensor attention;
};

MilForwardNodes mil_forward_tape(Tape& tape, const std::vector<int>& param_ids,
                                 const MilParams& meta, int bag_node);

// Inference wrappers.
struct MilForward {
    Tensor p;          // 1 x C
    Tensor attention;  // 1 x N or C x N
};

MilForward amil_forward(const MilParams& params, const Tensor& bag);
MilForward lossattn_forward(const MilParams& params, const Tensor& bag);
MilForward dsmil_forward(const MilParams& params, const Tensor& bag);
MilForward mil_forward(const MilParams& params, const Tensor& bag);

// -log p[label], p clamped at 1e-12
double mil_loss(const Tensor& p, int label);

// Each instance is replaced by lambda*h_i + (1-lambda)*h_j with
// lambda ~ Beta(alpha, alpha) and j uniform != i, mixing from the original
// bag. Bags with N < 2 are returned unchanged with the warning flag set.
Bag mixup_augment(const Bag& bag, double alpha, Rng& rng, bool* too_small = nullptr);

// Random partition into m pseudo-bags whose sizes differ by at most one;
// each inherits the parent label.
std::vector<Bag> pseudobag_split(const Bag& bag, int m, Rng& rng);

enum class AugPolicy { None, AugDiff, Mixup, PseudoBag, Offline };

const char* aug_policy_name(AugPolicy p);
AugPolicy aug_policy_from_name(const std::string& name);

struct MilTrainConfig {
    MilArch arch;
    AugPolicy policy = AugPolicy::None;
    AugmentConfig augdiff;     // T/K/condition for policy == AugDiff
    double mixup_alpha = 1.0;
    int pseudobag_m = 4;
    AdamConfig opt{1e-4, 0.9, 0.999, 1e-8};
    int max_epochs = 200;
    int patience = 10;
    std::string validation_metric = "macro_auc";
    uint64_t seed = 0;
};

struct MilEpochStats {
    double train_loss = 0.0;
    double val_auc = 0.0;
};

struct MilTrainResult {
    MilParams params;  // parameters at the best validation epoch
    std::vector<MilEpochStats> history;
    int best_epoch = 0;  // 1-based
    int epochs_run = 0;
    double best_val_auc = 0.0;
};

// Algorithm: per epoch, shuffle bags, apply the augmentation policy fresh
// (augdiff/mixup), or expand the epoch's bag list (pseudobag); forward, NLL
// loss, Adam step per bag. Early-stops on validation macro-AUC patience.
// Validation bags are never augmented.
MilTrainResult train_mil(const std::vector<Bag>& train_bags,
                         const std::vector<Bag>& val_bags, const MilTrainConfig& cfg,
                         const DaeModel* dae = nullptr);

std::pair<int, Tensor> predict(const MilParams& params, const Tensor& bag);

// Checkpoint: magic "AUGM", u32 LE version=1, u32 LE header length, JSON
// header (variant, dims, C), float32 LE payload in declared order.
void save_mil_checkpoint(const std::string& path, const MilParams& params);
MilParams load_mil_checkpoint(const std::string& path);

}  // namespace augdiff
