#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "augdiff/dataset.hpp"
#include "augdiff/schedule.hpp"
#include "augdiff/tape.hpp"
#include "augdiff/tensor.hpp"

namespace augdiff {

inline constexpr int kNumConditions = 7;  // 0 = original, 1..6 = augmentation families

struct DenoiserConfig {
    int dim = 512;    // feature dimension D
    int depth = 4;    // residual blocks L
    int width = 256;  // hidden width H
    int embed = 64;   // time/condition embedding E
    bool conditional = true;
};

// Residual MLP epsilon-predictor. Input and output are both D-dim; each
// block computes h <- h + W2 tanh(W1 [h, temb, cemb] + b1) + b2.
struct DenoiserParams {
    DenoiserConfig cfg;

    Tensor w_in, b_in;      // H x D, 1 x H
    Tensor w_time, b_time;  // E x E, 1 x E (projection of the sinusoid)
    Tensor cond_table;      // 7 x E
    struct Block {
        Tensor w1, b1;  // H x (H + 2E), 1 x H
        Tensor w2, b2;  // H x H, 1 x H
    };
    std::vector<Block> blocks;
    Tensor w_out, b_out;  // D x H, 1 x D (zero-initialized)

    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
    std::vector<std::string> parameter_names() const;
};

// Output head starts at zero so the initial prediction is 0; other weights
// are uniform in +-sqrt(6/(fan_in+fan_out)), biases zero.
DenoiserParams init_denoiser(const DenoiserConfig& cfg, uint64_t seed);

// Sinusoidal embedding: pairs (sin(t w_k), cos(t w_k)), w_k = 10000^(-2k/dim).
// dim must be even.
Tensor time_embedding(int t, int dim);
Tensor time_embedding_rows(const std::vector<int>& ts, int dim);

// Registered parameter node ids for one tape pass, in declared order.
struct DenoiserTapeParams {
    std::vector<int> ids;
};

DenoiserTapeParams register_denoiser(Tape& tape, const DenoiserParams& p);

// Forward pass on the tape. One t and one condition id per row of z_t. In
// unconditional mode every row uses embedding row 0 regardless of y.
int denoiser_forward(Tape& tape, const DenoiserTapeParams& reg, const DenoiserConfig& cfg,
                     int zt_node, const std::vector<int>& t_rows,
                     const std::vector<int>& y_rows);

// Inference conveniences (no gradients kept).
Tensor denoise_predict(const DenoiserParams& p, const Tensor& z_t, int t, int y);
Tensor denoise_predict_batch(const DenoiserParams& p, const Tensor& zt_rows, int t,
                             const std::vector<int>& y_rows,
                             uint64_t* instance_eval_count = nullptr);

// A trained DAE plus everything needed to apply it to raw features.
struct DaeModel {
    DenoiserParams params;
    NoiseSchedule schedule;
    Standardizer stand;
};

// Checkpoint: magic "AUGD", u32 LE version=1, u32 LE header length, JSON
// header, then each tensor as float32 LE in the header's declared order.
void save_dae_checkpoint(const std::string& path, const DaeModel& model);
DaeModel load_dae_checkpoint(const std::string& path);

}  // namespace augdiff
