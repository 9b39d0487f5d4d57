#pragma once

#include <vector>

#include "augdiff/rng.hpp"
#include "augdiff/tensor.hpp"

namespace augdiff {

// Markov-chain noise parameters. alpha_bar is indexed 0..T with
// alpha_bar[0] == 1 exactly; beta/alpha are indexed by step t via beta(t),
// t in 1..T.
struct NoiseSchedule {
    int T = 0;
    double cosine_s = 0.0;
    std::vector<double> betas;       // betas[t-1] = beta_t
    std::vector<double> alphas;      // 1 - beta_t
    std::vector<double> alpha_bars;  // size T+1, alpha_bars[0] = 1

    double beta(int t) const { return betas[static_cast<size_t>(t - 1)]; }
    double alpha(int t) const { return alphas[static_cast<size_t>(t - 1)]; }
    double alpha_bar(int t) const { return alpha_bars[static_cast<size_t>(t)]; }
};

// Cosine alpha-bar schedule: abar_t = f(t)/f(0), f(t) = cos^2(((t/T + s)/(1+s)) * pi/2).
// beta_t = 1 - abar_t/abar_{t-1} clipped to [1e-5, 0.999]; alpha_bars are the
// running product of the clipped alphas so the stored arrays stay mutually
// consistent.
NoiseSchedule make_cosine_schedule(int T, double s = 0.008);

// Closed-form forward marginal: z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
// Works on any shape; z0 and eps must match. t in 0..T.
Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched);

// Per-row step indices (training batches draw t independently per item).
Tensor q_sample_rows(const Tensor& z0_rows, const std::vector<int>& t,
                     const Tensor& eps_rows, const NoiseSchedule& sched);

// Step-wise chain z_i = sqrt(alpha_i) z_{i-1} + sqrt(beta_i) eps_i; used by
// tests to check the closed form distributionally.
Tensor q_sample_sequential(const Tensor& z0, int t, const NoiseSchedule& sched, Rng& rng);

Tensor gaussian_like(size_t rows, size_t cols, Rng& rng);

}  // namespace augdiff
