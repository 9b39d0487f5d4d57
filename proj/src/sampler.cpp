#include "augdiff/sampler.hpp"

#include <cmath>
#include <stdexcept>

#include "augdiff/common.hpp"
#include "augdiff/rng.hpp"

namespace augdiff {

const char* condition_mode_name(ConditionMode m) {
    switch (m) {
        case ConditionMode::Unconditional: return "unconditional";
        case ConditionMode::Fixed: return "fixed";
        case ConditionMode::PerInstanceRandom: return "conditional";
    }
    return "unconditional";
}

ConditionMode condition_mode_from_name(const std::string& name) {
    if (name == "unconditional") return ConditionMode::Unconditional;
    if (name == "fixed") return ConditionMode::Fixed;
    // "conditional" draws a fresh condition id per instance per epoch
    if (name == "conditional" || name == "random") return ConditionMode::PerInstanceRandom;
    throw std::invalid_argument("unknown condition mode: " + name);
}

Tensor ddim_step(const Tensor& z_t, int t, const Tensor& eps_hat,
                 const NoiseSchedule& sched) {
    if (t < 1 || t > sched.T) throw std::invalid_argument("ddim_step: t out of range");
    if (!z_t.same_shape(eps_hat)) throw std::invalid_argument("ddim_step: shape mismatch");
    const double ab_t = sched.alpha_bar(t);
    const double ab_prev = sched.alpha_bar(t - 1);
    const double inv_sqrt_ab = 1.0 / std::sqrt(ab_t);
    const double sq_1mab = std::sqrt(1.0 - ab_t);
    const double sq_ab_prev = std::sqrt(ab_prev);
    const double sq_1mab_prev = std::sqrt(1.0 - ab_prev);
    Tensor out(z_t.rows(), z_t.cols());
    for (size_t i = 0; i < out.numel(); ++i) {
        double x0_hat = (z_t[i] - sq_1mab * eps_hat[i]) * inv_sqrt_ab;
        out[i] = sq_ab_prev * x0_hat + sq_1mab_prev * eps_hat[i];
    }
    return out;
}

Tensor ddim_denoise_from(const Tensor& z_start, int K, const std::vector<int>& y,
                         const BatchDenoiserFn& denoiser, const NoiseSchedule& sched) {
    if (K < 1 || K >= sched.T) {
        throw std::invalid_argument("ddim_denoise_from: require 1 <= K < T");
    }
    Tensor z = z_start;
    for (int t = K; t >= 1; --t) {
        Tensor eps_hat = denoiser(z, t, y);
        z = ddim_step(z, t, eps_hat, sched);
    }
    return z;
}

namespace {

// Noise and condition draws come from separate derived streams so toggling
// the condition mode never shifts the noise sequence.
int draw_condition(const AugmentConfig& cfg, uint64_t epoch, uint64_t bag_key,
                   size_t instance_index) {
    switch (cfg.mode) {
        case ConditionMode::Unconditional:
            return 0;
        case ConditionMode::Fixed:
            if (cfg.condition < 0 || cfg.condition >= kNumConditions) {
                throw std::invalid_argument("augment: condition id out of range");
            }
            return cfg.condition;
        case ConditionMode::PerInstanceRandom: {
            Rng rng = derive_stream(cfg.seed, epoch, bag_key, instance_index,
                                    StreamKind::Condition);
            return 1 + static_cast<int>(rng.next_below(6));
        }
    }
    return 0;
}

void check_config(const AugmentConfig& cfg, const DaeModel& model, size_t dim) {
    if (cfg.K < 0 || cfg.K >= cfg.T) {
        throw std::invalid_argument("augment: require 0 <= K < T");
    }
    if (cfg.T != model.schedule.T) {
        throw std::invalid_argument("augment: config T does not match checkpoint schedule");
    }
    if (dim != static_cast<size_t>(model.params.cfg.dim)) {
        throw std::invalid_argument("augment: feature dimension does not match checkpoint");
    }
}

}  // namespace

Tensor augment_instance(const Tensor& z0_raw, const DaeModel& model,
                        const AugmentConfig& cfg, uint64_t epoch,
                        const std::string& bag_id, size_t instance_index,
                        AugmentStats* stats) {
    if (z0_raw.rows() != 1) {
        throw std::invalid_argument("augment_instance: expected one 1 x D row");
    }
    check_config(cfg, model, z0_raw.cols());
    if (cfg.K == 0) return z0_raw;  // explicit identity

    const uint64_t bag_key = fnv1a64(bag_id);
    Tensor z = standardize(z0_raw, model.stand);
    Rng noise = derive_stream(cfg.seed, epoch, bag_key, instance_index, StreamKind::Noise);
    Tensor eps = gaussian_like(1, z.cols(), noise);
    // closed-form jump to z_K (distributionally equal to K chained steps)
    Tensor zk = q_sample(z, cfg.K, eps, model.schedule);
    std::vector<int> y = {draw_condition(cfg, epoch, bag_key, instance_index)};
    Tensor out = ddim_denoise_from(
        zk, cfg.K, y,
        [&](const Tensor& zt, int t, const std::vector<int>& yy) {
            return denoise_predict_batch(model.params, zt, t, yy,
                                         stats ? &stats->denoiser_evals : nullptr);
        },
        model.schedule);
    return destandardize(out, model.stand);
}

AugmentedBag augment_bag(const Bag& bag, const DaeModel& model, const AugmentConfig& cfg,
                         uint64_t epoch, AugmentStats* stats,
                         const std::string& checkpoint_hash) {
    if (bag.size() == 0) throw std::invalid_argument("augment_bag: empty bag");
    check_config(cfg, model, bag.dim());

    AugmentedBag out;
    out.bag.id = bag.id;
    out.bag.label = bag.label;
    out.provenance = {cfg.T,
                      cfg.K,
                      condition_mode_name(cfg.mode),
                      cfg.condition,
                      cfg.seed,
                      epoch,
                      checkpoint_hash};
    if (cfg.K == 0) {
        out.bag.features = bag.features;
        return out;
    }

    const uint64_t bag_key = fnv1a64(bag.id);
    const size_t n = bag.size();
    Tensor z = standardize(bag.features, model.stand);
    Tensor eps(n, z.cols());
    std::vector<int> y(n);
    for (size_t i = 0; i < n; ++i) {
        Rng noise = derive_stream(cfg.seed, epoch, bag_key, i, StreamKind::Noise);
        for (size_t c = 0; c < z.cols(); ++c) eps.at(i, c) = noise.next_normal();
        y[i] = draw_condition(cfg, epoch, bag_key, i);
    }
    Tensor zk = q_sample(z, cfg.K, eps, model.schedule);
    Tensor denoised = ddim_denoise_from(
        zk, cfg.K, y,
        [&](const Tensor& zt, int t, const std::vector<int>& yy) {
            return denoise_predict_batch(model.params, zt, t, yy,
                                         stats ? &stats->denoiser_evals : nullptr);
        },
        model.schedule);
    out.bag.features = destandardize(denoised, model.stand);
    return out;
}

RetentionStats retention_score(const Bag& original, const Bag& augmented) {
    if (original.size() != augmented.size() || original.dim() != augmented.dim()) {
        throw std::invalid_argument("retention_score: bag shapes differ");
    }
    RetentionStats stats;
    const size_t n = original.size();
    stats.cosine.reserve(n);
    stats.distance.reserve(n);
    double sum = 0.0;
    double mn = 1.0;
    for (size_t i = 0; i < n; ++i) {
        double dot = 0.0, na = 0.0, nb = 0.0, dist = 0.0;
        for (size_t c = 0; c < original.dim(); ++c) {
            double a = original.features.at(i, c);
            double b = augmented.features.at(i, c);
            dot += a * b;
            na += a * a;
            nb += b * b;
            dist += (a - b) * (a - b);
        }
        double cosine;
        if (na == 0.0 || nb == 0.0) {
            cosine = 0.0;
            stats.zero_norm_flag = true;
        } else {
            cosine = dot / (std::sqrt(na) * std::sqrt(nb));
        }
        stats.cosine.push_back(cosine);
        stats.distance.push_back(std::sqrt(dist));
        sum += cosine;
        mn = std::min(mn, cosine);
    }
    stats.mean_cosine = n ? sum / static_cast<double>(n) : 0.0;
    stats.min_cosine = n ? mn : 0.0;
    return stats;
}

}  // namespace augdiff
