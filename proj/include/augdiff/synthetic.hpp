#pragma once

#include <cstdint>
#include <vector>

#include "augdiff/dae.hpp"
#include "augdiff/dataset.hpp"
#include "augdiff/rng.hpp"
#include "augdiff/tensor.hpp"

namespace augdiff {

// Feature-space analog of one image augmentation: z' = R z + b + sigma * eps
// with R orthogonal (exponential of a small skew-symmetric matrix).
struct AugmentTransform {
    Tensor rotation;  // D x D, orthogonal
    Tensor bias;      // 1 x D
    double sigma = 0.0;
};

struct SyntheticSpec {
    int dim = 512;
    int n_classes = 3;        // instance classes; class 0 is background
    double centroid_scale = 2.0;
    double instance_std = 1.0;
    double rotation_norm = 0.1;     // spectral norm of the skew generator
    double bias_norm_frac = 0.2;    // |b| relative to mean feature norm
    double noise_frac = 0.05;       // sigma relative to per-dimension std
    int corpus_per_class = 2400;    // originals per class for the DAE corpus
    int bag_size_min = 60;
    int bag_size_max = 180;
    double witness_rate = 0.05;
    int train_bags = 200;
    int val_bags = 50;
    int test_bags = 50;
    uint64_t seed = 0;

    // filled by finalize_spec
    Tensor centroids;  // C x D
    std::vector<AugmentTransform> transforms;  // 6
};

// Draws centroids and the six transforms from the spec's seed. Idempotent.
void finalize_spec(SyntheticSpec& spec);

// Orthogonal matrix exp(S) for a random skew-symmetric S with the given
// spectral norm.
Tensor random_rotation(size_t dim, double spectral_norm, Rng& rng);

// Originals (condition 0) from class-conditional Gaussians plus six
// augmented copies (conditions 1..6).
FeatureCorpus gen_instance_corpus(const SyntheticSpec& spec, Rng& rng);

struct MilTask {
    BagManifest manifest;
    std::vector<Bag> bags;
    Splits splits;  // fixed train/val/test
};

// Binary task when n_classes == 2: positive bags mix witness-class instances
// at the witness rate into background, negatives are pure background.
// With more classes, the bag label names the witness class present
// (label 0 = background-only bags).
MilTask gen_mil_task(const SyntheticSpec& spec, Rng& rng);

// Labels features by the nearest spec centroid; the generator's calibration
// check and the retention criteria both use this.
int nearest_centroid(const SyntheticSpec& spec, const Tensor& feature_row);
std::vector<int> nearest_centroids(const SyntheticSpec& spec, const Tensor& features);

}  // namespace augdiff
