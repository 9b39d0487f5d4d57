#include "augdiff/synthetic.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "augdiff/tape.hpp"

namespace augdiff {

namespace {

// power iteration for the spectral norm of a square matrix
double spectral_norm(const Tensor& m, Rng& rng) {
    Tensor v(m.cols(), 1);
    for (size_t i = 0; i < v.numel(); ++i) v[i] = rng.next_normal();
    Tensor mv, mtmv;
    double norm = 0.0;
    for (int it = 0; it < 200; ++it) {
        gemm(m, false, v, false, mv);
        gemm(m, true, mv, false, mtmv);
        norm = 0.0;
        for (size_t i = 0; i < mtmv.numel(); ++i) norm += mtmv[i] * mtmv[i];
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0;
        for (size_t i = 0; i < v.numel(); ++i) v[i] = mtmv[i] / norm;
    }
    gemm(m, false, v, false, mv);
    double out = 0.0;
    for (size_t i = 0; i < mv.numel(); ++i) out += mv[i] * mv[i];
    return std::sqrt(out);
}

}  // namespace

Tensor random_rotation(size_t dim, double spectral, Rng& rng) {
    // skew-symmetric generator scaled to the requested spectral norm
    Tensor g(dim, dim);
    for (size_t i = 0; i < g.numel(); ++i) g[i] = rng.next_normal();
    Tensor s(dim, dim);
    for (size_t r = 0; r < dim; ++r) {
        for (size_t c = 0; c < dim; ++c) {
            s.at(r, c) = 0.5 * (g.at(r, c) - g.at(c, r));
        }
    }
    double norm = spectral_norm(s, rng);
    if (norm > 0.0) {
        double f = spectral / norm;
        for (size_t i = 0; i < s.numel(); ++i) s[i] *= f;
    }
    // series exp(S); converges in a handful of terms for small norms
    Tensor result = Tensor::identity(dim);
    Tensor term = Tensor::identity(dim);
    Tensor next;
    for (int k = 1; k <= 32; ++k) {
        gemm(term, false, s, false, next);
        double scale = 1.0 / static_cast<double>(k);
        double max_abs = 0.0;
        for (size_t i = 0; i < next.numel(); ++i) {
            next[i] *= scale;
            max_abs = std::max(max_abs, std::fabs(next[i]));
        }
        term = next;
        for (size_t i = 0; i < result.numel(); ++i) result[i] += term[i];
        if (max_abs < 1e-18) break;
    }
    return result;
}

void finalize_spec(SyntheticSpec& spec) {
    if (spec.dim < 2 || spec.n_classes < 2) {
        throw std::invalid_argument("SyntheticSpec: need dim >= 2 and n_classes >= 2");
    }
    if (spec.witness_rate <= 0.0 || spec.witness_rate > 1.0) {
        throw std::invalid_argument("SyntheticSpec: witness rate must be in (0, 1]");
    }
    if (spec.bag_size_min < 1 || spec.bag_size_max < spec.bag_size_min) {
        throw std::invalid_argument("SyntheticSpec: bad bag size range");
    }
    if (!spec.centroids.empty()) return;

    Rng rng(mix_seed({spec.seed, static_cast<uint64_t>(StreamKind::Init), 0xC0DE}));
    const size_t d = static_cast<size_t>(spec.dim);
    spec.centroids = Tensor(static_cast<size_t>(spec.n_classes), d);
    for (size_t i = 0; i < spec.centroids.numel(); ++i) {
        spec.centroids[i] = spec.centroid_scale * rng.next_normal();
    }

    // mean feature norm ~ sqrt(|centroid|^2 + D * std^2), averaged over classes
    double mean_norm = 0.0;
    for (size_t c = 0; c < static_cast<size_t>(spec.n_classes); ++c) {
        double sq = 0.0;
        for (size_t j = 0; j < d; ++j) sq += spec.centroids.at(c, j) * spec.centroids.at(c, j);
        mean_norm += std::sqrt(sq + d * spec.instance_std * spec.instance_std);
    }
    mean_norm /= static_cast<double>(spec.n_classes);

    spec.transforms.clear();
    for (int j = 0; j < 6; ++j) {
        AugmentTransform tr;
        tr.rotation = random_rotation(d, spec.rotation_norm, rng);
        tr.bias = Tensor(1, d);
        double sq = 0.0;
        for (size_t k = 0; k < d; ++k) {
            tr.bias[k] = rng.next_normal();
            sq += tr.bias[k] * tr.bias[k];
        }
        double target = spec.bias_norm_frac * mean_norm;
        double f = sq > 0.0 ? target / std::sqrt(sq) : 0.0;
        for (size_t k = 0; k < d; ++k) tr.bias[k] *= f;
        // per-dimension std of the class mixture is roughly instance_std plus
        // centroid spread; noise_frac is taken against instance_std
        tr.sigma = spec.noise_frac * spec.instance_std;
        spec.transforms.push_back(std::move(tr));
    }
}

namespace {

Tensor sample_instances(const SyntheticSpec& spec, const std::vector<int>& classes,
                        Rng& rng) {
    const size_t d = static_cast<size_t>(spec.dim);
    Tensor out(classes.size(), d);
    for (size_t r = 0; r < classes.size(); ++r) {
        for (size_t c = 0; c < d; ++c) {
            out.at(r, c) = spec.centroids.at(static_cast<size_t>(classes[r]), c) +
                           spec.instance_std * rng.next_normal();
        }
    }
    return out;
}

Tensor apply_transform(const AugmentTransform& tr, const Tensor& rows, Rng& rng) {
    Tensor rotated;
    gemm(rows, false, tr.rotation, true, rotated);  // (R z)^T per row
    for (size_t r = 0; r < rotated.rows(); ++r) {
        for (size_t c = 0; c < rotated.cols(); ++c) {
            rotated.at(r, c) += tr.bias[c] + tr.sigma * rng.next_normal();
        }
    }
    return rotated;
}

}  // namespace

FeatureCorpus gen_instance_corpus(const SyntheticSpec& spec_in, Rng& rng) {
    SyntheticSpec spec = spec_in;
    finalize_spec(spec);
    const size_t per_class = static_cast<size_t>(spec.corpus_per_class);
    const size_t n0 = per_class * static_cast<size_t>(spec.n_classes);

    std::vector<int> classes;
    classes.reserve(n0);
    for (int c = 0; c < spec.n_classes; ++c) {
        for (size_t i = 0; i < per_class; ++i) classes.push_back(c);
    }
    Tensor originals = sample_instances(spec, classes, rng);

    FeatureCorpus corpus;
    corpus.features = Tensor(n0 * 7, static_cast<size_t>(spec.dim));
    corpus.condition.reserve(n0 * 7);
    corpus.instance_class.reserve(n0 * 7);
    size_t row = 0;
    auto append = [&](const Tensor& block, int cond) {
        for (size_t r = 0; r < block.rows(); ++r) {
            for (size_t c = 0; c < block.cols(); ++c) {
                corpus.features.at(row, c) = block.at(r, c);
            }
            corpus.condition.push_back(cond);
            corpus.instance_class.push_back(classes[r]);
            ++row;
        }
    };
    append(originals, 0);
    for (int j = 0; j < 6; ++j) {
        append(apply_transform(spec.transforms[static_cast<size_t>(j)], originals, rng), j + 1);
    }
    return corpus;
}

MilTask gen_mil_task(const SyntheticSpec& spec_in, Rng& rng) {
    SyntheticSpec spec = spec_in;
    finalize_spec(spec);
    const int n_bag_classes = spec.n_classes;  // label 0 = background-only
    const double min_expected = spec.witness_rate * spec.bag_size_min;
    if (min_expected < 1.0) {
        throw std::invalid_argument(
            "gen_mil_task: witness rate x bag size < 1, no witness instance fits");
    }

    MilTask task;
    task.manifest.version = 1;
    task.manifest.dim = spec.dim;
    task.splits.type = SplitPlan::Type::Fixed;
    task.splits.folds.assign(3, {});

    const int counts[3] = {spec.train_bags, spec.val_bags, spec.test_bags};
    int serial = 0;
    for (int split = 0; split < 3; ++split) {
        for (int i = 0; i < counts[split]; ++i) {
            int label = static_cast<int>(rng.next_below(static_cast<uint64_t>(n_bag_classes)));
            size_t n = static_cast<size_t>(spec.bag_size_min) +
                       rng.next_below(static_cast<uint64_t>(spec.bag_size_max -
                                                            spec.bag_size_min + 1));
            std::vector<int> inst_classes(n, 0);
            if (label > 0) {
                size_t witnesses = static_cast<size_t>(
                    std::llround(spec.witness_rate * static_cast<double>(n)));
                witnesses = std::max<size_t>(witnesses, 1);
                // witness positions drawn without replacement
                std::vector<size_t> pos(n);
                for (size_t k = 0; k < n; ++k) pos[k] = k;
                for (size_t k = n; k > 1; --k) {
                    size_t j = rng.next_below(k);
                    std::swap(pos[k - 1], pos[j]);
                }
                for (size_t k = 0; k < witnesses; ++k) inst_classes[pos[k]] = label;
            }
            Bag bag;
            bag.id = "bag_" + std::to_string(serial++);
            bag.label = label;
            bag.features = sample_instances(spec, inst_classes, rng);

            BagManifest::Record rec;
            rec.id = bag.id;
            rec.label = label;
            rec.file = bag.id + ".augb";
            rec.n = static_cast<int>(n);
            task.manifest.bags.push_back(rec);
            task.splits.folds[static_cast<size_t>(split)].push_back(bag.id);
            task.bags.push_back(std::move(bag));
        }
    }
    return task;
}

int nearest_centroid(const SyntheticSpec& spec, const Tensor& feature_row) {
    int best = 0;
    double best_d = 0.0;
    for (int c = 0; c < spec.n_classes; ++c) {
        double d = 0.0;
        for (size_t j = 0; j < feature_row.numel(); ++j) {
            double diff = feature_row[j] - spec.centroids.at(static_cast<size_t>(c), j);
            d += diff * diff;
        }
        if (c == 0 || d < best_d) {
            best = c;
            best_d = d;
        }
    }
    return best;
}

std::vector<int> nearest_centroids(const SyntheticSpec& spec, const Tensor& features) {
    std::vector<int> out(features.rows());
    for (size_t r = 0; r < features.rows(); ++r) {
        Tensor row(1, features.cols());
        for (size_t c = 0; c < features.cols(); ++c) row[c] = features.at(r, c);
        out[r] = nearest_centroid(spec, row);
    }
    return out;
}

}  // namespace augdiff
