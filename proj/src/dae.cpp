#include "augdiff/dae.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "augdiff/adam.hpp"
#include "augdiff/common.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace augdiff {

void write_corpus(const std::string& dir, const FeatureCorpus& corpus) {
    if (corpus.condition.size() != corpus.size()) {
        throw std::invalid_argument("write_corpus: condition list size mismatch");
    }
    fs::create_directories(dir);
    json manifest;
    manifest["version"] = 1;
    manifest["dim"] = corpus.dim();
    manifest["sets"] = json::array();
    for (int cond = 0; cond < kNumConditions; ++cond) {
        std::vector<size_t> rows;
        for (size_t i = 0; i < corpus.size(); ++i) {
            if (corpus.condition[i] == cond) rows.push_back(i);
        }
        if (rows.empty()) continue;
        Tensor block(rows.size(), corpus.features.cols());
        std::vector<int> classes;
        for (size_t r = 0; r < rows.size(); ++r) {
            for (size_t c = 0; c < block.cols(); ++c) {
                block.at(r, c) = corpus.features.at(rows[r], c);
            }
            if (!corpus.instance_class.empty()) {
                classes.push_back(corpus.instance_class[rows[r]]);
            }
        }
        std::string file = "cond" + std::to_string(cond) + ".augb";
        write_bag_file((fs::path(dir) / file).string(), block);
        json entry = {{"condition", cond}, {"file", file}, {"n", rows.size()}};
        if (!classes.empty()) entry["classes"] = classes;
        manifest["sets"].push_back(entry);
    }
    std::ofstream out((fs::path(dir) / "corpus.json").string());
    if (!out) throw io_error("cannot write corpus manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

FeatureCorpus read_corpus(const std::string& corpus_json_path) {
    std::ifstream in(corpus_json_path);
    if (!in) throw missing_artifact_error("corpus manifest not found: " + corpus_json_path);
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw format_error("corpus manifest parse error: " + std::string(e.what()));
    }
    fs::path dir = fs::path(corpus_json_path).parent_path();
    int dim = manifest.at("dim").get<int>();
    size_t total = 0;
    for (const auto& s : manifest.at("sets")) total += s.at("n").get<size_t>();

    FeatureCorpus corpus;
    corpus.features = Tensor(total, static_cast<size_t>(dim));
    bool any_classes = false;
    for (const auto& s : manifest.at("sets")) {
        if (s.contains("classes")) any_classes = true;
    }
    size_t row = 0;
    for (const auto& s : manifest.at("sets")) {
        int cond = s.at("condition").get<int>();
        Tensor block = read_bag_file((dir / s.at("file").get<std::string>()).string());
        if (block.cols() != static_cast<size_t>(dim) ||
            block.rows() != s.at("n").get<size_t>()) {
            throw format_error("corpus set does not match manifest: " +
                               s.at("file").get<std::string>());
        }
        std::vector<int> classes;
        if (s.contains("classes")) classes = s.at("classes").get<std::vector<int>>();
        for (size_t r = 0; r < block.rows(); ++r) {
            for (size_t c = 0; c < block.cols(); ++c) {
                corpus.features.at(row, c) = block.at(r, c);
            }
            corpus.condition.push_back(cond);
            if (any_classes) {
                corpus.instance_class.push_back(classes.empty() ? -1 : classes[r]);
            }
            ++row;
        }
    }
    return corpus;
}

NoisedBatch make_noised_batch(const Tensor& z0_rows, const NoiseSchedule& sched, Rng& rng) {
    if (z0_rows.rows() == 0) {
        throw std::invalid_argument("make_noised_batch: empty batch");
    }
    NoisedBatch nb;
    nb.t.resize(z0_rows.rows());
    for (auto& t : nb.t) {
        t = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(sched.T)));
    }
    nb.eps = gaussian_like(z0_rows.rows(), z0_rows.cols(), rng);
    nb.z_t = q_sample_rows(z0_rows, nb.t, nb.eps, sched);
    return nb;
}

double dae_loss_with(const BatchDenoiser& denoiser, const Tensor& z0_rows,
                     const std::vector<int>& y, const NoiseSchedule& sched, Rng& rng) {
    if (z0_rows.rows() == 0) throw std::invalid_argument("dae_loss: empty batch");
    if (y.size() != z0_rows.rows()) {
        throw std::invalid_argument("dae_loss: one condition per row required");
    }
    NoisedBatch nb = make_noised_batch(z0_rows, sched, rng);
    Tensor eps_hat = denoiser(nb.z_t, nb.t, y);
    if (!eps_hat.same_shape(nb.eps)) {
        throw std::invalid_argument("dae_loss: denoiser output shape mismatch");
    }
    double s = 0.0;
    for (size_t i = 0; i < eps_hat.numel(); ++i) {
        double d = nb.eps[i] - eps_hat[i];
        s += d * d;
    }
    return s / static_cast<double>(eps_hat.numel());
}

double dae_loss(const DenoiserParams& params, const Tensor& z0_rows,
                const std::vector<int>& y, const NoiseSchedule& sched, Rng& rng) {
    return dae_loss_with(
        [&](const Tensor& z_t, const std::vector<int>& t, const std::vector<int>& yy) {
            Tape tape;
            DenoiserTapeParams reg = register_denoiser(tape, params);
            int zt = tape.input(z_t);
            return tape.value(denoiser_forward(tape, reg, params.cfg, zt, t, yy));
        },
        z0_rows, y, sched, rng);
}

std::pair<DenoiserParams, DaeTrainLog> train_dae(const FeatureCorpus& standardized,
                                                 const DaeTrainConfig& cfg,
                                                 const FeatureCorpus* frozen_val) {
    const size_t n = standardized.size();
    if (cfg.batch_size < 1) throw std::invalid_argument("train_dae: batch size must be >= 1");
    if (cfg.epochs < 0) throw std::invalid_argument("train_dae: epochs must be >= 0");
    if (n < static_cast<size_t>(cfg.batch_size)) {
        throw std::invalid_argument("train_dae: corpus smaller than one batch");
    }
    if (standardized.condition.size() != n) {
        throw std::invalid_argument("train_dae: condition list size mismatch");
    }

    DenoiserConfig arch;
    arch.dim = standardized.dim();
    arch.depth = cfg.depth;
    arch.width = cfg.width;
    arch.embed = cfg.embed;
    arch.conditional = cfg.conditional;
    DenoiserParams params = init_denoiser(arch, cfg.seed);
    NoiseSchedule sched = make_cosine_schedule(cfg.schedule_T, cfg.schedule_s);

    AdamConfig opt;
    opt.lr = cfg.base_lr * cfg.batch_size;
    std::vector<Tensor*> param_ptrs = params.parameters();
    AdamState adam = make_adam_state(opt, param_ptrs);

    Rng shuffle_rng(mix_seed({cfg.seed, static_cast<uint64_t>(StreamKind::Shuffle)}));
    Rng noise_rng(mix_seed({cfg.seed, static_cast<uint64_t>(StreamKind::Noise)}));

    // frozen validation batch: one (t, eps) draw, re-evaluated every epoch
    NoisedBatch val_nb;
    std::vector<int> val_y;
    if (frozen_val) {
        if (frozen_val->size() == 0 || frozen_val->dim() != standardized.dim()) {
            throw std::invalid_argument("train_dae: bad frozen validation corpus");
        }
        Rng val_rng(mix_seed({cfg.seed, static_cast<uint64_t>(StreamKind::Data)}));
        val_nb = make_noised_batch(frozen_val->features, sched, val_rng);
        val_y = frozen_val->condition;
    }
    auto frozen_eval = [&]() {
        Tape tape;
        DenoiserTapeParams reg = register_denoiser(tape, params);
        int zt = tape.input(val_nb.z_t);
        int eps_hat = denoiser_forward(tape, reg, arch, zt, val_nb.t, val_y);
        return tape.value(tape.sq_err_mean(eps_hat, tape.input(val_nb.eps))).item();
    };

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    const size_t b = static_cast<size_t>(cfg.batch_size);
    const size_t d = static_cast<size_t>(standardized.dim());

    DaeTrainLog log;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.lr_decay) {
            double frac = static_cast<double>(epoch) / cfg.epochs;
            adam.cfg.lr = opt.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
        }
        for (size_t i = n; i > 1; --i) {
            size_t j = shuffle_rng.next_below(i);
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        size_t batches = 0;
        for (size_t start = 0; start + b <= n; start += b) {
            Tensor z0(b, d);
            std::vector<int> y(b);
            for (size_t r = 0; r < b; ++r) {
                size_t src = order[start + r];
                for (size_t c = 0; c < d; ++c) z0.at(r, c) = standardized.features.at(src, c);
                y[r] = standardized.condition[src];
            }
            NoisedBatch nb = make_noised_batch(z0, sched, noise_rng);

            Tape tape;
            DenoiserTapeParams reg = register_denoiser(tape, params);
            int zt = tape.input(nb.z_t);
            int eps_hat = denoiser_forward(tape, reg, arch, zt, nb.t, y);
            int eps = tape.input(nb.eps);
            int loss = tape.sq_err_mean(eps_hat, eps);
            double loss_v = tape.value(loss).item();
            if (!std::isfinite(loss_v)) {
                throw numeric_error("train_dae: non-finite loss at epoch " +
                                    std::to_string(epoch));
            }
            std::vector<Tensor> grads = tape.gradients(loss, reg.ids);
            adam_step(adam, param_ptrs, grads);
            epoch_loss += loss_v;
            ++batches;
        }
        log.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
        if (frozen_val) log.frozen_val_loss.push_back(frozen_eval());
    }
    return {std::move(params), std::move(log)};
}

}  // namespace augdiff
