#include "augdiff/mil.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "augdiff/common.hpp"
#include "augdiff/metrics.hpp"

using nlohmann::json;

namespace augdiff {

namespace {

constexpr char kMilMagic[4] = {'A', 'U', 'G', 'M'};
constexpr double kProbClamp = 1e-12;

Tensor xavier_uniform(size_t rows, size_t cols, Rng& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Tensor t(rows, cols);
    for (size_t i = 0; i < t.numel(); ++i) {
        t[i] = (2.0 * rng.next_double() - 1.0) * bound;
    }
    return t;
}

// one-hot mask of each row's max entry (ties -> lowest column); multiplying
// by it and row-summing realizes the max with the correct subgradient
Tensor row_argmax_mask(const Tensor& m) {
    Tensor mask(m.rows(), m.cols());
    for (size_t r = 0; r < m.rows(); ++r) {
        size_t best = 0;
        for (size_t c = 1; c < m.cols(); ++c) {
            if (m.at(r, c) > m.at(r, best)) best = c;
        }
        mask.at(r, best) = 1.0;
    }
    return mask;
}

std::vector<size_t> col_argmax(const Tensor& m) {
    std::vector<size_t> out(m.cols(), 0);
    for (size_t c = 0; c < m.cols(); ++c) {
        for (size_t r = 1; r < m.rows(); ++r) {
            if (m.at(r, c) > m.at(out[c], c)) out[c] = r;
        }
    }
    return out;
}

}  // namespace

const char* mil_variant_name(MilVariant v) {
    switch (v) {
        case MilVariant::Amil: return "amil";
        case MilVariant::LossAttn: return "lossattn";
        case MilVariant::Dsmil: return "dsmil";
    }
    return "amil";
}

MilVariant mil_variant_from_name(const std::string& name) {
    if (name == "amil") return MilVariant::Amil;
    if (name == "lossattn") return MilVariant::LossAttn;
    if (name == "dsmil") return MilVariant::Dsmil;
    throw std::invalid_argument("unknown MIL variant: " + name);
}

const char* aug_policy_name(AugPolicy p) {
    switch (p) {
        case AugPolicy::None: return "none";
        case AugPolicy::AugDiff: return "augdiff";
        case AugPolicy::Mixup: return "mixup";
        case AugPolicy::PseudoBag: return "pseudobag";
        case AugPolicy::Offline: return "offline";
    }
    return "none";
}

AugPolicy aug_policy_from_name(const std::string& name) {
    if (name == "none") return AugPolicy::None;
    if (name == "augdiff") return AugPolicy::AugDiff;
    if (name == "mixup") return AugPolicy::Mixup;
    if (name == "pseudobag") return AugPolicy::PseudoBag;
    if (name == "offline") return AugPolicy::Offline;
    throw std::invalid_argument("unknown augmentation policy: " + name);
}

std::vector<Tensor*> MilParams::parameters() {
    switch (arch.variant) {
        case MilVariant::Amil:
            return {&amil_v, &amil_u, &amil_w, &amil_cls};
        case MilVariant::LossAttn:
            return {&la_w};
        case MilVariant::Dsmil:
            return {&ds_wi, &ds_wq, &ds_wv, &ds_wb};
    }
    return {};
}

std::vector<const Tensor*> MilParams::parameters() const {
    auto mut = const_cast<MilParams*>(this)->parameters();
    return std::vector<const Tensor*>(mut.begin(), mut.end());
}

std::vector<std::string> MilParams::parameter_names() const {
    switch (arch.variant) {
        case MilVariant::Amil:
            return {"v", "u", "w", "cls"};
        case MilVariant::LossAttn:
            return {"w"};
        case MilVariant::Dsmil:
            return {"wi", "wq", "wv", "wb"};
    }
    return {};
}

MilParams init_mil(const MilArch& arch, uint64_t seed) {
    if (arch.dim < 1 || arch.classes < 2) {
        throw std::invalid_argument("init_mil: need dim >= 1 and classes >= 2");
    }
    Rng rng(mix_seed({seed, static_cast<uint64_t>(StreamKind::Init),
                      static_cast<uint64_t>(arch.variant)}));
    MilParams p;
    p.arch = arch;
    const size_t d = static_cast<size_t>(arch.dim);
    const size_t c = static_cast<size_t>(arch.classes);
    switch (arch.variant) {
        case MilVariant::Amil: {
            const size_t a = static_cast<size_t>(arch.attn_dim);
            p.amil_v = xavier_uniform(a, d, rng);
            p.amil_u = xavier_uniform(a, d, rng);
            p.amil_w = xavier_uniform(1, a, rng);
            p.amil_cls = xavier_uniform(c, d, rng);
            break;
        }
        case MilVariant::LossAttn:
            p.la_w = xavier_uniform(c, d, rng);
            break;
        case MilVariant::Dsmil: {
            const size_t hq = static_cast<size_t>(arch.q_dim);
            const size_t hv = static_cast<size_t>(arch.v_dim);
            p.ds_wi = xavier_uniform(c, d, rng);
            p.ds_wq = xavier_uniform(hq, d, rng);
            p.ds_wv = xavier_uniform(hv, d, rng);
            p.ds_wb = xavier_uniform(c, hv, rng);
            break;
        }
    }
    return p;
}

MilForwardNodes mil_forward_tape(Tape& tape, const std::vector<int>& param_ids,
                                 const MilParams& meta, int bag_node) {
    const Tensor& bag = tape.value(bag_node);
    if (bag.rows() == 0) throw std::invalid_argument("mil forward: empty bag");
    if (bag.cols() != static_cast<size_t>(meta.arch.dim)) {
        throw std::invalid_argument("mil forward: feature dimension mismatch");
    }
    MilForwardNodes out;
    switch (meta.arch.variant) {
        case MilVariant::Amil: {
            const int v = param_ids[0], u = param_ids[1], w = param_ids[2],
                      cls = param_ids[3];
            int gate = tape.mul(tape.tanh(tape.matmul(bag_node, v, false, true)),
                                tape.sigmoid(tape.matmul(bag_node, u, false, true)));
            int scores = tape.matmul(w, gate, false, true);  // 1 x N
            int attn = tape.softmax_rows(scores);
            int emb = tape.matmul(attn, bag_node);  // 1 x D
            int logits = tape.matmul(emb, cls, false, true);
            out.p = tape.softmax_rows(logits);
            out.attention = tape.value(attn);
            break;
        }
        case MilVariant::LossAttn: {
            const int w = param_ids[0];
            int inst_logits = tape.matmul(bag_node, w, false, true);  // N x C
            Tensor mask = row_argmax_mask(tape.value(inst_logits));
            int masked = tape.mul(inst_logits, tape.input(mask));
            int ones_c = tape.input(Tensor::full(1, static_cast<size_t>(meta.arch.classes), 1.0));
            int row_max = tape.matmul(ones_c, masked, false, true);  // 1 x N
            int attn = tape.softmax_rows(tape.scale(row_max, 1.0 / meta.arch.temperature));
            int bag_logits = tape.matmul(attn, inst_logits);  // 1 x C
            out.p = tape.softmax_rows(bag_logits);
            out.attention = tape.value(attn);
            break;
        }
        case MilVariant::Dsmil: {
            const int wi = param_ids[0], wq = param_ids[1], wv = param_ids[2],
                      wb = param_ids[3];
            int inst_logits = tape.matmul(bag_node, wi, false, true);  // N x C
            std::vector<size_t> critical = col_argmax(tape.value(inst_logits));
            int q = tape.matmul(bag_node, wq, false, true);   // N x Hq
            int vv = tape.matmul(bag_node, wv, false, true);  // N x Hv
            int q_crit = tape.gather_rows(q, critical);       // C x Hq
            int attn = tape.softmax_rows(tape.matmul(q_crit, q, false, true));  // C x N
            int bag_emb = tape.matmul(attn, vv);  // C x Hv
            int ones_hv =
                tape.input(Tensor::full(1, static_cast<size_t>(meta.arch.v_dim), 1.0));
            int bag_logits = tape.matmul(ones_hv, tape.mul(wb, bag_emb), false, true);
            // critical instance logits: diagonal of the gathered rows
            int crit_rows = tape.gather_rows(inst_logits, critical);  // C x C
            int ones_c = tape.input(Tensor::full(1, static_cast<size_t>(meta.arch.classes), 1.0));
            int diag = tape.mul(crit_rows,
                                tape.input(Tensor::identity(static_cast<size_t>(meta.arch.classes))));
            int max_inst = tape.matmul(ones_c, diag, false, true);  // 1 x C
            int final_logits = tape.scale(tape.add(bag_logits, max_inst), 0.5);
            out.p = tape.softmax_rows(final_logits);
            out.attention = tape.value(attn);
            break;
        }
    }
    return out;
}

namespace {

MilForward run_forward(const MilParams& params, const Tensor& bag) {
    Tape tape;
    std::vector<int> ids;
    for (const Tensor* t : params.parameters()) ids.push_back(tape.param(*t));
    int bag_node = tape.input(bag);
    MilForwardNodes nodes = mil_forward_tape(tape, ids, params, bag_node);
    return {tape.value(nodes.p), nodes.attention};
}

}  // namespace

MilForward amil_forward(const MilParams& params, const Tensor& bag) {
    if (params.arch.variant != MilVariant::Amil) {
        throw std::invalid_argument("amil_forward: params are not AMIL");
    }
    return run_forward(params, bag);
}

MilForward lossattn_forward(const MilParams& params, const Tensor& bag) {
    if (params.arch.variant != MilVariant::LossAttn) {
        throw std::invalid_argument("lossattn_forward: params are not LossAttn");
    }
    return run_forward(params, bag);
}

MilForward dsmil_forward(const MilParams& params, const Tensor& bag) {
    if (params.arch.variant != MilVariant::Dsmil) {
        throw std::invalid_argument("dsmil_forward: params are not DSMIL");
    }
    return run_forward(params, bag);
}

MilForward mil_forward(const MilParams& params, const Tensor& bag) {
    return run_forward(params, bag);
}

double mil_loss(const Tensor& p, int label) {
    if (p.rows() != 1) throw std::invalid_argument("mil_loss: p must be 1 x C");
    if (label < 0 || static_cast<size_t>(label) >= p.cols()) {
        throw std::invalid_argument("mil_loss: label out of range");
    }
    return -std::log(std::max(p[static_cast<size_t>(label)], kProbClamp));
}

Bag mixup_augment(const Bag& bag, double alpha, Rng& rng, bool* too_small) {
    if (alpha <= 0.0) throw std::invalid_argument("mixup_augment: alpha must be > 0");
    if (too_small) *too_small = false;
    if (bag.size() < 2) {
        if (too_small) *too_small = true;
        return bag;
    }
    Bag out = bag;
    const size_t n = bag.size();
    for (size_t i = 0; i < n; ++i) {
        double lambda = rng.next_beta(alpha, alpha);
        size_t j = rng.next_below(n - 1);
        if (j >= i) ++j;
        for (size_t c = 0; c < bag.dim(); ++c) {
            out.features.at(i, c) =
                lambda * bag.features.at(i, c) + (1.0 - lambda) * bag.features.at(j, c);
        }
    }
    return out;
}

std::vector<Bag> pseudobag_split(const Bag& bag, int m, Rng& rng) {
    const size_t n = bag.size();
    if (m < 1 || static_cast<size_t>(m) > n) {
        throw std::invalid_argument("pseudobag_split: require 1 <= m <= N");
    }
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    for (size_t i = n; i > 1; --i) {
        size_t j = rng.next_below(i);
        std::swap(order[i - 1], order[j]);
    }
    const size_t mm = static_cast<size_t>(m);
    const size_t base = n / mm;
    const size_t extra = n % mm;  // first `extra` pieces get one more
    std::vector<Bag> out;
    out.reserve(mm);
    size_t cursor = 0;
    for (size_t k = 0; k < mm; ++k) {
        size_t sz = base + (k < extra ? 1 : 0);
        Bag piece;
        piece.id = bag.id + "#p" + std::to_string(k);
        piece.label = bag.label;
        piece.features = Tensor(sz, bag.dim());
        for (size_t r = 0; r < sz; ++r) {
            for (size_t c = 0; c < bag.dim(); ++c) {
                piece.features.at(r, c) = bag.features.at(order[cursor + r], c);
            }
        }
        cursor += sz;
        out.push_back(std::move(piece));
    }
    return out;
}

std::pair<int, Tensor> predict(const MilParams& params, const Tensor& bag) {
    MilForward f = mil_forward(params, bag);
    size_t best = 0;
    for (size_t c = 1; c < f.p.cols(); ++c) {
        if (f.p[c] > f.p[best]) best = c;  // ties keep the lowest index
    }
    return {static_cast<int>(best), f.p};
}

MilTrainResult train_mil(const std::vector<Bag>& train_bags,
                         const std::vector<Bag>& val_bags, const MilTrainConfig& cfg,
                         const DaeModel* dae) {
    if (train_bags.empty() || val_bags.empty()) {
        throw std::invalid_argument("train_mil: empty train or val set");
    }
    for (const Bag& b : train_bags) {
        if (b.dim() != static_cast<size_t>(cfg.arch.dim)) {
            throw std::invalid_argument("train_mil: bag dimension mismatch");
        }
    }
    if (cfg.patience < 1) throw std::invalid_argument("train_mil: patience must be >= 1");
    if (cfg.validation_metric != "macro_auc") {
        throw std::invalid_argument("train_mil: unsupported validation metric");
    }
    if (cfg.policy == AugPolicy::AugDiff) {
        if (!dae) throw missing_artifact_error("train_mil: augdiff policy needs a DAE");
        if (dae->params.cfg.dim != cfg.arch.dim) {
            throw std::invalid_argument("train_mil: DAE dimension mismatch");
        }
    }

    MilParams params = init_mil(cfg.arch, cfg.seed);
    std::vector<Tensor*> param_ptrs = params.parameters();
    AdamState adam = make_adam_state(cfg.opt, param_ptrs);

    MilTrainResult result;
    result.params = params;
    double best = -std::numeric_limits<double>::infinity();
    int since_best = 0;

    auto eval_val = [&]() {
        Tensor probs(val_bags.size(), static_cast<size_t>(cfg.arch.classes));
        std::vector<int> labels(val_bags.size());
        for (size_t i = 0; i < val_bags.size(); ++i) {
            MilForward f = mil_forward(params, val_bags[i].features);
            for (size_t c = 0; c < probs.cols(); ++c) probs.at(i, c) = f.p[c];
            labels[i] = val_bags[i].label;
        }
        return macro_auc(probs, labels);
    };

    AugmentConfig aug = cfg.augdiff;
    aug.seed = cfg.seed;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const uint64_t e = static_cast<uint64_t>(epoch);
        std::vector<size_t> order(train_bags.size());
        std::iota(order.begin(), order.end(), size_t{0});
        Rng shuffle = derive_stream(cfg.seed, e, 0, 0, StreamKind::Shuffle);
        for (size_t i = order.size(); i > 1; --i) {
            size_t j = shuffle.next_below(i);
            std::swap(order[i - 1], order[j]);
        }

        double loss_sum = 0.0;
        size_t loss_count = 0;
        auto train_one = [&](const Bag& bag) {
            Tape tape;
            std::vector<int> ids;
            for (Tensor* t : param_ptrs) ids.push_back(tape.param(*t));
            int bag_node = tape.input(bag.features);
            MilForwardNodes nodes = mil_forward_tape(tape, ids, params, bag_node);
            int loss = tape.nll(nodes.p, bag.label);
            double loss_v = tape.value(loss).item();
            if (!std::isfinite(loss_v)) {
                throw numeric_error("train_mil: non-finite loss at epoch " +
                                    std::to_string(epoch));
            }
            std::vector<Tensor> grads = tape.gradients(loss, ids);
            adam_step(adam, param_ptrs, grads);
            loss_sum += loss_v;
            ++loss_count;
        };

        for (size_t idx : order) {
            const Bag& bag = train_bags[idx];
            switch (cfg.policy) {
                case AugPolicy::None:
                case AugPolicy::Offline:
                    train_one(bag);
                    break;
                case AugPolicy::AugDiff: {
                    AugmentedBag aug_bag = augment_bag(bag, *dae, aug, e);
                    train_one(aug_bag.bag);
                    break;
                }
                case AugPolicy::Mixup: {
                    Rng rng = derive_stream(cfg.seed, e, fnv1a64(bag.id), 0,
                                            StreamKind::Mixup);
                    train_one(mixup_augment(bag, cfg.mixup_alpha, rng));
                    break;
                }
                case AugPolicy::PseudoBag: {
                    Rng rng = derive_stream(cfg.seed, e, fnv1a64(bag.id), 0,
                                            StreamKind::Pseudobag);
                    int m = std::min<int>(cfg.pseudobag_m, static_cast<int>(bag.size()));
                    for (const Bag& piece : pseudobag_split(bag, m, rng)) {
                        train_one(piece);
                    }
                    break;
                }
            }
        }

        double val = eval_val();
        result.history.push_back({loss_sum / static_cast<double>(loss_count), val});
        result.epochs_run = epoch;
        if (val > best) {
            best = val;
            result.params = params;
            result.best_epoch = epoch;
            result.best_val_auc = val;
            since_best = 0;
        } else {
            ++since_best;
            if (since_best >= cfg.patience) break;
        }
    }
    return result;
}

void save_mil_checkpoint(const std::string& path, const MilParams& params) {
    json header;
    header["version"] = 1;
    header["variant"] = mil_variant_name(params.arch.variant);
    header["dim"] = params.arch.dim;
    header["classes"] = params.arch.classes;
    header["attn_dim"] = params.arch.attn_dim;
    header["q_dim"] = params.arch.q_dim;
    header["v_dim"] = params.arch.v_dim;
    header["temperature"] = params.arch.temperature;
    auto tensors = params.parameters();
    auto names = params.parameter_names();
    header["tensors"] = json::array();
    for (size_t i = 0; i < tensors.size(); ++i) {
        header["tensors"].push_back({{"name", names[i]},
                                     {"rows", tensors[i]->rows()},
                                     {"cols", tensors[i]->cols()}});
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open for writing: " + path);
    out.write(kMilMagic, 4);
    std::string hs = header.dump();
    uint32_t ints[2] = {1u, static_cast<uint32_t>(hs.size())};
    for (uint32_t v : ints) {
        unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
        out.write(reinterpret_cast<const char*>(b), 4);
    }
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const Tensor* t : tensors) {
        std::vector<float> buf(t->numel());
        for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>((*t)[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * 4));
    }
    if (!out) throw io_error("write failed: " + path);
}

MilParams load_mil_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw missing_artifact_error("MIL checkpoint not found: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMilMagic, 4) != 0) {
        throw format_error("bad MIL checkpoint magic: " + path);
    }
    auto read_u32 = [&]() {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (!in) throw io_error("truncated MIL checkpoint: " + path);
        return static_cast<uint32_t>(b[0]) | (b[1] << 8) | (b[2] << 16) | (b[3] << 24);
    };
    if (read_u32() != 1) throw format_error("unsupported MIL checkpoint version");
    uint32_t hlen = read_u32();
    std::string hs(hlen, '\0');
    in.read(hs.data(), hlen);
    if (!in) throw io_error("truncated MIL checkpoint header: " + path);
    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception& e) {
        throw format_error("MIL header parse error: " + std::string(e.what()));
    }
    MilArch arch;
    arch.variant = mil_variant_from_name(header.at("variant").get<std::string>());
    arch.dim = header.at("dim").get<int>();
    arch.classes = header.at("classes").get<int>();
    arch.attn_dim = header.at("attn_dim").get<int>();
    arch.q_dim = header.at("q_dim").get<int>();
    arch.v_dim = header.at("v_dim").get<int>();
    arch.temperature = header.at("temperature").get<double>();
    MilParams params = init_mil(arch, 0);
    auto tensors = params.parameters();
    auto names = params.parameter_names();
    const auto& decl = header.at("tensors");
    if (decl.size() != tensors.size()) throw format_error("MIL tensor list mismatch");
    for (size_t i = 0; i < tensors.size(); ++i) {
        if (decl[i].at("name").get<std::string>() != names[i] ||
            decl[i].at("rows").get<size_t>() != tensors[i]->rows() ||
            decl[i].at("cols").get<size_t>() != tensors[i]->cols()) {
            throw format_error("MIL checkpoint tensor header mismatch: " + names[i]);
        }
        std::vector<float> buf(tensors[i]->numel());
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * 4));
        if (!in) throw io_error("truncated MIL checkpoint payload: " + path);
        for (size_t j = 0; j < buf.size(); ++j) (*tensors[i])[j] = buf[j];
    }
    return params;
}

}  // namespace augdiff
