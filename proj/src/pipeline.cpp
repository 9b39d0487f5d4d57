#include "augdiff/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "augdiff/common.hpp"
#include "augdiff/pca.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace augdiff {

namespace {

// ---------------------------------------------------------------- schema --

struct KeySchema {
    std::map<std::string, KeySchema> children;
    bool leaf = false;
    bool open_object = false;  // arbitrary child keys allowed
};

KeySchema leaf() { return {{}, true, false}; }

const KeySchema& config_schema() {
    static const KeySchema schema = [] {
        KeySchema s;
        s.children["out_dir"] = leaf();
        s.children["seed"] = leaf();
        s.children["seeds"] = leaf();

        KeySchema synth;
        for (const char* k :
             {"dim", "n_classes", "centroid_scale", "instance_std", "rotation_norm",
              "bias_norm_frac", "noise_frac", "corpus_per_class", "bag_size_min",
              "bag_size_max", "witness_rate", "train_bags", "val_bags", "test_bags"}) {
            synth.children[k] = leaf();
        }
        s.children["synthetic"] = synth;

        KeySchema dae;
        for (const char* k : {"batch_size", "base_lr", "epochs", "conditional",
                              "schedule_T", "schedule_s", "depth", "width", "embed",
                              "lr_decay"}) {
            dae.children[k] = leaf();
        }
        s.children["dae"] = dae;

        KeySchema aug;
        for (const char* k : {"T", "K", "condition_mode", "condition"}) {
            aug.children[k] = leaf();
        }
        s.children["augment"] = aug;

        KeySchema mil;
        for (const char* k :
             {"variant", "classes", "attn_dim", "q_dim", "v_dim", "temperature",
              "policy", "mixup_alpha", "pseudobag_m", "lr", "max_epochs", "patience",
              "validation_metric"}) {
            mil.children[k] = leaf();
        }
        s.children["mil"] = mil;

        KeySchema split;
        for (const char* k : {"type", "k", "train_frac", "val_frac"}) {
            split.children[k] = leaf();
        }
        s.children["split"] = split;

        KeySchema sweep;
        for (const char* k : {"policies", "variants", "k_fractions", "condition_modes"}) {
            sweep.children[k] = leaf();
        }
        s.children["sweep"] = sweep;

        KeySchema bench;
        for (const char* k : {"sizes", "extractor_cost_per_instance_ms"}) {
            bench.children[k] = leaf();
        }
        s.children["bench"] = bench;

        KeySchema paths;
        for (const char* k : {"manifest", "corpus", "dae_checkpoint", "mil_checkpoint",
                              "splits", "eval_split"}) {
            paths.children[k] = leaf();
        }
        s.children["paths"] = paths;

        KeySchema projection;
        projection.children["inputs"] = leaf();
        s.children["projection"] = projection;
        return s;
    }();
    return schema;
}

void validate_keys(const json& j, const KeySchema& schema, const std::string& where) {
    if (schema.leaf || schema.open_object) return;
    if (!j.is_object()) {
        throw config_error("config: expected an object at " + where);
    }
    for (const auto& [key, value] : j.items()) {
        auto it = schema.children.find(key);
        if (it == schema.children.end()) {
            throw config_error("config: unknown key '" + where + key + "'");
        }
        validate_keys(value, it->second, where + key + ".");
    }
}

// ------------------------------------------------------------- overrides --

void apply_override(json& root, const std::string& kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) {
        throw config_error("override must be key=value: " + kv);
    }
    std::string key = kv.substr(0, eq);
    std::string value = kv.substr(eq + 1);
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value;  // plain string
    }
    json* cursor = &root;
    size_t start = 0;
    for (;;) {
        size_t dot = key.find('.', start);
        std::string part = key.substr(start, dot == std::string::npos
                                                 ? std::string::npos
                                                 : dot - start);
        if (part.empty()) throw config_error("override has an empty path segment: " + kv);
        if (dot == std::string::npos) {
            (*cursor)[part] = parsed;
            break;
        }
        cursor = &(*cursor)[part];
        start = dot + 1;
    }
}

// ------------------------------------------------------------ utilities --

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw config_error("config: bad value for '" + key + "': " + e.what());
    }
}

const json& require_section(const RunConfig& cfg, const std::string& name) {
    if (!cfg.raw.contains(name)) {
        throw config_error("config: missing required section '" + name + "'");
    }
    return cfg.raw.at(name);
}

std::string require_path(const RunConfig& cfg, const std::string& key) {
    const json& paths = require_section(cfg, "paths");
    if (!paths.contains(key)) {
        throw config_error("config: missing required path 'paths." + key + "'");
    }
    return paths.at(key).get<std::string>();
}

void write_text(const std::string& path, const std::string& text) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    out << text;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct RunManifest {
    std::string subcommand;
    const RunConfig* cfg;
    json inputs = json::object();
    json outputs = json::array();

    void add_input(const std::string& name, const std::string& path) {
        inputs[name] = {{"path", path}, {"fnv64", hex_u64(hash_file(path))}};
    }
    void add_output(const std::string& path) { outputs.push_back(path); }
    void write() const {
        json j;
        j["subcommand"] = subcommand;
        j["code_version"] = kCodeVersion;
        j["config_hash"] = hex_u64(cfg->config_hash);
        j["seed"] = cfg->seed;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        write_text((fs::path(cfg->out_dir) / "run_manifest.json").string(),
                   j.dump(2) + "\n");
    }
};

std::vector<Bag> bags_for_fold(const std::string& manifest_path, const Splits& splits,
                               size_t fold) {
    if (fold >= splits.folds.size()) {
        throw config_error("split fold index out of range");
    }
    return load_bags(manifest_path, &splits.folds[fold]);
}

DaeModel load_dae_for(const RunConfig& cfg, RunManifest& rm) {
    std::string path = require_path(cfg, "dae_checkpoint");
    DaeModel model = load_dae_checkpoint(path);
    rm.add_input("dae_checkpoint", path);
    return model;
}

}  // namespace

// --------------------------------------------------------------- loading --

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides,
                          const std::optional<std::string>& out_override,
                          const std::optional<uint64_t>& seed_override) {
    std::ifstream in(path);
    if (!in) throw missing_artifact_error("config file not found: " + path);
    RunConfig cfg;
    try {
        in >> cfg.raw;
    } catch (const json::exception& e) {
        throw config_error("config parse error: " + std::string(e.what()));
    }
    for (const auto& kv : overrides) apply_override(cfg.raw, kv);
    validate_keys(cfg.raw, config_schema(), "");

    cfg.out_dir = get_or<std::string>(cfg.raw, "out_dir", "out");
    if (out_override) cfg.out_dir = *out_override;
    cfg.seed = get_or<uint64_t>(cfg.raw, "seed", 0);
    if (seed_override) cfg.seed = *seed_override;
    cfg.seeds = get_or<std::vector<uint64_t>>(cfg.raw, "seeds", {});
    if (cfg.seeds.empty()) cfg.seeds = {cfg.seed};

    json canonical = cfg.raw;
    canonical["seed"] = cfg.seed;  // overrides participate in the hash
    cfg.config_hash = fnv1a64(canonical.dump());
    return cfg;
}

SyntheticSpec synthetic_from_config(const RunConfig& cfg) {
    const json& s = require_section(cfg, "synthetic");
    SyntheticSpec spec;
    spec.dim = get_or<int>(s, "dim", 512);
    spec.n_classes = get_or<int>(s, "n_classes", 3);
    spec.centroid_scale = get_or<double>(s, "centroid_scale", 2.0);
    spec.instance_std = get_or<double>(s, "instance_std", 1.0);
    spec.rotation_norm = get_or<double>(s, "rotation_norm", 0.1);
    spec.bias_norm_frac = get_or<double>(s, "bias_norm_frac", 0.2);
    spec.noise_frac = get_or<double>(s, "noise_frac", 0.05);
    spec.corpus_per_class = get_or<int>(s, "corpus_per_class", 2400);
    spec.bag_size_min = get_or<int>(s, "bag_size_min", 60);
    spec.bag_size_max = get_or<int>(s, "bag_size_max", 180);
    spec.witness_rate = get_or<double>(s, "witness_rate", 0.05);
    spec.train_bags = get_or<int>(s, "train_bags", 200);
    spec.val_bags = get_or<int>(s, "val_bags", 50);
    spec.test_bags = get_or<int>(s, "test_bags", 50);
    spec.seed = cfg.seed;
    return spec;
}

DaeTrainConfig dae_from_config(const RunConfig& cfg) {
    const json& d = require_section(cfg, "dae");
    DaeTrainConfig out;
    out.batch_size = get_or<int>(d, "batch_size", 1200);
    out.base_lr = get_or<double>(d, "base_lr", 5.0e-8);
    out.epochs = get_or<int>(d, "epochs", 1);
    out.conditional = get_or<bool>(d, "conditional", true);
    out.schedule_T = get_or<int>(d, "schedule_T", 20);
    out.schedule_s = get_or<double>(d, "schedule_s", 0.008);
    out.depth = get_or<int>(d, "depth", 4);
    out.width = get_or<int>(d, "width", 256);
    out.embed = get_or<int>(d, "embed", 64);
    out.lr_decay = get_or<bool>(d, "lr_decay", false);
    out.seed = cfg.seed;
    if (out.epochs < 1) throw config_error("config: dae.epochs must be >= 1");
    if (out.batch_size < 1) throw config_error("config: dae.batch_size must be >= 1");
    return out;
}

AugmentConfig augment_from_config(const RunConfig& cfg) {
    const json& a = require_section(cfg, "augment");
    AugmentConfig out;
    out.T = get_or<int>(a, "T", 20);
    out.K = get_or<int>(a, "K", 4);
    out.mode = condition_mode_from_name(
        get_or<std::string>(a, "condition_mode", "unconditional"));
    out.condition = get_or<int>(a, "condition", 0);
    out.seed = cfg.seed;
    if (out.K < 0 || out.K >= out.T) {
        throw config_error("config: augment requires 0 <= K < T");
    }
    return out;
}

MilTrainConfig mil_from_config(const RunConfig& cfg) {
    const json& m = require_section(cfg, "mil");
    MilTrainConfig out;
    out.arch.variant = mil_variant_from_name(get_or<std::string>(m, "variant", "amil"));
    out.arch.classes = get_or<int>(m, "classes", 2);
    out.arch.attn_dim = get_or<int>(m, "attn_dim", 64);
    out.arch.q_dim = get_or<int>(m, "q_dim", 64);
    out.arch.v_dim = get_or<int>(m, "v_dim", 64);
    out.arch.temperature = get_or<double>(m, "temperature", 1.0);
    out.policy = aug_policy_from_name(get_or<std::string>(m, "policy", "none"));
    out.mixup_alpha = get_or<double>(m, "mixup_alpha", 1.0);
    out.pseudobag_m = get_or<int>(m, "pseudobag_m", 4);
    out.opt.lr = get_or<double>(m, "lr", 1e-4);
    out.max_epochs = get_or<int>(m, "max_epochs", 200);
    out.patience = get_or<int>(m, "patience", 10);
    out.validation_metric = get_or<std::string>(m, "validation_metric", "macro_auc");
    out.seed = cfg.seed;
    if (out.patience < 1) throw config_error("config: mil.patience must be >= 1");
    if (cfg.raw.contains("augment")) {
        out.augdiff = augment_from_config(cfg);
    }
    return out;
}

SplitPlan split_from_config(const RunConfig& cfg) {
    SplitPlan plan;
    if (!cfg.raw.contains("split")) {
        plan.seed = cfg.seed;
        return plan;
    }
    const json& s = cfg.raw.at("split");
    std::string type = get_or<std::string>(s, "type", "fixed");
    plan.type = type == "kfold" ? SplitPlan::Type::KFold : SplitPlan::Type::Fixed;
    plan.k = get_or<int>(s, "k", 4);
    plan.train_frac = get_or<double>(s, "train_frac", 0.7);
    plan.val_frac = get_or<double>(s, "val_frac", 0.15);
    plan.seed = cfg.seed;
    return plan;
}

// ----------------------------------------------------------- subcommands --

int cmd_gen_synthetic(const RunConfig& cfg) {
    SyntheticSpec spec = synthetic_from_config(cfg);
    finalize_spec(spec);
    fs::path out(cfg.out_dir);
    fs::create_directories(out / "bags");
    RunManifest rm{"gen-synthetic", &cfg};

    Rng corpus_rng(mix_seed({spec.seed, static_cast<uint64_t>(StreamKind::Data), 1}));
    FeatureCorpus corpus = gen_instance_corpus(spec, corpus_rng);
    write_corpus((out / "corpus").string(), corpus);
    rm.add_output("corpus/corpus.json");

    Rng task_rng(mix_seed({spec.seed, static_cast<uint64_t>(StreamKind::Data), 2}));
    MilTask task = gen_mil_task(spec, task_rng);
    for (const Bag& bag : task.bags) {
        write_bag_file((out / "bags" / (bag.id + ".augb")).string(), bag.features);
    }
    for (auto& rec : task.manifest.bags) rec.file = "bags/" + rec.file;
    write_manifest((out / "manifest.json").string(), task.manifest);
    rm.add_output("manifest.json");
    write_splits((out / "splits.json").string(), task.splits);
    rm.add_output("splits.json");

    // geometry needed by downstream diagnostics (nearest-centroid checks)
    write_bag_file((out / "centroids.augb").string(), spec.centroids);
    rm.add_output("centroids.augb");
    json meta;
    meta["dim"] = spec.dim;
    meta["n_classes"] = spec.n_classes;
    meta["centroid_scale"] = spec.centroid_scale;
    meta["instance_std"] = spec.instance_std;
    meta["witness_rate"] = spec.witness_rate;
    meta["seed"] = spec.seed;
    write_text((out / "synthetic_meta.json").string(), meta.dump(2) + "\n");
    rm.add_output("synthetic_meta.json");

    rm.write();
    return 0;
}

int cmd_train_dae(const RunConfig& cfg) {
    RunManifest rm{"train-dae", &cfg};
    std::string corpus_path = require_path(cfg, "corpus");
    FeatureCorpus corpus = read_corpus(corpus_path);
    rm.add_input("corpus", corpus_path);

    DaeTrainConfig train_cfg = dae_from_config(cfg);
    Standardizer stand = standardizer_fit(corpus.features);
    FeatureCorpus standardized = corpus;
    standardized.features = standardize(corpus.features, stand);

    auto [params, log] = train_dae(standardized, train_cfg);

    DaeModel model;
    model.params = std::move(params);
    model.schedule = make_cosine_schedule(train_cfg.schedule_T, train_cfg.schedule_s);
    model.stand = stand;

    fs::path out(cfg.out_dir);
    fs::create_directories(out);
    save_dae_checkpoint((out / "dae.ckpt").string(), model);
    rm.add_output("dae.ckpt");

    json hist;
    hist["epoch_loss"] = log.epoch_loss;
    hist["epochs"] = log.epoch_loss.size();
    hist["effective_lr"] = train_cfg.base_lr * train_cfg.batch_size;
    write_text((out / "dae_history.json").string(), hist.dump(2) + "\n");
    rm.add_output("dae_history.json");
    rm.write();
    return 0;
}

int cmd_augment(const RunConfig& cfg) {
    RunManifest rm{"augment", &cfg};
    std::string manifest_path = require_path(cfg, "manifest");
    rm.add_input("manifest", manifest_path);
    DaeModel model = load_dae_for(cfg, rm);
    std::string ckpt_hash = hex_u64(hash_file(require_path(cfg, "dae_checkpoint")));
    AugmentConfig aug = augment_from_config(cfg);

    std::vector<Bag> bags = load_bags(manifest_path);
    BagManifest src = read_manifest(manifest_path);

    fs::path out(cfg.out_dir);
    fs::create_directories(out / "bags");
    BagManifest dst;
    dst.dim = src.dim;
    json provenance = json::array();
    for (const Bag& bag : bags) {
        AugmentedBag a = augment_bag(bag, model, aug, 0, nullptr, ckpt_hash);
        std::string file = "bags/" + bag.id + ".augb";
        write_bag_file((out / file).string(), a.bag.features);
        dst.bags.push_back({bag.id, bag.label, file, static_cast<int>(bag.size())});
        provenance.push_back({{"bag", bag.id},
                              {"T", a.provenance.T},
                              {"K", a.provenance.K},
                              {"condition_mode", a.provenance.condition_mode},
                              {"condition", a.provenance.condition},
                              {"seed", a.provenance.seed},
                              {"epoch", a.provenance.epoch},
                              {"dae_checkpoint_hash", a.provenance.dae_checkpoint_hash}});
    }
    write_manifest((out / "manifest.json").string(), dst);
    rm.add_output("manifest.json");
    write_text((out / "augment_provenance.json").string(), provenance.dump(2) + "\n");
    rm.add_output("augment_provenance.json");
    rm.write();
    return 0;
}

MilRunOutput run_mil_once(const std::vector<Bag>& train_bags,
                          const std::vector<Bag>& val_bags,
                          const std::vector<Bag>& test_bags, const MilTrainConfig& cfg,
                          const DaeModel* dae) {
    auto t0 = std::chrono::steady_clock::now();
    MilRunOutput out;
    out.train = train_mil(train_bags, val_bags, cfg, dae);

    Tensor probs(test_bags.size(), static_cast<size_t>(cfg.arch.classes));
    std::vector<int> preds(test_bags.size());
    std::vector<int> labels(test_bags.size());
    for (size_t i = 0; i < test_bags.size(); ++i) {
        auto [cls, p] = predict(out.train.params, test_bags[i].features);
        preds[i] = cls;
        labels[i] = test_bags[i].label;
        for (size_t c = 0; c < probs.cols(); ++c) probs.at(i, c) = p[c];
    }
    out.test_eval = evaluate(probs, preds, labels, cfg.arch.classes);
    out.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

namespace {

struct LoadedTask {
    std::vector<Bag> train, val, test;
    int dim = 0;
};

LoadedTask load_task(const RunConfig& cfg, RunManifest& rm) {
    std::string manifest_path = require_path(cfg, "manifest");
    rm.add_input("manifest", manifest_path);
    BagManifest manifest = read_manifest(manifest_path);

    Splits splits;
    if (cfg.raw.contains("paths") && cfg.raw.at("paths").contains("splits")) {
        std::string splits_path = cfg.raw.at("paths").at("splits").get<std::string>();
        splits = read_splits(splits_path);
        rm.add_input("splits", splits_path);
    } else {
        splits = make_splits(manifest, split_from_config(cfg));
    }
    if (splits.type != SplitPlan::Type::Fixed || splits.folds.size() != 3) {
        throw config_error("train-mil/eval need fixed train/val/test splits");
    }
    LoadedTask task;
    task.train = bags_for_fold(manifest_path, splits, 0);
    task.val = bags_for_fold(manifest_path, splits, 1);
    task.test = bags_for_fold(manifest_path, splits, 2);
    task.dim = manifest.dim;
    return task;
}

json history_json(const MilTrainResult& r) {
    json hist;
    hist["epochs"] = json::array();
    for (const auto& e : r.history) {
        hist["epochs"].push_back({{"train_loss", e.train_loss}, {"val_auc", e.val_auc}});
    }
    hist["best_epoch"] = r.best_epoch;
    hist["epochs_run"] = r.epochs_run;
    hist["best_val_auc"] = r.best_val_auc;
    return hist;
}

}  // namespace

int cmd_train_mil(const RunConfig& cfg) {
    RunManifest rm{"train-mil", &cfg};
    LoadedTask task = load_task(cfg, rm);
    MilTrainConfig mil_cfg = mil_from_config(cfg);
    mil_cfg.arch.dim = task.dim;

    DaeModel model;
    const DaeModel* dae = nullptr;
    if (mil_cfg.policy == AugPolicy::AugDiff) {
        model = load_dae_for(cfg, rm);
        dae = &model;
    }
    MilRunOutput out = run_mil_once(task.train, task.val, task.test, mil_cfg, dae);

    fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    save_mil_checkpoint((dir / "mil.ckpt").string(), out.train.params);
    rm.add_output("mil.ckpt");
    write_text((dir / "history.json").string(), history_json(out.train).dump(2) + "\n");
    rm.add_output("history.json");
    write_text((dir / "eval.json").string(), out.test_eval.to_json() + "\n");
    rm.add_output("eval.json");
    rm.write();
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    RunManifest rm{"eval", &cfg};
    LoadedTask task = load_task(cfg, rm);
    std::string ckpt = require_path(cfg, "mil_checkpoint");
    MilParams params = load_mil_checkpoint(ckpt);
    rm.add_input("mil_checkpoint", ckpt);

    std::string which = "test";
    if (cfg.raw.contains("paths")) {
        which = get_or<std::string>(cfg.raw.at("paths"), "eval_split", "test");
    }
    const std::vector<Bag>* bags = &task.test;
    if (which == "train") bags = &task.train;
    else if (which == "val") bags = &task.val;
    else if (which != "test") throw config_error("paths.eval_split must be train|val|test");

    Tensor probs(bags->size(), static_cast<size_t>(params.arch.classes));
    std::vector<int> preds(bags->size());
    std::vector<int> labels(bags->size());
    for (size_t i = 0; i < bags->size(); ++i) {
        auto [cls, p] = predict(params, (*bags)[i].features);
        preds[i] = cls;
        labels[i] = (*bags)[i].label;
        for (size_t c = 0; c < probs.cols(); ++c) probs.at(i, c) = p[c];
    }
    EvalReport rep = evaluate(probs, preds, labels, params.arch.classes);
    fs::create_directories(cfg.out_dir);
    write_text((fs::path(cfg.out_dir) / "eval.json").string(), rep.to_json() + "\n");
    rm.add_output("eval.json");
    rm.write();
    return 0;
}

int cmd_sweep(const RunConfig& cfg) {
    RunManifest rm{"sweep", &cfg};
    LoadedTask task = load_task(cfg, rm);
    MilTrainConfig base = mil_from_config(cfg);
    base.arch.dim = task.dim;
    AugmentConfig aug = augment_from_config(cfg);

    const json& sweep = require_section(cfg, "sweep");
    auto policies = get_or<std::vector<std::string>>(sweep, "policies",
                                                     {"none", "augdiff", "mixup",
                                                      "pseudobag"});
    auto variants = get_or<std::vector<std::string>>(sweep, "variants", {"amil"});
    auto k_fracs = get_or<std::vector<double>>(sweep, "k_fractions", {0.1, 0.2, 0.3, 0.4});
    auto cond_modes = get_or<std::vector<std::string>>(sweep, "condition_modes",
                                                       {"unconditional"});

    bool needs_dae = std::find(policies.begin(), policies.end(), "augdiff") !=
                     policies.end();
    DaeModel model;
    const DaeModel* dae = nullptr;
    if (needs_dae) {
        model = load_dae_for(cfg, rm);
        dae = &model;
    }

    std::ostringstream csv;
    csv << "policy,mil_variant,T,K,condition_mode,seed,micro_acc,macro_auc,"
           "epochs_run,wall_seconds\n";
    fs::path dir(cfg.out_dir);
    fs::create_directories(dir / "cells");

    for (const std::string& policy : policies) {
        for (const std::string& variant : variants) {
            // K and condition mode only matter for augdiff cells
            const bool is_augdiff = policy == "augdiff";
            std::vector<double> cell_fracs = is_augdiff ? k_fracs
                                                        : std::vector<double>{0.0};
            std::vector<std::string> cell_modes =
                is_augdiff ? cond_modes : std::vector<std::string>{"unconditional"};
            for (double frac : cell_fracs) {
                for (const std::string& mode : cell_modes) {
                    for (uint64_t seed : cfg.seeds) {
                        MilTrainConfig cell = base;
                        cell.arch.variant = mil_variant_from_name(variant);
                        cell.policy = aug_policy_from_name(policy);
                        cell.seed = seed;
                        cell.augdiff = aug;
                        cell.augdiff.seed = seed;
                        int k_steps = aug.K;
                        if (is_augdiff && frac > 0.0) {
                            k_steps = static_cast<int>(std::llround(frac * aug.T));
                            cell.augdiff.K = k_steps;
                        }
                        cell.augdiff.mode = condition_mode_from_name(mode);

                        MilRunOutput out = run_mil_once(task.train, task.val, task.test,
                                                        cell, is_augdiff ? dae : nullptr);

                        std::string cell_name = policy + "_" + variant + "_K" +
                                                std::to_string(is_augdiff ? k_steps : 0) +
                                                "_" + mode + "_s" + std::to_string(seed);
                        fs::path cell_dir = dir / "cells" / cell_name;
                        fs::create_directories(cell_dir);
                        save_mil_checkpoint((cell_dir / "mil.ckpt").string(),
                                            out.train.params);
                        write_text((cell_dir / "history.json").string(),
                                   history_json(out.train).dump(2) + "\n");
                        write_text((cell_dir / "eval.json").string(),
                                   out.test_eval.to_json() + "\n");

                        csv << policy << ',' << variant << ',' << aug.T << ','
                            << (is_augdiff ? k_steps : 0) << ',' << mode << ',' << seed
                            << ',' << fmt_double(out.test_eval.micro_acc) << ','
                            << fmt_double(out.test_eval.macro_auc) << ','
                            << out.train.epochs_run << ','
                            << fmt_double(out.wall_seconds) << '\n';
                    }
                }
            }
        }
    }
    write_text((dir / "results.csv").string(), csv.str());
    rm.add_output("results.csv");
    rm.write();
    return 0;
}

int cmd_bench_augment(const RunConfig& cfg) {
    RunManifest rm{"bench-augment", &cfg};
    std::string manifest_path = require_path(cfg, "manifest");
    rm.add_input("manifest", manifest_path);
    DaeModel model = load_dae_for(cfg, rm);
    AugmentConfig aug = augment_from_config(cfg);

    std::vector<Bag> bags = load_bags(manifest_path);
    size_t total = 0;
    for (const Bag& b : bags) total += b.size();
    if (total == 0) throw std::invalid_argument("bench: manifest holds no instances");
    const size_t dim = bags.front().dim();

    const json& bench = cfg.raw.contains("bench") ? cfg.raw.at("bench") : json::object();
    auto sizes = get_or<std::vector<int>>(bench, "sizes", {100, 500, 1000, 5000});
    double extractor_ms = get_or<double>(bench, "extractor_cost_per_instance_ms", 0.0);

    // pool of instances cycled to the requested bag sizes
    Tensor pool(total, dim);
    size_t row = 0;
    for (const Bag& b : bags) {
        for (size_t r = 0; r < b.size(); ++r, ++row) {
            for (size_t c = 0; c < dim; ++c) pool.at(row, c) = b.features.at(r, c);
        }
    }

    std::ostringstream csv;
    csv << "n,wall_seconds,instances_per_sec,denoiser_evals,"
           "simulated_extractor_seconds\n";
    json rows = json::array();
    std::vector<double> xs, ys;
    for (int n : sizes) {
        if (n < 1) throw std::invalid_argument("bench: sizes must be positive");
        Bag bag;
        bag.id = "bench_" + std::to_string(n);
        bag.label = 0;
        bag.features = Tensor(static_cast<size_t>(n), dim);
        for (size_t r = 0; r < static_cast<size_t>(n); ++r) {
            for (size_t c = 0; c < dim; ++c) {
                bag.features.at(r, c) = pool.at(r % total, c);
            }
        }
        AugmentStats stats;
        auto t0 = std::chrono::steady_clock::now();
        augment_bag(bag, model, aug, 0, &stats);
        double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        double per_sec = n / wall;
        double sim_extractor = extractor_ms * 1e-3 * n;
        csv << n << ',' << fmt_double(wall) << ',' << fmt_double(per_sec) << ','
            << stats.denoiser_evals << ',' << fmt_double(sim_extractor) << '\n';
        rows.push_back({{"n", n},
                        {"wall_seconds", wall},
                        {"instances_per_sec", per_sec},
                        {"denoiser_evals", stats.denoiser_evals},
                        {"simulated_extractor_seconds", sim_extractor}});
        xs.push_back(n);
        ys.push_back(wall);
    }

    // least-squares slope of wall time vs N
    double slope = 0.0;
    if (xs.size() >= 2) {
        double mx = 0, my = 0;
        for (size_t i = 0; i < xs.size(); ++i) {
            mx += xs[i];
            my += ys[i];
        }
        mx /= xs.size();
        my /= ys.size();
        double num = 0, den = 0;
        for (size_t i = 0; i < xs.size(); ++i) {
            num += (xs[i] - mx) * (ys[i] - my);
            den += (xs[i] - mx) * (xs[i] - mx);
        }
        slope = num / den;
    }
    json report;
    report["rows"] = rows;
    report["seconds_per_instance_slope"] = slope;
    report["T"] = aug.T;
    report["K"] = aug.K;
    report["dim"] = dim;

    fs::create_directories(cfg.out_dir);
    write_text((fs::path(cfg.out_dir) / "bench.csv").string(), csv.str());
    write_text((fs::path(cfg.out_dir) / "bench.json").string(), report.dump(2) + "\n");
    rm.add_output("bench.csv");
    rm.add_output("bench.json");
    rm.write();
    return 0;
}

int cmd_export_projection(const RunConfig& cfg) {
    RunManifest rm{"export-projection", &cfg};
    const json& proj = require_section(cfg, "projection");
    if (!proj.contains("inputs") || !proj.at("inputs").is_array() ||
        proj.at("inputs").empty()) {
        throw config_error("config: projection.inputs must be a non-empty array");
    }

    struct Source {
        std::string tag;
        Tensor features;
        std::vector<int> classes;  // -1 when unknown
    };
    std::vector<Source> sources;
    size_t total = 0;
    std::optional<size_t> dim;
    int idx = 0;
    for (const auto& entry : proj.at("inputs")) {
        Source src;
        src.tag = get_or<std::string>(entry, "tag", "src" + std::to_string(idx));
        if (entry.contains("manifest")) {
            std::string path = entry.at("manifest").get<std::string>();
            rm.add_input("projection_" + src.tag, path);
            auto bags = load_bags(path);
            size_t n = 0;
            for (const auto& b : bags) n += b.size();
            if (bags.empty()) throw std::invalid_argument("projection: empty manifest");
            src.features = Tensor(n, bags.front().dim());
            size_t row = 0;
            for (const auto& b : bags) {
                for (size_t r = 0; r < b.size(); ++r, ++row) {
                    for (size_t c = 0; c < b.dim(); ++c) {
                        src.features.at(row, c) = b.features.at(r, c);
                    }
                    src.classes.push_back(b.label);
                }
            }
        } else if (entry.contains("corpus")) {
            std::string path = entry.at("corpus").get<std::string>();
            rm.add_input("projection_" + src.tag, path);
            FeatureCorpus corpus = read_corpus(path);
            src.features = corpus.features;
            src.classes = corpus.instance_class.empty()
                              ? std::vector<int>(corpus.size(), -1)
                              : corpus.instance_class;
        } else {
            throw config_error("projection input needs 'manifest' or 'corpus'");
        }
        if (dim && src.features.cols() != *dim) {
            throw std::invalid_argument("projection: inconsistent feature dimensions");
        }
        dim = src.features.cols();
        total += src.features.rows();
        sources.push_back(std::move(src));
        ++idx;
    }
    if (total < 3) throw std::invalid_argument("projection: need at least 3 features");

    Tensor all(total, *dim);
    size_t row = 0;
    for (const auto& src : sources) {
        for (size_t r = 0; r < src.features.rows(); ++r, ++row) {
            for (size_t c = 0; c < *dim; ++c) all.at(row, c) = src.features.at(r, c);
        }
    }
    Pca2 pca = fit_pca2(all);

    std::ostringstream csv;
    csv << "source,x,y,class\n";
    for (const auto& src : sources) {
        Tensor pts = pca2_project(pca, src.features);
        for (size_t r = 0; r < pts.rows(); ++r) {
            csv << src.tag << ',' << fmt_double(pts.at(r, 0)) << ','
                << fmt_double(pts.at(r, 1)) << ',';
            if (src.classes[r] >= 0) csv << src.classes[r];
            csv << '\n';
        }
    }
    fs::create_directories(cfg.out_dir);
    write_text((fs::path(cfg.out_dir) / "projection.csv").string(), csv.str());
    rm.add_output("projection.csv");

    json meta;
    meta["explained_fraction"] = pca.explained_fraction();
    meta["eigenvalues"] = {pca.eigenvalues[0], pca.eigenvalues[1]};
    meta["total_variance"] = pca.total_variance;
    write_text((fs::path(cfg.out_dir) / "projection_meta.json").string(),
               meta.dump(2) + "\n");
    rm.add_output("projection_meta.json");
    rm.write();
    return 0;
}

int run_subcommand(const std::string& name, const RunConfig& cfg) {
    if (name == "gen-synthetic") return cmd_gen_synthetic(cfg);
    if (name == "train-dae") return cmd_train_dae(cfg);
    if (name == "augment") return cmd_augment(cfg);
    if (name == "train-mil") return cmd_train_mil(cfg);
    if (name == "eval") return cmd_eval(cfg);
    if (name == "sweep") return cmd_sweep(cfg);
    if (name == "bench-augment") return cmd_bench_augment(cfg);
    if (name == "export-projection") return cmd_export_projection(cfg);
    throw config_error("unknown subcommand: " + name);
}

int run_cli(const std::string& subcommand, const std::string& config_path,
            const std::vector<std::string>& overrides,
            const std::optional<std::string>& out_override,
            const std::optional<uint64_t>& seed_override, std::string* error_out) {
    try {
        RunConfig cfg = load_run_config(config_path, overrides, out_override,
                                        seed_override);
        return run_subcommand(subcommand, cfg);
    } catch (const numeric_error& e) {
        if (error_out) *error_out = e.what();
        return 3;
    } catch (const missing_artifact_error& e) {
        if (error_out) *error_out = e.what();
        return 2;
    } catch (const io_error& e) {
        if (error_out) *error_out = e.what();
        return 2;
    } catch (const format_error& e) {
        if (error_out) *error_out = e.what();
        return 2;
    } catch (const config_error& e) {
        if (error_out) *error_out = e.what();
        return 1;
    } catch (const std::invalid_argument& e) {
        if (error_out) *error_out = e.what();
        return 1;
    } catch (const undefined_metric_error& e) {
        if (error_out) *error_out = e.what();
        return 3;
    }
}

}  // namespace augdiff
