#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

#include "augdiff/common.hpp"
#include "augdiff/pca.hpp"
#include "augdiff/pipeline.hpp"
#include "oracles.hpp"

using namespace augdiff;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("augdiff_pipe_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static inline int counter = 0;
};

std::string write_config(const fs::path& dir, const json& j,
                         const std::string& name = "config.json") {
    std::string path = (dir / name).string();
    std::ofstream out(path);
    out << j.dump(2);
    return path;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(const std::string& sub, const std::string& config,
        const std::vector<std::string>& overrides = {},
        const std::string& out = "", std::optional<uint64_t> seed = std::nullopt) {
    std::string err;
    int code = run_cli(sub, config, overrides,
                       out.empty() ? std::nullopt : std::optional<std::string>(out),
                       seed, &err);
    if (code != 0) INFO("cli error: ", err);
    return code;
}

// small but complete run configuration shared by the pipeline tests
json small_config(const fs::path& root) {
    json cfg;
    cfg["out_dir"] = (root / "out").string();
    cfg["seed"] = 11;
    cfg["synthetic"] = {{"dim", 8},       {"n_classes", 2},
                        {"centroid_scale", 2.5}, {"corpus_per_class", 80},
                        {"bag_size_min", 8},     {"bag_size_max", 16},
                        {"witness_rate", 0.3},   {"train_bags", 10},
                        {"val_bags", 6},         {"test_bags", 6}};
    cfg["dae"] = {{"batch_size", 32}, {"base_lr", 2e-5}, {"epochs", 3},
                  {"conditional", true}, {"schedule_T", 8}, {"depth", 2},
                  {"width", 16}, {"embed", 4}};
    cfg["augment"] = {{"T", 8}, {"K", 3}, {"condition_mode", "unconditional"}};
    cfg["mil"] = {{"variant", "amil"}, {"classes", 2}, {"attn_dim", 8},
                  {"policy", "none"}, {"lr", 1e-3}, {"max_epochs", 4},
                  {"patience", 4}};
    return cfg;
}

}  // namespace

TEST_CASE("config validation rejects unknown keys and bad files") {
    TempDir tmp;
    json cfg = small_config(tmp.path);
    cfg["not_a_key"] = 1;
    std::string path = write_config(tmp.path, cfg);
    CHECK(run("gen-synthetic", path) == 1);

    json nested = small_config(tmp.path);
    nested["mil"]["bogus"] = true;
    CHECK(run("gen-synthetic", write_config(tmp.path, nested, "n.json")) == 1);

    CHECK(run("gen-synthetic", (tmp.path / "missing.json").string()) == 2);

    std::string garbled = (tmp.path / "bad.json").string();
    std::ofstream(garbled) << "{not json";
    CHECK(run("gen-synthetic", garbled) == 1);

    CHECK(run("definitely-not-a-subcommand",
              write_config(tmp.path, small_config(tmp.path), "ok.json")) == 1);
}

TEST_CASE("full small pipeline: gen, train-dae, augment, train-mil, eval") {
    TempDir tmp;
    json cfg = small_config(tmp.path);
    fs::path out = tmp.path / "out";
    std::string config = write_config(tmp.path, cfg);

    REQUIRE(run("gen-synthetic", config) == 0);
    CHECK(fs::exists(out / "manifest.json"));
    CHECK(fs::exists(out / "splits.json"));
    CHECK(fs::exists(out / "corpus" / "corpus.json"));
    CHECK(fs::exists(out / "run_manifest.json"));

    // train the DAE on the generated corpus
    json dae_cfg = cfg;
    dae_cfg["paths"] = {{"corpus", (out / "corpus" / "corpus.json").string()}};
    dae_cfg["out_dir"] = (tmp.path / "dae_out").string();
    REQUIRE(run("train-dae", write_config(tmp.path, dae_cfg, "dae.json")) == 0);
    std::string ckpt = (tmp.path / "dae_out" / "dae.ckpt").string();
    CHECK(fs::exists(ckpt));

    // checkpoint round trip preserves the parameters at f32
    DaeModel model = load_dae_checkpoint(ckpt);
    CHECK(model.params.cfg.dim == 8);
    CHECK(model.schedule.T == 8);

    // augment the manifest offline
    json aug_cfg = cfg;
    aug_cfg["paths"] = {{"manifest", (out / "manifest.json").string()},
                        {"dae_checkpoint", ckpt}};
    aug_cfg["out_dir"] = (tmp.path / "aug_out").string();
    REQUIRE(run("augment", write_config(tmp.path, aug_cfg, "aug.json")) == 0);
    CHECK(fs::exists(tmp.path / "aug_out" / "manifest.json"));
    CHECK(fs::exists(tmp.path / "aug_out" / "augment_provenance.json"));

    // K=0 reproduces inputs bit-near
    json id_cfg = aug_cfg;
    id_cfg["augment"]["K"] = 0;
    id_cfg["out_dir"] = (tmp.path / "aug_id").string();
    REQUIRE(run("augment", write_config(tmp.path, id_cfg, "aug_id.json")) == 0);
    auto orig = load_bags((out / "manifest.json").string());
    auto ident = load_bags((tmp.path / "aug_id" / "manifest.json").string());
    REQUIRE(orig.size() == ident.size());
    for (size_t i = 0; i < orig.size(); ++i) {
        CHECK(Tensor::max_abs_diff(orig[i].features, ident[i].features) <= 1e-6);
    }

    // train-mil with policy none on the toy manifest
    json mil_cfg = cfg;
    mil_cfg["paths"] = {{"manifest", (out / "manifest.json").string()},
                        {"splits", (out / "splits.json").string()}};
    mil_cfg["out_dir"] = (tmp.path / "mil_out").string();
    REQUIRE(run("train-mil", write_config(tmp.path, mil_cfg, "mil.json")) == 0);
    CHECK(fs::exists(tmp.path / "mil_out" / "mil.ckpt"));
    CHECK(fs::exists(tmp.path / "mil_out" / "history.json"));
    CHECK(fs::exists(tmp.path / "mil_out" / "eval.json"));

    // eval against the saved checkpoint reproduces the test-split numbers
    json eval_cfg = mil_cfg;
    eval_cfg["paths"]["mil_checkpoint"] = (tmp.path / "mil_out" / "mil.ckpt").string();
    eval_cfg["out_dir"] = (tmp.path / "eval_out").string();
    REQUIRE(run("eval", write_config(tmp.path, eval_cfg, "eval.json")) == 0);
    json a = json::parse(slurp((tmp.path / "mil_out" / "eval.json").string()));
    json b = json::parse(slurp((tmp.path / "eval_out" / "eval.json").string()));
    CHECK(a == b);

    // missing upstream artifact exits 2
    json broken = mil_cfg;
    broken["paths"]["manifest"] = (tmp.path / "nope.json").string();
    CHECK(run("train-mil", write_config(tmp.path, broken, "broken.json")) == 2);

    // augdiff policy trains end to end through the CLI
    json mil_aug = mil_cfg;
    mil_aug["mil"]["policy"] = "augdiff";
    mil_aug["paths"]["dae_checkpoint"] = ckpt;
    mil_aug["out_dir"] = (tmp.path / "mil_aug").string();
    REQUIRE(run("train-mil", write_config(tmp.path, mil_aug, "mil_aug.json")) == 0);
}

TEST_CASE("reruns are byte-identical apart from timing columns") {
    TempDir tmp;
    json cfg = small_config(tmp.path);
    std::string config = write_config(tmp.path, cfg);

    REQUIRE(run("gen-synthetic", config, {}, (tmp.path / "g1").string()) == 0);
    REQUIRE(run("gen-synthetic", config, {}, (tmp.path / "g2").string()) == 0);
    for (const char* f : {"manifest.json", "splits.json", "synthetic_meta.json",
                          "corpus/corpus.json", "corpus/cond0.augb", "centroids.augb"}) {
        CHECK(slurp((tmp.path / "g1" / f).string()) ==
              slurp((tmp.path / "g2" / f).string()));
    }

    json dae_cfg = cfg;
    dae_cfg["paths"] = {{"corpus", (tmp.path / "g1" / "corpus" / "corpus.json").string()}};
    std::string dcfg = write_config(tmp.path, dae_cfg, "dae.json");
    REQUIRE(run("train-dae", dcfg, {}, (tmp.path / "d1").string()) == 0);
    REQUIRE(run("train-dae", dcfg, {}, (tmp.path / "d2").string()) == 0);
    CHECK(slurp((tmp.path / "d1" / "dae.ckpt").string()) ==
          slurp((tmp.path / "d2" / "dae.ckpt").string()));
    CHECK(slurp((tmp.path / "d1" / "dae_history.json").string()) ==
          slurp((tmp.path / "d2" / "dae_history.json").string()));
}

TEST_CASE("sweep rows equal independent single runs") {
    TempDir tmp;
    json cfg = small_config(tmp.path);
    std::string config = write_config(tmp.path, cfg);
    fs::path out = tmp.path / "out";
    REQUIRE(run("gen-synthetic", config) == 0);

    json dae_cfg = cfg;
    dae_cfg["paths"] = {{"corpus", (out / "corpus" / "corpus.json").string()}};
    dae_cfg["out_dir"] = (tmp.path / "dae_out").string();
    REQUIRE(run("train-dae", write_config(tmp.path, dae_cfg, "dae.json")) == 0);
    std::string ckpt = (tmp.path / "dae_out" / "dae.ckpt").string();

    json sweep_cfg = cfg;
    sweep_cfg["paths"] = {{"manifest", (out / "manifest.json").string()},
                          {"splits", (out / "splits.json").string()},
                          {"dae_checkpoint", ckpt}};
    sweep_cfg["sweep"] = {{"policies", {"augdiff"}},
                          {"variants", {"amil"}},
                          {"k_fractions", {0.125, 0.25, 0.375, 0.5}},
                          {"condition_modes", {"unconditional"}}};
    sweep_cfg["seeds"] = {11};
    sweep_cfg["out_dir"] = (tmp.path / "sweep").string();
    REQUIRE(run("sweep", write_config(tmp.path, sweep_cfg, "sweep.json")) == 0);

    std::string csv = slurp((tmp.path / "sweep" / "results.csv").string());
    std::istringstream lines(csv);
    std::string header;
    std::getline(lines, header);
    CHECK(header ==
          "policy,mil_variant,T,K,condition_mode,seed,micro_acc,macro_auc,"
          "epochs_run,wall_seconds");
    std::vector<std::string> rows;
    std::string line;
    while (std::getline(lines, line)) {
        if (!line.empty()) rows.push_back(line);
    }
    REQUIRE(rows.size() == 4);  // one row per K fraction

    // each sweep cell must match the standalone run bit for bit
    // (timing column excluded)
    for (int k : {1, 2, 3, 4}) {
        json single = cfg;
        single["paths"] = sweep_cfg["paths"];
        single["mil"]["policy"] = "augdiff";
        single["augment"]["K"] = k;
        single["out_dir"] = (tmp.path / ("single_k" + std::to_string(k))).string();
        REQUIRE(run("train-mil",
                    write_config(tmp.path, single, "single" + std::to_string(k) + ".json")) == 0);
        json cell_eval = json::parse(slurp(
            (tmp.path / "sweep" / "cells" /
             ("augdiff_amil_K" + std::to_string(k) + "_unconditional_s11") / "eval.json")
                .string()));
        json single_eval = json::parse(slurp(
            (tmp.path / ("single_k" + std::to_string(k)) / "eval.json").string()));
        CHECK(cell_eval == single_eval);
    }
}

TEST_CASE("bench scales with call-count bookkeeping") {
    TempDir tmp;
    json cfg = small_config(tmp.path);
    std::string config = write_config(tmp.path, cfg);
    fs::path out = tmp.path / "out";
    REQUIRE(run("gen-synthetic", config) == 0);
    json dae_cfg = cfg;
    dae_cfg["paths"] = {{"corpus", (out / "corpus" / "corpus.json").string()}};
    dae_cfg["out_dir"] = (tmp.path / "dae_out").string();
    REQUIRE(run("train-dae", write_config(tmp.path, dae_cfg, "dae.json")) == 0);

    json bench_cfg = cfg;
    bench_cfg["paths"] = {{"manifest", (out / "manifest.json").string()},
                          {"dae_checkpoint", (tmp.path / "dae_out" / "dae.ckpt").string()}};
    bench_cfg["bench"] = {{"sizes", {50, 100, 200}},
                          {"extractor_cost_per_instance_ms", 2.0}};
    bench_cfg["out_dir"] = (tmp.path / "bench").string();
    REQUIRE(run("bench-augment", write_config(tmp.path, bench_cfg, "bench.json")) == 0);

    json report = json::parse(slurp((tmp.path / "bench" / "bench.json").string()));
    REQUIRE(report["rows"].size() == 3);
    // denoiser evaluations are exactly N * K
    for (const auto& row : report["rows"]) {
        CHECK(row["denoiser_evals"].get<uint64_t>() ==
              row["n"].get<uint64_t>() * 3u);
        CHECK(row["simulated_extractor_seconds"].get<double>() ==
              doctest::Approx(row["n"].get<double>() * 0.002));
    }
    CHECK(report["seconds_per_instance_slope"].get<double>() > 0.0);

    // doubling K doubles the call count
    json bench2 = bench_cfg;
    bench2["augment"]["K"] = 6;
    bench2["out_dir"] = (tmp.path / "bench2").string();
    REQUIRE(run("bench-augment", write_config(tmp.path, bench2, "bench2.json")) == 0);
    json report2 = json::parse(slurp((tmp.path / "bench2" / "bench.json").string()));
    for (size_t i = 0; i < 3; ++i) {
        CHECK(report2["rows"][i]["denoiser_evals"].get<uint64_t>() ==
              2 * report["rows"][i]["denoiser_evals"].get<uint64_t>());
    }

    // an empty manifest is rejected before any timing
    json empty_manifest_cfg = bench_cfg;
    BagManifest empty;
    empty.dim = 8;
    write_manifest((tmp.path / "empty_manifest.json").string(), empty);
    empty_manifest_cfg["paths"]["manifest"] = (tmp.path / "empty_manifest.json").string();
    CHECK(run("bench-augment",
              write_config(tmp.path, empty_manifest_cfg, "benchbad.json")) == 1);
}

TEST_CASE("projection export: rotation fidelity and eigen oracle") {
    TempDir tmp;
    // axis-aligned 2-D data written as one bag; values pre-rounded to f32 so
    // the bag-file round trip is exact
    Rng rng(3);
    Tensor pts(40, 2);
    for (size_t i = 0; i < 40; ++i) {
        pts.at(i, 0) = static_cast<double>(static_cast<float>(3.0 * rng.next_normal()));
        pts.at(i, 1) = static_cast<double>(static_cast<float>(0.5 * rng.next_normal()));
    }
    fs::create_directories(tmp.path / "data");
    write_bag_file((tmp.path / "data" / "b0.augb").string(), pts);
    BagManifest m;
    m.dim = 2;
    m.bags.push_back({"b0", 0, "b0.augb", 40});
    write_manifest((tmp.path / "data" / "manifest.json").string(), m);

    json cfg;
    cfg["seed"] = 1;
    cfg["projection"] = {{"inputs", json::array({{{"tag", "raw"},
                                                  {"manifest",
                                                   (tmp.path / "data" / "manifest.json")
                                                       .string()}}})}};
    cfg["out_dir"] = (tmp.path / "proj").string();
    REQUIRE(run("export-projection", write_config(tmp.path, cfg)) == 0);

    // parse the csv back and compare pairwise distances
    std::istringstream csv(slurp((tmp.path / "proj" / "projection.csv").string()));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "source,x,y,class");
    std::vector<std::pair<double, double>> projected;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string tag, x, y, cls;
        std::getline(row, tag, ',');
        std::getline(row, x, ',');
        std::getline(row, y, ',');
        std::getline(row, cls, ',');
        CHECK(tag == "raw");
        CHECK(cls == "0");
        projected.push_back({std::stod(x), std::stod(y)});
    }
    REQUIRE(projected.size() == 40);
    for (size_t i = 0; i < 10; ++i) {
        for (size_t j = i + 1; j < 10; ++j) {
            double want = std::hypot(pts.at(i, 0) - pts.at(j, 0),
                                     pts.at(i, 1) - pts.at(j, 1));
            double got = std::hypot(projected[i].first - projected[j].first,
                                    projected[i].second - projected[j].second);
            CHECK(std::fabs(want - got) < 1e-8);
        }
    }

    // duplicated dataset projects to the identical cloud twice
    json dup = cfg;
    dup["projection"]["inputs"].push_back(
        {{"tag", "copy"}, {"manifest", (tmp.path / "data" / "manifest.json").string()}});
    dup["out_dir"] = (tmp.path / "proj2").string();
    REQUIRE(run("export-projection", write_config(tmp.path, dup, "d.json")) == 0);
    std::istringstream csv2(slurp((tmp.path / "proj2" / "projection.csv").string()));
    std::getline(csv2, line);
    std::vector<std::string> first, second;
    while (std::getline(csv2, line)) {
        if (line.empty()) continue;
        if (line.rfind("raw,", 0) == 0) first.push_back(line.substr(4));
        else second.push_back(line.substr(5));
    }
    CHECK(first == second);

    // explained variance against the Jacobi oracle on random 6-D data
    Rng rng2(9);
    Tensor feats(60, 6);
    for (size_t i = 0; i < feats.numel(); ++i) feats[i] = rng2.next_normal();
    for (size_t i = 0; i < 60; ++i) feats.at(i, 0) *= 4.0;  // give PC1 a margin
    Pca2 pca = fit_pca2(feats);
    Tensor centered(60, 6);
    Tensor mean(1, 6);
    for (size_t c = 0; c < 6; ++c) {
        double s = 0;
        for (size_t r = 0; r < 60; ++r) s += feats.at(r, c);
        mean[c] = s / 60;
    }
    for (size_t r = 0; r < 60; ++r) {
        for (size_t c = 0; c < 6; ++c) centered.at(r, c) = feats.at(r, c) - mean[c];
    }
    Tensor cov;
    gemm(centered, true, centered, false, cov);
    for (size_t i = 0; i < cov.numel(); ++i) cov[i] /= 60.0;
    auto eig = testing::jacobi_eigenvalues(cov);
    CHECK(std::fabs(pca.eigenvalues[0] - eig[0]) < 1e-8);
    CHECK(std::fabs(pca.eigenvalues[1] - eig[1]) < 1e-8);

    // rank-deficient input (single repeated point) errors out
    Tensor flat = Tensor::full(5, 3, 2.0);
    CHECK_THROWS_AS(fit_pca2(flat), std::invalid_argument);
}

TEST_CASE("projection accepts corpus inputs and emits instance classes") {
    TempDir tmp;
    json cfg = small_config(tmp.path);
    std::string config = write_config(tmp.path, cfg);
    REQUIRE(run("gen-synthetic", config) == 0);

    json proj;
    proj["seed"] = 2;
    proj["projection"] = {{"inputs", json::array({{{"tag", "corpus"},
        {"corpus", (tmp.path / "out" / "corpus" / "corpus.json").string()}}})}};
    proj["out_dir"] = (tmp.path / "proj").string();
    REQUIRE(run("export-projection", write_config(tmp.path, proj, "p.json")) == 0);

    std::istringstream csv(slurp((tmp.path / "proj" / "projection.csv").string()));
    std::string line;
    std::getline(csv, line);
    size_t rows = 0;
    bool classes_present = true;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        ++rows;
        if (line.back() == ',') classes_present = false;  // class column empty
    }
    CHECK(rows == 80u * 2u * 7u);  // corpus_per_class x classes x conditions
    CHECK(classes_present);
}

TEST_CASE("run manifest records config hash and input hashes") {
    TempDir tmp;
    json cfg = small_config(tmp.path);
    std::string config = write_config(tmp.path, cfg);
    REQUIRE(run("gen-synthetic", config) == 0);
    json rm = json::parse(slurp((tmp.path / "out" / "run_manifest.json").string()));
    CHECK(rm["subcommand"] == "gen-synthetic");
    CHECK(rm["code_version"].get<std::string>().find("augdiff") != std::string::npos);
    CHECK(rm["config_hash"].get<std::string>().size() == 16);
    CHECK(rm["outputs"].size() >= 4);
    // seed override shows up in the hash
    REQUIRE(run("gen-synthetic", config, {}, (tmp.path / "o2").string(), 99) == 0);
    json rm2 = json::parse(slurp((tmp.path / "o2" / "run_manifest.json").string()));
    CHECK(rm2["config_hash"] != rm["config_hash"]);
    CHECK(rm2["seed"] == 99);
}
