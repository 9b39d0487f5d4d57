#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "augdiff/tensor.hpp"

namespace augdiff {

// One labeled collection of instance features (one WSI's worth).
struct Bag {
    std::string id;
    int label = 0;
    Tensor features;  // N x D

    size_t size() const { return features.rows(); }
    size_t dim() const { return features.cols(); }
};

// Bag file: magic "AUGB", u32 LE version=1, u32 LE N, u32 LE D, then N*D
// float32 LE row-major. Empty bags are rejected on both ends.
void write_bag_file(const std::string& path, const Tensor& features);
Tensor read_bag_file(const std::string& path);

struct BagManifest {
    struct Record {
        std::string id;
        int label = 0;
        std::string file;  // relative to the manifest's directory
        int n = 0;
    };
    int version = 1;
    int dim = 0;
    std::vector<Record> bags;
};

void write_manifest(const std::string& path, const BagManifest& m);
// Parses and checks id uniqueness; does not touch the bag files.
BagManifest read_manifest(const std::string& path);

// Loads every referenced bag (or the id subset), validating that each file
// exists and matches the declared N and D.
std::vector<Bag> load_bags(const std::string& manifest_path,
                           const std::vector<std::string>* subset_ids = nullptr);

// Per-dimension population mean/std, std floored at 1e-6.
struct Standardizer {
    Tensor mean;   // 1 x D
    Tensor stdev;  // 1 x D
};

Standardizer standardizer_fit(const Tensor& features);
Tensor standardize(const Tensor& features, const Standardizer& s);
Tensor destandardize(const Tensor& features, const Standardizer& s);

// Train/val/test or k-fold assignment over bag ids, stratified by label.
struct SplitPlan {
    enum class Type { Fixed, KFold };
    Type type = Type::Fixed;
    int k = 4;                         // KFold
    double train_frac = 0.7;           // Fixed (test gets the remainder)
    double val_frac = 0.15;
    uint64_t seed = 0;
};

struct Splits {
    // Fixed: three entries (train, val, test). KFold: k entries.
    std::vector<std::vector<std::string>> folds;
    SplitPlan::Type type = SplitPlan::Type::Fixed;

    const std::vector<std::string>& train() const { return folds[0]; }
    const std::vector<std::string>& val() const { return folds[1]; }
    const std::vector<std::string>& test() const { return folds[2]; }
};

Splits make_splits(const BagManifest& manifest, const SplitPlan& plan);

void write_splits(const std::string& path, const Splits& s);
Splits read_splits(const std::string& path);

}  // namespace augdiff
