#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "augdiff/tensor.hpp"

namespace augdiff {

// Thrown when a metric is undefined for the given labels (e.g. AUC with a
// single class present).
struct undefined_metric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

double micro_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

// One-vs-rest AUC for class c: P(random positive outscores random negative),
// ties counted 1/2 (Mann-Whitney, computed via average ranks).
double ovr_auc(const std::vector<double>& scores, const std::vector<int>& labels,
               int positive_class);

// Unweighted mean of per-class one-vs-rest AUCs over classes with both
// positives and negatives present. probs is n_samples x n_classes.
// skipped_classes (optional) collects classes without both sides.
double macro_auc(const Tensor& probs, const std::vector<int>& labels,
                 std::vector<int>* skipped_classes = nullptr);

struct EvalReport {
    double micro_acc = 0.0;
    double macro_auc = 0.0;
    std::vector<double> per_class_auc;  // NaN for skipped classes
    std::vector<int> skipped_classes;
    std::vector<std::vector<int>> confusion;  // rows = true class
    int n_bags = 0;

    std::string to_json() const;
};

EvalReport evaluate(const Tensor& probs, const std::vector<int>& predictions,
                    const std::vector<int>& labels, int n_classes);

}  // namespace augdiff
