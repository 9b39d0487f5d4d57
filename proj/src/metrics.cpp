#include "augdiff/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

using nlohmann::json;

namespace augdiff {

double micro_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size()) {
        throw std::invalid_argument("micro_accuracy: length mismatch");
    }
    if (predictions.empty()) {
        throw std::invalid_argument("micro_accuracy: empty input");
    }
    size_t hits = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double ovr_auc(const std::vector<double>& scores, const std::vector<int>& labels,
               int positive_class) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw std::invalid_argument("ovr_auc: bad input lengths");
    }
    size_t n_pos = 0;
    for (int l : labels) {
        if (l == positive_class) ++n_pos;
    }
    size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw undefined_metric_error("ovr_auc: class lacks positives or negatives");
    }

    // average ranks; tied scores share the mean of their rank range, which is
    // exactly the pairwise tie-as-half rule
    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k) {
            if (labels[order[k]] == positive_class) pos_rank_sum += avg_rank;
        }
        i = j + 1;
    }
    double u = pos_rank_sum -
               static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double macro_auc(const Tensor& probs, const std::vector<int>& labels,
                 std::vector<int>* skipped_classes) {
    if (probs.cols() < 2) throw std::invalid_argument("macro_auc: need >= 2 classes");
    if (probs.rows() != labels.size() || labels.empty()) {
        throw std::invalid_argument("macro_auc: shape mismatch");
    }
    double total = 0.0;
    int counted = 0;
    for (size_t c = 0; c < probs.cols(); ++c) {
        std::vector<double> scores(probs.rows());
        for (size_t r = 0; r < probs.rows(); ++r) scores[r] = probs.at(r, c);
        try {
            total += ovr_auc(scores, labels, static_cast<int>(c));
            ++counted;
        } catch (const undefined_metric_error&) {
            if (skipped_classes) skipped_classes->push_back(static_cast<int>(c));
        }
    }
    if (counted == 0) {
        throw undefined_metric_error("macro_auc: no class has both positives and negatives");
    }
    return total / static_cast<double>(counted);
}

EvalReport evaluate(const Tensor& probs, const std::vector<int>& predictions,
                    const std::vector<int>& labels, int n_classes) {
    if (probs.cols() != static_cast<size_t>(n_classes)) {
        throw std::invalid_argument("evaluate: probability matrix width mismatch");
    }
    EvalReport rep;
    rep.n_bags = static_cast<int>(labels.size());
    rep.micro_acc = micro_accuracy(predictions, labels);
    rep.macro_auc = macro_auc(probs, labels, &rep.skipped_classes);
    rep.per_class_auc.assign(static_cast<size_t>(n_classes),
                             std::numeric_limits<double>::quiet_NaN());
    for (int c = 0; c < n_classes; ++c) {
        std::vector<double> scores(probs.rows());
        for (size_t r = 0; r < probs.rows(); ++r) scores[r] = probs.at(r, static_cast<size_t>(c));
        try {
            rep.per_class_auc[static_cast<size_t>(c)] = ovr_auc(scores, labels, c);
        } catch (const undefined_metric_error&) {
        }
    }
    rep.confusion.assign(static_cast<size_t>(n_classes),
                         std::vector<int>(static_cast<size_t>(n_classes), 0));
    for (size_t i = 0; i < labels.size(); ++i) {
        rep.confusion[static_cast<size_t>(labels[i])][static_cast<size_t>(predictions[i])]++;
    }
    return rep;
}

std::string EvalReport::to_json() const {
    json j;
    j["micro_acc"] = micro_acc;
    j["macro_auc"] = macro_auc;
    j["per_class_auc"] = json::array();
    for (double a : per_class_auc) {
        if (std::isnan(a)) {
            j["per_class_auc"].push_back(nullptr);
        } else {
            j["per_class_auc"].push_back(a);
        }
    }
    j["skipped_classes"] = skipped_classes;
    j["confusion"] = confusion;
    j["n_bags"] = n_bags;
    return j.dump(2);
}

}  // namespace augdiff
