#pragma once

// Base learners and metrics: random forest per-channel classifiers, the
// logistic second stage for stacked generalization, and F1 / TPR / FPR /
// ROC / AUC evaluation.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xmd/telemetry.hpp"

#include <nlohmann/json_fwd.hpp>

namespace xmd {

struct RfHyperparams {
    int n_trees = 100;
    int max_depth = 12;
    int min_leaf = 2;
    bool bootstrap = true;
    // per-split feature subsample = max(1, floor(sqrt(dim)))
};

struct TreeNode {
    int feature = -1;       // -1 marks a leaf
    double threshold = 0.0; // x[feature] < threshold goes left
    int left = -1;
    int right = -1;
    long count_benign = 0;  // leaf class counts
    long count_malware = 0;

    bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    // Malware fraction at the reached leaf.
    double predict(std::span<const double> x) const;
    int depth() const;
};

struct RandomForestModel {
    std::vector<DecisionTree> trees;
    RfHyperparams params;
    uint64_t seed = 0;
    size_t dim = 0;
    std::optional<ChannelId> channel;
    std::optional<Split> trained_on;         // split-tag audit trail
    std::vector<std::string> train_apks;     // distinct apk_ids seen at fit time

    nlohmann::json to_json() const;
    static RandomForestModel from_json(const nlohmann::json& j);
};

RandomForestModel rf_fit(const std::vector<std::vector<double>>& features,
                         const std::vector<ClassLabel>& labels, const RfHyperparams& params,
                         uint64_t seed);

// Mean over trees of per-leaf malware fractions; decision = proba >= 0.5.
double rf_predict_proba(const RandomForestModel& model, std::span<const double> x);

struct LogisticModel {
    std::vector<double> weights;
    double bias = 0.0;
    double l2_lambda = 0.0;
    std::optional<Split> trained_on;
    int iterations = 0;
    double final_grad_norm = 0.0;

    nlohmann::json to_json() const;
    static LogisticModel from_json(const nlohmann::json& j);
};

// Full-batch gradient descent with backtracking line search on the
// L2-regularized mean negative log-likelihood (bias unregularized).
// Stops at gradient norm 1e-8; throws NonConvergence after 10000 iterations.
LogisticModel logreg_fit(const std::vector<std::vector<double>>& inputs,
                         const std::vector<ClassLabel>& labels, double l2_lambda, uint64_t seed);

double logreg_predict_proba(const LogisticModel& model, std::span<const double> x);

// Loss the fit minimizes; exposed for oracle comparisons.
double logreg_loss(const std::vector<std::vector<double>>& inputs,
                   const std::vector<ClassLabel>& labels, std::span<const double> weights,
                   double bias, double l2_lambda);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

struct EvalReport {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    std::optional<double> f1;   // 2TP / (2TP + FP + FN)
    std::optional<double> tpr;  // TP / (TP + FN)
    std::optional<double> fpr;  // FP / (FP + TN)
    std::vector<RocPoint> roc;  // empty when only one class is present
    std::optional<double> auc;  // trapezoidal over the ROC
    bool single_class = false;

    nlohmann::json to_json() const;
};

// Scores in [0,1] (hard 0/1 decisions are fine); decision = score >= 0.5.
// With one class only, ROC/AUC are omitted and F1 computed when defined.
EvalReport evaluate(const std::vector<double>& scores, const std::vector<ClassLabel>& labels);

}  // namespace xmd
