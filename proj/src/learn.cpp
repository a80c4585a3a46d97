#include "xmd/learn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "xmd/rng.hpp"

namespace xmd {

double DecisionTree::predict(std::span<const double> x) const {
    int idx = 0;
    for (;;) {
        const TreeNode& node = nodes[static_cast<size_t>(idx)];
        if (node.is_leaf()) {
            const long total = node.count_benign + node.count_malware;
            return total > 0 ? static_cast<double>(node.count_malware) / static_cast<double>(total)
                             : 0.5;
        }
        idx = x[static_cast<size_t>(node.feature)] < node.threshold ? node.left : node.right;
    }
}

int DecisionTree::depth() const {
    std::vector<std::pair<int, int>> stack{{0, 0}};
    int best = 0;
    while (!stack.empty()) {
        const auto [idx, d] = stack.back();
        stack.pop_back();
        best = std::max(best, d);
        const TreeNode& node = nodes[static_cast<size_t>(idx)];
        if (!node.is_leaf()) {
            stack.push_back({node.left, d + 1});
            stack.push_back({node.right, d + 1});
        }
    }
    return best;
}

namespace {

struct TreeBuilder {
    const std::vector<std::vector<double>>& x;
    const std::vector<ClassLabel>& y;
    const RfHyperparams& params;
    int n_subsample_features;
    Rng& rng;
    std::vector<TreeNode> nodes;

    // rows: sample indices reaching this node (bootstrap multiset)
    int build(std::vector<int>& rows, int depth) {
        long n_benign = 0, n_malware = 0;
        for (int r : rows) (y[static_cast<size_t>(r)] == ClassLabel::Malware ? n_malware : n_benign)++;

        const int node_idx = static_cast<int>(nodes.size());
        nodes.emplace_back();
        nodes[static_cast<size_t>(node_idx)].count_benign = n_benign;
        nodes[static_cast<size_t>(node_idx)].count_malware = n_malware;

        const long n = n_benign + n_malware;
        if (depth >= params.max_depth || n_benign == 0 || n_malware == 0 ||
            n < 2 * params.min_leaf)
            return node_idx;

        // Gini split search over a feature subsample, features scanned in
        // ascending index order; strictly-better wins so the first encountered
        // best split is kept.
        const auto candidates =
            rng.sample_indices(static_cast<int>(x.front().size()), n_subsample_features);
        double best_score = -1.0;
        int best_feature = -1;
        double best_threshold = 0.0;

        std::vector<std::pair<double, int>> order;  // (value, label(0/1))
        order.reserve(rows.size());
        for (int f : candidates) {
            order.clear();
            for (int r : rows)
                order.emplace_back(x[static_cast<size_t>(r)][static_cast<size_t>(f)],
                                   y[static_cast<size_t>(r)] == ClassLabel::Malware ? 1 : 0);
            std::sort(order.begin(), order.end());

            long left_m = 0, left_n = 0;
            for (size_t i = 0; i + 1 < order.size(); ++i) {
                left_m += order[i].second;
                ++left_n;
                if (order[i].first == order[i + 1].first) continue;
                const long right_n = n - left_n;
                if (left_n < params.min_leaf || right_n < params.min_leaf) continue;
                const long right_m = n_malware - left_m;
                const double lm = static_cast<double>(left_m) / static_cast<double>(left_n);
                const double rm = static_cast<double>(right_m) / static_cast<double>(right_n);
                const double gini_left = 2.0 * lm * (1.0 - lm);
                const double gini_right = 2.0 * rm * (1.0 - rm);
                // Maximizing impurity decrease == minimizing weighted child Gini.
                const double weighted = (static_cast<double>(left_n) * gini_left +
                                         static_cast<double>(right_n) * gini_right) /
                                        static_cast<double>(n);
                const double score = -weighted;
                if (score > best_score) {
                    best_score = score;
                    best_feature = f;
                    best_threshold = 0.5 * (order[i].first + order[i + 1].first);
                }
            }
        }
        if (best_feature < 0) return node_idx;  // no admissible split

        std::vector<int> left_rows, right_rows;
        for (int r : rows) {
            if (x[static_cast<size_t>(r)][static_cast<size_t>(best_feature)] < best_threshold)
                left_rows.push_back(r);
            else
                right_rows.push_back(r);
        }
        if (left_rows.empty() || right_rows.empty()) return node_idx;

        rows.clear();
        rows.shrink_to_fit();
        const int left_idx = build(left_rows, depth + 1);
        const int right_idx = build(right_rows, depth + 1);
        nodes[static_cast<size_t>(node_idx)].feature = best_feature;
        nodes[static_cast<size_t>(node_idx)].threshold = best_threshold;
        nodes[static_cast<size_t>(node_idx)].left = left_idx;
        nodes[static_cast<size_t>(node_idx)].right = right_idx;
        return node_idx;
    }
};

}  // namespace

RandomForestModel rf_fit(const std::vector<std::vector<double>>& features,
                         const std::vector<ClassLabel>& labels, const RfHyperparams& params,
                         uint64_t seed) {
    require(!features.empty() && features.size() == labels.size(), ErrorCode::DimensionMismatch,
            "feature/label count mismatch");
    const size_t dim = features.front().size();
    require(dim >= 1, ErrorCode::DimensionMismatch, "zero-dimensional features");
    for (const auto& row : features)
        require(row.size() == dim, ErrorCode::DimensionMismatch, "ragged feature matrix");

    long n_benign = 0, n_malware = 0;
    for (ClassLabel l : labels) (l == ClassLabel::Malware ? n_malware : n_benign)++;
    require(n_benign >= 2 && n_malware >= 2, ErrorCode::SingleClassTrainingSet,
            "need at least 2 samples of each class, got benign=" + std::to_string(n_benign) +
                " malware=" + std::to_string(n_malware));

    RandomForestModel model;
    model.params = params;
    model.seed = seed;
    model.dim = dim;

    const int k_features =
        std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(dim)))));
    const int n = static_cast<int>(features.size());

    for (int t = 0; t < params.n_trees; ++t) {
        Rng tree_rng(mix_seed(seed, static_cast<uint64_t>(t)));
        std::vector<int> rows;
        rows.reserve(static_cast<size_t>(n));
        if (params.bootstrap) {
            for (int i = 0; i < n; ++i)
                rows.push_back(static_cast<int>(tree_rng.uniform_index(static_cast<uint64_t>(n))));
        } else {
            for (int i = 0; i < n; ++i) rows.push_back(i);
        }
        TreeBuilder builder{features, labels, params, k_features, tree_rng, {}};
        builder.build(rows, 0);
        model.trees.push_back(DecisionTree{std::move(builder.nodes)});
    }
    return model;
}

double rf_predict_proba(const RandomForestModel& model, std::span<const double> x) {
    require(x.size() == model.dim, ErrorCode::DimensionMismatch,
            "expected " + std::to_string(model.dim) + " features, got " +
                std::to_string(x.size()));
    double acc = 0.0;
    for (const auto& tree : model.trees) acc += tree.predict(x);
    return acc / static_cast<double>(model.trees.size());
}

namespace {

double sigmoid(double z) {
    if (z >= 0) {
        const double e = std::exp(-z);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
double log1pexp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

double logreg_loss(const std::vector<std::vector<double>>& inputs,
                   const std::vector<ClassLabel>& labels, std::span<const double> weights,
                   double bias, double l2_lambda) {
    const double n = static_cast<double>(inputs.size());
    double loss = 0.0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        double z = bias;
        for (size_t j = 0; j < weights.size(); ++j) z += weights[j] * inputs[i][j];
        const double y = labels[i] == ClassLabel::Malware ? 1.0 : 0.0;
        loss += log1pexp(z) - y * z;
    }
    loss /= n;
    double reg = 0.0;
    for (double w : weights) reg += w * w;
    return loss + 0.5 * l2_lambda * reg;
}

LogisticModel logreg_fit(const std::vector<std::vector<double>>& inputs,
                         const std::vector<ClassLabel>& labels, double l2_lambda,
                         uint64_t /*seed*/) {
    require(!inputs.empty() && inputs.size() == labels.size(), ErrorCode::DimensionMismatch,
            "input/label count mismatch");
    const size_t dim = inputs.front().size();
    for (const auto& row : inputs) {
        require(row.size() == dim, ErrorCode::DimensionMismatch, "ragged input matrix");
        for (double v : row)
            require(std::isfinite(v), ErrorCode::DimensionMismatch, "non-finite input value");
    }
    require(l2_lambda >= 0.0, ErrorCode::InvalidConfig, "l2_lambda must be nonnegative");

    constexpr int kMaxIterations = 10000;
    constexpr double kGradTolerance = 1e-8;

    const double n = static_cast<double>(inputs.size());
    std::vector<double> w(dim, 0.0), grad_w(dim, 0.0);
    double b = 0.0;
    double step = 1.0;

    LogisticModel model;
    model.l2_lambda = l2_lambda;

    for (int iter = 0; iter < kMaxIterations; ++iter) {
        std::fill(grad_w.begin(), grad_w.end(), 0.0);
        double grad_b = 0.0;
        for (size_t i = 0; i < inputs.size(); ++i) {
            double z = b;
            for (size_t j = 0; j < dim; ++j) z += w[j] * inputs[i][j];
            const double resid =
                sigmoid(z) - (labels[i] == ClassLabel::Malware ? 1.0 : 0.0);
            for (size_t j = 0; j < dim; ++j) grad_w[j] += resid * inputs[i][j];
            grad_b += resid;
        }
        double grad_sq = 0.0;
        for (size_t j = 0; j < dim; ++j) {
            grad_w[j] = grad_w[j] / n + l2_lambda * w[j];
            grad_sq += grad_w[j] * grad_w[j];
        }
        grad_b /= n;
        grad_sq += grad_b * grad_b;
        const double grad_norm = std::sqrt(grad_sq);

        model.iterations = iter;
        model.final_grad_norm = grad_norm;
        if (grad_norm <= kGradTolerance) {
            model.weights = w;
            model.bias = b;
            return model;
        }

        // Backtracking line search (Armijo, c = 1e-4), growing the step while
        // the condition keeps holding so anisotropic directions still make
        // near-exact-line-search progress. The f_eps slack keeps the test
        // meaningful once true decreases drop below the resolution of the
        // loss sum; without it the step collapses near the optimum.
        const double f0 = logreg_loss(inputs, labels, w, b, l2_lambda);
        const double f_eps = 1e-14 * (1.0 + std::fabs(f0));
        const auto armijo_value = [&](double eta, std::vector<double>& w_try, double& b_try) {
            for (size_t j = 0; j < dim; ++j) w_try[j] = w[j] - eta * grad_w[j];
            b_try = b - eta * grad_b;
            return logreg_loss(inputs, labels, w_try, b_try, l2_lambda);
        };
        const auto acceptable = [&](double eta, double f_try) {
            return f_try <= f0 - 1e-4 * eta * grad_sq + f_eps;
        };
        double eta = std::min(step, 1e8);
        std::vector<double> w_try(dim);
        double b_try = 0.0;
        double f_try = armijo_value(eta, w_try, b_try);
        if (acceptable(eta, f_try)) {
            // Acceptable already: extend while the step keeps qualifying and improving.
            std::vector<double> w_next(dim);
            double b_next = 0.0;
            while (eta < 1e8) {
                const double eta_next = eta * 2.0;
                const double f_next = armijo_value(eta_next, w_next, b_next);
                if (!acceptable(eta_next, f_next) || f_next >= f_try) break;
                eta = eta_next;
                f_try = f_next;
                std::swap(w_try, w_next);
                b_try = b_next;
            }
        } else {
            bool ok = false;
            while (eta >= 1e-18) {
                eta *= 0.5;
                f_try = armijo_value(eta, w_try, b_try);
                if (acceptable(eta, f_try)) {
                    ok = true;
                    break;
                }
            }
            if (!ok) {  // cannot make progress at floating-point resolution
                model.weights = w;
                model.bias = b;
                return model;
            }
        }
        w = w_try;
        b = b_try;
        step = eta;
    }
    fail(ErrorCode::NonConvergence,
         "gradient norm " + std::to_string(model.final_grad_norm) + " after " +
             std::to_string(kMaxIterations) + " iterations");
}

double logreg_predict_proba(const LogisticModel& model, std::span<const double> x) {
    require(x.size() == model.weights.size(), ErrorCode::DimensionMismatch,
            "logistic input dimension mismatch");
    double z = model.bias;
    for (size_t j = 0; j < x.size(); ++j) z += model.weights[j] * x[j];
    return sigmoid(z);
}

EvalReport evaluate(const std::vector<double>& scores, const std::vector<ClassLabel>& labels) {
    require(scores.size() == labels.size() && !scores.empty(), ErrorCode::DimensionMismatch,
            "score/label count mismatch");

    EvalReport report;
    for (size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= 0.5;
        const bool actual = labels[i] == ClassLabel::Malware;
        if (predicted && actual) ++report.tp;
        else if (predicted && !actual) ++report.fp;
        else if (!predicted && actual) ++report.fn;
        else ++report.tn;
    }
    const long positives = report.tp + report.fn;
    const long negatives = report.fp + report.tn;
    if (2 * report.tp + report.fp + report.fn > 0)
        report.f1 = 2.0 * static_cast<double>(report.tp) /
                    static_cast<double>(2 * report.tp + report.fp + report.fn);
    if (positives > 0) report.tpr = static_cast<double>(report.tp) / static_cast<double>(positives);
    if (negatives > 0) report.fpr = static_cast<double>(report.fp) / static_cast<double>(negatives);

    if (positives == 0 || negatives == 0) {
        report.single_class = true;  // ROC/AUC undefined; omitted
        return report;
    }

    // Threshold sweep over distinct scores, descending; ties grouped so the
    // trapezoid over the curve equals the midrank Mann-Whitney statistic.
    std::vector<size_t> order(scores.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    long tp = 0, fp = 0;
    double auc = 0.0;
    double prev_fpr = 0.0, prev_tpr = 0.0;
    report.roc.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    size_t i = 0;
    while (i < order.size()) {
        const double threshold = scores[order[i]];
        while (i < order.size() && scores[order[i]] == threshold) {
            if (labels[order[i]] == ClassLabel::Malware) ++tp;
            else ++fp;
            ++i;
        }
        const double cur_fpr = static_cast<double>(fp) / static_cast<double>(negatives);
        const double cur_tpr = static_cast<double>(tp) / static_cast<double>(positives);
        auc += (cur_fpr - prev_fpr) * (cur_tpr + prev_tpr) * 0.5;
        report.roc.push_back({cur_fpr, cur_tpr, threshold});
        prev_fpr = cur_fpr;
        prev_tpr = cur_tpr;
    }
    report.auc = auc;
    return report;
}

namespace {

nlohmann::json node_to_json(const TreeNode& n) {
    return nlohmann::json{{"feature", n.feature},   {"threshold", n.threshold},
                          {"left", n.left},         {"right", n.right},
                          {"leaf_counts", {n.count_benign, n.count_malware}}};
}

TreeNode node_from_json(const nlohmann::json& j) {
    TreeNode n;
    n.feature = j.at("feature").get<int>();
    n.threshold = j.at("threshold").get<double>();
    n.left = j.at("left").get<int>();
    n.right = j.at("right").get<int>();
    n.count_benign = j.at("leaf_counts").at(0).get<long>();
    n.count_malware = j.at("leaf_counts").at(1).get<long>();
    return n;
}

}  // namespace

nlohmann::json RandomForestModel::to_json() const {
    nlohmann::json trees_json = nlohmann::json::array();
    for (const auto& tree : trees) {
        nlohmann::json nodes_json = nlohmann::json::array();
        for (const auto& node : tree.nodes) nodes_json.push_back(node_to_json(node));
        trees_json.push_back({{"nodes", std::move(nodes_json)}});
    }
    nlohmann::json j{
        {"format", "xmd-random-forest"},
        {"version", 1},
        {"hyperparams",
         {{"n_trees", params.n_trees},
          {"max_depth", params.max_depth},
          {"min_leaf", params.min_leaf},
          {"bootstrap", params.bootstrap}}},
        {"seed", seed},
        {"dim", dim},
        {"trees", std::move(trees_json)},
        {"train_apks", train_apks},
    };
    if (channel) j["channel"] = channel->name();
    if (trained_on) j["trained_on"] = split_name(*trained_on);
    return j;
}

RandomForestModel RandomForestModel::from_json(const nlohmann::json& j) {
    require(j.value("format", "") == "xmd-random-forest" && j.value("version", 0) == 1,
            ErrorCode::ParseError, "not a version-1 random-forest document");
    RandomForestModel model;
    const auto& hp = j.at("hyperparams");
    model.params.n_trees = hp.at("n_trees").get<int>();
    model.params.max_depth = hp.at("max_depth").get<int>();
    model.params.min_leaf = hp.at("min_leaf").get<int>();
    model.params.bootstrap = hp.at("bootstrap").get<bool>();
    model.seed = j.at("seed").get<uint64_t>();
    model.dim = j.at("dim").get<size_t>();
    model.train_apks = j.at("train_apks").get<std::vector<std::string>>();
    for (const auto& tree_json : j.at("trees")) {
        DecisionTree tree;
        for (const auto& node_json : tree_json.at("nodes"))
            tree.nodes.push_back(node_from_json(node_json));
        model.trees.push_back(std::move(tree));
    }
    if (j.contains("channel")) {
        const auto name = j.at("channel").get<std::string>();
        for (const auto& info : catalog_channels())
            if (info.id.name() == name) model.channel = info.id;
    }
    if (j.contains("trained_on")) {
        const auto name = j.at("trained_on").get<std::string>();
        for (Split s : {Split::Train, Split::TrainSG, Split::Test})
            if (name == split_name(s)) model.trained_on = s;
    }
    return model;
}

nlohmann::json LogisticModel::to_json() const {
    nlohmann::json j{
        {"format", "xmd-logistic"}, {"version", 1},         {"weights", weights},
        {"bias", bias},             {"l2_lambda", l2_lambda}, {"iterations", iterations},
        {"final_grad_norm", final_grad_norm},
    };
    if (trained_on) j["trained_on"] = split_name(*trained_on);
    return j;
}

LogisticModel LogisticModel::from_json(const nlohmann::json& j) {
    require(j.value("format", "") == "xmd-logistic" && j.value("version", 0) == 1,
            ErrorCode::ParseError, "not a version-1 logistic document");
    LogisticModel model;
    model.weights = j.at("weights").get<std::vector<double>>();
    model.bias = j.at("bias").get<double>();
    model.l2_lambda = j.at("l2_lambda").get<double>();
    model.iterations = j.at("iterations").get<int>();
    model.final_grad_norm = j.at("final_grad_norm").get<double>();
    if (j.contains("trained_on")) {
        const auto name = j.at("trained_on").get<std::string>();
        for (Split s : {Split::Train, Split::TrainSG, Split::Test})
            if (name == split_name(s)) model.trained_on = s;
    }
    return model;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j{{"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn},
                     {"single_class", single_class}};
    if (f1) j["f1"] = *f1;
    if (tpr) j["tpr"] = *tpr;
    if (fpr) j["fpr"] = *fpr;
    if (auc) j["auc"] = *auc;
    return j;
}

}  // namespace xmd
