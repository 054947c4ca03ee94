#include "semmatch/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "semmatch/error.hpp"
#include "semmatch/parallel.hpp"

namespace semmatch {

double interaction_score(std::span<const double> x) {
    return x[0] * x[2] - (1.0 - x[2]) * x[0] + x[1];
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Dataset generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.n_train < 1 || cfg.n_test < 1)
        throw ConfigError("synthetic generation needs n_train >= 1 and n_test >= 1");
    if (cfg.p_binary <= 0.0 || cfg.p_binary >= 1.0)
        throw ConfigError("p_binary must lie strictly between 0 and 1");

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution bernoulli(cfg.p_binary);

    Dataset dataset;
    dataset.samples.reserve(static_cast<std::size_t>(cfg.n_train + cfg.n_test));
    char id[32];
    for (std::int64_t i = 0; i < cfg.n_train + cfg.n_test; ++i) {
        const bool train = i < cfg.n_train;
        std::snprintf(id, sizeof(id), "%s-%06lld", train ? "train" : "test",
                      static_cast<long long>(train ? i : i - cfg.n_train));
        Sample s;
        s.id = id;
        const double x1 = normal(rng);
        const double x2 = normal(rng);
        const double x3 = bernoulli(rng) ? 1.0 : 0.0;
        s.features = std::vector<double>{x1, x2, x3};
        // Label from the sign of the pre-sigmoid score; sigma(z) > 0.5 iff z > 0.
        s.label = interaction_score(*s.features) > 0.0 ? 1 : 0;
        dataset.samples.push_back(std::move(s));
    }
    return dataset;
}

namespace {

class AnalyticInteractionModel : public Predictor {
  public:
    double predict_probability(std::span<const double> x) const override {
        return sigmoid(interaction_score(x));
    }
    int feature_count() const override { return 3; }
};

}  // namespace

std::unique_ptr<Predictor> analytic_model() {
    return std::make_unique<AnalyticInteractionModel>();
}

TrainingData to_training_data(std::span<const Sample> samples) {
    TrainingData data;
    data.rows = static_cast<std::int64_t>(samples.size());
    if (samples.empty()) return data;
    if (!samples.front().features)
        throw EvalError("sample '" + samples.front().id + "' has no features");
    data.cols = static_cast<int>(samples.front().features->size());
    data.x.reserve(static_cast<std::size_t>(data.rows) * data.cols);
    data.y.reserve(samples.size());
    for (const auto& s : samples) {
        if (!s.features || static_cast<int>(s.features->size()) != data.cols)
            throw EvalError("sample '" + s.id + "' has missing or ragged features");
        data.x.insert(data.x.end(), s.features->begin(), s.features->end());
        data.y.push_back(s.label);
    }
    return data;
}

namespace {

double gini(std::int64_t positives, std::int64_t total) {
    if (total == 0) return 0.0;
    const double p = static_cast<double>(positives) / static_cast<double>(total);
    return 2.0 * p * (1.0 - p);
}

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;
};

SplitChoice best_split(const TrainingData& data, std::span<const std::int64_t> rows,
                       std::span<const int> features) {
    SplitChoice best;
    std::vector<std::pair<double, int>> column(rows.size());
    const auto total = static_cast<std::int64_t>(rows.size());
    std::int64_t total_pos = 0;
    for (auto r : rows) total_pos += data.y[r];

    for (int feature : features) {
        for (std::size_t k = 0; k < rows.size(); ++k)
            column[k] = {data.feature(rows[k], feature), data.y[rows[k]]};
        std::sort(column.begin(), column.end());

        std::int64_t left_pos = 0;
        for (std::int64_t i = 1; i < total; ++i) {
            left_pos += column[i - 1].second;
            if (column[i].first == column[i - 1].first) continue;
            const double threshold =
                column[i - 1].first + 0.5 * (column[i].first - column[i - 1].first);
            const double impurity =
                (static_cast<double>(i) * gini(left_pos, i) +
                 static_cast<double>(total - i) * gini(total_pos - left_pos, total - i)) /
                static_cast<double>(total);
            // Strict improvement wins; exact ties fall to the lower feature
            // index, then the lower threshold. Features arrive ascending and
            // thresholds are scanned ascending, so first-found stands.
            if (!best.found || impurity < best.impurity) {
                best = {true, feature, threshold, impurity};
            }
        }
    }
    return best;
}

std::unique_ptr<TreeNode> grow(const TrainingData& data, std::vector<std::int64_t>& rows,
                               const TreeParams& params, std::mt19937_64& rng, int depth) {
    auto node = std::make_unique<TreeNode>();
    std::int64_t positives = 0;
    for (auto r : rows) positives += data.y[r];
    node->leaf_value = rows.empty() ? 0.0
                                    : static_cast<double>(positives) /
                                          static_cast<double>(rows.size());

    const bool pure = positives == 0 || positives == static_cast<std::int64_t>(rows.size());
    if (pure || depth >= params.max_depth ||
        static_cast<std::int64_t>(rows.size()) < params.min_samples_split)
        return node;

    // Feature subsample for this node, evaluated in ascending index order.
    std::vector<int> features(data.cols);
    std::iota(features.begin(), features.end(), 0);
    const int k = std::min(params.feature_subsample, data.cols);
    for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<int> pick(i, data.cols - 1);
        std::swap(features[i], features[pick(rng)]);
    }
    features.resize(k);
    std::sort(features.begin(), features.end());

    const SplitChoice split = best_split(data, rows, features);
    if (!split.found) return node;  // all candidate features constant here

    std::vector<std::int64_t> left_rows, right_rows;
    left_rows.reserve(rows.size());
    right_rows.reserve(rows.size());
    for (auto r : rows)
        (data.feature(r, split.feature) < split.threshold ? left_rows : right_rows).push_back(r);

    node->feature = split.feature;
    node->threshold = split.threshold;
    rows.clear();
    rows.shrink_to_fit();
    node->left = grow(data, left_rows, params, rng, depth + 1);
    node->right = grow(data, right_rows, params, rng, depth + 1);
    return node;
}

}  // namespace

std::unique_ptr<TreeNode> train_tree(const TrainingData& data,
                                     std::span<const std::int64_t> row_indices,
                                     const TreeParams& params, std::mt19937_64& rng) {
    if (data.rows == 0 || row_indices.empty())
        throw EvalError("cannot train a tree on an empty dataset");
    std::vector<std::int64_t> rows(row_indices.begin(), row_indices.end());
    return grow(data, rows, params, rng, 0);
}

double predict_tree(const TreeNode& node, std::span<const double> x) {
    const TreeNode* cur = &node;
    while (!cur->is_leaf())
        cur = x[cur->feature] < cur->threshold ? cur->left.get() : cur->right.get();
    return cur->leaf_value;
}

double Forest::predict_proba(std::span<const double> x) const {
    double sum = 0.0;
    for (const auto& tree : trees) sum += predict_tree(*tree, x);
    return sum / static_cast<double>(trees.size());
}

std::uint64_t tree_seed(std::uint64_t forest_seed, int tree_index) {
    // splitmix64 step over seed + index keeps per-tree streams decorrelated.
    std::uint64_t z = forest_seed + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(tree_index) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

Forest train_forest(const TrainingData& data, const ForestParams& params, int threads) {
    if (params.n_trees < 1) throw ConfigError("a forest needs at least one tree");
    if (data.rows == 0) throw EvalError("cannot train a forest on an empty dataset");

    Forest forest;
    forest.trees.resize(params.n_trees);
    parallel_for(static_cast<std::size_t>(params.n_trees), threads, [&](std::size_t t) {
        std::mt19937_64 rng(tree_seed(params.seed, static_cast<int>(t)));
        std::vector<std::int64_t> rows(data.rows);
        if (params.bootstrap) {
            std::uniform_int_distribution<std::int64_t> pick(0, data.rows - 1);
            for (auto& r : rows) r = pick(rng);
        } else {
            std::iota(rows.begin(), rows.end(), 0);
        }
        forest.trees[t] = train_tree(data, rows, params.tree, rng);
    });
    return forest;
}

}  // namespace semmatch
