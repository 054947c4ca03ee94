#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "semmatch/core.hpp"
#include "semmatch/shapley.hpp"

namespace semmatch {

// Synthetic binary-classification task with an interaction between the
// first continuous feature and the binary third feature.
struct SyntheticConfig {
    std::int64_t n_train = 10000;
    std::int64_t n_test = 2000;
    std::uint64_t seed = 42;
    double p_binary = 0.5;  // P(x3 = 1)
};

// Pre-sigmoid score x1*x3 - (1-x3)*x1 + x2; the label is its sign.
double interaction_score(std::span<const double> x);
double sigmoid(double z);

// Draw n_train + n_test samples: x1, x2 standard normal, x3 Bernoulli as
// exact 0/1; label 1 iff the interaction score is strictly positive.
// Samples [0, n_train) are the training block (ids "train-…"), the rest the
// test block (ids "test-…"). No predictions or attributions yet.
Dataset generate_synthetic(const SyntheticConfig& cfg);

// The generating model itself: sigmoid of the interaction score. Known
// ground truth to sanity-check the trained forest against.
std::unique_ptr<Predictor> analytic_model();

// Dense row-major training matrix with 0/1 targets.
struct TrainingData {
    std::vector<double> x;  // rows * cols
    std::vector<int> y;
    std::int64_t rows = 0;
    int cols = 0;

    double feature(std::int64_t r, int c) const { return x[r * cols + c]; }
    std::span<const double> row(std::int64_t r) const { return {x.data() + r * cols,
                                                                static_cast<std::size_t>(cols)}; }
};

// Extract features/labels from a contiguous block of dataset samples.
TrainingData to_training_data(std::span<const Sample> samples);

struct TreeParams {
    int max_depth = 8;
    int min_samples_split = 2;
    int feature_subsample = 2;  // features considered per split
};

// Leaf when feature < 0; internal nodes route x[feature] < threshold left.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    double leaf_value = 0.0;  // class-1 fraction
    std::unique_ptr<TreeNode> left, right;

    bool is_leaf() const { return feature < 0; }
};

struct ForestParams {
    int n_trees = 100;
    TreeParams tree;
    std::uint64_t seed = 42;
    bool bootstrap = true;  // test hook: disable to train each tree on the full data
};

// CART with Gini impurity: thresholds are midpoints of sorted distinct
// values, ties broken by lower feature index then lower threshold.
std::unique_ptr<TreeNode> train_tree(const TrainingData& data,
                                     std::span<const std::int64_t> row_indices,
                                     const TreeParams& params, std::mt19937_64& rng);

double predict_tree(const TreeNode& node, std::span<const double> x);

struct Forest {
    std::vector<std::unique_ptr<TreeNode>> trees;

    // Mean of per-tree leaf fractions.
    double predict_proba(std::span<const double> x) const;
    int predict_class(std::span<const double> x) const {
        return predict_proba(x) > 0.5 ? 1 : 0;
    }
};

// Per-tree seed derivation, exposed so a single tree can be reproduced.
std::uint64_t tree_seed(std::uint64_t forest_seed, int tree_index);

// Bagged forest: each tree trains on a seeded bootstrap resample of size
// |data|. Trees are independent given their derived seeds.
Forest train_forest(const TrainingData& data, const ForestParams& params, int threads = 1);

class ForestPredictor : public Predictor {
  public:
    ForestPredictor(const Forest& forest, int feature_count)
        : forest_(forest), feature_count_(feature_count) {}
    double predict_probability(std::span<const double> x) const override {
        return forest_.predict_proba(x);
    }
    int feature_count() const override { return feature_count_; }

  private:
    const Forest& forest_;
    int feature_count_;
};

}  // namespace semmatch
