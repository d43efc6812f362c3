#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "radhop/matrix.hpp"

namespace radhop {

struct GbdtParams {
    int n_trees = 300;
    int max_depth = 4;
    double learning_rate = 0.1;
    int min_samples_leaf = 20;
    double subsample = 0.8;
    double l2_leaf_reg = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// Binary regression tree over float features. Internal nodes route on
// value < threshold; leaves carry additive log-odds (before learning rate).
struct TreeNode {
    std::int32_t feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes; // nodes[0] is the root
    double leaf_value(const float* x) const;
};

struct GbdtModel {
    GbdtParams params;
    std::int64_t n_features = 0;
    double base_score = 0.0; // prior log-odds
    std::vector<Tree> trees;

    double predict_margin(const float* x) const;
    // sigmoid(base_score + sum of learning_rate * leaf values)
    double predict_proba(std::span<const float> x) const;
};

// Stagewise logistic-loss boosting with exact greedy split search maximizing
// the second-order gain 0.5*[GL^2/(HL+l2) + GR^2/(HR+l2) - G^2/(H+l2)];
// leaf weight is -G/(H+l2). Ties break to the lowest feature index, then the
// lowest threshold. Deterministic for a fixed seed and any thread count.
GbdtModel gbdt_train(const FeatureMatrix& x, std::span<const std::uint8_t> labels,
                     const GbdtParams& params, int threads = 0);

// Stratified k-fold cross-prediction: each sample is scored by the model
// trained without its fold.
std::vector<double> gbdt_cross_predict(const FeatureMatrix& x,
                                       std::span<const std::uint8_t> labels,
                                       const GbdtParams& params, int folds, int threads = 0);

void gbdt_save(const GbdtModel& model, const std::string& path);
GbdtModel gbdt_load(const std::string& path);
void gbdt_write(const GbdtModel& model, std::ostream& os);
GbdtModel gbdt_read(std::istream& is);

} // namespace radhop
