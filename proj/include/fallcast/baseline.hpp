// One-step-ahead predictors over the last observed HDS: the clinical
// threshold rule and scalar-feature classifiers (k-NN, random forest,
// first-order gradient-boosted trees with logistic loss).
#pragma once

#include <cstdint>
#include <vector>

#include "fallcast/core.hpp"

namespace fallcast::baseline {

struct ThresholdModel {
  int theta = 20;
};

// Validates s_min <= theta <= s_max.
ThresholdModel make_threshold(int theta, const ScaleConfig& scale);

// label = 1 iff x_last >= theta (boundary inclusive); hard rule, so
// prob_fall is 0 or 1.
Prediction threshold_predict(const ThresholdModel& m, int x_last);

struct KnnModel {
  int k = 1;
  std::vector<OneStepPair> pairs;  // memorized training set
};

KnnModel knn_fit(const std::vector<OneStepPair>& pairs, int k);

// prob_fall = fall fraction among the k nearest neighbors by absolute
// distance. Distance ties at the selection boundary and 50/50 votes both
// break toward label 1.
Prediction knn_predict(const KnnModel& m, int x_last);

// Axis-threshold tree over the single scalar feature, nodes in a flat
// vector. x >= threshold descends right. Leaf payload is the fall-class
// vote fraction for classification trees and the fitted residual weight for
// regression stages.
struct TreeNode {
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return left < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict(double x) const;
};

// Gini-gain classification tree on (x, y) rows; split candidates are
// midpoints between consecutive distinct sorted feature values. Exposed so
// tests can trace paths and compare against an exhaustive split oracle.
Tree fit_classification_tree(const std::vector<double>& xs,
                             const std::vector<int>& ys, int max_depth);

// Squared-error regression tree; leaf value = sum(residual) / (count + l2).
Tree fit_regression_tree(const std::vector<double>& xs,
                         const std::vector<double>& residuals, int max_depth,
                         double l2);

struct ForestModel {
  std::vector<Tree> trees;
  int tree_count = 300;
  int max_depth = 10;
};

// Trees are trained on bootstrap resamples (size = training size, with
// replacement). Requires both classes in the input.
ForestModel forest_fit(const std::vector<OneStepPair>& pairs, int tree_count,
                       int max_depth, std::uint64_t seed);

// prob_fall = mean leaf fall fraction over trees.
Prediction forest_predict(const ForestModel& m, int x_last);

struct GbtModel {
  std::vector<Tree> stages;
  double learning_rate = 0.1;
  double l2_reg = 1.0;
  double base_score = 0.0;  // prior log-odds of the training labels
  int max_depth = 1;
};

// First-order boosting: each stage fits the negative gradient of the
// logistic loss (label minus current probability). The fit itself is
// deterministic; the seed parameter is kept for interface parity with the
// other model fitters.
GbtModel gbt_fit(const std::vector<OneStepPair>& pairs, int stage_count,
                 double learning_rate, double l2_reg, std::uint64_t seed,
                 int max_depth = 1);

// prob_fall = logistic(base_score + learning_rate * sum of stage outputs).
Prediction gbt_predict(const GbtModel& m, int x_last);

}  // namespace fallcast::baseline
