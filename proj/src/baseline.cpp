#include "fallcast/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace fallcast::baseline {

ThresholdModel make_threshold(int theta, const ScaleConfig& scale) {
  if (theta < scale.s_min || theta > scale.s_max)
    throw ConfigError("threshold theta " + std::to_string(theta) +
                      " outside scale [" + std::to_string(scale.s_min) + ", " +
                      std::to_string(scale.s_max) + "]");
  return ThresholdModel{theta};
}

Prediction threshold_predict(const ThresholdModel& m, int x_last) {
  const int label = x_last >= m.theta ? 1 : 0;
  return Prediction{label, static_cast<double>(label)};
}

KnnModel knn_fit(const std::vector<OneStepPair>& pairs, int k) {
  if (pairs.empty()) throw DataError("knn_fit: empty training set");
  if (k < 1) throw ConfigError("knn_fit: k must be >= 1");
  if (static_cast<std::size_t>(k) > pairs.size())
    throw DataError("knn_fit: k exceeds training set size");
  return KnnModel{k, pairs};
}

Prediction knn_predict(const KnnModel& m, int x_last) {
  std::vector<std::size_t> order(m.pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Equidistant candidates with label 1 are preferred at the selection
  // boundary; remaining ties resolve by feature value then insertion order
  // so predictions do not depend on container reshuffles.
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const int da = std::abs(m.pairs[a].x_last - x_last);
    const int db = std::abs(m.pairs[b].x_last - x_last);
    if (da != db) return da < db;
    if (m.pairs[a].y != m.pairs[b].y) return m.pairs[a].y > m.pairs[b].y;
    if (m.pairs[a].x_last != m.pairs[b].x_last)
      return m.pairs[a].x_last < m.pairs[b].x_last;
    return a < b;
  });
  int votes = 0;
  for (int i = 0; i < m.k; ++i) votes += m.pairs[order[static_cast<std::size_t>(i)]].y;
  const double prob = static_cast<double>(votes) / static_cast<double>(m.k);
  return Prediction{prob >= 0.5 ? 1 : 0, prob};
}

double Tree::predict(double x) const {
  int node = 0;
  while (!nodes[static_cast<std::size_t>(node)].is_leaf())
    node = x >= nodes[static_cast<std::size_t>(node)].threshold
               ? nodes[static_cast<std::size_t>(node)].right
               : nodes[static_cast<std::size_t>(node)].left;
  return nodes[static_cast<std::size_t>(node)].value;
}

namespace {

struct Row {
  double x;
  double y;
};

// Shared recursive builder. The criterion returns the summed child impurity
// for a prefix/suffix split; leaf_value maps the rows reaching a leaf to its
// payload. Rows arrive sorted by x.
struct TreeBuilder {
  int max_depth;
  double l2 = 0.0;
  bool classification = false;

  std::vector<TreeNode> nodes;

  double leaf_value(const std::vector<Row>& rows, std::size_t lo, std::size_t hi) const {
    double sum = 0.0;
    for (std::size_t i = lo; i < hi; ++i) sum += rows[i].y;
    const double n = static_cast<double>(hi - lo);
    return classification ? sum / n : sum / (n + l2);
  }

  // Gini impurity (unnormalized by total) of a side with `n` rows of which
  // `s` are positive: n * (1 - p0^2 - p1^2) = 2*s*(n-s)/n.
  static double gini_side(double s, double n) {
    return n > 0.0 ? 2.0 * s * (n - s) / n : 0.0;
  }

  static double sse_side(double sum, double sumsq, double n) {
    return n > 0.0 ? sumsq - sum * sum / n : 0.0;
  }

  int build(const std::vector<Row>& rows, std::size_t lo, std::size_t hi, int depth) {
    const std::size_t n = hi - lo;
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      sum += rows[i].y;
      sumsq += rows[i].y * rows[i].y;
    }

    const int index = static_cast<int>(nodes.size());
    nodes.push_back(TreeNode{});

    double best_gain = 0.0;
    double best_threshold = 0.0;
    std::size_t best_cut = 0;
    if (depth < max_depth) {
      const double parent = classification
                                ? gini_side(sum, static_cast<double>(n))
                                : sse_side(sum, sumsq, static_cast<double>(n));
      double lsum = 0.0, lsumsq = 0.0;
      for (std::size_t i = lo; i + 1 < hi; ++i) {
        lsum += rows[i].y;
        lsumsq += rows[i].y * rows[i].y;
        if (rows[i].x == rows[i + 1].x) continue;  // not a distinct boundary
        const double nl = static_cast<double>(i - lo + 1);
        const double nr = static_cast<double>(hi - i - 1);
        const double child =
            classification
                ? gini_side(lsum, nl) + gini_side(sum - lsum, nr)
                : sse_side(lsum, lsumsq, nl) + sse_side(sum - lsum, sumsq - lsumsq, nr);
        const double gain = parent - child;
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best_threshold = 0.5 * (rows[i].x + rows[i + 1].x);
          best_cut = i + 1;
        }
      }
    }

    if (best_cut == 0) {
      nodes[static_cast<std::size_t>(index)].value = leaf_value(rows, lo, hi);
      return index;
    }
    nodes[static_cast<std::size_t>(index)].threshold = best_threshold;
    nodes[static_cast<std::size_t>(index)].left = build(rows, lo, best_cut, depth + 1);
    nodes[static_cast<std::size_t>(index)].right = build(rows, best_cut, hi, depth + 1);
    return index;
  }
};

Tree fit_tree(const std::vector<double>& xs, const std::vector<double>& ys,
              int max_depth, double l2, bool classification) {
  if (xs.empty()) throw DataError("tree fit: empty input");
  if (xs.size() != ys.size()) throw DataError("tree fit: row length mismatch");
  std::vector<Row> rows(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) rows[i] = {xs[i], ys[i]};
  std::sort(rows.begin(), rows.end(),
            [](const Row& a, const Row& b) { return a.x < b.x; });
  TreeBuilder builder{max_depth, l2, classification, {}};
  builder.build(rows, 0, rows.size(), 0);
  return Tree{std::move(builder.nodes)};
}

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void require_both_classes(const std::vector<OneStepPair>& pairs,
                          const char* who) {
  bool has0 = false, has1 = false;
  for (const auto& p : pairs) (p.y == 1 ? has1 : has0) = true;
  if (!has0 || !has1)
    throw DataError(std::string(who) + ": both classes must be present");
}

}  // namespace

Tree fit_classification_tree(const std::vector<double>& xs,
                             const std::vector<int>& ys, int max_depth) {
  std::vector<double> yd(ys.begin(), ys.end());
  return fit_tree(xs, yd, max_depth, 0.0, /*classification=*/true);
}

Tree fit_regression_tree(const std::vector<double>& xs,
                         const std::vector<double>& residuals, int max_depth,
                         double l2) {
  return fit_tree(xs, residuals, max_depth, l2, /*classification=*/false);
}

ForestModel forest_fit(const std::vector<OneStepPair>& pairs, int tree_count,
                       int max_depth, std::uint64_t seed) {
  if (tree_count < 1) throw ConfigError("forest_fit: tree_count must be >= 1");
  if (max_depth < 1) throw ConfigError("forest_fit: max_depth must be >= 1");
  require_both_classes(pairs, "forest_fit");

  const std::size_t n = pairs.size();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  ForestModel model;
  model.tree_count = tree_count;
  model.max_depth = max_depth;
  model.trees.reserve(static_cast<std::size_t>(tree_count));
  std::vector<double> xs(n);
  std::vector<int> ys(n);
  for (int t = 0; t < tree_count; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const OneStepPair& p = pairs[pick(rng)];
      xs[i] = p.x_last;
      ys[i] = p.y;
    }
    model.trees.push_back(fit_classification_tree(xs, ys, max_depth));
  }
  return model;
}

Prediction forest_predict(const ForestModel& m, int x_last) {
  double prob = 0.0;
  for (const Tree& t : m.trees) prob += t.predict(x_last);
  prob /= static_cast<double>(m.trees.size());
  return Prediction{prob >= 0.5 ? 1 : 0, prob};
}

GbtModel gbt_fit(const std::vector<OneStepPair>& pairs, int stage_count,
                 double learning_rate, double l2_reg, std::uint64_t /*seed*/,
                 int max_depth) {
  if (stage_count < 0) throw ConfigError("gbt_fit: stage_count must be >= 0");
  if (max_depth < 1) throw ConfigError("gbt_fit: max_depth must be >= 1");
  if (l2_reg < 0.0) throw ConfigError("gbt_fit: l2_reg must be >= 0");
  require_both_classes(pairs, "gbt_fit");

  const std::size_t n = pairs.size();
  double prior = 0.0;
  for (const auto& p : pairs) prior += p.y;
  prior /= static_cast<double>(n);

  GbtModel model;
  model.learning_rate = learning_rate;
  model.l2_reg = l2_reg;
  model.max_depth = max_depth;
  model.base_score = std::log(prior / (1.0 - prior));
  model.stages.reserve(static_cast<std::size_t>(stage_count));

  std::vector<double> xs(n), logits(n, model.base_score), residuals(n);
  for (std::size_t i = 0; i < n; ++i) xs[i] = pairs[i].x_last;
  for (int s = 0; s < stage_count; ++s) {
    for (std::size_t i = 0; i < n; ++i)
      residuals[i] = pairs[i].y - logistic(logits[i]);
    Tree stage = fit_regression_tree(xs, residuals, max_depth, l2_reg);
    for (std::size_t i = 0; i < n; ++i)
      logits[i] += learning_rate * stage.predict(xs[i]);
    model.stages.push_back(std::move(stage));
  }
  return model;
}

Prediction gbt_predict(const GbtModel& m, int x_last) {
  double z = m.base_score;
  for (const Tree& t : m.stages) z += m.learning_rate * t.predict(x_last);
  if (!std::isfinite(z)) throw NumericError("gbt_predict: non-finite logit");
  const double prob = logistic(z);
  return Prediction{prob >= 0.5 ? 1 : 0, prob};
}

}  // namespace fallcast::baseline
