// Metrics, ROC/AUC and the balanced 10-fold cross-validation harness.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fallcast/core.hpp"

namespace fallcast::eval {

struct ConfusionCounts {
  long tp = 0, tn = 0, fp = 0, fn = 0;

  long positives() const { return tp + fn; }
  long negatives() const { return tn + fp; }
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(const std::vector<int>& preds,
                          const std::vector<int>& truth);

struct Metrics {
  double accuracy = 0.0;
  double f1 = 0.0;
  double specificity = 0.0;  // TNR
  double sensitivity = 0.0;  // TPR
  double ppv = 0.0;
};

// Exact ratio metrics with 0-denominator sentinels (the ratio is 0 when its
// denominator is 0). Throws DataError when the table is empty.
Metrics metrics(const ConfusionCounts& c);

struct RocPoint {
  double threshold = 0.0;  // classify score >= threshold as fall
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) .. (1,1), monotone in both axes
  double auc = 0.0;
};

// Descending-score sweep with tie groups as single steps. The trapezoid AUC
// is accumulated in integer pair counts and divided once, so it equals the
// Mann-Whitney statistic (ties counted 1/2) bit for bit.
RocCurve roc_auc(const std::vector<double>& scores,
                 const std::vector<int>& truth);

// One cross-validation fold. Test and train are class-balanced; validation
// is a stratified 10% carved out of the balanced training pool, so the
// three sets are mutually disjoint.
struct FoldSplit {
  int fold_index = 0;
  std::vector<std::string> test_ids;
  std::vector<std::string> train_ids;
  std::vector<std::string> validation_ids;
};

// Balanced fold construction: per fold the test set takes
// n_t = floor(0.10 * min-class count) encounters from each class, with the
// fall-class test slices partitioning a single shuffle (disjoint across
// folds). The training pool is every remaining fall encounter plus an
// equal-count non-fall sample, resampled independently per fold.
std::vector<FoldSplit> make_folds(const Dataset& d, int k, std::uint64_t seed);

struct FoldMetrics {
  int fold = 0;
  double accuracy = 0.0, f1 = 0.0, specificity = 0.0, sensitivity = 0.0,
         ppv = 0.0, auc = 0.0;
};

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population std (divide by k)
};

struct MetricsReport {
  std::vector<FoldMetrics> folds;
  MeanStd accuracy, f1, specificity, sensitivity, ppv, auc;
};

// A model trained on one fold, able to score unseen encounters.
class TrainedModel {
 public:
  virtual ~TrainedModel() = default;
  virtual Prediction predict(const Encounter& e, const ScaleConfig& scale) const = 0;
};

// Builds a fresh model from one fold's train/validation encounters.
// Baselines ignore the validation split.
using ModelFactory = std::function<std::unique_ptr<TrainedModel>(
    const std::vector<Encounter>& train, const std::vector<Encounter>& val,
    const ScaleConfig& scale, std::uint64_t fold_seed)>;

// Trains a fresh model per fold and evaluates it on that fold's balanced
// test set. Folds may run concurrently (workers > 1); reporting order is by
// fold index regardless of completion order. Fold errors propagate with the
// fold index prefixed.
MetricsReport cross_validate_folds(const ModelFactory& factory,
                                   const Dataset& d,
                                   const std::vector<FoldSplit>& folds,
                                   std::uint64_t seed, int workers = 1);

// Convenience wrapper: builds the folds from (d, k, seed) and runs them.
MetricsReport cross_validate(const ModelFactory& factory, const Dataset& d,
                             int k, std::uint64_t seed, int workers = 1);

}  // namespace fallcast::eval
