#include "fallcast/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "fallcast/rng.hpp"

namespace fallcast::eval {

ConfusionCounts confusion(const std::vector<int>& preds,
                          const std::vector<int>& truth) {
  if (preds.size() != truth.size())
    throw DataError("confusion: prediction/truth length mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (truth[i] == 1)
      preds[i] == 1 ? ++c.tp : ++c.fn;
    else
      preds[i] == 1 ? ++c.fp : ++c.tn;
  }
  return c;
}

namespace {
double ratio(long num, long den) { return den > 0 ? double(num) / double(den) : 0.0; }
}  // namespace

Metrics metrics(const ConfusionCounts& c) {
  if (c.positives() + c.negatives() == 0)
    throw DataError("metrics: empty confusion table");
  Metrics m;
  m.accuracy = ratio(c.tp + c.tn, c.positives() + c.negatives());
  m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  m.sensitivity = ratio(c.tp, c.tp + c.fn);
  m.ppv = ratio(c.tp, c.tp + c.fp);
  return m;
}

RocCurve roc_auc(const std::vector<double>& scores,
                 const std::vector<int>& truth) {
  if (scores.size() != truth.size())
    throw DataError("roc_auc: score/truth length mismatch");
  long pos = std::count(truth.begin(), truth.end(), 1);
  long neg = static_cast<long>(truth.size()) - pos;
  if (pos == 0 || neg == 0)
    throw DataError("roc_auc: both classes required");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});

  // Area in units of half pairs: 2*area = sum over tie groups of
  // 2*dFP*TP_before + dFP*dTP. Dividing once by 2*P*N makes the result
  // identical to (wins + ties/2) / (P*N).
  long tp = 0, fp = 0;
  std::uint64_t area2 = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    long dtp = 0, dfp = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      truth[order[j]] == 1 ? ++dtp : ++dfp;
      ++j;
    }
    area2 += static_cast<std::uint64_t>(dfp) *
             static_cast<std::uint64_t>(2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    curve.points.push_back(
        {scores[order[i]], double(fp) / double(neg), double(tp) / double(pos)});
    i = j;
  }
  curve.auc = double(area2) / (2.0 * double(pos) * double(neg));
  return curve;
}

namespace {

struct ClassIds {
  std::vector<std::string> fall, nofall;
};

ClassIds split_by_class(const Dataset& d) {
  ClassIds ids;
  for (const Encounter& e : d.encounters)
    (e.outcome == 1 ? ids.fall : ids.nofall).push_back(e.series.encounter_id);
  return ids;
}

// Moves a stratified 10% of a balanced train pool into the validation set.
void carve_validation(std::vector<std::string>& pool,
                      std::vector<std::string>& validation,
                      std::mt19937_64& rng) {
  std::shuffle(pool.begin(), pool.end(), rng);
  auto n_val = pool.size() / 10;
  validation.insert(validation.end(), pool.end() - static_cast<long>(n_val), pool.end());
  pool.resize(pool.size() - n_val);
}

}  // namespace

std::vector<FoldSplit> make_folds(const Dataset& d, int k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("make_folds: k must be >= 1");
  ClassIds ids = split_by_class(d);
  const long p = static_cast<long>(ids.fall.size());
  const long n = static_cast<long>(ids.nofall.size());
  const long n_t = std::min(p, n) / 10;
  if (n_t < 1)
    throw DataError("make_folds: smallest class too small (need >= 10 per class)");
  if (k * n_t > p)
    throw DataError("make_folds: fall class too small to partition " +
                    std::to_string(k) + " disjoint test sets");
  if (n - n_t < p - n_t)
    throw DataError("make_folds: non-fall class too small for balanced training");

  // One global shuffle of the fall class; fold i's fall test ids are the
  // i-th slice, so test sets partition the class disjointly across folds.
  std::vector<std::string> fall_order = ids.fall;
  {
    auto rng = make_rng(seed, "folds/fall");
    std::shuffle(fall_order.begin(), fall_order.end(), rng);
  }

  std::vector<FoldSplit> folds;
  folds.reserve(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    FoldSplit fold;
    fold.fold_index = f;

    std::vector<std::string> fall_test(
        fall_order.begin() + static_cast<long>(f) * n_t,
        fall_order.begin() + static_cast<long>(f + 1) * n_t);
    std::vector<std::string> fall_train;
    for (const auto& id : fall_order)
      if (std::find(fall_test.begin(), fall_test.end(), id) == fall_test.end())
        fall_train.push_back(id);

    // Non-fall test and the equal-count training sample are drawn from one
    // per-fold shuffle, resampled independently across folds.
    std::vector<std::string> nofall_order = ids.nofall;
    auto rng = make_rng(seed, "folds/nofall", static_cast<std::uint64_t>(f));
    std::shuffle(nofall_order.begin(), nofall_order.end(), rng);
    std::vector<std::string> nofall_test(nofall_order.begin(),
                                         nofall_order.begin() + n_t);
    std::vector<std::string> nofall_train(
        nofall_order.begin() + n_t,
        nofall_order.begin() + n_t + (p - n_t));

    auto val_rng = make_rng(seed, "folds/validation", static_cast<std::uint64_t>(f));
    carve_validation(fall_train, fold.validation_ids, val_rng);
    carve_validation(nofall_train, fold.validation_ids, val_rng);

    fold.test_ids = std::move(fall_test);
    fold.test_ids.insert(fold.test_ids.end(), nofall_test.begin(), nofall_test.end());
    fold.train_ids = std::move(fall_train);
    fold.train_ids.insert(fold.train_ids.end(), nofall_train.begin(), nofall_train.end());
    folds.push_back(std::move(fold));
  }
  return folds;
}

namespace {

MeanStd mean_std(const std::vector<FoldMetrics>& folds,
                 double FoldMetrics::* field) {
  MeanStd ms;
  const double k = static_cast<double>(folds.size());
  for (const auto& f : folds) ms.mean += f.*field;
  ms.mean /= k;
  double var = 0.0;
  for (const auto& f : folds) {
    const double dev = f.*field - ms.mean;
    var += dev * dev;
  }
  ms.stddev = std::sqrt(var / k);
  return ms;
}

FoldMetrics evaluate_fold(const ModelFactory& factory, const Dataset& d,
                          const FoldSplit& fold, std::uint64_t seed) {
  std::unordered_map<std::string, const Encounter*> by_id;
  for (const Encounter& e : d.encounters) by_id[e.series.encounter_id] = &e;
  auto collect = [&](const std::vector<std::string>& ids) {
    std::vector<Encounter> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end())
        throw DataError("fold references unknown encounter " + id);
      out.push_back(*it->second);
    }
    return out;
  };

  auto train = collect(fold.train_ids);
  auto val = collect(fold.validation_ids);
  auto test = collect(fold.test_ids);

  auto model = factory(train, val, d.scale,
                       derive_seed(seed, "fold", static_cast<std::uint64_t>(fold.fold_index)));

  std::vector<int> preds, truth;
  std::vector<double> scores;
  preds.reserve(test.size());
  truth.reserve(test.size());
  scores.reserve(test.size());
  for (const Encounter& e : test) {
    Prediction pr = model->predict(e, d.scale);
    preds.push_back(pr.label);
    scores.push_back(pr.prob_fall);
    truth.push_back(e.outcome);
  }

  Metrics m = metrics(confusion(preds, truth));
  FoldMetrics fm;
  fm.fold = fold.fold_index;
  fm.accuracy = m.accuracy;
  fm.f1 = m.f1;
  fm.specificity = m.specificity;
  fm.sensitivity = m.sensitivity;
  fm.ppv = m.ppv;
  fm.auc = roc_auc(scores, truth).auc;
  return fm;
}

}  // namespace

MetricsReport cross_validate_folds(const ModelFactory& factory,
                                   const Dataset& d,
                                   const std::vector<FoldSplit>& folds,
                                   std::uint64_t seed, int workers) {
  if (folds.empty()) throw ConfigError("cross_validate: no folds");
  const int k = static_cast<int>(folds.size());
  std::vector<FoldMetrics> results(folds.size());
  std::vector<std::string> errors(folds.size());

  if (workers < 1) workers = 1;
  workers = std::min(workers, k);
  if (workers == 1) {
    for (int f = 0; f < k; ++f) {
      try {
        results[static_cast<std::size_t>(f)] = evaluate_fold(factory, d, folds[static_cast<std::size_t>(f)], seed);
      } catch (const std::exception& ex) {
        throw DataError("fold " + std::to_string(f) + ": " + ex.what());
      }
    }
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int f = next.fetch_add(1); f < k; f = next.fetch_add(1)) {
          try {
            results[static_cast<std::size_t>(f)] = evaluate_fold(factory, d, folds[static_cast<std::size_t>(f)], seed);
          } catch (const std::exception& ex) {
            errors[static_cast<std::size_t>(f)] = ex.what();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (int f = 0; f < k; ++f)
      if (!errors[static_cast<std::size_t>(f)].empty())
        throw DataError("fold " + std::to_string(f) + ": " + errors[static_cast<std::size_t>(f)]);
  }

  MetricsReport report;
  report.folds = std::move(results);
  report.accuracy = mean_std(report.folds, &FoldMetrics::accuracy);
  report.f1 = mean_std(report.folds, &FoldMetrics::f1);
  report.specificity = mean_std(report.folds, &FoldMetrics::specificity);
  report.sensitivity = mean_std(report.folds, &FoldMetrics::sensitivity);
  report.ppv = mean_std(report.folds, &FoldMetrics::ppv);
  report.auc = mean_std(report.folds, &FoldMetrics::auc);
  return report;
}

MetricsReport cross_validate(const ModelFactory& factory, const Dataset& d,
                             int k, std::uint64_t seed, int workers) {
  return cross_validate_folds(factory, d, make_folds(d, k, seed), seed, workers);
}

}  // namespace fallcast::eval
