// Domain types for HDS encounter time series, plus validation and the
// derivations every model family consumes.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fallcast {

// Error taxonomy shared across the library. The CLI maps these onto
// distinct exit codes (config=1, data=2, numeric=3).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// HDS scale and sampling interval. The score range is configurable because
// published threshold values only bound it from below; 0..30 accommodates
// thresholds 7 and 20.
struct ScaleConfig {
  int s_min = 0;
  int s_max = 30;
  double delta_t_hours = 8.0;

  bool operator==(const ScaleConfig&) const = default;
  int range() const { return s_max - s_min; }
};

// One patient encounter's chronologically ordered HDS values, sampled every
// delta_t_hours.
struct HdsSeries {
  std::string encounter_id;
  std::vector<int> scores;

  bool operator==(const HdsSeries&) const = default;
};

// A series plus its binary fall outcome and the prediction origin: the
// 1-based index of the last observed score feeding a prediction for the
// following timestamp. Non-fall encounters use the full length; fall
// encounters use the last score strictly before the fall.
struct Encounter {
  HdsSeries series;
  int outcome = 0;  // 1 = fall at timestamp origin+1
  int origin = 0;   // 1-based, 1 <= origin <= scores.size()

  bool operator==(const Encounter&) const = default;
};

struct Dataset {
  std::vector<Encounter> encounters;
  ScaleConfig scale;

  bool operator==(const Dataset&) const = default;
};

// Binary prediction with a ranking score for ROC analysis. Probabilistic
// models satisfy label == (prob_fall >= 0.5); hard rules emit prob_fall in
// {0, 1}.
struct Prediction {
  int label = 0;
  double prob_fall = 0.0;
};

// A broken invariant found in a dataset. Violations are data, not faults:
// validation never throws.
struct Violation {
  std::string encounter_id;  // empty for dataset-level rules
  std::string rule;
};

std::vector<Violation> validate_dataset(const Dataset& d);

// One training pair for the one-step-ahead classifiers: the score at the
// prediction origin and the next-interval outcome.
struct OneStepPair {
  int x_last = 0;
  int y = 0;
};

// One pair per encounter, in dataset order. Throws DataError naming the
// encounter if an origin is out of range.
std::vector<OneStepPair> derive_onestep_pairs(const Dataset& d);

// scores[1..origin] min-max normalized into [0,1]. Baselines consume raw
// integers; the recurrent nets consume this.
std::vector<double> derive_sequence(const Encounter& e, const ScaleConfig& scale);

}  // namespace fallcast
