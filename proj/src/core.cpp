#include "fallcast/core.hpp"

#include <unordered_set>

namespace fallcast {

std::vector<Violation> validate_dataset(const Dataset& d) {
  std::vector<Violation> out;
  const ScaleConfig& sc = d.scale;

  if (sc.s_min >= sc.s_max)
    out.push_back({"", "scale: s_min must be < s_max"});
  if (!(sc.delta_t_hours > 0.0))
    out.push_back({"", "scale: delta_t_hours must be > 0"});

  std::unordered_set<std::string> seen;
  for (const Encounter& e : d.encounters) {
    const std::string& id = e.series.encounter_id;
    if (!seen.insert(id).second)
      out.push_back({id, "duplicate encounter_id"});
    if (e.series.scores.empty()) {
      out.push_back({id, "empty score list"});
    } else {
      for (int s : e.series.scores) {
        if (s < sc.s_min || s > sc.s_max) {
          out.push_back({id, "score " + std::to_string(s) + " outside [" +
                                 std::to_string(sc.s_min) + ", " +
                                 std::to_string(sc.s_max) + "]"});
          break;  // one range violation per encounter is enough
        }
      }
    }
    if (e.origin < 1 || e.origin > static_cast<int>(e.series.scores.size()))
      out.push_back({id, "origin " + std::to_string(e.origin) +
                             " outside [1, length]"});
    if (e.outcome != 0 && e.outcome != 1)
      out.push_back({id, "outcome must be 0 or 1"});
  }
  return out;
}

std::vector<OneStepPair> derive_onestep_pairs(const Dataset& d) {
  std::vector<OneStepPair> pairs;
  pairs.reserve(d.encounters.size());
  for (const Encounter& e : d.encounters) {
    if (e.origin < 1 || e.origin > static_cast<int>(e.series.scores.size()))
      throw DataError("encounter " + e.series.encounter_id +
                      ": origin out of range");
    pairs.push_back({e.series.scores[e.origin - 1], e.outcome});
  }
  return pairs;
}

std::vector<double> derive_sequence(const Encounter& e, const ScaleConfig& scale) {
  if (e.origin < 1 || e.origin > static_cast<int>(e.series.scores.size()))
    throw DataError("encounter " + e.series.encounter_id +
                    ": origin out of range");
  if (scale.s_min >= scale.s_max)
    throw DataError("scale: s_min must be < s_max");
  std::vector<double> seq(static_cast<std::size_t>(e.origin));
  const double lo = scale.s_min;
  const double range = scale.range();
  for (int t = 0; t < e.origin; ++t)
    seq[static_cast<std::size_t>(t)] = (e.series.scores[static_cast<std::size_t>(t)] - lo) / range;
  return seq;
}

}  // namespace fallcast
