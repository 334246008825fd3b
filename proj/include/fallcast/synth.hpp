// Synthetic encounter generator standing in for the private cohort, plus
// the CSV/metadata persistence every command consumes.
//
// CSV layout, one row per score, rows of an encounter contiguous with
// 1-based ascending seq_index:
//   encounter_id,seq_index,hds,outcome,origin
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "fallcast/core.hpp"

namespace fallcast::synth {

// Defaults are a 10x scale-down of the cohort's 4,245 / 42,450 class split.
// Fall encounters get a linear upward drift of trend_slope per step; scores
// are rounded and clamped into the scale range. The generator is a stand-in
// for clinical data: the marginal score distribution here is a placeholder,
// not a published one.
struct SynthConfig {
  int n_fall = 425;
  int n_nofall = 4250;
  double baseline_mean = 8.0;
  double baseline_std = 3.0;
  double trend_slope = 1.0;  // score units per step, fall encounters only
  double noise_std = 1.5;
  int min_len = 4;  // steps; fall origin = len - 1, so min_len >= 2
  int max_len = 20;
  ScaleConfig scale;
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& c);

// Deterministic under c.seed. Fall encounters place the fall at the final
// generated step (origin = length - 1); non-fall encounters use the full
// length as origin.
Dataset generate(const SynthConfig& c);

// Atomic write (temp file + rename). save_csv writes scores only; the scale
// travels in a sidecar JSON via save_meta/load_meta.
void save_csv(const Dataset& d, const std::filesystem::path& path);

// Throws DataError with a line number on malformed rows, non-contiguous
// encounter blocks or out-of-order seq_index, and surfaces validation
// violations of the parsed dataset. load(save(d)) == d.
Dataset load_csv(const std::filesystem::path& path, const ScaleConfig& scale);

void save_meta(const ScaleConfig& scale, const std::filesystem::path& path);
ScaleConfig load_meta(const std::filesystem::path& path);

// Convenience pair: "<stem>.csv" plus "<stem>.meta.json" next to it.
void save_dataset(const Dataset& d, const std::filesystem::path& csv_path);
Dataset load_dataset(const std::filesystem::path& csv_path);

}  // namespace fallcast::synth
