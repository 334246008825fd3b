#include "fallcast/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "fallcast/fs_util.hpp"

namespace fallcast::synth {

using nlohmann::json;

void validate(const SynthConfig& c) {
  if (c.n_fall < 0 || c.n_nofall < 0)
    throw ConfigError("synth: encounter counts must be >= 0");
  if (c.min_len < 2) throw ConfigError("synth: min_len must be >= 2");
  if (c.max_len < c.min_len) throw ConfigError("synth: max_len < min_len");
  if (c.trend_slope < 0.0) throw ConfigError("synth: trend_slope must be >= 0");
  if (c.noise_std < 0.0) throw ConfigError("synth: noise_std must be >= 0");
  if (c.baseline_std < 0.0) throw ConfigError("synth: baseline_std must be >= 0");
  if (c.scale.s_min >= c.scale.s_max)
    throw ConfigError("synth: scale s_min must be < s_max");
  if (!(c.scale.delta_t_hours > 0.0))
    throw ConfigError("synth: delta_t_hours must be > 0");
}

namespace {

int clamp_score(double raw, const ScaleConfig& sc) {
  const long r = std::lround(raw);
  return static_cast<int>(std::clamp(r, static_cast<long>(sc.s_min),
                                     static_cast<long>(sc.s_max)));
}

std::string make_id(const char* prefix, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%06d", prefix, index);
  return buf;
}

}  // namespace

Dataset generate(const SynthConfig& c) {
  validate(c);
  Dataset d;
  d.scale = c.scale;
  d.encounters.reserve(static_cast<std::size_t>(c.n_fall + c.n_nofall));

  std::mt19937_64 rng(c.seed);
  std::uniform_int_distribution<int> len_dist(c.min_len, c.max_len);
  std::normal_distribution<double> baseline(c.baseline_mean, c.baseline_std);
  std::normal_distribution<double> noise(0.0, c.noise_std);

  auto emit = [&](const char* prefix, int index, bool fall) {
    Encounter e;
    e.series.encounter_id = make_id(prefix, index);
    const int len = len_dist(rng);
    const double base = baseline(rng);
    e.series.scores.resize(static_cast<std::size_t>(len));
    for (int t = 0; t < len; ++t) {
      const double drift = fall ? c.trend_slope * t : 0.0;
      e.series.scores[static_cast<std::size_t>(t)] =
          clamp_score(base + drift + noise(rng), c.scale);
    }
    e.outcome = fall ? 1 : 0;
    e.origin = fall ? len - 1 : len;  // fall happens at the final step
    d.encounters.push_back(std::move(e));
  };

  for (int i = 0; i < c.n_fall; ++i) emit("F", i + 1, true);
  for (int i = 0; i < c.n_nofall; ++i) emit("N", i + 1, false);
  return d;
}

void save_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "encounter_id,seq_index,hds,outcome,origin\n";
  for (const Encounter& e : d.encounters) {
    for (std::size_t t = 0; t < e.series.scores.size(); ++t) {
      out << e.series.encounter_id << ',' << (t + 1) << ','
          << e.series.scores[t] << ',' << e.outcome << ',' << e.origin << '\n';
    }
  }
  write_file_atomic(path, out.str());
}

namespace {

int parse_int(const std::string& field, int line_no, const char* what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(field, &pos);
    if (pos != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) + ": bad " + what +
                    " value '" + field + "'");
  }
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const ScaleConfig& scale) {
  std::istringstream in(read_file(path));
  std::string line;
  int line_no = 0;

  if (!std::getline(in, line))
    throw DataError(path.string() + ": empty file (header expected)");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "encounter_id,seq_index,hds,outcome,origin")
    throw DataError("line 1: unexpected header '" + line + "'");

  Dataset d;
  d.scale = scale;
  std::unordered_set<std::string> finished;
  Encounter* current = nullptr;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        fields.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 5)
      throw DataError("line " + std::to_string(line_no) + ": expected 5 fields, got " +
                      std::to_string(fields.size()));

    const std::string& id = fields[0];
    const int seq_index = parse_int(fields[1], line_no, "seq_index");
    const int hds = parse_int(fields[2], line_no, "hds");
    const int outcome = parse_int(fields[3], line_no, "outcome");
    const int origin = parse_int(fields[4], line_no, "origin");

    if (current == nullptr || current->series.encounter_id != id) {
      if (finished.count(id))
        throw DataError("line " + std::to_string(line_no) + ": rows for encounter " +
                        id + " are not contiguous");
      if (current != nullptr) finished.insert(current->series.encounter_id);
      d.encounters.push_back(Encounter{});
      current = &d.encounters.back();
      current->series.encounter_id = id;
      current->outcome = outcome;
      current->origin = origin;
    } else {
      if (outcome != current->outcome || origin != current->origin)
        throw DataError("line " + std::to_string(line_no) +
                        ": outcome/origin changed within encounter " + id);
    }
    if (seq_index != static_cast<int>(current->series.scores.size()) + 1)
      throw DataError("line " + std::to_string(line_no) + ": seq_index " +
                      std::to_string(seq_index) + " out of order for encounter " + id);
    current->series.scores.push_back(hds);
  }

  auto violations = validate_dataset(d);
  if (!violations.empty()) {
    std::string msg = path.string() + ": dataset invalid:";
    std::size_t shown = 0;
    for (const auto& v : violations) {
      if (shown++ == 5) {
        msg += " ...";
        break;
      }
      msg += " [" + v.encounter_id + ": " + v.rule + "]";
    }
    throw DataError(msg);
  }
  return d;
}

void save_meta(const ScaleConfig& scale, const std::filesystem::path& path) {
  json j{{"s_min", scale.s_min},
         {"s_max", scale.s_max},
         {"delta_t_hours", scale.delta_t_hours}};
  write_file_atomic(path, j.dump(2) + "\n");
}

ScaleConfig load_meta(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& ex) {
    throw DataError(path.string() + ": " + ex.what());
  }
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "s_min" && key != "s_max" && key != "delta_t_hours")
      throw DataError(path.string() + ": unknown key '" + key + "'");
  }
  ScaleConfig sc;
  try {
    sc.s_min = j.at("s_min").get<int>();
    sc.s_max = j.at("s_max").get<int>();
    sc.delta_t_hours = j.at("delta_t_hours").get<double>();
  } catch (const json::exception& ex) {
    throw DataError(path.string() + ": " + ex.what());
  }
  return sc;
}

namespace {
std::filesystem::path meta_path_for(const std::filesystem::path& csv_path) {
  std::filesystem::path p = csv_path;
  p.replace_extension();
  p += ".meta.json";
  return p;
}
}  // namespace

void save_dataset(const Dataset& d, const std::filesystem::path& csv_path) {
  save_csv(d, csv_path);
  save_meta(d.scale, meta_path_for(csv_path));
}

Dataset load_dataset(const std::filesystem::path& csv_path) {
  return load_csv(csv_path, load_meta(meta_path_for(csv_path)));
}

}  // namespace fallcast::synth
