// JSON persistence: baseline models carry their learned structure (trees as
// nested nodes, k-NN as its pair list); recurrent checkpoints carry
// flattened parameter arrays with shape headers plus the training history.
// Checkpoint round-trips are bit-exact.
#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "fallcast/baseline.hpp"
#include "fallcast/seqnet.hpp"

namespace fallcast::model_io {

nlohmann::json threshold_to_json(const baseline::ThresholdModel& m);
baseline::ThresholdModel threshold_from_json(const nlohmann::json& j);

nlohmann::json knn_to_json(const baseline::KnnModel& m);
baseline::KnnModel knn_from_json(const nlohmann::json& j);

nlohmann::json forest_to_json(const baseline::ForestModel& m);
baseline::ForestModel forest_from_json(const nlohmann::json& j);

nlohmann::json gbt_to_json(const baseline::GbtModel& m);
baseline::GbtModel gbt_from_json(const nlohmann::json& j);

struct Checkpoint {
  seqnet::ModelParams params;
  seqnet::HyperParams hyper;
  std::vector<double> train_loss_history;
  std::vector<double> val_loss_history;
  int best_epoch = -1;
  double best_val_loss = 0.0;
};

nlohmann::json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json load_json(const std::filesystem::path& path);

}  // namespace fallcast::model_io
