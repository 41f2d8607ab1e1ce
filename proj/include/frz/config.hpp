#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "frz/cka.hpp"
#include "frz/layers.hpp"
#include "frz/policies.hpp"
#include "frz/tasks.hpp"

namespace frz {

enum class PolicyKind { Full, Linear, GradNorm, Smart };

std::string policy_name(PolicyKind k);

struct PolicyConfig {
  PolicyKind kind = PolicyKind::Full;
  double linear_t0 = 0.5;           // linear
  GradNormConfig gradnorm;          // gradnorm
  int min_history = 5;              // smart
};

struct SeedPack {
  std::uint64_t master = 1;
  // derived streams unless explicitly pinned in the config
  std::uint64_t init = 0, data = 0, tailor = 0, task = 0;
};

SeedPack resolve_seeds(std::uint64_t master, const nlohmann::json* overrides);

struct ExperimentConfig {
  TaskConfig task;
  std::vector<LayerSpec> layers;
  std::vector<FreezeUnit> units;
  int epochs = 0;
  int batch_size = 32;
  double lr = 0.0;
  double momentum = 0.9;
  std::string lr_schedule = "cosine";  // cosine | constant (linear policy uses its own)
  PolicyConfig policy;
  std::string predictor_path;
  int tailored_size = 1024;
  int window = 30;
  std::int64_t freeze_interval = 0;    // 0: iterations_per_epoch / 4
  std::int64_t snapshot_interval = 0;  // 0: same as freeze_interval
  SeedPack seeds;
  std::string out_dir = "out";
  std::string run_name;  // basename of emitted artifacts; default derives from policy+seed

  std::string config_digest;  // everything
  std::string group_digest;   // identity for report grouping: task+network+training knobs
};

ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);

struct GenConfig {
  TaskConfig task;
  std::vector<LayerSpec> layers;
  std::vector<FreezeUnit> units;
  int reference_epochs = 0;
  int generation_epochs = 0;
  int checkpoints_per_epoch = 1;
  int tailored_size = 1024;
  int window = 30;
  StabilizationConfig stab;
  double lr = 0.0;
  double momentum = 0.9;
  int batch_size = 32;
  bool oracle_freeze = true;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> generation_seeds;  // default: one stream derived from seed
  std::string out_dir = "out";

  std::string config_digest;
};

GenConfig load_gen_config(const std::string& path);
GenConfig gen_config_from_json(const nlohmann::json& j);

struct TrainPredictorFileConfig {
  std::vector<std::string> dataset_paths;
  std::string out_path;
  double lr = 0.02;
  double momentum = 0.9;
  int epochs = 12;
  int batch_size = 16;
  double class_weight_0 = 0.0;  // <= 0: inverse class frequency
  double class_weight_1 = 0.0;
  double holdout_fraction = 0.1;
  bool standardize = false;
  int min_sequence_length = 1;  // drop shorter records before training
  int hidden = 256;
  int feat = 64;
  int z_hidden = 32;
  std::uint64_t seed = 1;
};

TrainPredictorFileConfig load_train_predictor_config(const std::string& path);
TrainPredictorFileConfig train_predictor_config_from_json(const nlohmann::json& j);

// FNV-1a hex digest of a canonical JSON dump.
std::string json_digest(const nlohmann::json& j);

// Rejects keys outside `allowed`, reporting the offending path.
void require_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                  const std::string& where);

}  // namespace frz
