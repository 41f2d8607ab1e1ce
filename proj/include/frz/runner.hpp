#pragma once

#include <functional>
#include <string>
#include <vector>

#include "frz/config.hpp"
#include "frz/cost.hpp"
#include "frz/dataset_gen.hpp"
#include "frz/network.hpp"

namespace frz {

struct RunSummary {
  std::string task_id;
  std::string policy;
  std::uint64_t seed = 0;
  int epochs = 0;
  int batch_size = 0;
  double accuracy = 0.0;
  std::int64_t fwd_flops = 0;
  std::int64_t bwd_flops = 0;
  std::int64_t predictor_flops = 0;
  std::int64_t total_flops = 0;
  std::int64_t peak_act_bytes = 0;
  std::vector<FreezeEventRec> events;
  std::string config_digest;
  std::string group_digest;
  double wall_seconds = 0.0;  // informational only
  std::string trace_csv;
  std::string events_csv;

  nlohmann::json to_json() const;
  static RunSummary from_json(const nlohmann::json& j);
};

struct RunHooks {
  // invoked right after a unit freezes, before its next iteration
  std::function<void(int unit, std::int64_t iteration, const NetworkState&)> on_freeze;
};

struct RunResult {
  RunSummary summary;
  NetworkState final_state;
  CostLedger ledger;
  std::vector<FreezeEventRec> events;
};

// The end-to-end policy-controlled training loop: snapshot tailored weights
// on the snapshot cadence, consult the policy at freezing stages, account
// every FLOP (predictor overhead included), and leave CSV/JSON artifacts
// under out_dir when write_artifacts is set.
RunResult run_experiment(const ExperimentConfig& cfg, const RunHooks& hooks = {},
                         bool write_artifacts = true, bool quiet = true);

// Plain-text comparison table across runs of one task/network group:
// method, accuracy mean +- std over seeds, mean total TFLOPs, and FLOPs
// saved relative to full training.
std::string report(const std::vector<RunSummary>& summaries);
std::string report_files(const std::vector<std::string>& summary_paths);

}  // namespace frz
