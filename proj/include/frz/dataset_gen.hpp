#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frz/cka.hpp"
#include "frz/config.hpp"
#include "frz/container.hpp"
#include "frz/cost.hpp"
#include "frz/network.hpp"

namespace frz {

struct FreezeEventRec {
  int unit = 0;
  std::int64_t iteration = 0;
  std::string policy;
  double confidence = 0.0;
  bool has_confidence = false;
};

std::string events_to_csv(const std::vector<FreezeEventRec>& events);

// Fully trains the reference model the CKA labels are measured against.
NetworkState train_reference(const GenConfig& cfg, const TaskData& task);

struct GenRunStats {
  std::uint64_t seed = 0;
  std::int64_t fwd_flops = 0;
  std::int64_t bwd_flops = 0;
  int records = 0;
  double final_accuracy = 0.0;
  std::vector<FreezeEventRec> events;
};

struct GenResult {
  DatasetFile dataset;
  std::vector<CkaTrace> traces;  // one per generation run
  std::vector<GenRunStats> runs;
};

// Retrains the architecture while recording tailored weight histories; at
// every checkpoint each active unit's CKA against the reference turns into a
// sticky freeze/continue label and one training record. With oracle_freeze
// the unit is frozen the moment its label turns positive, which is both the
// labeling procedure and the similarity-guided freezing comparison in one.
GenResult generate(const GenConfig& cfg, const NetworkState& reference, const TaskData& task);

}  // namespace frz
