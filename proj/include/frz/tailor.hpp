#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <vector>

#include "frz/freeze_mask.hpp"
#include "frz/network.hpp"

namespace frz {

// Fixed random subsampling of each unit's primary weight tensor down to a
// uniform length, so one predictor serves layers of any size. Indices are
// drawn once per run and never change; units smaller than the tailored size
// cycle their (shuffled) index list up to length.
struct TailorPlan {
  int tailored_size = 1024;
  std::uint64_t seed = 0;
  std::map<int, std::vector<std::int64_t>> indices;  // unit -> sorted flat weight indices
};

TailorPlan make_plan(const NetworkState& state, int tailored_size, std::uint64_t seed);

struct WeightSnapshot {
  int unit_id = 0;
  std::int64_t timestamp = 0;
  std::vector<float> values;
};

// Gathers tailored values for every unit not in the mask, in plan order.
std::vector<WeightSnapshot> take_snapshots(const NetworkState& state, const TailorPlan& plan,
                                           const FreezeMask& mask, std::int64_t t);

// Per-unit ring of the most recent snapshots; a frozen unit's ring is
// dropped outright, which is where the framework's history memory shrinks.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(int window);

  int window() const { return window_; }
  void push(const std::vector<WeightSnapshot>& snaps);
  int count(int unit) const;
  // Oldest-first copies of the unit's ring, at most `window` entries.
  std::vector<std::vector<float>> window_values(int unit) const;
  std::int64_t latest_timestamp(int unit) const;
  void drop(int unit);
  std::int64_t bytes() const;
  std::vector<int> units() const;

 private:
  int window_;
  std::map<int, std::deque<WeightSnapshot>> rings_;
};

// Total-variation distance between two equal-width histograms over the
// shared value range.
double tv_distance(const std::vector<float>& a, const std::vector<float>& b, int bins);

// The tailoring diagnostic: distance between the gradient histogram of a
// full weight tensor and that of its tailored subset. Small distances mean
// the subset's update pattern tracks the whole layer.
double grad_subset_divergence(const std::vector<float>& full_grads,
                              const std::vector<std::int64_t>& plan_indices, int bins);

}  // namespace frz
