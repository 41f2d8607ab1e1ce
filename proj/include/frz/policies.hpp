#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "frz/freeze_mask.hpp"
#include "frz/predictor.hpp"
#include "frz/tailor.hpp"

namespace frz {

// Layer-wise cosine annealing without restarts: unit i's learning rate
// anneals to zero at t_i, and the unit is frozen from then on. Zero times
// are linearly spaced between t0*total and total.
struct LinearFreezeConfig {
  double t0_fraction = 0.5;
  std::int64_t total_iterations = 0;
  double base_lr = 0.0;
  int num_units = 0;
};

std::vector<double> linear_zero_times(const LinearFreezeConfig& cfg);
// 0.5 * base_lr * (1 + cos(pi * t / t_i)), clamped to 0 once t >= t_i.
double linear_lr(const LinearFreezeConfig& cfg, int unit, std::int64_t t);
// Units whose learning rate has reached zero by iteration t.
std::vector<int> linear_frozen_at(const LinearFreezeConfig& cfg, std::int64_t t);

// Gradient-norm percentile baseline. At each evaluation interval, active
// units whose norm change rate sits in the bottom percentile are freezable,
// but a unit freezes only once every unit in front of it is frozen.
struct GradNormConfig {
  int intervals_per_epoch = 4;  // M
  double percentile = 0.5;      // N
};

class GradNormState {
 public:
  void observe(int unit, double norm);
  // Units to freeze now, honoring the sequential-prefix constraint; empty
  // until every active unit has two recorded norms.
  std::vector<int> decide(const FreezeMask& mask, double percentile) const;
  double change_rate(int unit) const;
  bool has_history(int unit) const;

 private:
  struct Hist {
    double prev = 0.0, cur = 0.0;
    int n = 0;
  };
  std::map<int, Hist> hist_;
};

// Freezing-stage cadence for the attention-driven policy.
struct SmartConfig {
  std::int64_t freeze_interval = 0;  // 0: iterations_per_epoch / 4
  int min_history = 5;
  int window = 30;
};

// Decision source for smart_decide; production wraps PredictorParams, tests
// can script it.
class FreezePredictor {
 public:
  virtual ~FreezePredictor() = default;
  virtual DecisionTrace decide_sequence(const Sequence& seq) const = 0;
  virtual std::int64_t flops(int seq_len) const = 0;
};

class AttentionFreezePredictor : public FreezePredictor {
 public:
  explicit AttentionFreezePredictor(PredictorParams params) : params_(std::move(params)) {}
  DecisionTrace decide_sequence(const Sequence& seq) const override { return decide(params_, seq); }
  std::int64_t flops(int seq_len) const override { return predictor_flops(params_.dims, seq_len); }
  const PredictorParams& params() const { return params_; }

 private:
  PredictorParams params_;
};

struct SmartDecision {
  int unit = 0;
  DecisionTrace trace;
};

struct SmartDecideResult {
  std::vector<SmartDecision> to_freeze;      // units the predictor wants frozen
  std::int64_t predictor_flops_spent = 0;    // cost of every decide() call made
};

// Runs the predictor on every active unit holding at least min_history
// snapshots. No sequential constraint: any layer may freeze first.
SmartDecideResult smart_decide(const FreezePredictor& predictor, const HistoryBuffer& buffers,
                               const FreezeMask& mask, int min_history);

}  // namespace frz
