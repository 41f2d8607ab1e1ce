#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frz/freeze_mask.hpp"
#include "frz/layers.hpp"

namespace frz {

// Per-layer, per-iteration cost model at a fixed batch size. One
// multiply-accumulate counts as 2 FLOPs; activation functions and reshapes
// are free. For parametric layers the weight-gradient and
// activation-gradient passes each cost the same as the forward pass.
struct LayerCost {
  std::int64_t fwd_flops = 0;
  std::int64_t wgrad_flops = 0;
  std::int64_t agrad_flops = 0;
  std::int64_t act_bytes = 0;    // bytes of this layer's input if it must be stored
  std::int64_t param_bytes = 0;  // parameters plus their momentum buffers
  bool has_params = false;
  bool input_gates_agrad = false;  // ReLU: input retained only to route gradients
  int unit_id = -1;
};

std::vector<LayerCost> layer_costs(const std::vector<LayerSpec>& spec, const std::vector<FreezeUnit>& units,
                                   const Shape& input_shape, int batch_size);

struct IterationCost {
  std::int64_t fwd_flops = 0;
  std::int64_t bwd_flops = 0;
  std::int64_t act_bytes = 0;
};

// The freezing cost rules: forward always runs in full; a frozen unit drops
// its weight-gradient work; a parametric layer computes its activation
// gradient only when some unfrozen parametric layer precedes it, so the
// first parametric layer never contributes one. Activation storage follows
// the same reachability.
IterationCost iteration_cost(const std::vector<LayerCost>& costs, const FreezeMask& mask);

struct TraceRow {
  std::int64_t iteration = 0;
  int epoch = 0;
  std::int64_t fwd_flops = 0;
  std::int64_t bwd_flops = 0;
  std::int64_t predictor_flops = 0;
  std::int64_t act_bytes = 0;
  int frozen_units = 0;
  float train_loss = 0.0f;
};

// Cumulative training cost plus the per-iteration trace behind it.
class CostLedger {
 public:
  void accumulate(const IterationCost& it, std::int64_t predictor_flops, int epoch, int frozen_units,
                  float train_loss);

  std::int64_t fwd_flops() const { return fwd_; }
  std::int64_t bwd_flops() const { return bwd_; }
  std::int64_t predictor_flops() const { return pred_; }
  std::int64_t total_flops() const { return fwd_ + bwd_ + pred_; }
  std::int64_t peak_act_bytes() const { return peak_act_; }
  const std::vector<TraceRow>& rows() const { return rows_; }

  // Columns: iteration,epoch,fwd_flops,bwd_flops,predictor_flops,act_bytes,frozen_units,train_loss
  std::string to_csv() const;
  void write_csv(const std::string& path) const;

 private:
  std::int64_t fwd_ = 0, bwd_ = 0, pred_ = 0, peak_act_ = 0;
  std::vector<TraceRow> rows_;
};

}  // namespace frz
