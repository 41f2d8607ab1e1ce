#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "frz/freeze_mask.hpp"
#include "frz/layers.hpp"
#include "frz/tensor.hpp"

namespace frz {

// Parameters of one freeze unit: the anchor layer's weight/bias plus the
// trailing Norm's scale/shift when present.
struct UnitTensors {
  Tensor weight;
  Tensor bias;
  Tensor gamma;
  Tensor beta;
  bool has_norm = false;
};

struct NetworkState {
  std::vector<LayerSpec> spec;
  std::vector<FreezeUnit> units;
  std::uint64_t seed = 0;
  Shape input_shape;
  std::vector<Shape> shapes;  // per-layer input shapes; back() is the output
  std::vector<UnitTensors> params;
  std::vector<UnitTensors> momentum;
  std::vector<int> unit_of_layer;  // -1 for layers without parameters

  int num_classes() const { return int(elem_count(shapes.back())); }
  int num_units() const { return int(units.size()); }
};

struct Batch {
  Tensor inputs;                // (batch, input shape...)
  std::vector<int> labels;
  int size() const { return int(labels.size()); }
};

// Deterministic Kaiming-uniform (fan-in) init; zero biases, unit gamma,
// zero beta. Identical (spec, units, seed, input shape) gives bit-identical
// parameter bytes.
NetworkState build_network(const std::vector<LayerSpec>& spec, const std::vector<FreezeUnit>& units,
                           std::uint64_t seed, const Shape& input_shape);

struct ActivationCache {
  std::vector<Tensor> inputs;  // per layer; empty when the backward pass will not need it
  Tensor logits;
  int batch = 0;
  std::uint64_t mask_fingerprint = 0;
};

// Runs every layer regardless of the mask; the mask only controls which
// input activations are retained for the backward pass.
ActivationCache forward(const NetworkState& state, const Tensor& inputs, const FreezeMask& mask);

struct UnitGrads {
  Tensor weight;
  Tensor bias;
  Tensor gamma;
  Tensor beta;
};

struct Gradients {
  std::map<int, UnitGrads> by_unit;  // entries exactly for unfrozen units
};

// Weight gradients only for unfrozen units; activation gradients only where
// an unfrozen parametric layer sits earlier in the chain. The first
// parametric layer never differentiates with respect to the network input.
Gradients backward(const NetworkState& state, const ActivationCache& cache, const Tensor& dlogits,
                   const FreezeMask& mask);

struct LossGrad {
  float loss = 0.0f;
  Tensor dlogits;
};

// Mean softmax cross-entropy over the batch and its gradient.
LossGrad softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// v <- momentum*v + g; w <- w - lr*v, for unfrozen units only. Frozen units'
// parameter and momentum bytes are untouched. grads must cover exactly the
// unfrozen units.
void sgd_step(NetworkState& state, const Gradients& grads, double lr, double momentum,
              const FreezeMask& mask);

// Per-unit learning rates (layer-wise schedules). lr entries for frozen
// units are ignored.
void sgd_step(NetworkState& state, const Gradients& grads, const std::vector<double>& unit_lr,
              double momentum, const FreezeMask& mask);

// Fraction of argmax-correct predictions; ties resolve to the lowest class
// index.
double evaluate(const NetworkState& state, const Tensor& inputs, const std::vector<int>& labels);

int argmax_lowest(const float* p, int n);

// Per-unit output feature matrices (rows = samples, cols = flattened output
// of the unit's last layer) for a probe batch; input to CKA.
std::vector<Tensor> unit_outputs(const NetworkState& state, const Tensor& inputs);

// Flat views over a unit's parameter tensors, for serialization and byte
// comparisons.
std::vector<const Tensor*> unit_tensor_list(const UnitTensors& u);
std::vector<Tensor*> unit_tensor_list(UnitTensors& u);

}  // namespace frz
