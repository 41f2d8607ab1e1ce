#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "frz/tensor.hpp"

namespace frz {

// Tailored snapshots, oldest first; the predictor's input sequence.
using Sequence = std::vector<std::vector<float>>;

struct PredictorDims {
  int input = 1024;   // tailored layer size
  int hidden = 256;   // both hidden widths of the k/q/v encoders
  int feat = 64;      // key/query/value width
  int z_hidden = 32;  // both hidden widths of the decision head
};

// Three weight layers with ReLU between them; no activation on the output.
// Weights are stored (in, out) so a whole snapshot sequence encodes as one
// matmul per layer.
struct Mlp {
  std::array<Tensor, 3> w;
  std::array<Tensor, 3> b;
};

// The attention-based freeze predictor: one attention layer, one head, four
// MLPs. k/q/v encode each historical snapshot into 64-d vectors; the query
// of the latest timestamp scores every key by plain dot product; softmax
// weights aggregate the values into a context vector, and the z head turns
// that into freeze/continue confidences.
struct PredictorParams {
  PredictorDims dims;
  int window = 30;
  bool standardize = false;  // per-sequence input standardization
  std::uint64_t seed = 0;
  Mlp k, q, v, z;
};

PredictorParams init_predictor(const PredictorDims& dims, int window, std::uint64_t seed,
                               bool standardize = false);

struct Kqv {
  std::vector<float> k, q, v;
};

// Single-snapshot view of the encoders; decide() runs the same three MLPs
// across the whole sequence.
Kqv encode(const PredictorParams& p, const std::vector<float>& snapshot);

struct AttendOut {
  std::vector<float> alphas;   // one per timestamp, sums to 1
  std::vector<float> context;  // feat-dim aggregate
};

// Softmax over raw dot-product scores; query taken from the last timestamp.
AttendOut attend(const PredictorParams& p, const Sequence& seq);

// Core of the attention step, exposed for direct testing: alphas =
// softmax(q . k_j), context = sum alphas_j * v_j.
AttendOut attend_kqv(const std::vector<std::vector<float>>& keys, const std::vector<float>& query,
                     const std::vector<std::vector<float>>& values);

std::vector<float> softmax(const std::vector<float>& scores);

struct DecisionTrace {
  std::vector<float> alphas;
  std::vector<float> context;
  std::array<float, 2> confidence{};  // {continue, freeze}
  int decision = 0;                   // 1 = freeze; ties fall to 0
};

DecisionTrace decide(const PredictorParams& p, const Sequence& seq);

// Exact op count of one decide() call at the given sequence length, using
// the 2-FLOPs-per-MAC convention. Linear in the sequence length.
std::int64_t predictor_flops(const PredictorDims& dims, int seq_len);

struct TrainRecord {
  Sequence sequence;
  std::uint8_t label = 0;
};

struct MlpGrads {
  std::array<Tensor, 3> w;
  std::array<Tensor, 3> b;
};

struct PredictorGrads {
  MlpGrads k, q, v, z;
};

// Class-weighted cross-entropy on the decision head and analytic gradients
// through the whole pipeline: z head, the attention softmax, and the three
// encoders at every timestamp.
std::pair<float, PredictorGrads> predictor_grad(const PredictorParams& p, const TrainRecord& rec,
                                                float weight0, float weight1);

struct PredictorTrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  int epochs = 10;
  int batch_size = 16;
  double class_weight_0 = 0.0;  // <= 0 selects weights inverse to class frequency
  double class_weight_1 = 0.0;
  double holdout_fraction = 0.1;
  std::uint64_t seed = 1;
  PredictorDims dims;
  int window = 30;
  bool standardize = false;
};

// Offline SGD+momentum training; deterministic given the seed. Returns the
// epoch snapshot with the best held-out balanced accuracy.
PredictorParams train_predictor(const std::vector<TrainRecord>& dataset, const PredictorTrainConfig& cfg);

double balanced_accuracy(const PredictorParams& p, const std::vector<TrainRecord>& records);

// FRZ1 container with kind="predictor" (.frzp)
void save_predictor(const PredictorParams& p, const std::string& path);
PredictorParams load_predictor(const std::string& path, int expected_tailored_size = -1);

}  // namespace frz
