#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "frz/tensor.hpp"

namespace frz {

// Representational similarity between two layers' output feature maps on a
// shared probe batch:
//
//   cka(X, Y) = ||Y^T X||_F^2 / (||X^T X||_F * ||Y^T Y||_F)
//
// evaluated in 64-bit through the n x n Gram matrices. With center set the
// feature columns are mean-centered first (the standard linear CKA); the
// uncentered mode evaluates the raw formula. X and Y are (samples x
// features) float32 matrices sharing the row count; feature widths may
// differ. Result lies in [0, 1] and is symmetric.
//
// Throws run_error when a Gram matrix vanishes (constant activations after
// centering leave the score undefined).
double cka(const Tensor& x, const Tensor& y, bool center = true);

struct StabilizationConfig {
  int window = 5;          // consecutive checkpoints that must agree
  double eps = 0.01;       // max allowed score range inside the window
  double min_score = 0.6;  // floor below which a layer never counts as stable
};

// True iff the last `window` scores exist, their range is <= eps, and the
// latest score clears min_score.
bool stabilized(const std::vector<double>& scores, const StabilizationConfig& cfg);

// checkpoint-major CKA history for one training run
struct CkaTrace {
  struct Row {
    int unit_id = 0;
    int checkpoint = 0;
    int epoch = 0;
    double score = 0.0;
  };
  std::vector<Row> rows;

  std::vector<double> scores_for(int unit) const;
  // Columns: layer_id,checkpoint_index,epoch,score
  std::string to_csv() const;
  void write_csv(const std::string& path) const;
  static CkaTrace from_csv_file(const std::string& path);
};

// Sticky freeze labels: per unit, 0 until the first checkpoint whose score
// prefix satisfies `stabilized`, then 1 ever after.
std::map<int, std::vector<std::uint8_t>> label_history(const CkaTrace& trace, const StabilizationConfig& cfg);

}  // namespace frz
