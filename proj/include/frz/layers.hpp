#pragma once

#include <string>
#include <vector>

#include "frz/tensor.hpp"

namespace frz {

// One layer of a sequential chain. Dense and Conv2d own parameters and are
// the anchors of freeze units; a Norm layer (per-channel affine, running
// statistics fixed at init) is always grouped with the Dense/Conv2d directly
// before it.
struct LayerSpec {
  enum class Kind { Dense, Conv2d, Norm, ReLU, Flatten };

  Kind kind = Kind::ReLU;
  int in_features = 0, out_features = 0;                            // Dense
  int in_channels = 0, out_channels = 0;                            // Conv2d
  int kernel = 0, stride = 1, padding = 0;                          // Conv2d
  int channels = 0;                                                 // Norm

  static LayerSpec dense(int in, int out) {
    LayerSpec l;
    l.kind = Kind::Dense;
    l.in_features = in;
    l.out_features = out;
    return l;
  }
  static LayerSpec conv2d(int cin, int cout, int k, int stride = 1, int padding = 0) {
    LayerSpec l;
    l.kind = Kind::Conv2d;
    l.in_channels = cin;
    l.out_channels = cout;
    l.kernel = k;
    l.stride = stride;
    l.padding = padding;
    return l;
  }
  static LayerSpec norm(int channels) {
    LayerSpec l;
    l.kind = Kind::Norm;
    l.channels = channels;
    return l;
  }
  static LayerSpec relu() {
    LayerSpec l;
    l.kind = Kind::ReLU;
    return l;
  }
  static LayerSpec flatten() {
    LayerSpec l;
    l.kind = Kind::Flatten;
    return l;
  }

  // Anchors a freeze unit.
  bool owns_unit() const { return kind == Kind::Dense || kind == Kind::Conv2d; }
  // Has trainable parameters (Dense, Conv2d, Norm).
  bool has_params() const { return owns_unit() || kind == Kind::Norm; }

  std::string kind_name() const;
};

// A parametric layer plus its trailing Norm, if any: the atomic freezing
// granularity.
struct FreezeUnit {
  int unit_id = 0;
  std::vector<int> layer_indices;
};

// Walks the chain and returns per-layer input shapes plus the final output
// shape (size L+1). Throws config_error naming the offending layer pair.
std::vector<Shape> infer_shapes(const std::vector<LayerSpec>& spec, const Shape& input);

// One unit per Dense/Conv2d, pulling in an immediately following Norm.
std::vector<FreezeUnit> auto_units(const std::vector<LayerSpec>& spec);

// Units must partition the Dense/Conv2d layers in order; Norms must sit in
// the unit of the layer directly before them.
void validate_units(const std::vector<LayerSpec>& spec, const std::vector<FreezeUnit>& units);

}  // namespace frz
