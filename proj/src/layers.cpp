#include "frz/layers.hpp"

#include <set>

#include "frz/errors.hpp"

namespace frz {

std::string LayerSpec::kind_name() const {
  switch (kind) {
    case Kind::Dense: return "dense";
    case Kind::Conv2d: return "conv2d";
    case Kind::Norm: return "norm";
    case Kind::ReLU: return "relu";
    case Kind::Flatten: return "flatten";
  }
  return "?";
}

static int conv_out(int in, int k, int stride, int pad) {
  int span = in + 2 * pad - k;
  if (span < 0) return -1;
  return span / stride + 1;
}

std::vector<Shape> infer_shapes(const std::vector<LayerSpec>& spec, const Shape& input) {
  if (spec.empty()) throw config_error("network spec is empty");
  std::vector<Shape> shapes;
  shapes.reserve(spec.size() + 1);
  shapes.push_back(input);
  Shape cur = input;
  for (int i = 0; i < int(spec.size()); ++i) {
    const LayerSpec& l = spec[i];
    auto mismatch = [&](const std::string& detail) -> config_error {
      std::string prev = i == 0 ? std::string("input") : std::to_string(i - 1);
      return config_error("shape mismatch at layers " + prev + "→" + std::to_string(i) + ": " + detail);
    };
    switch (l.kind) {
      case LayerSpec::Kind::Dense: {
        if (cur.size() != 1 || cur[0] != l.in_features)
          throw mismatch("dense expects flat input of " + std::to_string(l.in_features));
        if (l.in_features <= 0 || l.out_features <= 0) throw config_error("dense dims must be positive");
        cur = {l.out_features};
        break;
      }
      case LayerSpec::Kind::Conv2d: {
        if (cur.size() != 3 || cur[0] != l.in_channels)
          throw mismatch("conv2d expects (" + std::to_string(l.in_channels) + ",H,W) input");
        if (l.kernel <= 0 || l.stride <= 0 || l.padding < 0 || l.out_channels <= 0)
          throw config_error("conv2d geometry must be positive");
        int oh = conv_out(cur[1], l.kernel, l.stride, l.padding);
        int ow = conv_out(cur[2], l.kernel, l.stride, l.padding);
        if (oh <= 0 || ow <= 0) throw mismatch("conv2d kernel larger than padded input");
        cur = {l.out_channels, oh, ow};
        break;
      }
      case LayerSpec::Kind::Norm: {
        if (i == 0 || !spec[i - 1].owns_unit())
          throw config_error("norm at layer " + std::to_string(i) + " must immediately follow dense or conv2d");
        int ch = cur.size() == 3 ? cur[0] : cur[0];
        if (l.channels != ch) throw mismatch("norm channels " + std::to_string(l.channels) +
                                             " vs " + std::to_string(ch));
        break;
      }
      case LayerSpec::Kind::ReLU:
        break;
      case LayerSpec::Kind::Flatten: {
        cur = {int(elem_count(cur))};
        break;
      }
    }
    shapes.push_back(cur);
  }
  if (shapes.back().size() != 1)
    throw config_error("network output must be flat class logits; add a flatten layer");
  return shapes;
}

std::vector<FreezeUnit> auto_units(const std::vector<LayerSpec>& spec) {
  std::vector<FreezeUnit> units;
  for (int i = 0; i < int(spec.size()); ++i) {
    if (!spec[i].owns_unit()) continue;
    FreezeUnit u;
    u.unit_id = int(units.size());
    u.layer_indices.push_back(i);
    if (i + 1 < int(spec.size()) && spec[i + 1].kind == LayerSpec::Kind::Norm)
      u.layer_indices.push_back(i + 1);
    units.push_back(std::move(u));
  }
  if (units.empty()) throw config_error("network has no trainable layers");
  return units;
}

void validate_units(const std::vector<LayerSpec>& spec, const std::vector<FreezeUnit>& units) {
  std::set<int> seen;
  int prev_last = -1;
  for (int k = 0; k < int(units.size()); ++k) {
    const FreezeUnit& u = units[k];
    if (u.unit_id != k) throw config_error("freeze units must be numbered 0..N-1 in order");
    if (u.layer_indices.empty()) throw config_error("freeze unit " + std::to_string(k) + " is empty");
    int anchor = u.layer_indices.front();
    if (anchor <= prev_last) throw config_error("freeze units must be ordered by layer position");
    if (anchor < 0 || anchor >= int(spec.size()) || !spec[anchor].owns_unit())
      throw config_error("freeze unit " + std::to_string(k) + " must anchor on dense or conv2d");
    for (std::size_t j = 1; j < u.layer_indices.size(); ++j) {
      int li = u.layer_indices[j];
      if (li != anchor + int(j) || li >= int(spec.size()) || spec[li].kind != LayerSpec::Kind::Norm)
        throw config_error("freeze unit " + std::to_string(k) + " may only add the trailing norm");
    }
    for (int li : u.layer_indices) {
      if (!seen.insert(li).second) throw config_error("layer assigned to two freeze units");
    }
    prev_last = u.layer_indices.back();
  }
  for (int i = 0; i < int(spec.size()); ++i) {
    if (spec[i].has_params() && !seen.count(i))
      throw config_error("parametric layer " + std::to_string(i) + " belongs to no freeze unit");
  }
}

}  // namespace frz
