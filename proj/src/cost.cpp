#include "frz/cost.hpp"

#include <cstdio>
#include <fstream>

#include "frz/errors.hpp"

namespace frz {

std::vector<LayerCost> layer_costs(const std::vector<LayerSpec>& spec, const std::vector<FreezeUnit>& units,
                                   const Shape& input_shape, int batch_size) {
  if (batch_size < 1) throw config_error("batch size must be >= 1");
  auto shapes = infer_shapes(spec, input_shape);
  std::vector<int> unit_of(spec.size(), -1);
  for (const auto& u : units)
    for (int li : u.layer_indices) unit_of[li] = u.unit_id;

  std::vector<LayerCost> out(spec.size());
  for (int i = 0; i < int(spec.size()); ++i) {
    const LayerSpec& l = spec[i];
    LayerCost& c = out[i];
    c.unit_id = unit_of[i];
    c.has_params = l.has_params();
    const std::int64_t in_elems = elem_count(shapes[i]);
    c.act_bytes = std::int64_t(batch_size) * in_elems * 4;
    switch (l.kind) {
      case LayerSpec::Kind::Dense: {
        c.fwd_flops = 2LL * batch_size * l.in_features * l.out_features;
        c.param_bytes = (std::int64_t(l.in_features) * l.out_features + l.out_features) * 4 * 2;
        break;
      }
      case LayerSpec::Kind::Conv2d: {
        const Shape& os = shapes[i + 1];
        std::int64_t positions = std::int64_t(os[1]) * os[2];
        c.fwd_flops = 2LL * batch_size * positions * l.in_channels * l.kernel * l.kernel * l.out_channels;
        c.param_bytes =
            (std::int64_t(l.out_channels) * l.in_channels * l.kernel * l.kernel + l.out_channels) * 4 * 2;
        break;
      }
      case LayerSpec::Kind::Norm: {
        c.fwd_flops = 2LL * batch_size * in_elems;  // one scale+shift MAC per element
        c.param_bytes = std::int64_t(l.channels) * 2 * 4 * 2;
        break;
      }
      case LayerSpec::Kind::ReLU: {
        c.act_bytes = std::int64_t(batch_size) * in_elems * 4;
        c.input_gates_agrad = true;
        break;
      }
      case LayerSpec::Kind::Flatten: {
        c.act_bytes = 0;
        break;
      }
    }
    if (c.has_params) {
      c.wgrad_flops = c.fwd_flops;
      c.agrad_flops = c.fwd_flops;
    }
  }
  return out;
}

IterationCost iteration_cost(const std::vector<LayerCost>& costs, const FreezeMask& mask) {
  IterationCost it;
  bool unfrozen_before = false;
  for (const LayerCost& c : costs) {
    if (c.unit_id >= mask.total_units())
      throw contract_error("iteration_cost: unit index out of range of the mask");
    it.fwd_flops += c.fwd_flops;
    const bool unfrozen = c.has_params && !mask.is_frozen(c.unit_id);
    if (unfrozen) {
      it.bwd_flops += c.wgrad_flops;
      it.act_bytes += c.act_bytes;
    }
    if (c.has_params && unfrozen_before) it.bwd_flops += c.agrad_flops;
    if (c.input_gates_agrad && unfrozen_before) it.act_bytes += c.act_bytes;
    unfrozen_before = unfrozen_before || unfrozen;
  }
  return it;
}

void CostLedger::accumulate(const IterationCost& it, std::int64_t predictor_flops, int epoch,
                            int frozen_units, float train_loss) {
  if (it.fwd_flops < 0 || it.bwd_flops < 0 || predictor_flops < 0)
    throw contract_error("ledger: negative cost");
  fwd_ += it.fwd_flops;
  bwd_ += it.bwd_flops;
  pred_ += predictor_flops;
  peak_act_ = std::max(peak_act_, it.act_bytes);
  TraceRow r;
  r.iteration = std::int64_t(rows_.size());
  r.epoch = epoch;
  r.fwd_flops = it.fwd_flops;
  r.bwd_flops = it.bwd_flops;
  r.predictor_flops = predictor_flops;
  r.act_bytes = it.act_bytes;
  r.frozen_units = frozen_units;
  r.train_loss = train_loss;
  rows_.push_back(r);
}

std::string CostLedger::to_csv() const {
  std::string out = "iteration,epoch,fwd_flops,bwd_flops,predictor_flops,act_bytes,frozen_units,train_loss\n";
  char buf[256];
  for (const TraceRow& r : rows_) {
    std::snprintf(buf, sizeof(buf), "%lld,%d,%lld,%lld,%lld,%lld,%d,%.9g\n",
                  (long long)r.iteration, r.epoch, (long long)r.fwd_flops, (long long)r.bwd_flops,
                  (long long)r.predictor_flops, (long long)r.act_bytes, r.frozen_units,
                  double(r.train_loss));
    out += buf;
  }
  return out;
}

void CostLedger::write_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw run_error("cannot write trace csv: " + path);
  f << to_csv();
}

}  // namespace frz
