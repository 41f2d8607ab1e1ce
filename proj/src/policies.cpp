#include "frz/policies.hpp"

#include <algorithm>
#include <cmath>

namespace frz {

std::vector<double> linear_zero_times(const LinearFreezeConfig& cfg) {
  if (cfg.num_units < 1) throw config_error("linear freezing: need at least one unit");
  if (cfg.t0_fraction <= 0.0 || cfg.t0_fraction > 1.0)
    throw config_error("linear freezing: t0 must lie in (0, 1]");
  if (cfg.total_iterations < 1) throw config_error("linear freezing: total iterations must be >= 1");
  const double total = double(cfg.total_iterations);
  const double first = cfg.t0_fraction * total;
  std::vector<double> t(static_cast<std::size_t>(cfg.num_units));
  if (cfg.num_units == 1) {
    t[0] = first;
    return t;
  }
  const double step = (total - first) / double(cfg.num_units - 1);
  for (int i = 0; i < cfg.num_units; ++i) t[std::size_t(i)] = first + step * i;
  return t;
}

double linear_lr(const LinearFreezeConfig& cfg, int unit, std::int64_t t) {
  std::vector<double> zeros = linear_zero_times(cfg);
  if (unit < 0 || unit >= cfg.num_units) throw contract_error("linear_lr: unit out of range");
  const double ti = zeros[std::size_t(unit)];
  if (double(t) >= ti) return 0.0;
  return 0.5 * cfg.base_lr * (1.0 + std::cos(3.14159265358979323846 * double(t) / ti));
}

std::vector<int> linear_frozen_at(const LinearFreezeConfig& cfg, std::int64_t t) {
  std::vector<double> zeros = linear_zero_times(cfg);
  std::vector<int> out;
  for (int i = 0; i < cfg.num_units; ++i)
    if (double(t) >= zeros[std::size_t(i)]) out.push_back(i);
  return out;
}

void GradNormState::observe(int unit, double norm) {
  Hist& h = hist_[unit];
  h.prev = h.cur;
  h.cur = norm;
  if (h.n < 2) ++h.n;
}

bool GradNormState::has_history(int unit) const {
  auto it = hist_.find(unit);
  return it != hist_.end() && it->second.n >= 2;
}

double GradNormState::change_rate(int unit) const {
  auto it = hist_.find(unit);
  if (it == hist_.end() || it->second.n < 2) throw contract_error("gradnorm: insufficient history");
  const double denom = std::max(std::abs(it->second.prev), 1e-12);
  return std::abs(it->second.cur - it->second.prev) / denom;
}

std::vector<int> GradNormState::decide(const FreezeMask& mask, double percentile) const {
  if (percentile <= 0.0 || percentile >= 1.0) throw config_error("gradnorm: percentile must lie in (0,1)");
  std::vector<int> active;
  for (int u = 0; u < mask.total_units(); ++u)
    if (!mask.is_frozen(u)) active.push_back(u);
  if (active.empty()) return {};
  for (int u : active)
    if (!has_history(u)) return {};

  // bottom-percentile membership; ties resolve by unit order
  std::vector<std::pair<double, int>> rated;
  for (int u : active) rated.emplace_back(change_rate(u), u);
  std::sort(rated.begin(), rated.end());
  const int quota = int(std::floor(double(active.size()) * percentile));
  std::vector<char> candidate(std::size_t(mask.total_units()), 0);
  for (int i = 0; i < quota; ++i) candidate[std::size_t(rated[std::size_t(i)].second)] = 1;

  // a unit freezes only when every unit in front of it is frozen
  std::vector<int> out;
  for (int u = 0; u < mask.total_units(); ++u) {
    if (mask.is_frozen(u)) continue;
    bool prefix_frozen = true;
    for (int v = 0; v < u; ++v) {
      if (!mask.is_frozen(v) && std::find(out.begin(), out.end(), v) == out.end()) {
        prefix_frozen = false;
        break;
      }
    }
    if (prefix_frozen && candidate[std::size_t(u)]) out.push_back(u);
  }
  return out;
}

SmartDecideResult smart_decide(const FreezePredictor& predictor, const HistoryBuffer& buffers,
                               const FreezeMask& mask, int min_history) {
  if (min_history < 1) throw config_error("smart policy: min_history must be >= 1");
  SmartDecideResult out;
  for (int u = 0; u < mask.total_units(); ++u) {
    if (mask.is_frozen(u)) continue;
    if (buffers.count(u) < min_history) continue;
    Sequence seq = buffers.window_values(u);
    DecisionTrace t = predictor.decide_sequence(seq);
    out.predictor_flops_spent += predictor.flops(int(seq.size()));
    if (t.decision == 1) out.to_freeze.push_back({u, std::move(t)});
  }
  return out;
}

}  // namespace frz
