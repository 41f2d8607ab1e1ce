#include "frz/tailor.hpp"

#include <algorithm>
#include <cmath>

#include "frz/rng.hpp"

namespace frz {

TailorPlan make_plan(const NetworkState& state, int tailored_size, std::uint64_t seed) {
  if (tailored_size < 1) throw config_error("tailored size must be >= 1");
  TailorPlan plan;
  plan.tailored_size = tailored_size;
  plan.seed = seed;
  Rng root(seed);
  for (const FreezeUnit& u : state.units) {
    const std::int64_t n = state.params[u.unit_id].weight.size();
    std::vector<std::int64_t> all(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) all[std::size_t(i)] = i;
    Rng rng = root.stream(std::uint64_t(u.unit_id));
    rng.shuffle(all);
    std::vector<std::int64_t> picked(static_cast<std::size_t>(tailored_size));
    for (int i = 0; i < tailored_size; ++i) picked[std::size_t(i)] = all[std::size_t(i % n)];
    std::sort(picked.begin(), picked.end());
    plan.indices.emplace(u.unit_id, std::move(picked));
  }
  return plan;
}

std::vector<WeightSnapshot> take_snapshots(const NetworkState& state, const TailorPlan& plan,
                                           const FreezeMask& mask, std::int64_t t) {
  std::vector<WeightSnapshot> out;
  for (const FreezeUnit& u : state.units) {
    if (mask.is_frozen(u.unit_id)) continue;
    auto it = plan.indices.find(u.unit_id);
    if (it == plan.indices.end()) throw contract_error("snapshot: plan does not cover unit");
    const Tensor& w = state.params[u.unit_id].weight;
    WeightSnapshot s;
    s.unit_id = u.unit_id;
    s.timestamp = t;
    s.values.resize(it->second.size());
    for (std::size_t i = 0; i < it->second.size(); ++i) {
      std::int64_t idx = it->second[i];
      if (idx < 0 || idx >= w.size()) throw contract_error("snapshot: plan index out of bounds");
      s.values[i] = w.v[std::size_t(idx)];
    }
    out.push_back(std::move(s));
  }
  return out;
}

HistoryBuffer::HistoryBuffer(int window) : window_(window) {
  if (window < 1) throw config_error("history window must be >= 1");
}

void HistoryBuffer::push(const std::vector<WeightSnapshot>& snaps) {
  for (const WeightSnapshot& s : snaps) {
    auto& ring = rings_[s.unit_id];
    if (!ring.empty() && s.timestamp <= ring.back().timestamp)
      throw contract_error("history push: timestamps must be strictly increasing");
    ring.push_back(s);
    if (int(ring.size()) > window_) ring.pop_front();
  }
}

int HistoryBuffer::count(int unit) const {
  auto it = rings_.find(unit);
  return it == rings_.end() ? 0 : int(it->second.size());
}

std::vector<std::vector<float>> HistoryBuffer::window_values(int unit) const {
  std::vector<std::vector<float>> out;
  auto it = rings_.find(unit);
  if (it == rings_.end()) return out;
  for (const WeightSnapshot& s : it->second) out.push_back(s.values);
  return out;
}

std::int64_t HistoryBuffer::latest_timestamp(int unit) const {
  auto it = rings_.find(unit);
  if (it == rings_.end() || it->second.empty()) throw contract_error("history: unit has no snapshots");
  return it->second.back().timestamp;
}

void HistoryBuffer::drop(int unit) { rings_.erase(unit); }

std::int64_t HistoryBuffer::bytes() const {
  std::int64_t total = 0;
  for (const auto& [unit, ring] : rings_)
    for (const WeightSnapshot& s : ring) total += std::int64_t(s.values.size()) * 4;
  return total;
}

std::vector<int> HistoryBuffer::units() const {
  std::vector<int> out;
  for (const auto& [unit, ring] : rings_) out.push_back(unit);
  return out;
}

double tv_distance(const std::vector<float>& a, const std::vector<float>& b, int bins) {
  if (bins < 2) throw config_error("histogram bins must be >= 2");
  if (a.empty() || b.empty()) throw run_error("tv_distance: empty value set");
  float lo = a[0], hi = a[0];
  for (float v : a) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (float v : b) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo)) return 0.0;  // all mass in one point for both
  std::vector<double> pa(std::size_t(bins), 0.0), pb(std::size_t(bins), 0.0);
  auto bin_of = [&](float v) {
    int i = int(double(v - lo) / double(hi - lo) * bins);
    return std::min(std::max(i, 0), bins - 1);
  };
  for (float v : a) pa[std::size_t(bin_of(v))] += 1.0 / double(a.size());
  for (float v : b) pb[std::size_t(bin_of(v))] += 1.0 / double(b.size());
  double tv = 0.0;
  for (int i = 0; i < bins; ++i) tv += std::abs(pa[std::size_t(i)] - pb[std::size_t(i)]);
  return 0.5 * tv;
}

double grad_subset_divergence(const std::vector<float>& full_grads,
                              const std::vector<std::int64_t>& plan_indices, int bins) {
  if (full_grads.empty()) throw run_error("grad_subset_divergence: empty gradient tensor");
  std::vector<float> subset;
  subset.reserve(plan_indices.size());
  for (std::int64_t idx : plan_indices) {
    if (idx < 0 || idx >= std::int64_t(full_grads.size()))
      throw contract_error("grad_subset_divergence: plan index out of bounds");
    subset.push_back(full_grads[std::size_t(idx)]);
  }
  if (subset.empty()) throw run_error("grad_subset_divergence: empty subset");
  return tv_distance(full_grads, subset, bins);
}

}  // namespace frz
