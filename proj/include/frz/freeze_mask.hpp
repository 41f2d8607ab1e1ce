#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "frz/errors.hpp"

namespace frz {

// Monotonically growing set of frozen units. Units never thaw; each entry
// remembers the iteration it was frozen at.
class FreezeMask {
 public:
  FreezeMask() = default;
  explicit FreezeMask(int total_units) : total_units_(total_units) {}

  int total_units() const { return total_units_; }
  int frozen_count() const { return int(frozen_.size()); }
  bool is_frozen(int unit) const { return frozen_.count(unit) != 0; }

  std::int64_t iteration_frozen(int unit) const {
    auto it = frozen_.find(unit);
    if (it == frozen_.end()) throw contract_error("FreezeMask: unit is not frozen");
    return it->second;
  }

  // Union-only update. Already-frozen units keep their original iteration.
  // Returns the units actually added, in ascending id order.
  std::vector<int> apply(const std::vector<int>& new_units, std::int64_t iteration) {
    std::vector<int> added;
    for (int u : new_units) {
      if (u < 0 || u >= total_units_) throw contract_error("FreezeMask: unit id out of range");
      if (frozen_.count(u)) continue;
      if (iteration < last_iteration_) throw contract_error("FreezeMask: freeze iterations must be nondecreasing");
      frozen_.emplace(u, iteration);
      added.push_back(u);
      last_iteration_ = iteration;
    }
    return added;
  }

  const std::map<int, std::int64_t>& entries() const { return frozen_; }

  // Stable fingerprint of the frozen set; used to pair forward caches with
  // the backward pass that consumes them.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [u, it] : frozen_) {
      h ^= std::uint64_t(u) + 0x9e3779b97f4a7c15ULL;
      h *= 0x100000001b3ULL;
    }
    h ^= std::uint64_t(total_units_);
    return h;
  }

 private:
  std::map<int, std::int64_t> frozen_;
  int total_units_ = 0;
  std::int64_t last_iteration_ = 0;
};

}  // namespace frz
