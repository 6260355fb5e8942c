#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <stdexcept>

namespace rfprune {

class PlanError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Filters to remove, keyed by conv layer id. Indices refer to the model the
/// plan was built against.
struct PrunePlan {
  std::map<std::size_t, std::set<std::size_t>> per_layer;
  double pruning_percentage = 0.0;
  std::size_t step_size = 0;  // filters removed per layer in this step (delta)
  std::size_t step_cap = 0;   // layer-sequential cap, 0 when unused

  bool empty() const {
    for (const auto& [_, s] : per_layer)
      if (!s.empty()) return false;
    return true;
  }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [_, s] : per_layer) n += s.size();
    return n;
  }

  std::size_t count(std::size_t layer) const {
    auto it = per_layer.find(layer);
    return it == per_layer.end() ? 0 : it->second.size();
  }
};

/// Number of filters removed from an n-filter layer at p percent: floor(p n / 100).
/// The small epsilon keeps exact products such as 15% of 20 from rounding down.
inline std::size_t prune_count(std::size_t n, double p) {
  if (!(p >= 0.0 && p < 100.0)) throw PlanError("pruning percentage must be in [0, 100)");
  return static_cast<std::size_t>(p * double(n) / 100.0 + 1e-9);
}

}  // namespace rfprune
