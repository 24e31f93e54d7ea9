#pragma once

#include <cstddef>
#include <span>

namespace gridadv {

struct DetectorModel;

// Query-only view of a trained detector. The attacker side sees measurement
// windows in and a posterior out; weights stay behind this boundary.
class DetectorOracle {
 public:
  explicit DetectorOracle(const DetectorModel& model) : model_(&model) {}

  /// `window_values`: window() frames of bus_count() voltages, oldest first.
  double posterior(std::span<const double> window_values) const;

  std::size_t window() const;
  std::size_t bus_count() const;
  double threshold() const;
  std::size_t query_count() const { return queries_; }

 private:
  const DetectorModel* model_;
  mutable std::size_t queries_ = 0;
};

}  // namespace gridadv
