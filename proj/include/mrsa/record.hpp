#pragma once

#include <cstddef>
#include <optional>

#include "mrsa/core.hpp"
#include "mrsa/metrics.hpp"

namespace mrsa {

// One round of a run. skipped == (selected.weight() == 0).
struct RoundRecord {
  std::size_t round = 0;
  AvailabilityVector availability;
  ParticipationVector selected;
  bool skipped = false;
  MetricsSnapshot metrics;
  std::optional<double> train_loss;
  std::optional<double> test_accuracy;
};

}  // namespace mrsa
