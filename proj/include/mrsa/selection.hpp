#pragma once

// User-selection strategies. Every strategy returns a participation vector
// of weight 0 or K whose support lies inside the available users.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mrsa/core.hpp"
#include "mrsa/errors.hpp"
#include "mrsa/family.hpp"

namespace mrsa {

enum class StrategyKind { Random, WeightedRandom, Partition, BatchSecAgg };

inline std::string_view to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::Random: return "random";
    case StrategyKind::WeightedRandom: return "weighted_random";
    case StrategyKind::Partition: return "partition";
    case StrategyKind::BatchSecAgg: return "batch_secagg";
  }
  return "?";
}

inline std::optional<StrategyKind> parse_strategy_kind(std::string_view s) {
  if (s == "random") return StrategyKind::Random;
  if (s == "weighted_random") return StrategyKind::WeightedRandom;
  if (s == "partition") return StrategyKind::Partition;
  if (s == "batch_secagg") return StrategyKind::BatchSecAgg;
  return std::nullopt;
}

class SelectionStrategy {
 public:
  static SelectionStrategy random(std::size_t n_users, std::size_t k) {
    check(n_users, k);
    return SelectionStrategy(StrategyKind::Random, n_users, k);
  }

  static SelectionStrategy weighted_random(std::size_t n_users, std::size_t k) {
    check(n_users, k);
    return SelectionStrategy(StrategyKind::WeightedRandom, n_users, k);
  }

  // Consecutive groups {0..K-1}, {K..2K-1}, ...
  static SelectionStrategy partition(std::size_t n_users, std::size_t k) {
    check(n_users, k);
    if (n_users % k != 0)
      throw ParameterError("partition strategy needs K = " + std::to_string(k) +
                           " to divide N = " + std::to_string(n_users));
    std::vector<std::vector<std::size_t>> groups(n_users / k);
    for (std::size_t u = 0; u < n_users; ++u) groups[u / k].push_back(u);
    return partition(n_users, k, std::move(groups));
  }

  static SelectionStrategy partition(std::size_t n_users, std::size_t k,
                                     std::vector<std::vector<std::size_t>> groups) {
    check(n_users, k);
    std::vector<std::uint8_t> seen(n_users, 0);
    for (const auto& g : groups) {
      if (g.size() != k) throw ParameterError("partition groups must have size K");
      for (std::size_t u : g) {
        if (u >= n_users || seen[u]) throw ParameterError("partition groups must be disjoint");
        seen[u] = 1;
      }
    }
    if (groups.size() * k != n_users) throw ParameterError("partition groups must cover all users");
    SelectionStrategy s(StrategyKind::Partition, n_users, k);
    s.groups_ = std::move(groups);
    return s;
  }

  static SelectionStrategy batch_secagg(PrivacyFamily family, bool fairness_mode) {
    SelectionStrategy s(StrategyKind::BatchSecAgg, family.n_users(), family.row_weight());
    s.fairness_ = fairness_mode;
    s.family_.emplace(std::move(family));
    return s;
  }

  StrategyKind kind() const noexcept { return kind_; }
  std::size_t n_users() const noexcept { return n_users_; }
  std::size_t k() const noexcept { return k_; }
  bool fairness_mode() const noexcept { return fairness_; }
  const PrivacyFamily& family() const { return family_.value(); }
  const std::vector<std::vector<std::size_t>>& groups() const noexcept { return groups_; }

 private:
  SelectionStrategy(StrategyKind kind, std::size_t n, std::size_t k) : kind_(kind), n_users_(n), k_(k) {}

  static void check(std::size_t n, std::size_t k) {
    if (n == 0 || k == 0 || k > n)
      throw ParameterError("selection needs 0 < K <= N, got K = " + std::to_string(k) +
                           ", N = " + std::to_string(n));
  }

  StrategyKind kind_;
  std::size_t n_users_;
  std::size_t k_;
  bool fairness_ = false;
  std::optional<PrivacyFamily> family_;
  std::vector<std::vector<std::size_t>> groups_;
};

namespace detail {

inline std::vector<std::size_t> available_users(const AvailabilityVector& a) {
  return support(a.bits);
}

// Uniform k-subset of `pool` via partial Fisher-Yates.
inline std::vector<std::size_t> sample_k(std::vector<std::size_t> pool, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

// Available users ordered by ascending frequency, ties in uniformly random order.
inline std::vector<std::size_t> by_frequency(const AvailabilityVector& a,
                                             std::span<const std::int64_t> freq, Rng& rng) {
  auto users = available_users(a);
  std::shuffle(users.begin(), users.end(), rng);
  std::stable_sort(users.begin(), users.end(),
                   [&](std::size_t x, std::size_t y) { return freq[x] < freq[y]; });
  return users;
}

inline ParticipationVector from_users(std::size_t n, const std::vector<std::size_t>& users,
                                      std::size_t round) {
  auto p = ParticipationVector::zeros(n, round);
  for (std::size_t u : users) p.bits[u] = 1;
  return p;
}

}  // namespace detail

// Uniform K-subset of the available users; zero vector when fewer than K.
inline ParticipationVector select_random(const AvailabilityVector& availability, std::size_t k,
                                         Rng& rng, std::size_t round = 0) {
  auto users = detail::available_users(availability);
  if (users.size() < k) return ParticipationVector::zeros(availability.size(), round);
  return detail::from_users(availability.size(), detail::sample_k(std::move(users), k, rng), round);
}

// The K available users of lowest participation frequency, ties broken
// uniformly at random.
inline ParticipationVector select_weighted_random(const AvailabilityVector& availability,
                                                  std::span<const std::int64_t> frequencies,
                                                  std::size_t k, Rng& rng, std::size_t round = 0) {
  if (availability.count() < k) return ParticipationVector::zeros(availability.size(), round);
  auto order = detail::by_frequency(availability, frequencies, rng);
  order.resize(k);
  return detail::from_users(availability.size(), order, round);
}

// Among fully available groups, one holding the lowest-frequency user
// (uniform among ties).
inline ParticipationVector select_partition(const std::vector<std::vector<std::size_t>>& groups,
                                            const AvailabilityVector& availability,
                                            std::span<const std::int64_t> frequencies, Rng& rng,
                                            std::size_t round = 0) {
  std::vector<std::size_t> candidates;
  std::int64_t best = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& members = groups[g];
    if (!std::all_of(members.begin(), members.end(), [&](std::size_t u) { return availability[u]; }))
      continue;
    std::int64_t lo = frequencies[members.front()];
    for (std::size_t u : members) lo = std::min(lo, frequencies[u]);
    if (candidates.empty() || lo < best) {
      candidates.assign(1, g);
      best = lo;
    } else if (lo == best) {
      candidates.push_back(g);
    }
  }
  if (candidates.empty()) return ParticipationVector::zeros(availability.size(), round);
  std::size_t g = candidates[0];
  if (candidates.size() > 1) {
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    g = candidates[pick(rng)];
  }
  return detail::from_users(availability.size(), groups[g], round);
}

// Batches whose every member is available.
inline std::vector<std::size_t> available_batches(const BatchPartition& partition,
                                                  const AvailabilityVector& availability) {
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < partition.n_batches(); ++b) {
    const auto& members = partition.batches[b];
    if (std::all_of(members.begin(), members.end(), [&](std::size_t u) { return availability[u]; }))
      out.push_back(b);
  }
  return out;
}

// Literal row filter: indices of family rows whose support lies inside the
// available set. O(R); the selector below works on batches instead.
inline std::vector<std::uint64_t> available_rows(const PrivacyFamily& family,
                                                 const AvailabilityVector& availability) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t r = 0; r < family.row_count(); ++r) {
    BitRow bits = family.row_bits(r);
    bool ok = true;
    for (std::size_t u = 0; u < bits.size() && ok; ++u) ok = !bits[u] || availability[u];
    if (ok) out.push_back(r);
  }
  return out;
}

// Available batch selection. The available rows are exactly the K/T-subsets
// of fully available batches, so a uniform row is a uniform K/T-subset of
// those batches; fairness mode pins the batch of the lowest-frequency
// available user whose batch is fully available.
inline ParticipationVector select_batch_secagg(const PrivacyFamily& family,
                                               const AvailabilityVector& availability,
                                               std::span<const std::int64_t> frequencies,
                                               bool fairness_mode, Rng& rng, std::size_t round = 0) {
  const auto& partition = family.partition();
  const std::size_t per_row = family.batches_per_row();
  auto open = available_batches(partition, availability);
  if (open.size() < per_row) return ParticipationVector::zeros(availability.size(), round);

  std::vector<std::size_t> chosen;
  if (!fairness_mode) {
    chosen = detail::sample_k(std::move(open), per_row, rng);
  } else {
    std::vector<std::uint8_t> is_open(partition.n_batches(), 0);
    for (std::size_t b : open) is_open[b] = 1;
    std::size_t anchor = partition.n_batches();
    for (std::size_t u : detail::by_frequency(availability, frequencies, rng)) {
      if (is_open[partition.batch_of(u)]) {
        anchor = partition.batch_of(u);
        break;
      }
    }
    std::vector<std::size_t> rest;
    for (std::size_t b : open)
      if (b != anchor) rest.push_back(b);
    chosen = detail::sample_k(std::move(rest), per_row - 1, rng);
    chosen.push_back(anchor);
  }
  return ParticipationVector{family.bits_for_batches(chosen), round};
}

inline ParticipationVector select(const SelectionStrategy& strategy,
                                  const AvailabilityVector& availability,
                                  std::span<const std::int64_t> frequencies, Rng& rng,
                                  std::size_t round = 0) {
  if (availability.size() != strategy.n_users() || frequencies.size() != strategy.n_users())
    throw ParameterError("availability/frequency length does not match N");
  switch (strategy.kind()) {
    case StrategyKind::Random: return select_random(availability, strategy.k(), rng, round);
    case StrategyKind::WeightedRandom:
      return select_weighted_random(availability, frequencies, strategy.k(), rng, round);
    case StrategyKind::Partition:
      return select_partition(strategy.groups(), availability, frequencies, rng, round);
    case StrategyKind::BatchSecAgg:
      return select_batch_secagg(strategy.family(), availability, frequencies,
                                 strategy.fairness_mode(), rng, round);
  }
  throw ParameterError("unknown strategy kind");
}

}  // namespace mrsa
