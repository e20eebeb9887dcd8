#pragma once

// Multi-round privacy, fairness gap and aggregation cardinality of a
// participation ledger.
//
// Privacy works on column classes: users whose columns are identical across
// the whole ledger receive identical coefficients in every linear
// combination of aggregates, so any reconstructible vector is constant on a
// class. Never-selected users (all-zero columns) are excluded.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mrsa/core.hpp"
#include "mrsa/csv.hpp"
#include "mrsa/errors.hpp"
#include "mrsa/family.hpp"
#include "mrsa/numkit.hpp"

namespace mrsa {

inline constexpr std::uint64_t kDefaultWeakSearchCap = 1'000'000;

struct ColumnClasses {
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  std::vector<std::size_t> class_of;              // per user; kNone for all-zero columns
  std::vector<std::vector<std::size_t>> members;  // ordered by smallest member

  std::size_t count() const noexcept { return members.size(); }
  std::size_t size(std::size_t c) const { return members[c].size(); }
};

inline ColumnClasses column_classes(const ParticipationMatrix& p) {
  const std::size_t n = p.n_users();
  ColumnClasses out;
  out.class_of.assign(n, ColumnClasses::kNone);
  std::map<BitRow, std::size_t> index;
  BitRow col(p.rounds());
  for (std::size_t u = 0; u < n; ++u) {
    bool nonzero = false;
    for (std::size_t t = 0; t < p.rounds(); ++t) {
      col[t] = p.row(t)[u];
      nonzero |= col[t] != 0;
    }
    if (!nonzero) continue;
    auto [it, inserted] = index.try_emplace(col, out.members.size());
    if (inserted) out.members.emplace_back();
    out.members[it->second].push_back(u);
    out.class_of[u] = it->second;
  }
  return out;
}

// Minimum size of a nonzero column class: the largest T such that every
// reconstructible combination is a coefficient-weighted sum over groups of
// at least T users.
inline std::size_t strong_privacy(const ColumnClasses& classes) {
  if (classes.count() == 0) throw UndefinedMetric("privacy is undefined for an all-zero ledger");
  std::size_t best = std::numeric_limits<std::size_t>::max();
  for (const auto& m : classes.members) best = std::min(best, m.size());
  return best;
}

inline std::size_t strong_privacy(const ParticipationMatrix& p) {
  return strong_privacy(column_classes(p));
}

struct WeakPrivacy {
  std::optional<std::size_t> value;  // set when the exact search finished
  std::size_t lower = 0;
  std::size_t upper = 0;
  std::uint64_t rank_tests = 0;

  bool resolved() const noexcept { return value.has_value(); }
};

namespace detail {

// Smallest total class weight W such that some union of classes of weight W
// contains the support of a nonzero row-space vector. Weight levels are
// searched in ascending order; the minimum weight of an exact RREF row is a
// witness and therefore bounds the search from above.
inline WeakPrivacy weak_search(const RowSpace& space, const ColumnClasses& classes,
                               std::uint64_t search_cap) {
  const std::size_t d = classes.count();
  if (d == 0) throw UndefinedMetric("privacy is undefined for an all-zero ledger");
  const std::size_t strong = strong_privacy(classes);
  WeakPrivacy out;

  if (space.rank() == d) {
    // Full column rank over the classes: every class indicator is in the
    // row space, so the lightest class is a witness.
    out.value = strong;
    out.lower = out.upper = strong;
    return out;
  }

  std::size_t upper = std::numeric_limits<std::size_t>::max();
  for (std::size_t w : space.basis_row_weights()) upper = std::min(upper, w);

  std::vector<std::uint8_t> class_has_pivot(d, 0);
  for (std::size_t c : space.pivots())
    if (classes.class_of[c] != ColumnClasses::kNone) class_has_pivot[classes.class_of[c]] = 1;

  std::vector<std::size_t> suffix(d + 1, 0);
  for (std::size_t c = d; c-- > 0;) suffix[c] = suffix[c + 1] + classes.size(c);

  BitRow mask(space.cols(), 0);
  std::uint64_t tests = 0;
  bool capped = false;

  auto toggle = [&](std::size_t c, std::uint8_t v) {
    for (std::size_t u : classes.members[c]) mask[u] = v;
  };

  // Depth-first enumeration of class subsets with total weight exactly `left`.
  auto dfs = [&](auto&& self, std::size_t from, std::size_t left, bool has_pivot) -> bool {
    if (left == 0) {
      if (!has_pivot) return false;
      if (++tests > search_cap) {
        capped = true;
        return false;
      }
      return space.has_vector_supported_in(mask);
    }
    for (std::size_t c = from; c < d && !capped; ++c) {
      if (suffix[c] < left) break;
      if (classes.size(c) > left) continue;
      toggle(c, 1);
      bool hit = self(self, c + 1, left - classes.size(c), has_pivot || class_has_pivot[c]);
      toggle(c, 0);
      if (hit) return true;
    }
    return false;
  };

  for (std::size_t w = strong; w < upper; ++w) {
    if (dfs(dfs, 0, w, false)) {
      out.value = w;
      out.lower = out.upper = w;
      out.rank_tests = tests;
      return out;
    }
    if (capped) {
      out.lower = strong;
      out.upper = upper;
      out.rank_tests = search_cap;
      return out;
    }
  }
  out.value = upper;
  out.lower = out.upper = upper;
  out.rank_tests = tests;
  return out;
}

// Row space of the ledger, adding distinct rows until the rank reaches the
// number of column classes (its maximum).
inline RowSpace ledger_row_space(const ParticipationMatrix& p, std::size_t max_rank) {
  RowSpace space(p.n_users());
  std::set<BitRow> seen;
  for (const auto& r : p.rows()) {
    if (space.rank() >= max_rank) break;
    if (popcount(r) == 0 || !seen.insert(r).second) continue;
    space.add(r);
  }
  return space;
}

}  // namespace detail

// Minimum L0 weight of a nonzero vector in the row space of p.
inline WeakPrivacy weak_privacy(const ParticipationMatrix& p,
                                std::uint64_t search_cap = kDefaultWeakSearchCap) {
  auto classes = column_classes(p);
  if (classes.count() == 0) throw UndefinedMetric("privacy is undefined for an all-zero ledger");
  auto space = detail::ledger_row_space(p, classes.count());
  return detail::weak_search(space, classes, search_cap);
}

// F^(t) = max_i F_i - min_i F_i with F_i the empirical participation rate.
inline double fairness_gap_instant(const ParticipationMatrix& p) {
  if (p.empty()) throw ParameterError("fairness gap needs at least one round");
  auto sums = p.column_sums();
  auto [lo, hi] = std::minmax_element(sums.begin(), sums.end());
  return static_cast<double>(*hi - *lo) / static_cast<double>(p.rounds());
}

// C^(t): mean selected-set size, skipped rounds counting as 0.
inline double cardinality_instant(const ParticipationMatrix& p) {
  if (p.empty()) throw ParameterError("cardinality needs at least one round");
  std::size_t total = 0;
  for (const auto& r : p.rows()) total += popcount(r);
  return static_cast<double>(total) / static_cast<double>(p.rounds());
}

// C = K (1 - P[at least N/T - K/T + 1 batches unavailable]), q = 1 - (1-p)^T.
inline double analytic_cardinality(std::size_t n_users, std::size_t row_weight,
                                   std::size_t privacy_target, double dropout) {
  validate_family_params(n_users, row_weight, privacy_target);
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("dropout must lie in [0, 1)");
  const double q = 1.0 - std::pow(1.0 - dropout, static_cast<double>(privacy_target));
  const auto nb = static_cast<std::int64_t>(n_users / privacy_target);
  const auto kb = static_cast<std::int64_t>(row_weight / privacy_target);
  return static_cast<double>(row_weight) * (1.0 - binomial_tail(nb, nb - kb + 1, q));
}

struct MetricsOptions {
  std::uint64_t weak_search_cap = kDefaultWeakSearchCap;
  std::size_t weak_every = 1;  // compute weak privacy every k-th round (and at the last)
};

struct MetricsSnapshot {
  std::size_t round = 0;
  std::optional<WeakPrivacy> weak;   // absent: not computed this round, or undefined
  std::optional<std::size_t> strong;  // absent: no user selected yet
  double fairness_gap = 0.0;
  double cardinality = 0.0;
};

// Per-round metrics over a growing ledger. The row space is maintained
// incrementally; a new row is skipped when the rank already equals the
// number of column classes, since it then lies in the span.
class MetricsTracker {
 public:
  MetricsTracker(std::size_t n_users, MetricsOptions options = {})
      : options_(options), space_(n_users) {
    if (options_.weak_every == 0) throw ParameterError("weak_every must be positive");
  }

  // Call once after each round is appended to `ledger`.
  MetricsSnapshot observe(const ParticipationMatrix& ledger, bool force_weak = false) {
    if (ledger.empty()) throw ParameterError("observe called on an empty ledger");
    MetricsSnapshot s;
    s.round = ledger.rounds() - 1;
    s.fairness_gap = fairness_gap_instant(ledger);
    s.cardinality = cardinality_instant(ledger);
    auto classes = column_classes(ledger);
    const BitRow& last = ledger.row(s.round);
    if (popcount(last) > 0 && space_.rank() < classes.count() && seen_.insert(last).second)
      space_.add(last);
    if (classes.count() == 0) return s;
    s.strong = strong_privacy(classes);
    if (force_weak || s.round % options_.weak_every == 0)
      s.weak = detail::weak_search(space_, classes, options_.weak_search_cap);
    return s;
  }

  const RowSpace& row_space() const noexcept { return space_; }

 private:
  MetricsOptions options_;
  RowSpace space_;
  std::set<BitRow> seen_;
};

inline constexpr const char* kMetricsColumns = "T_weak,T_weak_lower,T_weak_upper,T_strong,F_inst,C_inst";

// Metric columns without the leading round; NA marks undefined / not computed.
inline std::string metrics_fields(const MetricsSnapshot& s) {
  std::string out;
  if (s.weak) {
    out += s.weak->value ? std::to_string(*s.weak->value) : "NA";
    out += "," + std::to_string(s.weak->lower) + "," + std::to_string(s.weak->upper);
  } else {
    out += "NA,NA,NA";
  }
  out += ",";
  out += s.strong ? std::to_string(*s.strong) : "NA";
  out += "," + csv::format_double(s.fairness_gap) + "," + csv::format_double(s.cardinality);
  return out;
}

inline std::string metrics_to_csv(const std::vector<MetricsSnapshot>& snapshots) {
  std::string out = std::string("round,") + kMetricsColumns + "\n";
  for (const auto& s : snapshots) out += std::to_string(s.round) + "," + metrics_fields(s) + "\n";
  return out;
}

}  // namespace mrsa
