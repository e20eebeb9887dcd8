#pragma once

// Batch-partitioning privacy-preserving family.
//
// Users are split into N/T consecutive batches of size T; a family row is
// the union of K/T batches. Rows are numbered in lexicographic order of
// their (sorted) batch-index sets. Families larger than a cap are kept
// implicit: rows are decoded from their index on demand.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrsa/core.hpp"
#include "mrsa/errors.hpp"
#include "mrsa/numkit.hpp"

namespace mrsa {

inline constexpr std::uint64_t kDefaultMaterializeCap = 1'000'000;

inline void validate_family_params(std::size_t n_users, std::size_t row_weight,
                                   std::size_t privacy_target) {
  if (n_users == 0) throw ParameterError("n_users must be positive");
  if (row_weight == 0) throw ParameterError("row_weight K must be positive");
  if (privacy_target == 0) throw ParameterError("privacy_target T must be positive");
  if (row_weight > n_users)
    throw ParameterError("row_weight K = " + std::to_string(row_weight) +
                         " exceeds n_users N = " + std::to_string(n_users));
  if (n_users % privacy_target != 0)
    throw ParameterError("privacy_target T = " + std::to_string(privacy_target) +
                         " does not divide n_users N = " + std::to_string(n_users));
  if (row_weight % privacy_target != 0)
    throw ParameterError("privacy_target T = " + std::to_string(privacy_target) +
                         " does not divide row_weight K = " + std::to_string(row_weight));
}

// R = C(N/T, K/T)
inline std::uint64_t family_size(std::size_t n_users, std::size_t row_weight,
                                 std::size_t privacy_target) {
  validate_family_params(n_users, row_weight, privacy_target);
  return binomial_u64(n_users / privacy_target, row_weight / privacy_target);
}

struct BatchPartition {
  std::size_t n_users = 0;
  std::size_t privacy_target = 0;
  std::vector<std::vector<std::size_t>> batches;

  static BatchPartition consecutive(std::size_t n_users, std::size_t privacy_target) {
    if (privacy_target == 0 || n_users % privacy_target != 0)
      throw ParameterError("batch size must divide the number of users");
    BatchPartition bp{n_users, privacy_target, {}};
    for (std::size_t g = 0; g < n_users / privacy_target; ++g) {
      std::vector<std::size_t> batch;
      for (std::size_t i = 0; i < privacy_target; ++i) batch.push_back(g * privacy_target + i);
      bp.batches.push_back(std::move(batch));
    }
    return bp;
  }

  std::size_t n_batches() const noexcept { return batches.size(); }
  std::size_t batch_of(std::size_t user) const { return user / privacy_target; }
};

// Lexicographic rank/unrank of k-subsets of {0..n-1}.
namespace combinatorics {

inline std::vector<std::size_t> unrank(std::uint64_t index, std::size_t n, std::size_t k) {
  std::vector<std::size_t> out;
  out.reserve(k);
  std::size_t next = 0;
  for (std::size_t slot = 0; slot < k; ++slot) {
    for (std::size_t c = next;; ++c) {
      std::uint64_t block = binomial_u64(n - c - 1, k - slot - 1);
      if (index < block) {
        out.push_back(c);
        next = c + 1;
        break;
      }
      index -= block;
    }
  }
  return out;
}

inline std::uint64_t rank(const std::vector<std::size_t>& subset, std::size_t n) {
  const std::size_t k = subset.size();
  std::uint64_t index = 0;
  std::size_t next = 0;
  for (std::size_t slot = 0; slot < k; ++slot) {
    for (std::size_t c = next; c < subset[slot]; ++c) index += binomial_u64(n - c - 1, k - slot - 1);
    next = subset[slot] + 1;
  }
  return index;
}

// Advances to the lexicographic successor; false after the last subset.
inline bool next_subset(std::vector<std::size_t>& s, std::size_t n) {
  const std::size_t k = s.size();
  for (std::size_t i = k; i-- > 0;) {
    if (s[i] < n - k + i) {
      ++s[i];
      for (std::size_t j = i + 1; j < k; ++j) s[j] = s[j - 1] + 1;
      return true;
    }
  }
  return false;
}

}  // namespace combinatorics

class PrivacyFamily {
 public:
  PrivacyFamily(BatchPartition partition, std::size_t row_weight, std::uint64_t rows,
                std::optional<std::vector<BitRow>> matrix)
      : partition_(std::move(partition)),
        row_weight_(row_weight),
        rows_(rows),
        matrix_(std::move(matrix)) {}

  const BatchPartition& partition() const noexcept { return partition_; }
  std::size_t n_users() const noexcept { return partition_.n_users; }
  std::size_t row_weight() const noexcept { return row_weight_; }
  std::size_t privacy_target() const noexcept { return partition_.privacy_target; }
  std::size_t batches_per_row() const noexcept { return row_weight_ / partition_.privacy_target; }
  std::uint64_t row_count() const noexcept { return rows_; }
  bool materialized() const noexcept { return matrix_.has_value(); }

  const std::vector<BitRow>& matrix() const {
    if (!matrix_) throw ParameterError("family of " + std::to_string(rows_) + " rows is implicit");
    return *matrix_;
  }

  std::vector<std::size_t> batch_indices(std::uint64_t row) const {
    if (row >= rows_) throw ParameterError("family row index out of range");
    return combinatorics::unrank(row, partition_.n_batches(), batches_per_row());
  }

  BitRow row_bits(std::uint64_t row) const {
    if (matrix_) return matrix_->at(row);
    return bits_for_batches(batch_indices(row));
  }

  BitRow bits_for_batches(const std::vector<std::size_t>& batch_set) const {
    BitRow bits(n_users(), 0);
    for (std::size_t b : batch_set)
      for (std::size_t u : partition_.batches.at(b)) bits[u] = 1;
    return bits;
  }

  std::uint64_t row_index(std::vector<std::size_t> batch_set) const {
    std::sort(batch_set.begin(), batch_set.end());
    return combinatorics::rank(batch_set, partition_.n_batches());
  }

  // Returns a copy with one row removed (materialized families only).
  PrivacyFamily without_row(std::uint64_t row) const {
    auto m = matrix();
    m.erase(m.begin() + static_cast<std::ptrdiff_t>(row));
    return PrivacyFamily(partition_, row_weight_, m.size(), std::move(m));
  }

 private:
  BatchPartition partition_;
  std::size_t row_weight_;
  std::uint64_t rows_;
  std::optional<std::vector<BitRow>> matrix_;
};

// All C(N/T, K/T) unions of K/T consecutive-index batches, rows in
// lexicographic order of the chosen batch sets.
inline PrivacyFamily generate_bp_family(std::size_t n_users, std::size_t row_weight,
                                        std::size_t privacy_target,
                                        std::uint64_t materialize_cap = kDefaultMaterializeCap) {
  const std::uint64_t rows = family_size(n_users, row_weight, privacy_target);
  auto partition = BatchPartition::consecutive(n_users, privacy_target);
  if (rows > materialize_cap) return PrivacyFamily(std::move(partition), row_weight, rows, std::nullopt);

  const std::size_t n_batches = partition.n_batches();
  const std::size_t per_row = row_weight / privacy_target;
  std::vector<BitRow> matrix;
  matrix.reserve(rows);
  std::vector<std::size_t> chosen(per_row);
  for (std::size_t i = 0; i < per_row; ++i) chosen[i] = i;
  do {
    BitRow bits(n_users, 0);
    for (std::size_t b : chosen)
      for (std::size_t u : partition.batches[b]) bits[u] = 1;
    matrix.push_back(std::move(bits));
  } while (combinatorics::next_subset(chosen, n_batches));
  return PrivacyFamily(std::move(partition), row_weight, rows, std::move(matrix));
}

// True iff the family attains the C(N/T, K/T) upper bound on the number of
// distinct selection sets and its rows are pairwise distinct.
inline bool verify_family_optimality(const PrivacyFamily& f) {
  const std::uint64_t bound = family_size(f.n_users(), f.row_weight(), f.privacy_target());
  if (f.row_count() != bound) return false;
  if (!f.materialized()) return true;  // implicit rows are distinct by construction
  const auto& m = f.matrix();
  if (m.size() != bound) return false;
  std::vector<BitRow> sorted = m;
  std::sort(sorted.begin(), sorted.end());
  return std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end();
}

inline std::string family_to_csv(const PrivacyFamily& f) {
  std::string out = "round";
  for (std::size_t i = 0; i < f.n_users(); ++i) out += ",u" + std::to_string(i);
  out += '\n';
  for (std::uint64_t r = 0; r < f.row_count(); ++r) {
    out += std::to_string(r);
    for (auto b : f.row_bits(r)) {
      out += ',';
      out += b ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

inline nlohmann::ordered_json family_sidecar(const PrivacyFamily& f) {
  nlohmann::ordered_json j;
  j["n_users"] = f.n_users();
  j["row_weight"] = f.row_weight();
  j["privacy_target"] = f.privacy_target();
  j["rows"] = f.row_count();
  j["batches_per_row"] = f.batches_per_row();
  j["row_order"] = "lexicographic over batch-index sets";
  j["batches"] = f.partition().batches;
  return j;
}

}  // namespace mrsa
