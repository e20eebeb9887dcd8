#pragma once

// Domain types shared by every module: the user pool, per-round
// availability and participation vectors, and the participation ledger.
//
// Users are indexed 0..N-1.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mrsa/errors.hpp"
#include "mrsa/random.hpp"

namespace mrsa {

using BitRow = std::vector<std::uint8_t>;

inline std::size_t popcount(const BitRow& bits) {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

inline std::vector<std::size_t> support(const BitRow& bits) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) out.push_back(i);
  return out;
}

class UserPool {
 public:
  explicit UserPool(std::vector<double> dropout_probs)
      : dropout_(std::move(dropout_probs)), freq_(dropout_.size(), 0) {
    if (dropout_.empty()) throw ParameterError("user pool must contain at least one user");
    for (std::size_t i = 0; i < dropout_.size(); ++i) {
      double p = dropout_[i];
      if (!(p >= 0.0 && p < 1.0))
        throw ParameterError("dropout probability of user " + std::to_string(i) +
                             " must lie in [0, 1), got " + std::to_string(p));
    }
  }

  static UserPool uniform(std::size_t n_users, double p) {
    return UserPool(std::vector<double>(n_users, p));
  }

  std::size_t size() const noexcept { return dropout_.size(); }
  std::span<const double> dropout_probs() const noexcept { return dropout_; }
  std::span<const std::int64_t> frequencies() const noexcept { return freq_; }

  bool equal_dropout() const {
    return std::all_of(dropout_.begin(), dropout_.end(),
                       [&](double p) { return p == dropout_.front(); });
  }

  // f^(t) = f^(t-1) + p^(t)
  void record(const BitRow& selected) {
    if (selected.size() != freq_.size())
      throw ParameterError("participation vector length does not match pool size");
    for (std::size_t i = 0; i < freq_.size(); ++i) freq_[i] += selected[i];
  }

 private:
  std::vector<double> dropout_;
  std::vector<std::int64_t> freq_;
};

struct AvailabilityVector {
  BitRow bits;

  std::size_t size() const noexcept { return bits.size(); }
  std::size_t count() const { return popcount(bits); }
  bool operator[](std::size_t i) const { return bits[i] != 0; }
};

struct ParticipationVector {
  BitRow bits;
  std::size_t round = 0;

  static ParticipationVector zeros(std::size_t n_users, std::size_t round) {
    return {BitRow(n_users, 0), round};
  }

  std::size_t size() const noexcept { return bits.size(); }
  std::size_t weight() const { return popcount(bits); }
  bool skipped() const { return weight() == 0; }
};

// Append-only t x N binary history of participation vectors.
class ParticipationMatrix {
 public:
  explicit ParticipationMatrix(std::size_t n_users) : n_users_(n_users) {
    if (n_users == 0) throw ParameterError("participation matrix needs at least one user");
  }

  static ParticipationMatrix from_rows(std::size_t n_users, std::vector<BitRow> rows) {
    ParticipationMatrix m(n_users);
    for (auto& r : rows) m.append(std::move(r));
    return m;
  }

  void append(BitRow row) {
    if (row.size() != n_users_)
      throw ParameterError("row length " + std::to_string(row.size()) + " != N = " +
                           std::to_string(n_users_));
    for (auto b : row)
      if (b > 1) throw ParameterError("participation entries must be 0/1");
    rows_.push_back(std::move(row));
  }

  std::size_t n_users() const noexcept { return n_users_; }
  std::size_t rounds() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }
  const std::vector<BitRow>& rows() const noexcept { return rows_; }
  const BitRow& row(std::size_t t) const { return rows_.at(t); }

  std::vector<std::int64_t> column_sums() const {
    std::vector<std::int64_t> sums(n_users_, 0);
    for (const auto& r : rows_)
      for (std::size_t i = 0; i < n_users_; ++i) sums[i] += r[i];
    return sums;
  }

  bool all_zero() const {
    return std::all_of(rows_.begin(), rows_.end(),
                       [](const BitRow& r) { return popcount(r) == 0; });
  }

  // Rows [begin, end) as a new ledger.
  ParticipationMatrix window(std::size_t begin, std::size_t end) const {
    if (begin > end || end > rows_.size()) throw ParameterError("window out of range");
    ParticipationMatrix w(n_users_);
    w.rows_.assign(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                   rows_.begin() + static_cast<std::ptrdiff_t>(end));
    return w;
  }

  friend bool operator==(const ParticipationMatrix&, const ParticipationMatrix&) = default;

 private:
  std::size_t n_users_;
  std::vector<BitRow> rows_;
};

// Each user is available independently with probability 1 - p_i.
inline AvailabilityVector sample_availability(const UserPool& pool, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AvailabilityVector u{BitRow(pool.size(), 0)};
  auto probs = pool.dropout_probs();
  for (std::size_t i = 0; i < pool.size(); ++i) u.bits[i] = unit(rng) >= probs[i] ? 1 : 0;
  return u;
}

// Records one round: ledger gains a row and frequencies are incremented.
inline void append_round(ParticipationMatrix& ledger, UserPool& pool, const ParticipationVector& p,
                         std::size_t row_weight) {
  if (p.size() != ledger.n_users() || p.size() != pool.size())
    throw ParameterError("participation vector length does not match N");
  if (p.round != ledger.rounds())
    throw OrderingError("participation vector for round " + std::to_string(p.round) +
                        " appended at ledger length " + std::to_string(ledger.rounds()));
  std::size_t w = p.weight();
  if (w != 0 && w != row_weight)
    throw ContractViolation("participation weight " + std::to_string(w) + " not in {0, " +
                            std::to_string(row_weight) + "}");
  ledger.append(p.bits);
  pool.record(p.bits);
}

// Header `round,u0,...,u{N-1}`, one LF-terminated line per round.
inline std::string to_csv(const ParticipationMatrix& m) {
  std::string out = "round";
  for (std::size_t i = 0; i < m.n_users(); ++i) out += ",u" + std::to_string(i);
  out += '\n';
  for (std::size_t t = 0; t < m.rounds(); ++t) {
    out += std::to_string(t);
    for (auto b : m.row(t)) {
      out += ',';
      out += b ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

}  // namespace mrsa
