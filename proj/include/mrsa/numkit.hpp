#pragma once

// Linear-algebra primitives shared by the privacy metrics and the
// reconstruction attack:
//
//   * exact rank over the rationals (fraction-free elimination),
//   * an incrementally maintained exact row space (integer RREF) that
//     answers "does the row space contain a nonzero vector supported on S",
//   * minimum-norm least squares,
//   * binomial tail probabilities.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>

#include "mrsa/core.hpp"
#include "mrsa/errors.hpp"

namespace mrsa {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;
using RealMatrix = Eigen::MatrixXd;

// Dense matrix of exact rationals.
class ExactMatrix {
 public:
  ExactMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  static ExactMatrix from_bits(std::span<const BitRow> rows, std::size_t cols) {
    ExactMatrix m(rows.size(), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != cols) throw ParameterError("ragged bit matrix");
      for (std::size_t j = 0; j < cols; ++j) m(i, j) = rows[i][j];
    }
    return m;
  }

  static ExactMatrix from_ledger(const ParticipationMatrix& p) {
    return from_bits(p.rows(), p.n_users());
  }

  static ExactMatrix from_integers(const std::vector<std::vector<std::int64_t>>& rows) {
    std::size_t cols = rows.empty() ? 0 : rows.front().size();
    ExactMatrix m(rows.size(), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != cols) throw ParameterError("ragged integer matrix");
      for (std::size_t j = 0; j < cols; ++j) m(i, j) = rows[i][j];
    }
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  Rational& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const Rational& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  ExactMatrix transpose() const {
    ExactMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

 private:
  std::size_t rows_, cols_;
  std::vector<Rational> data_;
};

namespace detail {

struct IntOverflow {};

inline __int128 mul_checked(__int128 a, __int128 b) {
  __int128 r;
  if (__builtin_mul_overflow(a, b, &r)) throw IntOverflow{};
  return r;
}
inline __int128 sub_checked(__int128 a, __int128 b) {
  __int128 r;
  if (__builtin_sub_overflow(a, b, &r)) throw IntOverflow{};
  return r;
}
inline BigInt mul_checked(const BigInt& a, const BigInt& b) { return a * b; }
inline BigInt sub_checked(const BigInt& a, const BigInt& b) { return a - b; }

// Fraction-free (Bareiss) row echelon reduction; returns the rank.
// Every intermediate entry is a minor of the input, so each division is
// exact. Columns without a pivot are skipped.
template <class Int>
std::size_t bareiss_rank(std::vector<std::vector<Int>> m, std::size_t cols) {
  const std::size_t rows = m.size();
  std::size_t rank = 0;
  Int prev = 1;
  for (std::size_t col = 0; col < cols && rank < rows; ++col) {
    std::size_t pivot = rank;
    while (pivot < rows && m[pivot][col] == 0) ++pivot;
    if (pivot == rows) continue;
    std::swap(m[rank], m[pivot]);
    const Int& pv = m[rank][col];
    for (std::size_t i = rank + 1; i < rows; ++i) {
      Int lead = m[i][col];
      for (std::size_t j = col + 1; j < cols; ++j)
        m[i][j] = sub_checked(mul_checked(pv, m[i][j]), mul_checked(lead, m[rank][j])) / prev;
      m[i][col] = 0;
    }
    prev = pv;
    ++rank;
  }
  return rank;
}

// Rank of an integer matrix: 128-bit fast path, arbitrary precision on overflow.
inline std::size_t integer_rank(const std::vector<std::vector<BigInt>>& m, std::size_t cols) {
  const BigInt lim = BigInt(std::numeric_limits<std::int64_t>::max());
  bool small = true;
  for (const auto& r : m)
    for (const auto& v : r)
      if (abs(v) > lim) small = false;
  if (small) {
    std::vector<std::vector<__int128>> w(m.size(), std::vector<__int128>(cols));
    for (std::size_t i = 0; i < m.size(); ++i)
      for (std::size_t j = 0; j < cols; ++j) w[i][j] = static_cast<std::int64_t>(m[i][j]);
    try {
      return bareiss_rank(std::move(w), cols);
    } catch (const IntOverflow&) {
    }
  }
  return bareiss_rank(m, cols);
}

// Arithmetic modulo the Mersenne prime 2^61 - 1.
struct Mod61 {
  static constexpr std::uint64_t p = (1ULL << 61) - 1;

  static std::uint64_t reduce(unsigned __int128 x) {
    std::uint64_t lo = static_cast<std::uint64_t>(x & p);
    std::uint64_t hi = static_cast<std::uint64_t>(x >> 61);
    std::uint64_t s = lo + hi;
    if (s >= p) s -= p;
    return s;
  }
  static std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
    return reduce(static_cast<unsigned __int128>(a) * b);
  }
  static std::uint64_t add(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a + b;
    return s >= p ? s - p : s;
  }
  static std::uint64_t sub(std::uint64_t a, std::uint64_t b) { return a >= b ? a - b : a + p - b; }
  static std::uint64_t pow(std::uint64_t a, std::uint64_t e) {
    std::uint64_t r = 1;
    while (e) {
      if (e & 1) r = mul(r, a);
      a = mul(a, a);
      e >>= 1;
    }
    return r;
  }
  static std::uint64_t inv(std::uint64_t a) { return pow(a, p - 2); }
  static std::uint64_t from(const BigInt& v) {
    BigInt r = v % BigInt(p);
    if (r < 0) r += p;
    return static_cast<std::uint64_t>(r);
  }
};

// Rank over GF(2^61 - 1). Never exceeds the rational rank of the
// integer matrix it was reduced from.
inline std::size_t rank_mod(std::vector<std::vector<std::uint64_t>> m, std::size_t cols) {
  using M = Mod61;
  const std::size_t rows = m.size();
  std::size_t rank = 0;
  for (std::size_t col = 0; col < cols && rank < rows; ++col) {
    std::size_t pivot = rank;
    while (pivot < rows && m[pivot][col] == 0) ++pivot;
    if (pivot == rows) continue;
    std::swap(m[rank], m[pivot]);
    std::uint64_t inv = M::inv(m[rank][col]);
    for (std::size_t i = rank + 1; i < rows; ++i) {
      if (m[i][col] == 0) continue;
      std::uint64_t f = M::mul(m[i][col], inv);
      for (std::size_t j = col; j < cols; ++j)
        m[i][j] = M::sub(m[i][j], M::mul(f, m[rank][j]));
    }
    ++rank;
  }
  return rank;
}

inline void normalize_primitive(std::vector<BigInt>& row) {
  BigInt g = 0;
  for (const auto& v : row)
    if (v != 0) g = gcd(g, abs(v));
  if (g > 1)
    for (auto& v : row) v /= g;
}

}  // namespace detail

// Rank over the rationals, exact.
inline std::size_t rank_exact(const ExactMatrix& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0;
  std::vector<std::vector<BigInt>> rows(m.rows(), std::vector<BigInt>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    BigInt l = 1;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      BigInt d = denominator(m(i, j));
      l = l / gcd(l, d) * d;
    }
    for (std::size_t j = 0; j < m.cols(); ++j)
      rows[i][j] = numerator(m(i, j)) * (l / denominator(m(i, j)));
  }
  return detail::integer_rank(rows, m.cols());
}

// Exact row space of an integer matrix, maintained as a reduced row echelon
// form with primitive integer rows: row j has its pivot at pivots()[j] and a
// zero in every other pivot column. A reduction mod 2^61-1 is kept alongside
// to screen support queries; only screen positives are confirmed with
// exact arithmetic, so every answer is exact.
class RowSpace {
 public:
  explicit RowSpace(std::size_t cols) : cols_(cols), row_of_col_(cols, npos) {}

  std::size_t cols() const noexcept { return cols_; }
  std::size_t rank() const noexcept { return rows_.size(); }
  const std::vector<std::size_t>& pivots() const noexcept { return pivots_; }
  const std::vector<BigInt>& basis_row(std::size_t j) const { return rows_.at(j); }

  bool add(const BitRow& bits) {
    std::vector<BigInt> x(bits.begin(), bits.end());
    return add(std::move(x));
  }

  // Returns true when the rank grew.
  bool add(std::vector<BigInt> x) {
    if (x.size() != cols_) throw ParameterError("row length mismatch in RowSpace::add");
    for (std::size_t j = 0; j < rows_.size(); ++j) {
      const std::size_t c = pivots_[j];
      if (x[c] == 0) continue;
      BigInt a = rows_[j][c], b = x[c];
      for (std::size_t k = 0; k < cols_; ++k) x[k] = a * x[k] - b * rows_[j][k];
      detail::normalize_primitive(x);
    }
    std::size_t pc = 0;
    while (pc < cols_ && x[pc] == 0) ++pc;
    if (pc == cols_) return false;
    if (x[pc] < 0)
      for (auto& v : x) v = -v;
    detail::normalize_primitive(x);
    for (std::size_t j = 0; j < rows_.size(); ++j) {
      if (rows_[j][pc] == 0) continue;
      BigInt a = x[pc], b = rows_[j][pc];
      for (std::size_t k = 0; k < cols_; ++k) rows_[j][k] = a * rows_[j][k] - b * x[k];
      detail::normalize_primitive(rows_[j]);
      refresh_mod(j);
    }
    row_of_col_[pc] = rows_.size();
    pivots_.push_back(pc);
    rows_.push_back(std::move(x));
    mod_.emplace_back();
    refresh_mod(rows_.size() - 1);
    return true;
  }

  // True iff some nonzero vector of the row space has its support inside
  // {c : in_support[c]}. Equivalent to rank(A without those columns) < rank(A).
  bool has_vector_supported_in(const BitRow& in_support) const {
    if (in_support.size() != cols_) throw ParameterError("support mask length mismatch");
    // A row-space vector is determined by its pivot entries; those outside
    // the support must vanish, so only basis rows pivoting inside it remain.
    std::vector<std::size_t> sel;
    for (std::size_t j = 0; j < rows_.size(); ++j)
      if (in_support[pivots_[j]]) sel.push_back(j);
    if (sel.empty()) return false;
    std::vector<std::size_t> outside;
    for (std::size_t c = 0; c < cols_; ++c)
      if (!in_support[c] && row_of_col_[c] == npos) outside.push_back(c);
    if (outside.size() < sel.size()) return true;

    std::vector<std::vector<std::uint64_t>> m(sel.size(), std::vector<std::uint64_t>(outside.size()));
    for (std::size_t a = 0; a < sel.size(); ++a)
      for (std::size_t b = 0; b < outside.size(); ++b) m[a][b] = mod_[sel[a]][outside[b]];
    if (detail::rank_mod(std::move(m), outside.size()) == sel.size()) return false;

    std::vector<std::vector<BigInt>> e(sel.size(), std::vector<BigInt>(outside.size()));
    for (std::size_t a = 0; a < sel.size(); ++a)
      for (std::size_t b = 0; b < outside.size(); ++b) e[a][b] = rows_[sel[a]][outside[b]];
    return detail::integer_rank(e, outside.size()) < sel.size();
  }

  bool contains_unit_vector(std::size_t col) const {
    BitRow mask(cols_, 0);
    mask.at(col) = 1;
    return has_vector_supported_in(mask);
  }

  // Number of nonzero entries of each basis row (exact RREF supports).
  std::vector<std::size_t> basis_row_weights() const {
    std::vector<std::size_t> w;
    for (const auto& r : rows_)
      w.push_back(static_cast<std::size_t>(
          std::count_if(r.begin(), r.end(), [](const BigInt& v) { return v != 0; })));
    return w;
  }

 private:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  void refresh_mod(std::size_t j) {
    mod_[j].resize(cols_);
    for (std::size_t k = 0; k < cols_; ++k) mod_[j][k] = detail::Mod61::from(rows_[j][k]);
  }

  std::size_t cols_;
  std::vector<std::vector<BigInt>> rows_;
  std::vector<std::vector<std::uint64_t>> mod_;
  std::vector<std::size_t> pivots_;
  std::vector<std::size_t> row_of_col_;
};

// Minimum-Frobenius-norm minimizer of ||a x - b||_F via a complete
// orthogonal decomposition (column-pivoted QR). Pivots at or below
// 1e-10 x the largest are treated as zero.
inline RealMatrix solve_min_norm_lsq(const RealMatrix& a, const RealMatrix& b) {
  if (a.rows() != b.rows())
    throw ParameterError("least squares: a has " + std::to_string(a.rows()) + " rows, b has " +
                         std::to_string(b.rows()));
  if (!a.allFinite() || !b.allFinite()) throw ParameterError("least squares: non-finite input");
  if (a.rows() == 0 || a.cols() == 0) return RealMatrix::Zero(a.cols(), b.cols());
  Eigen::CompleteOrthogonalDecomposition<RealMatrix> cod;
  cod.setThreshold(1e-10);
  cod.compute(a);
  return cod.solve(b);
}

// sum_{i=lo}^{n} C(n,i) q^i (1-q)^(n-i), accumulated in log space.
inline double binomial_tail(std::int64_t n, std::int64_t lo, double q) {
  if (n < 0) throw ParameterError("binomial_tail: n must be non-negative");
  if (lo < 0 || lo > n + 1) throw ParameterError("binomial_tail: lo must lie in [0, n+1]");
  if (!(q >= 0.0 && q <= 1.0)) throw ParameterError("binomial_tail: q must lie in [0, 1]");
  if (lo == n + 1) return 0.0;
  if (q == 0.0) return lo == 0 ? 1.0 : 0.0;
  if (q == 1.0) return 1.0;
  const double lq = std::log(q), lp = std::log1p(-q);
  const double lgn = std::lgamma(static_cast<double>(n) + 1.0);
  double sum = 0.0, comp = 0.0;
  for (std::int64_t i = lo; i <= n; ++i) {
    double lc = lgn - std::lgamma(static_cast<double>(i) + 1.0) -
                std::lgamma(static_cast<double>(n - i) + 1.0);
    double term = std::exp(lc + static_cast<double>(i) * lq + static_cast<double>(n - i) * lp);
    // Neumaier compensated sum
    double t = sum + term;
    comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
    sum = t;
  }
  return std::min(1.0, sum + comp);
}

// C(n, k) as a 64-bit integer; throws when it does not fit.
inline std::uint64_t binomial_u64(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;
    if (r > std::numeric_limits<std::uint64_t>::max())
      throw ParameterError("binomial coefficient C(" + std::to_string(n) + ", " +
                           std::to_string(k) + ") overflows 64 bits");
  }
  return static_cast<std::uint64_t>(r);
}

}  // namespace mrsa
