#include <gtest/gtest.h>

#include <random>

#include "mrsa/numkit.hpp"

using namespace mrsa;

namespace {

// Textbook Gaussian elimination over Q, used as an independent oracle.
std::size_t rational_rank(std::vector<std::vector<Rational>> m) {
  if (m.empty()) return 0;
  const std::size_t rows = m.size(), cols = m[0].size();
  std::size_t r = 0;
  for (std::size_t c = 0; c < cols && r < rows; ++c) {
    std::size_t piv = r;
    while (piv < rows && m[piv][c] == 0) ++piv;
    if (piv == rows) continue;
    std::swap(m[piv], m[r]);
    for (std::size_t i = 0; i < rows; ++i) {
      if (i == r || m[i][c] == 0) continue;
      Rational f = m[i][c] / m[r][c];
      for (std::size_t j = c; j < cols; ++j) m[i][j] -= f * m[r][j];
    }
    ++r;
  }
  return r;
}

std::vector<BitRow> random_bits(std::size_t rows, std::size_t cols, double density, Rng& rng) {
  std::bernoulli_distribution bit(density);
  std::vector<BitRow> out(rows, BitRow(cols));
  for (auto& r : out)
    for (auto& b : r) b = bit(rng);
  return out;
}

std::vector<std::vector<Rational>> to_rational(const std::vector<BitRow>& rows) {
  std::vector<std::vector<Rational>> m;
  for (const auto& r : rows) m.emplace_back(r.begin(), r.end());
  return m;
}

std::size_t rank_of_bits(const std::vector<BitRow>& rows, std::size_t cols) {
  return rank_exact(ExactMatrix::from_bits(rows, cols));
}

}  // namespace

TEST(RankExact, Identity) {
  std::vector<BitRow> id(4, BitRow(4, 0));
  for (int i = 0; i < 4; ++i) id[i][i] = 1;
  EXPECT_EQ(rank_of_bits(id, 4), 4u);
}

TEST(RankExact, ThreeRowExample) {
  EXPECT_EQ(rank_of_bits({{1, 1, 0}, {0, 1, 1}, {1, 0, 1}}, 3), 3u);
}

TEST(RankExact, EqualRowsOfOnes) {
  EXPECT_EQ(rank_of_bits({BitRow(7, 1), BitRow(7, 1)}, 7), 1u);
}

TEST(RankExact, SignedIntegerMatrix) {
  // Over GF(2) this would be rank 2; over Q it is 3.
  EXPECT_EQ(rank_exact(ExactMatrix::from_integers({{1, 1, 0}, {0, 1, 1}, {1, 0, 1}})), 3u);
  EXPECT_EQ(rank_exact(ExactMatrix::from_integers({{2, -4}, {-1, 2}})), 1u);
}

TEST(RankExact, LargeEntriesTakeBigIntPath) {
  const std::int64_t big = std::int64_t{1} << 62;
  auto m = ExactMatrix::from_integers({{big, big - 1, 3}, {big - 1, big, 5}, {1, 1, 1}});
  std::vector<std::vector<Rational>> q = {{Rational(big), Rational(big - 1), 3},
                                          {Rational(big - 1), Rational(big), 5},
                                          {1, 1, 1}};
  EXPECT_EQ(rank_exact(m), rational_rank(q));
}

TEST(RankExact, MatchesRationalOracleAndTranspose) {
  Rng rng(11);
  std::uniform_int_distribution<std::size_t> dim(1, 9);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t r = dim(rng), c = dim(rng);
    auto bits = random_bits(r, c, 0.45, rng);
    auto m = ExactMatrix::from_bits(bits, c);
    std::size_t k = rank_exact(m);
    EXPECT_EQ(k, rational_rank(to_rational(bits)));
    EXPECT_EQ(k, rank_exact(m.transpose()));
    auto perm = bits;
    std::shuffle(perm.begin(), perm.end(), rng);
    perm.push_back(bits.front());
    EXPECT_EQ(k, rank_of_bits(perm, c));
  }
}

TEST(RowSpace, IncrementalRankMatchesOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto bits = random_bits(10, 8, 0.4, rng);
    RowSpace space(8);
    for (std::size_t i = 0; i < bits.size(); ++i) {
      space.add(bits[i]);
      std::vector<BitRow> prefix(bits.begin(), bits.begin() + static_cast<std::ptrdiff_t>(i + 1));
      EXPECT_EQ(space.rank(), rational_rank(to_rational(prefix)));
    }
  }
}

TEST(RowSpace, SupportQueriesMatchRankDrop) {
  // A nonzero row-space vector vanishing outside S exists iff
  // rank(P) > rank(P restricted to the complement of S).
  Rng rng(5);
  std::uniform_int_distribution<std::size_t> rows_d(1, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 6;
    auto bits = random_bits(rows_d(rng), n, 0.5, rng);
    RowSpace space(n);
    for (const auto& r : bits) space.add(r);
    const std::size_t full = rational_rank(to_rational(bits));
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      BitRow in(n);
      std::vector<BitRow> outside(bits.size());
      for (std::size_t j = 0; j < n; ++j) {
        in[j] = (mask >> j) & 1u;
        if (!in[j])
          for (std::size_t i = 0; i < bits.size(); ++i) outside[i].push_back(bits[i][j]);
      }
      std::size_t rest = outside[0].empty() ? 0 : rational_rank(to_rational(outside));
      EXPECT_EQ(space.has_vector_supported_in(in), full > rest) << "trial " << trial << " mask " << mask;
    }
    for (std::size_t j = 0; j < n; ++j) {
      BitRow unit(n, 0);
      unit[j] = 1;
      EXPECT_EQ(space.contains_unit_vector(j), space.has_vector_supported_in(unit));
    }
  }
}

TEST(MinNormLsq, Identity) {
  RealMatrix b(3, 2);
  b << 1, 2, 3, 4, 5, 6;
  EXPECT_TRUE(solve_min_norm_lsq(RealMatrix::Identity(3, 3), b).isApprox(b));
}

TEST(MinNormLsq, MeanOfRepeatedObservation) {
  RealMatrix a(2, 1), b(2, 1);
  a << 1, 1;
  b << 2, 4;
  EXPECT_NEAR(solve_min_norm_lsq(a, b)(0, 0), 3.0, 1e-12);
}

TEST(MinNormLsq, UnderdeterminedSplitsEqually) {
  RealMatrix a(1, 2), b(1, 1);
  a << 1, 1;
  b << 2;
  auto x = solve_min_norm_lsq(a, b);
  EXPECT_NEAR(x(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(x(1, 0), 1.0, 1e-12);
}

TEST(MinNormLsq, NormalEquationResidual) {
  Rng rng(9);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    RealMatrix a(12, 5), b(12, 3);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = g(rng);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = g(rng);
    auto x = solve_min_norm_lsq(a, b);
    RealMatrix grad = a.transpose() * (a * x - b);
    EXPECT_LE(grad.norm(), 1e-9 * (a.transpose() * b).norm());
    RealMatrix normal = (a.transpose() * a).inverse() * a.transpose() * b;
    EXPECT_TRUE(x.isApprox(normal, 1e-9));
  }
}

TEST(MinNormLsq, RejectsNonFinite) {
  RealMatrix a = RealMatrix::Identity(2, 2), b(2, 1);
  b << 1, std::nan("");
  EXPECT_THROW(solve_min_norm_lsq(a, b), ParameterError);
  b << 1, 1;
  a(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(solve_min_norm_lsq(a, b), ParameterError);
  EXPECT_THROW(solve_min_norm_lsq(RealMatrix::Identity(2, 2), RealMatrix::Zero(3, 1)), ParameterError);
}

TEST(BinomialTail, Examples) {
  EXPECT_NEAR(binomial_tail(20, 0, 0.3), 1.0, 1e-12);
  EXPECT_NEAR(binomial_tail(2, 2, 0.5), 0.25, 1e-15);
  EXPECT_EQ(binomial_tail(5, 6, 0.3), 0.0);
  EXPECT_THROW(binomial_tail(5, 7, 0.3), ParameterError);
  EXPECT_THROW(binomial_tail(5, 0, 1.5), ParameterError);
}

TEST(BinomialTail, MonteCarloOracle) {
  const double q = 0.468559;
  const double exact = binomial_tail(20, 19, q);
  std::binomial_distribution<int> draw(20, q);
  Rng rng(2024);
  const int samples = 10'000'000;
  int hits = 0;
  for (int i = 0; i < samples; ++i) hits += draw(rng) >= 19;
  const double est = static_cast<double>(hits) / samples;
  const double se = std::sqrt(exact * (1 - exact) / samples);
  EXPECT_LE(std::abs(est - exact), 3 * se) << "exact " << exact << " mc " << est;
}

TEST(BinomialTail, ComplementSumsToOne) {
  for (double q : {0.0, 0.01, 0.3, 0.5, 0.97, 1.0}) {
    for (std::int64_t n : {1, 7, 40}) {
      for (std::int64_t lo = 0; lo <= n + 1; ++lo) {
        double head = 0.0;
        for (std::int64_t i = 0; i < lo; ++i)
          head += static_cast<double>(binomial_u64(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(i))) *
                  std::pow(q, static_cast<double>(i)) * std::pow(1 - q, static_cast<double>(n - i));
        EXPECT_NEAR(binomial_tail(n, lo, q) + head, 1.0, 1e-12) << n << " " << lo << " " << q;
      }
    }
  }
}

TEST(Binomial, Coefficients) {
  EXPECT_EQ(binomial_u64(40, 4), 91390u);
  EXPECT_EQ(binomial_u64(30, 3), 4060u);
  EXPECT_EQ(binomial_u64(20, 2), 190u);
  EXPECT_EQ(binomial_u64(5, 0), 1u);
  EXPECT_EQ(binomial_u64(3, 5), 0u);
}
