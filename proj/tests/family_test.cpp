#include <gtest/gtest.h>

#include <set>

#include "mrsa/family.hpp"
#include "mrsa/metrics.hpp"

using namespace mrsa;

TEST(FamilySize, TableValues) {
  EXPECT_EQ(family_size(120, 12, 6), 190u);
  EXPECT_EQ(family_size(120, 12, 4), 4060u);
  EXPECT_EQ(family_size(120, 12, 12), 10u);
  EXPECT_EQ(family_size(8, 4, 2), 6u);
  // C(40, 4)
  EXPECT_EQ(family_size(120, 12, 3), 91390u);
}

TEST(FamilySize, ParameterErrors) {
  EXPECT_THROW(family_size(120, 12, 5), ParameterError);
  EXPECT_THROW(family_size(120, 10, 4), ParameterError);
  EXPECT_THROW(family_size(8, 10, 2), ParameterError);
  EXPECT_THROW(family_size(8, 4, 0), ParameterError);
  EXPECT_THROW(generate_bp_family(9, 4, 2), ParameterError);
}

TEST(GenerateFamily, ExampleOne) {
  auto f = generate_bp_family(8, 4, 2);
  ASSERT_TRUE(f.materialized());
  ASSERT_EQ(f.matrix().size(), 6u);
  const auto& b = f.partition().batches;
  EXPECT_EQ(b, (std::vector<std::vector<std::size_t>>{{0, 1}, {2, 3}, {4, 5}, {6, 7}}));
  EXPECT_EQ(f.matrix()[0], (BitRow{1, 1, 1, 1, 0, 0, 0, 0}));
  EXPECT_EQ(f.row_bits(f.row_index({1, 0})), (BitRow{1, 1, 1, 1, 0, 0, 0, 0}));
  EXPECT_EQ(f.matrix()[5], (BitRow{0, 0, 0, 0, 1, 1, 1, 1}));
}

TEST(GenerateFamily, PartitionAndFullSet) {
  EXPECT_EQ(generate_bp_family(120, 12, 12).row_count(), 10u);
  auto full = generate_bp_family(6, 6, 2);
  ASSERT_EQ(full.row_count(), 1u);
  EXPECT_EQ(full.matrix()[0], BitRow(6, 1));
}

TEST(GenerateFamily, RowsHaveWeightKAndBatchColumnsAreIdentical) {
  for (auto [n, k, t] : std::vector<std::tuple<int, int, int>>{{8, 4, 2}, {12, 6, 3}, {24, 8, 4}, {10, 4, 1}, {12, 4, 4}}) {
    auto f = generate_bp_family(n, k, t);
    ASSERT_EQ(f.matrix().size(), family_size(n, k, t));
    std::set<BitRow> distinct(f.matrix().begin(), f.matrix().end());
    EXPECT_EQ(distinct.size(), f.row_count());
    for (const auto& r : f.matrix()) EXPECT_EQ(popcount(r), static_cast<std::size_t>(k));
    for (std::size_t u = 0; u < static_cast<std::size_t>(n); ++u)
      for (const auto& r : f.matrix()) EXPECT_EQ(r[u], r[(u / t) * t]);
    EXPECT_TRUE(std::is_sorted(f.matrix().begin(), f.matrix().end(), std::greater<>()));
  }
}

TEST(GenerateFamily, ExtremeCases) {
  // T = 1 is the full C(N, K) random-selection family; T = K the partition family.
  auto all = generate_bp_family(7, 3, 1);
  EXPECT_EQ(all.row_count(), 35u);
  auto part = generate_bp_family(12, 4, 4);
  ParticipationMatrix m(12);
  for (const auto& r : part.matrix()) m.append(r);
  EXPECT_EQ(m.column_sums(), std::vector<std::int64_t>(12, 1));
}

TEST(GenerateFamily, ImplicitFamilyMatchesMaterialized) {
  auto dense = generate_bp_family(24, 8, 2);
  auto implicit = generate_bp_family(24, 8, 2, 10);
  ASSERT_FALSE(implicit.materialized());
  EXPECT_THROW(implicit.matrix(), ParameterError);
  ASSERT_EQ(implicit.row_count(), dense.row_count());
  for (std::uint64_t r = 0; r < dense.row_count(); ++r) EXPECT_EQ(implicit.row_bits(r), dense.matrix()[r]);
}

TEST(GenerateFamily, LargeFamilyIsImplicitAndDecodes) {
  auto f = generate_bp_family(120, 12, 3, 1000);
  EXPECT_FALSE(f.materialized());
  EXPECT_EQ(f.row_count(), 91390u);
  EXPECT_EQ(f.batch_indices(0), (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(f.batch_indices(91389), (std::vector<std::size_t>{36, 37, 38, 39}));
  for (std::uint64_t r : {0ull, 17ull, 50000ull, 91389ull}) EXPECT_EQ(f.row_index(f.batch_indices(r)), r);
}

TEST(Combinatorics, RankUnrankRoundTrip) {
  std::vector<std::size_t> s{0, 1, 2};
  std::uint64_t idx = 0;
  do {
    EXPECT_EQ(combinatorics::rank(s, 9), idx);
    EXPECT_EQ(combinatorics::unrank(idx, 9, 3), s);
    ++idx;
  } while (combinatorics::next_subset(s, 9));
  EXPECT_EQ(idx, binomial_u64(9, 3));
}

TEST(VerifyOptimality, Examples) {
  auto f = generate_bp_family(8, 4, 2);
  EXPECT_TRUE(verify_family_optimality(f));
  EXPECT_FALSE(verify_family_optimality(f.without_row(3)));
  EXPECT_TRUE(verify_family_optimality(generate_bp_family(120, 12, 12)));
}

TEST(FamilyExport, CsvAndSidecar) {
  auto f = generate_bp_family(4, 2, 2);
  EXPECT_EQ(family_to_csv(f), "round,u0,u1,u2,u3\n0,1,1,0,0\n1,0,0,1,1\n");
  auto j = family_sidecar(f);
  EXPECT_EQ(j["n_users"], 4);
  EXPECT_EQ(j["privacy_target"], 2);
  EXPECT_EQ(j["rows"], 2);
  EXPECT_EQ(j["batches"][1], nlohmann::ordered_json::array({2, 3}));
}
