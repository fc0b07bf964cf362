#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "support.hpp"

using namespace semfield;
using namespace testing_support;

TEST(NormalizeRows, ThreeFourFive) {
  EmbeddingTable t;
  t.dim = 2;
  t.append({RowKind::mask, "0"}, std::vector<float>{3, 4});
  auto n = normalize_rows(t);
  EXPECT_FLOAT_EQ(n.row(0)[0], 0.6f);
  EXPECT_FLOAT_EQ(n.row(0)[1], 0.8f);
}

TEST(NormalizeRows, UnitRowsAreUnchanged) {
  EmbeddingTable t;
  t.dim = 3;
  t.append({RowKind::mask, "0"}, std::vector<float>{0, 1, 0});
  t.append({RowKind::mask, "1"}, std::vector<float>{0.6f, 0, 0.8f});
  auto n = normalize_rows(t);
  for (std::size_t i = 0; i < t.rows.size(); ++i) EXPECT_NEAR(n.rows[i], t.rows[i], 1e-7);
}

TEST(NormalizeRows, ZeroRowIsNamed) {
  EmbeddingTable t;
  t.dim = 2;
  t.append({RowKind::mask, "0"}, std::vector<float>{1, 0});
  t.append({RowKind::mask, "41"}, std::vector<float>{0, 0});
  try {
    normalize_rows(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("41"), std::string::npos);
  }
}

TEST(NormalizeRowsProperty, ThousandRandomRowsAreUnit) {
  std::mt19937_64 rng(5);
  std::normal_distribution<float> n(0.0f, 3.0f);
  EmbeddingTable t;
  t.dim = 512;
  std::vector<float> row(512);
  for (int i = 0; i < 1000; ++i) {
    for (auto& x : row) x = n(rng);
    t.append({RowKind::mask, std::to_string(i)}, row);
  }
  auto out = normalize_rows(t);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (float x : out.row(i)) s += double(x) * x;
    ASSERT_NEAR(std::sqrt(s), 1.0, 1e-6) << i;
    // direction preserved
    double c = 0.0, nt = 0.0;
    for (std::size_t k = 0; k < 512; ++k) {
      c += double(out.row(i)[k]) * t.row(i)[k];
      nt += double(t.row(i)[k]) * t.row(i)[k];
    }
    ASSERT_NEAR(c / std::sqrt(nt), 1.0, 1e-6);
  }
}

TEST(Slerp, SymmetricMidpoint) {
  std::vector<double> a{1, 0}, b{0, 1};
  auto r = slerp_aggregate<double>(a, 5, b, 5);
  EXPECT_NEAR(r[0], std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(r[1], std::sqrt(0.5), 1e-12);
}

TEST(Slerp, QuarterShare) {
  std::vector<double> a{1, 0}, b{0, 1};
  AggregationParams p;
  auto r = slerp_aggregate<double>(a, 300, b, 100, &p);
  EXPECT_DOUBLE_EQ(p.t, 0.25);
  EXPECT_NEAR(r[0], 0.9238795325112867, 1e-12);
  EXPECT_NEAR(r[1], 0.3826834323650898, 1e-12);
}

TEST(Slerp, EndpointsAreBitExact) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    auto a = random_unit_f(rng, 16), b = random_unit_f(rng, 16);
    auto ra = slerp_aggregate<float>(a, 7, b, 0);
    auto rb = slerp_aggregate<float>(a, 0, b, 7);
    ASSERT_EQ(0, std::memcmp(ra.data(), a.data(), a.size() * sizeof(float)));
    ASSERT_EQ(0, std::memcmp(rb.data(), b.data(), b.size() * sizeof(float)));
  }
}

TEST(Slerp, Errors) {
  std::vector<double> a{1, 0}, b{0, 1}, c{1, 0, 0};
  EXPECT_THROW(slerp_aggregate<double>(a, 0, b, 0), Error);
  EXPECT_THROW(slerp_aggregate<double>(a, 1, c, 1), Error);
  std::vector<double> nan{std::nan(""), 0};
  EXPECT_THROW(slerp_aggregate<double>(nan, 1, b, 1), Error);
  std::vector<double> inf{0, INFINITY};
  EXPECT_THROW(slerp_aggregate<double>(a, 1, inf, 1), Error);
}

TEST(Slerp, ParallelInputsFallBackToLinear) {
  std::vector<double> a{1, 0, 0};
  std::vector<double> b{1, 1e-9, 0};
  AggregationParams p;
  auto r = slerp_aggregate<double>(a, 1, b, 3, &p);
  EXPECT_EQ(p.degenerate, Degeneracy::parallel);
  EXPECT_DOUBLE_EQ(p.a, 0.25);
  EXPECT_DOUBLE_EQ(p.b, 0.75);
  EXPECT_NEAR(r[0], 1.0, 1e-12);
  auto same = slerp_aggregate<double>(a, 1, a, 1, &p);
  EXPECT_EQ(p.degenerate, Degeneracy::parallel);
  EXPECT_EQ(same, a);
}

TEST(Slerp, AntipodalKeepsB) {
  std::vector<double> a{1, 0}, b{-1, 0};
  AggregationParams p;
  auto r = slerp_aggregate<double>(a, 1, b, 1, &p);
  EXPECT_EQ(p.degenerate, Degeneracy::antipodal);
  EXPECT_EQ(r, b);
}

TEST(Slerp, WeightsMatchDefinition) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> th(1e-3, std::numbers::pi - 1e-3), tt(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    double theta = th(rng), t = tt(rng);
    auto p = aggregation_weights(theta, t);
    ASSERT_EQ(p.degenerate, Degeneracy::none);
    ASSERT_NEAR(p.a, std::sin((1 - t) * theta) / std::sin(theta), 1e-7);
    ASSERT_NEAR(p.b, std::sin(t * theta) / std::sin(theta), 1e-7);
    ASSERT_GT(p.a, 0.0);
    ASSERT_GT(p.b, 0.0);
  }
}

TEST(Slerp, AreaShareIsTheExactRatio) {
  EXPECT_EQ(area_share(3, 1), 0.25);
  EXPECT_EQ(area_share(1, 2), 2.0 / 3.0);
  EXPECT_EQ(area_share(0, 9), 1.0);
  EXPECT_EQ(area_share(9, 0), 0.0);
}

TEST(SlerpProperty, MatchesHighPrecisionReference) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::uint64_t> area(1, 100000);
  for (int i = 0; i < 2000; ++i) {
    auto a = random_unit(rng, 8), b = random_unit(rng, 8);
    auto aa = area(rng), ab = area(rng);
    auto r = slerp_aggregate<double>(a, aa, b, ab);
    std::vector<long double> la(a.begin(), a.end()), lb(b.begin(), b.end());
    auto ref = reference_slerp(la, aa, lb, ab);
    for (std::size_t k = 0; k < 8; ++k) ASSERT_NEAR(r[k], static_cast<double>(ref[k]), 1e-9);
  }
}

TEST(SlerpProperty, AngleIsStableNearZeroAndPi) {
  std::mt19937_64 rng(13);
  for (double theta : {1e-5, 1e-3, 0.5, 3.0, std::numbers::pi - 1e-4}) {
    auto u = random_unit(rng, 16);
    auto v = at_angle(rng, u, theta);
    EXPECT_NEAR(angle_between<double>(u, v), theta, 1e-9 * std::max(1.0, theta));
  }
}

TEST(SlerpProperty, WeightSumIdentity) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> th(1e-4, std::numbers::pi - 1e-4), tt(0.0, 1.0);
  for (int i = 0; i < 5000; ++i) {
    const double theta = th(rng), t = tt(rng);
    const auto p = aggregation_weights(theta, t);
    const double expect = std::cos((1 - 2 * t) * theta / 2) / std::cos(theta / 2);
    ASSERT_NEAR(p.a + p.b, expect, 1e-7 * std::max(1.0, expect));
    ASSERT_GE(p.a + p.b, 1.0 - 1e-12);
  }
}

TEST(Materialize, DenseEmbeddingsFollowLabels) {
  std::mt19937_64 rng(15);
  auto b = random_bundle(rng, {1, 5, 5, 3, 3, false, true, false});
  b.label_maps[0](0, 0) = kUnlabeled;
  b.mask_embeddings = normalize_rows(b.mask_embeddings);
  auto dense = materialize_pixel_embeddings(b, 0);
  const auto rows = rows_by_mask(b.mask_embeddings);
  for (std::size_t p = 0; p < 25; ++p) {
    auto id = b.label_maps[0].data[p];
    for (std::size_t k = 0; k < 3; ++k) {
      float expect = id == kUnlabeled ? 0.0f : b.mask_embeddings.row(rows.at(id))[k];
      ASSERT_EQ(dense[p * 3 + k], expect);
    }
  }
}
