#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dnsfr/stats.hpp"

using namespace dnsfr;

TEST(Hashing, KnownValues) {
  // FNV-1a reference vectors.
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ULL);
  // SplitMix64 output for state 0 after one increment.
  EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafULL);
}

TEST(Hashing, DerivedSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 1000; ++s) seen.insert(derive_seed(7, s));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_NE(derive_seed(7, 0), derive_seed(8, 0));
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}

TEST(Percentile, TypeSevenInterpolation) {
  const std::vector<double> v{4.0, 1.0, 3.0, 2.0};
  EXPECT_DOUBLE_EQ(percentile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(percentile(v, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(percentile(v, 0.5), 2.5);
  // h = (n - 1) p = 0.15 -> 1 + 0.15.
  EXPECT_DOUBLE_EQ(percentile(v, 0.05), 1.15);
  EXPECT_DOUBLE_EQ(percentile({5.0}, 0.3), 5.0);
  EXPECT_THROW(percentile({}, 0.5), std::invalid_argument);
  EXPECT_THROW(percentile(v, 1.5), std::invalid_argument);
}

TEST(GaussianSampler, RootReproducesCovariance) {
  Eigen::Matrix3d C;
  C << 4, 1, 0, 1, 2, 0.5, 0, 0.5, 1;
  const GaussianSampler s(Eigen::Vector3d::Zero(), C);
  EXPECT_LT((s.root() * s.root().transpose() - C).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GaussianSampler, AcceptsSingularRejectsIndefinite) {
  const GaussianSampler zero(Eigen::Vector2d(1.0, 2.0), Eigen::Matrix2d::Zero());
  Rng rng(1);
  EXPECT_EQ(zero.draw(rng), Eigen::Vector2d(1.0, 2.0));
  Eigen::Matrix2d bad;
  bad << 1, 0, 0, -1;
  EXPECT_THROW(GaussianSampler(Eigen::Vector2d::Zero(), bad), std::domain_error);
}

TEST(GaussianSampler, SampleMomentsAndDeterminism) {
  Eigen::Matrix2d C;
  C << 2.0, -0.6, -0.6, 1.0;
  const Eigen::Vector2d m(0.5, -1.0);
  const GaussianSampler s(m, C);
  Rng rng(99);
  const int n = 200000;
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  Eigen::Matrix2d sq = Eigen::Matrix2d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d x = s.draw(rng);
    sum += x;
    sq += (x - m) * (x - m).transpose();
  }
  EXPECT_LT((sum / n - m).cwiseAbs().maxCoeff(), 0.01);
  EXPECT_LT((sq / n - C).cwiseAbs().maxCoeff(), 0.02);

  Rng a(5);
  Rng b(5);
  EXPECT_EQ(s.draw(a), s.draw(b));
}
