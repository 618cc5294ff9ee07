#include "wcpg/replay.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

using namespace wcpg;

namespace {

Transition tagged(double tag) {
  Transition t;
  t.state.fill(tag);
  t.next_state.fill(tag + 1);
  t.action = 0.5;
  t.reward = tag;
  t.alpha = 0.3;
  return t;
}

Observation random_obs(std::mt19937_64& rng) {
  std::normal_distribution<double> n(3.0, 5.0);
  Observation o;
  for (double& v : o) v = n(rng);
  return o;
}

}  // namespace

TEST(Replay, PushAndSize) {
  ReplayBuffer b(5);
  EXPECT_EQ(b.size(), 0u);
  b.push(tagged(1));
  EXPECT_EQ(b.size(), 1u);
  EXPECT_EQ(b.at(0).reward, 1.0);
}

TEST(Replay, FifoEviction) {
  ReplayBuffer b(3);
  for (int i = 0; i < 4; ++i) b.push(tagged(i));
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b.at(0).reward, 1.0);
  EXPECT_EQ(b.at(2).reward, 3.0);
  for (int i = 4; i < 11; ++i) b.push(tagged(i));
  EXPECT_EQ(b.at(0).reward, 8.0);
  EXPECT_EQ(b.at(1).reward, 9.0);
  EXPECT_EQ(b.at(2).reward, 10.0);
  EXPECT_EQ(b.insertion_count(), 11u);
}

TEST(Replay, DefaultCapacityHoldsAMillion) {
  ReplayBuffer b;
  EXPECT_EQ(b.capacity(), 1'000'000u);
  const Transition t = tagged(0);
  for (int i = 0; i < 1'000'001; ++i) b.push(t);
  EXPECT_EQ(b.size(), 1'000'000u);
}

TEST(Replay, RejectsInvalidTransitions) {
  ReplayBuffer b(4);
  Transition t = tagged(1);
  t.reward = std::numeric_limits<double>::infinity();
  EXPECT_THROW(b.push(t), std::invalid_argument);
  t = tagged(1);
  t.next_state[7] = std::nan("");
  EXPECT_THROW(b.push(t), std::invalid_argument);
  t = tagged(1);
  t.alpha = 0.0;
  EXPECT_THROW(b.push(t), std::invalid_argument);
  EXPECT_EQ(b.size(), 0u);
  EXPECT_THROW(ReplayBuffer(0), std::invalid_argument);
}

TEST(Replay, SampleSingleAndUndersized) {
  ReplayBuffer b(4);
  std::mt19937_64 rng(1);
  EXPECT_THROW(b.sample(1, rng), std::invalid_argument);
  b.push(tagged(7));
  const auto s = b.sample(1, rng);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].reward, 7.0);
  EXPECT_THROW(b.sample(2, rng), std::invalid_argument);
}

TEST(Replay, SampleDeterministicPerSeed) {
  ReplayBuffer b(100);
  for (int i = 0; i < 100; ++i) b.push(tagged(i));
  std::mt19937_64 r1(42), r2(42);
  const auto a = b.sample(64, r1), c = b.sample(64, r2);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].reward, c[i].reward);
}

TEST(Replay, SamplingIsUniform) {
  ReplayBuffer b(10);
  for (int i = 0; i < 10; ++i) b.push(tagged(i));
  std::mt19937_64 rng(3);
  std::vector<int> counts(10, 0);
  for (int k = 0; k < 100'000; ++k)
    for (const auto& t : b.sample(10, rng)) ++counts[static_cast<std::size_t>(t.reward)];
  for (int c : counts) EXPECT_NEAR(c / 1e6, 0.1, 0.001);
}

TEST(Normalizer, IdentityBeforeUpdate) {
  RunningNormalizer n;
  std::mt19937_64 rng(1);
  const Observation x = random_obs(rng);
  EXPECT_EQ(n.normalize(x), x);
}

TEST(Normalizer, ConstantStreamNormalizesToZero) {
  RunningNormalizer n;
  Observation c;
  c.fill(2.5);
  for (int i = 0; i < 50; ++i) n.update(c);
  for (double v : n.normalize(c)) EXPECT_EQ(v, 0.0);
}

TEST(Normalizer, MatchesTwoPassStatistics) {
  std::mt19937_64 rng(9);
  std::vector<Observation> xs(10'000);
  for (auto& x : xs) x = random_obs(rng);
  RunningNormalizer n;
  for (const auto& x : xs) n.update(x);
  for (std::size_t d = 0; d < kObsDim; ++d) {
    double mean = 0;
    for (const auto& x : xs) mean += x[d];
    mean /= static_cast<double>(xs.size());
    double var = 0;
    for (const auto& x : xs) var += (x[d] - mean) * (x[d] - mean);
    var /= static_cast<double>(xs.size());
    EXPECT_NEAR(n.mean()[d], mean, 1e-10);
    EXPECT_NEAR(n.variance(d), var, 1e-10 * var);
  }
  const Observation z = n.normalize(xs[0]);
  EXPECT_NEAR(z[0], (xs[0][0] - n.mean()[0]) / std::sqrt(n.variance(0) + 1e-8), 1e-12);
}

TEST(Normalizer, OrderIndependentAndMergeable) {
  std::mt19937_64 rng(4);
  std::vector<Observation> xs(5000);
  for (auto& x : xs) x = random_obs(rng);
  RunningNormalizer a, b, left, right;
  for (const auto& x : xs) a.update(x);
  std::shuffle(xs.begin(), xs.end(), rng);
  for (const auto& x : xs) b.update(x);
  for (std::size_t i = 0; i < xs.size(); ++i) (i < 1234 ? left : right).update(xs[i]);
  left.merge(right);
  for (std::size_t d = 0; d < kObsDim; ++d) {
    EXPECT_NEAR(a.mean()[d], b.mean()[d], 1e-9);
    EXPECT_NEAR(a.variance(d), b.variance(d), 1e-9);
    EXPECT_NEAR(a.mean()[d], left.mean()[d], 1e-9);
    EXPECT_NEAR(a.variance(d), left.variance(d), 1e-9);
  }
}

TEST(Normalizer, RejectsNonFinite) {
  RunningNormalizer n;
  Observation x{};
  x[3] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(n.update(x), std::invalid_argument);
  EXPECT_EQ(n.count(), 0u);
}
