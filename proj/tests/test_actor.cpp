#include "wcpg/actor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace wcpg;

namespace {

void jitter(nn::Mlp& net, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  for (auto& layer : net.params()) {
    std::normal_distribution<double> n(0.0, scale / std::sqrt(static_cast<double>(layer.weight.cols())));
    for (nn::Index k = 0; k < layer.weight.size(); ++k) layer.weight.data()[k] += n(rng);
    for (nn::Index k = 0; k < layer.bias.size(); ++k) layer.bias[k] += 0.1 * n(rng);
  }
}

StateBatch random_batch(nn::Index b, std::uint64_t seed, double alpha = -1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  StateBatch s{Matrix(static_cast<nn::Index>(kObsDim), b), Matrix(1, b)};
  for (nn::Index j = 0; j < b; ++j) {
    for (nn::Index i = 0; i < s.states.rows(); ++i) s.states(i, j) = n(rng);
    s.alphas(0, j) = alpha > 0 ? alpha : u(rng);
  }
  return s;
}

CriticNet live_critic(std::uint64_t seed) {
  CriticNet c = CriticNet::init(seed);
  jitter(c.net(), seed + 100);
  return c;
}

}  // namespace

TEST(Act, ZeroWeightsGiveZero) {
  const ActorNet a;
  EXPECT_EQ(a.act(Observation{}, RiskLevel(0.5)), 0.0);
}

TEST(Act, BoundedAndDeterministic) {
  ActorNet a = ActorNet::init(3);
  jitter(a.net(), 4, 5.0);
  const StateBatch b = random_batch(10'000, 5);
  const Matrix x = a.actions(b.states * 10.0, b.alphas), y = a.actions(b.states * 10.0, b.alphas);
  EXPECT_EQ(x, y);
  EXPECT_LE(x.cwiseAbs().maxCoeff(), kMaxAccel);
}

TEST(Act, RejectsNaN) {
  const ActorNet a = ActorNet::init(1);
  Observation o{};
  o[0] = std::nan("");
  EXPECT_THROW(a.act(o, RiskLevel(0.5)), std::domain_error);
}

TEST(Act, AlphaConditioningPathIsLive) {
  ActorNet a = ActorNet::init(6);
  jitter(a.net(), 7);
  const StateBatch b = random_batch(32, 8);
  const nn::Gradients g = a.net().backward(a.forward(b.states, b.alphas), Matrix::Ones(1, 32));
  EXPECT_GT(g.inputs[1].cwiseAbs().maxCoeff(), 0.0);
}

TEST(Explore, Examples) {
  std::mt19937_64 rng(1);
  EXPECT_EQ(explore(1.25, 0.0, rng), 1.25);
  for (int i = 0; i < 1000; ++i) {
    const double x = explore(4.0, 2.0, rng);
    EXPECT_LE(x, 4.0);
    EXPECT_GE(x, -4.0);
  }
  EXPECT_THROW(explore(0.0, -1.0, rng), std::invalid_argument);
}

TEST(Explore, NoiseStdOfUnclippedDraws) {
  // Draws strictly inside the bounds follow N(0, 4) truncated to [-4, 4].
  std::mt19937_64 rng(2);
  double sum = 0, sq = 0;
  int n = 0;
  for (int i = 0; i < 100'000; ++i) {
    const double x = explore(0.0, 2.0, rng);
    if (std::abs(x) >= kMaxAccel) continue;
    sum += x;
    sq += x * x;
    ++n;
  }
  const double trunc_var = 4.0 * (1.0 - 4.0 * std_normal_pdf(2.0) / (2.0 * std_normal_cdf(2.0) - 1.0));
  EXPECT_NEAR(sum / n, 0.0, 0.02);
  EXPECT_NEAR(std::sqrt(sq / n), std::sqrt(trunc_var), 0.02);
  EXPECT_NEAR(1.0 - n / 1e5, 2.0 * (1.0 - std_normal_cdf(2.0)), 0.003);
}

TEST(ActorUpdate, CriticWithoutActionInputGivesZeroGradient) {
  CriticNet c = live_critic(2);
  c.net().params()[2].weight.col(128).setZero();  // h3 reads (h1, h2, action)
  ActorNet a = ActorNet::init(3);
  jitter(a.net(), 4);
  const ActorGradient g = actor_update(a, c, random_batch(16, 5));
  EXPECT_EQ(nn::flatten(g.grads).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ActorUpdate, SpreadWeightLargerAtSmallAlpha) {
  EXPECT_NEAR(cvar_coefficient(0.02, CvarRule::paper), 0.7852, 5e-5);
  EXPECT_NEAR(cvar_coefficient(1.0, CvarRule::paper), 0.2876, 5e-5);
  const GaussianReturn z{0.0, 2.0};
  const double lo = cvar_partials(z, RiskLevel(0.02)).d_variance, hi = cvar_partials(z, RiskLevel(1.0)).d_variance;
  EXPECT_NEAR(lo / hi, cvar_coefficient(0.02, CvarRule::paper) / cvar_coefficient(1.0, CvarRule::paper), 1e-12);
  EXPECT_GT(lo / hi, 2.7);
}

TEST(ActorUpdate, DecomposesIntoMeanAndSpreadTerms) {
  const CriticNet c = live_critic(11);
  ActorNet a = ActorNet::init(12);
  jitter(a.net(), 13);
  const StateBatch b = random_batch(32, 14);
  for (CvarRule rule : {CvarRule::paper, CvarRule::standard}) {
    const nn::Vector both = nn::flatten(actor_update(a, c, b, rule, CvarPath::both).grads);
    const nn::Vector mean = nn::flatten(actor_update(a, c, b, rule, CvarPath::mean_only).grads);
    const nn::Vector spread = nn::flatten(actor_update(a, c, b, rule, CvarPath::spread_only).grads);
    EXPECT_LE((both - mean - spread).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, both.cwiseAbs().maxCoeff()));
  }
}

TEST(ActorUpdate, MatchesFiniteDifferencesOfObjective) {
  const CriticNet c = live_critic(21);
  ActorNet a = ActorNet::init(22);
  jitter(a.net(), 23);
  const StateBatch b = random_batch(4, 24);
  const nn::NetworkLoss fn = [&](const nn::Mlp& m, std::span<const Matrix> in, bool want) {
    const ActorGradient g = actor_update(ActorNet(m), c, StateBatch{in[0], in[1]}, CvarRule::paper,
                                         CvarPath::both, want);
    nn::LossWithGrad r;
    r.eval = {g.objective, g.pattern};
    if (want) {
      r.grads.params = g.grads;
      r.grads.inputs = g.input_grads.inputs;
    }
    return r;
  };
  EXPECT_LE(nn::finite_difference_check(a.net(), {b.states, b.alphas}, fn).max_rel_error, 1e-4);
}

TEST(ActorUpdate, SmallAscentStepDoesNotDecreaseObjective) {
  int failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const CriticNet c = live_critic(1000 + trial);
    ActorNet a = ActorNet::init(2000 + trial);
    jitter(a.net(), 3000 + trial);
    const StateBatch b = random_batch(16, 4000 + trial);
    const ActorGradient g = actor_update(a, c, b);
    const double norm = nn::flatten(g.grads).norm();
    if (norm == 0) continue;
    ActorNet moved = a;
    nn::add_scaled(moved.net().params(), g.grads, 1e-4 / norm);
    if (actor_update(moved, c, b, CvarRule::paper, CvarPath::both, false).objective < g.objective) ++failures;
  }
  EXPECT_LE(failures, 2);
}

TEST(SoftUpdate, ActorTracksLive) {
  ActorNet live = ActorNet::init(1), target = ActorNet::init(2);
  soft_update(target, live, 1.0);
  EXPECT_EQ(nn::flatten(target.net().params()), nn::flatten(live.net().params()));
}
