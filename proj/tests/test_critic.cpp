#include "wcpg/critic.hpp"
#include "wcpg/lane_mdp.hpp"
#include "wcpg/tabular.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace wcpg;

namespace {

Matrix random_states(nn::Index b, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(static_cast<nn::Index>(kObsDim), b);
  for (nn::Index j = 0; j < b; ++j)
    for (nn::Index i = 0; i < m.rows(); ++i) m(i, j) = n(rng);
  return m;
}

Matrix uniform_row(nn::Index b, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(1, b);
  for (nn::Index j = 0; j < b; ++j) m(0, j) = u(rng);
  return m;
}

/// Random parameters large enough that every layer carries signal.
CriticNet perturbed_critic(std::uint64_t seed) {
  CriticNet c = CriticNet::init(seed);
  std::mt19937_64 rng(seed + 1);
  for (auto& layer : c.net().params()) {
    std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(layer.weight.cols())));
    for (nn::Index k = 0; k < layer.weight.size(); ++k) layer.weight.data()[k] += n(rng);
    for (nn::Index k = 0; k < layer.bias.size(); ++k) layer.bias[k] += 0.1 * n(rng);
  }
  return c;
}

/// Five states, two actions, stochastic rewards and branching transitions.
TabularMdp random_mdp(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TabularMdp m;
  for (int s = 0; s < 5; ++s) {
    std::vector<TabularAction> acts;
    for (int a = 0; a < 2; ++a) {
      TabularAction act;
      act.reward_mean = 4 * u(rng) - 2;
      act.reward_variance = u(rng);
      const double stop = 0.2 + 0.2 * u(rng);
      const int n1 = static_cast<int>(5 * u(rng)), n2 = static_cast<int>(5 * u(rng));
      const double split = u(rng);
      act.outcomes = {{stop, -1}, {(1 - stop) * split, n1}, {(1 - stop) * (1 - split), n2}};
      acts.push_back(act);
    }
    m.actions.push_back(acts);
  }
  return m;
}

}  // namespace

TEST(Predict, FreshNetAtZeroInput) {
  const CriticNet c = CriticNet::init(3);
  const GaussianReturn z = c.predict(Observation{}, 0.0, RiskLevel(1.0));
  EXPECT_NEAR(z.mean, 0.0, 1e-3);
  EXPECT_NEAR(z.variance, std::log(2.0) + kVarianceFloor, 1e-3);
}

TEST(Predict, DeterministicAndPositiveVariance) {
  const CriticNet c = perturbed_critic(4);
  std::mt19937_64 rng(5);
  const Matrix s = random_states(10'000, rng), a = uniform_row(10'000, -4, 4, rng),
               al = uniform_row(10'000, 0.01, 1, rng);
  const CriticEval e1 = c.evaluate(s, a, al), e2 = c.evaluate(s, a, al);
  EXPECT_EQ(e1.mean, e2.mean);
  EXPECT_EQ(e1.variance, e2.variance);
  EXPECT_GT(e1.variance.minCoeff(), 0.0);
}

TEST(Predict, RejectsNaN) {
  const CriticNet c = CriticNet::init(1);
  Observation o{};
  o[2] = std::nan("");
  EXPECT_THROW(c.predict(o, 0.0, RiskLevel(0.5)), std::domain_error);
}

TEST(Target, TerminalCollision) {
  const TdTarget t = make_target(-50.0, true, 0.99, {100.0, 30.0}, -50.0);
  EXPECT_EQ(t.target.mean, -50.0);
  EXPECT_EQ(t.target.variance, kVarianceFloor);
}

TEST(Target, MyopicDiscount) {
  const TdTarget t = make_target(2.5, false, 0.0, {10.0, 9.0}, 2.5);
  EXPECT_EQ(t.target.mean, 2.5);
  EXPECT_EQ(t.target.variance, kVarianceFloor);
}

TEST(Target, BootstrapsMeanAndScaledVariance) {
  const TdTarget t = make_target(1.0, false, 0.5, {4.0, 8.0}, 3.0);
  EXPECT_EQ(t.target.mean, 3.0);
  EXPECT_EQ(t.target.variance, 2.0);
  EXPECT_EQ(t.regression_std, std::sqrt(2.0));
  const TdTarget off = make_target(1.0, false, 0.5, {4.0, 8.0}, 1.0);
  EXPECT_EQ(off.target.variance, 4.0 + 2.0);
}

TEST(Target, TwoStepChainIteratesToReturn) {
  const double r1 = 1.5, r2 = -0.5, g = 0.9;
  GaussianReturn z2{0.0, 1.0}, z1{0.0, 1.0};
  for (int it = 0; it < 5; ++it) {
    z2 = make_target(r2, true, g, {}, z2.mean).target;
    z1 = make_target(r1, false, g, z2, z1.mean).target;
  }
  EXPECT_DOUBLE_EQ(z1.mean, r1 + g * r2);
  EXPECT_NEAR(z1.variance, kVarianceFloor, 1e-15);
}

TEST(Target, LinearizedStdFixedPoint) {
  TdTarget t = make_target(0.0, true, 1.0, {}, 0.0);
  t.target.variance = 9.0;
  linearize_std(t, 3.0);
  EXPECT_EQ(t.regression_std, 3.0);
  linearize_std(t, 1.0);
  EXPECT_EQ(t.regression_std, 5.0);
}

TEST(Loss, ZeroWhenPredictionEqualsTarget) {
  const CriticNet c = perturbed_critic(2);
  std::mt19937_64 rng(3);
  const Matrix s = random_states(6, rng), a = uniform_row(6, -4, 4, rng), al = uniform_row(6, 0.01, 1, rng);
  const CriticEval e = c.evaluate(s, a, al);
  std::vector<TdTarget> ts;
  for (nn::Index i = 0; i < 6; ++i) ts.push_back({e.at(i), std::sqrt(e.variance(i))});
  const CriticLoss l = critic_loss_and_grads(c, s, a, al, ts);
  EXPECT_NEAR(l.loss, 0.0, 1e-24);
  EXPECT_LT(nn::flatten(l.grads.params).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Loss, SingleItemMeanShift) {
  CriticNet c = CriticNet::init(1);
  for (auto& layer : c.net().params()) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  c.net().params().back().bias(1) = std::log(std::exp(1.0 - kVarianceFloor) - 1.0);  // variance 1
  const Matrix s = Matrix::Zero(static_cast<nn::Index>(kObsDim), 1), a = Matrix::Zero(1, 1),
               al = Matrix::Constant(1, 1, 0.5);
  const std::vector<TdTarget> ts{{{3.0, 1.0}, 1.0}};
  EXPECT_NEAR(critic_loss_and_grads(c, s, a, al, ts).loss, 9.0, 1e-12);
  EXPECT_THROW(critic_loss_and_grads(c, Matrix(static_cast<nn::Index>(kObsDim), 0), Matrix(1, 0), Matrix(1, 0), {}),
               std::invalid_argument);
}

TEST(Loss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  const Matrix s = random_states(5, rng), a = uniform_row(5, -4, 4, rng), al = uniform_row(5, 0.01, 1, rng);
  std::vector<TdTarget> ts;
  std::normal_distribution<double> n(0.0, 2.0);
  for (int i = 0; i < 5; ++i) {
    const double v = 0.5 + std::abs(n(rng));
    ts.push_back({{n(rng), v}, std::sqrt(v)});
  }
  const nn::NetworkLoss fn = [&](const nn::Mlp& m, std::span<const Matrix> in, bool want) {
    const CriticNet c(m);
    const CriticLoss l = critic_loss_and_grads(c, in[0], in[1], in[2], ts, want);
    nn::LossWithGrad r;
    r.eval = {l.loss, l.eval.tape.activation_pattern()};
    r.grads = l.grads;
    return r;
  };
  const nn::FdReport rep = nn::finite_difference_check(perturbed_critic(9).net(), {s, a, al}, fn);
  EXPECT_LE(rep.max_rel_error, 1e-4);
}

TEST(SoftUpdate, Examples) {
  const CriticNet live = perturbed_critic(1);
  CriticNet target = CriticNet::init(2);
  CriticNet full = target;
  soft_update(full, live, 1.0);
  EXPECT_EQ(nn::flatten(full.net().params()), nn::flatten(live.net().params()));
  CriticNet same = live;
  soft_update(same, live, 0.001);
  EXPECT_TRUE(nn::flatten(same.net().params()).isApprox(nn::flatten(live.net().params()), 1e-15));
  const nn::Vector before = nn::flatten(target.net().params());
  soft_update(target, live, 0.001);
  const nn::Vector diff = nn::flatten(live.net().params()) - before;
  EXPECT_LE((nn::flatten(target.net().params()) - before).cwiseAbs().maxCoeff(),
            0.001 * diff.cwiseAbs().maxCoeff() * (1 + 1e-12));
}

TEST(SoftUpdate, ScalarHalfway) {
  nn::ParamSet t{{Matrix::Zero(1, 1), nn::Vector::Zero(1)}}, l{{Matrix::Ones(1, 1), nn::Vector::Ones(1)}};
  nn::soft_update(t, l, 0.5);
  EXPECT_EQ(t[0].weight(0, 0), 0.5);
  EXPECT_EQ(t[0].bias(0), 0.5);
}

TEST(Tabular, SingleStochasticStep) {
  TabularMdp m{{{{1.25, 0.64, {{1.0, -1}}}}}};
  const ReturnTable r = policy_evaluate_tabular(m, {{1.0}}, 0.9);
  EXPECT_DOUBLE_EQ(r[0][0].mean, 1.25);
  EXPECT_DOUBLE_EQ(r[0][0].variance, 0.64);
}

TEST(Tabular, LanesStayRight) {
  const lanes::LaneMdp mdp;
  const ReturnTable r = policy_evaluate_tabular(lanes::to_tabular(mdp), lanes::tabular_policy(mdp, 0.0), 1.0);
  EXPECT_NEAR(r[lanes::state_index(0, lanes::right)][0].mean, 4.0, 1e-12);
  EXPECT_NEAR(r[lanes::state_index(0, lanes::right)][0].variance, 4.0, 1e-12);
}

TEST(Tabular, RejectsNonEpisodicAtUnitDiscount) {
  TabularMdp loop{{{{1.0, 0.0, {{1.0, 0}}}}}};
  EXPECT_THROW(policy_evaluate_tabular(loop, {{1.0}}, 1.0), std::invalid_argument);
  EXPECT_NO_THROW(policy_evaluate_tabular(loop, {{1.0}}, 0.9));
}

TEST(Tabular, MatchesMonteCarloOnRandomMdp) {
  const TabularMdp m = random_mdp(17);
  const TabularPolicy pi(5, {0.3, 0.7});
  const double gamma = 0.95;
  const ReturnTable exact = policy_evaluate_tabular(m, pi, gamma);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  const int runs = 100'000;
  for (int s0 : {0, 3}) {
    for (int a0 : {0, 1}) {
      double sum = 0, sq = 0;
      for (int k = 0; k < runs; ++k) {
        int s = s0, a = a0;
        double g = 0, disc = 1;
        while (s >= 0) {
          const TabularAction& act = m.actions[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
          g += disc * (act.reward_mean + std::sqrt(act.reward_variance) * n(rng));
          disc *= gamma;
          double x = u(rng);
          int next = -1;
          for (const auto& o : act.outcomes) {
            if (x < o.prob) {
              next = o.next_state;
              break;
            }
            x -= o.prob;
          }
          s = next;
          if (s >= 0) a = u(rng) < pi[static_cast<std::size_t>(s)][0] ? 0 : 1;
        }
        sum += g;
        sq += g * g;
      }
      const double mean = sum / runs, var = sq / runs - mean * mean;
      const GaussianReturn& z = exact[static_cast<std::size_t>(s0)][static_cast<std::size_t>(a0)];
      EXPECT_NEAR(mean, z.mean, 0.02 * std::max(1.0, std::abs(z.mean)));
      EXPECT_NEAR(var, z.variance, 0.02 * z.variance);
    }
  }
}
