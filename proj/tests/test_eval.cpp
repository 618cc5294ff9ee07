#include "wcpg/eval.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>

using namespace wcpg;
using namespace wcpg::eval;

namespace {

std::string one_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

EvalRecord rec(const std::string& cause, int steps, double ret) {
  EvalRecord r;
  r.cause = cause;
  r.steps = steps;
  r.episode_return = ret;
  return r;
}

}  // namespace

TEST(Sem, PublishedTableAtHundredTrials) {
  const int counts[] = {0, 1, 2, 15, 26};
  const char* printed[] = {"0.0", "1.0", "1.4", "3.6", "4.4"};
  for (int i = 0; i < 5; ++i) EXPECT_EQ(one_decimal(sem_percent(counts[i], 100)), printed[i]) << counts[i];
  EXPECT_EQ(format_rate(15, 100), "15.0 \xC2\xB1" "3.6");
  EXPECT_THROW(sem_percent(1, 0), std::invalid_argument);
  EXPECT_THROW(sem_percent(101, 100), std::invalid_argument);
}

TEST(Summary, CountsAndMeans) {
  const Summary s = summarize({rec("collision", 10, -50), rec("success", 30, 30), rec("timeout", 300, 0),
                               rec("truncated", 200, 0)});
  EXPECT_EQ(s.n, 4);
  EXPECT_EQ(s.collisions, 1);
  EXPECT_EQ(s.successes, 1);
  EXPECT_EQ(s.timeouts, 2);
  EXPECT_EQ(s.collision_pct, 25.0);
  EXPECT_EQ(s.mean_steps, 135.0);
  EXPECT_EQ(s.mean_return, -5.0);
  EXPECT_NEAR(s.collision_sem, std::sqrt(0.25 * 0.75 / 4) * 100, 1e-12);
  EXPECT_EQ(summarize({}).n, 0);
}

TEST(Stats, PercentileAndSpearman) {
  EXPECT_EQ(percentile({3, 1, 2}, 50), 2.0);
  EXPECT_EQ(percentile({0, 10}, 25), 2.5);
  EXPECT_THROW(percentile({}, 50), std::invalid_argument);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {10, 20, 25, 100}), 1.0, 1e-12);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0, 1e-12);
  EXPECT_THROW(spearman({1}, {1}), std::invalid_argument);
}

TEST(Evaluate, SeedsSharedAcrossAlphaAndDeterministic) {
  const Agent ag = Agent::init(1, 1e-4, 1e-4);
  const sim::ScenarioConfig cfg = sim::ScenarioConfig::left_turn();
  const EvalResult a = evaluate(ag, cfg, 0.1, 5, 100), b = evaluate(ag, cfg, 0.1, 5, 100);
  const EvalResult c = evaluate(ag, cfg, 1.0, 5, 100);
  ASSERT_EQ(a.records.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(a.records[i].seed, 100 + i);
    EXPECT_EQ(c.records[i].seed, 100 + i);
    EXPECT_EQ(a.records[i].steps, b.records[i].steps);
    EXPECT_EQ(a.records[i].episode_return, b.records[i].episode_return);
    EXPECT_LE(a.records[i].steps, 300);
  }
  EXPECT_THROW(evaluate(ag, cfg, 0.1, 0, 1), std::invalid_argument);
}

TEST(Evaluate, TraceCoversEveryDecision) {
  const Agent ag = Agent::init(2, 1e-4, 1e-4);
  sim::DrivingEnv env(sim::ScenarioConfig::merge());
  std::vector<TraceRow> trace;
  const EvalRecord r = evaluate_episode(env, ag, 0.5, 3, {}, &trace);
  ASSERT_FALSE(trace.empty());
  EXPECT_TRUE(trace.back().terminal);
  EXPECT_EQ(trace.back().cause, r.cause);
  for (const auto& t : trace) EXPECT_GT(t.critic_sigma, 0.0);
  EXPECT_EQ(trace.size(), static_cast<std::size_t>((r.steps + 3) / 4));
}

TEST(Sweep, ShiftsAndCells) {
  const auto shifts = left_turn_shifts();
  ASSERT_EQ(shifts.size(), 6u);
  EXPECT_EQ(shifts[1].velocity_offset, 10.0);
  EXPECT_EQ(shifts[1].spawn_rate, 0.05);
  const Agent ag = Agent::init(3, 1e-4, 1e-4);
  const auto cells = extrapolation_sweep(ag, sim::ScenarioConfig::left_turn(), {{shifts[1]}, {0.1, 1.0}, 2}, 0);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(cells[0].alpha, 0.1);
  EXPECT_EQ(cells[1].summary.n, 2);
  EXPECT_THROW(extrapolation_sweep(ag, sim::ScenarioConfig::left_turn(), {{}, {0.1}, 2}, 0), std::invalid_argument);
  EXPECT_THROW(extrapolation_sweep(ag, sim::ScenarioConfig::left_turn(), {{shifts[0]}, {0.0}, 2}, 0),
               std::out_of_range);
}

TEST(Gradcheck, AllComponentsPassAndCorruptionFails) {
  GradcheckOptions o;
  o.points = 2;
  for (const GradcheckRow& r : gradcheck_all(o)) {
    EXPECT_TRUE(r.pass) << r.component << " " << r.worst_rel_error;
    EXPECT_GT(r.checked, 0u);
  }
  o.corruption = 1.01;
  for (const GradcheckRow& r : gradcheck_all(o)) EXPECT_FALSE(r.pass) << r.component;
}
