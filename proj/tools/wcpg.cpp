#include "wcpg/eval.hpp"
#include "wcpg/io.hpp"
#include "wcpg/lane_mdp.hpp"
#include "wcpg/run.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace wcpg;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "out";
  std::string checkpoint;
  std::string scenario;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON run configuration");
  app->add_option("--seed", c.seed, "random seed")->each([&c](const std::string&) { c.seed_set = true; });
  app->add_option("--out", c.out, "output directory");
  app->add_option("--checkpoint", c.checkpoint, "checkpoint directory");
  app->add_option("--scenario", c.scenario, "left_turn or merge")->check(CLI::IsMember({"left_turn", "merge"}));
}

io::RunConfig resolve(const Common& c) {
  io::RunConfig rc;
  if (!c.config.empty()) rc = io::run_config_from_json(io::read_json(c.config));
  if (!c.scenario.empty() && sim::to_string(rc.scenario.scenario) != c.scenario) {
    if (!c.config.empty() && io::read_json(c.config).contains("scenario"))
      throw std::invalid_argument("--scenario conflicts with the configuration file");
    rc.scenario = sim::ScenarioConfig::for_kind(sim::scenario_from_string(c.scenario));
  }
  if (c.seed_set) rc.train.seed = c.seed;
  return rc;
}

/// Loads the checkpoint and refuses to evaluate it on another scenario.
Agent load_checked(const Common& c, const io::RunConfig& rc) {
  if (c.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required");
  const std::string trained = run::checkpoint_scenario(c.checkpoint);
  if (!trained.empty() && trained != sim::to_string(rc.scenario.scenario))
    throw std::invalid_argument("checkpoint was trained on " + trained + ", not " +
                                sim::to_string(rc.scenario.scenario));
  return run::load_agent(c.checkpoint);
}

/// Scenario of the checkpoint when neither --scenario nor --config names one.
void adopt_checkpoint_scenario(Common& c) {
  if (!c.scenario.empty() || !c.config.empty() || c.checkpoint.empty()) return;
  const std::string s = run::checkpoint_scenario(c.checkpoint);
  if (!s.empty()) c.scenario = s;
}

io::json common_json(const io::RunConfig& rc, const Common& c) {
  io::json j = io::to_json(rc);
  j["checkpoint"] = c.checkpoint;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Risk-sensitive actor-critic driving experiments"};
  app.require_subcommand(1);

  Common c;
  int episodes = -1, trials = 100, grid = 32, points = 10;
  double alpha = 0.1;
  std::vector<double> alphas{0.02, 0.1, 0.3, 0.6, 1.0};
  std::string cvar_rule;

  auto* train = app.add_subcommand("train", "train an agent");
  add_common(train, c);
  train->add_option("--episodes", episodes, "override the episode count");
  train->add_option("--cvar-rule", cvar_rule, "paper or standard")->check(CLI::IsMember({"paper", "standard"}));

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint at several risk levels");
  add_common(ev, c);
  ev->add_option("--alphas", alphas, "risk levels");
  ev->add_option("--trials", trials, "episodes per risk level");

  auto* sweep = app.add_subcommand("sweep", "extrapolation sweep over shifted environments");
  add_common(sweep, c);
  sweep->add_option("--alphas", alphas, "risk levels");
  sweep->add_option("--trials", trials, "episodes per cell");

  auto* asweep = app.add_subcommand("alpha-sweep", "return, step and uncertainty statistics per risk level");
  add_common(asweep, c);
  asweep->add_option("--alphas", alphas, "risk levels");
  asweep->add_option("--trials", trials, "episodes per risk level");

  auto* trace = app.add_subcommand("trace", "per-decision critic uncertainty for one episode");
  add_common(trace, c);
  trace->add_option("--alpha", alpha, "risk level");

  std::size_t oracle_trials = 1000;
  auto* oracle = app.add_subcommand("oracle", "CVaR-optimal lane-change probability per risk level");
  add_common(oracle, c);
  oracle->add_option("--trials", oracle_trials, "rollouts per policy");
  oracle->add_option("--grid", grid, "policy grid size");
  oracle->add_option("--alphas", alphas, "risk levels (default 0.05 to 1.0 in steps of 0.05)");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every network gradient");
  add_common(gc, c);
  gc->add_option("--points", points, "random parameter points per component");

  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path out = c.out;
    fs::create_directories(out);

    if (train->parsed()) {
      io::RunConfig rc = resolve(c);
      if (episodes >= 0) rc.train.episodes = episodes;
      if (!cvar_rule.empty()) rc.train.cvar_rule = cvar_rule_from_string(cvar_rule);
      if (!c.checkpoint.empty()) rc.train.checkpoint_dir = c.checkpoint;
      run::train_driving(rc, out, [&](const EpisodeRecord& e) {
        if ((e.episode + 1) % 50 == 0)
          std::fprintf(stderr, "episode %d  alpha %.2f  %s  steps %d  sigma %.2f\n", e.episode + 1, e.alpha,
                       e.cause.c_str(), e.steps, e.mean_sigma);
      });
      return 0;
    }

    if (ev->parsed()) {
      adopt_checkpoint_scenario(c);
      const io::RunConfig rc = resolve(c);
      const Agent ag = load_checked(c, rc);
      std::vector<eval::EvalRecord> all;
      io::CsvWriter sum(out / "eval_summary.csv", run::summary_columns());
      for (double a : alphas) {
        const eval::EvalResult r = eval::evaluate(ag, rc.scenario, a, trials, rc.train.seed);
        all.insert(all.end(), r.records.begin(), r.records.end());
        run::summary_row(sum, a, r.summary);
        std::printf("alpha %.2f  collision %s  success %s  steps %.1f\n", a,
                    eval::format_rate(r.summary.collisions, r.summary.n).c_str(),
                    eval::format_rate(r.summary.successes, r.summary.n).c_str(), r.summary.mean_steps);
      }
      run::write_eval_records(out / "eval_records.csv", all);
      io::json j = common_json(rc, c);
      j["alphas"] = alphas;
      j["trials"] = trials;
      io::write_manifest(out, "eval", rc.train.seed, j, {"eval_summary.csv", "eval_records.csv"});
      return 0;
    }

    if (sweep->parsed()) {
      adopt_checkpoint_scenario(c);
      const io::RunConfig rc = resolve(c);
      const Agent ag = load_checked(c, rc);
      eval::SweepSpec spec{eval::left_turn_shifts(), alphas, trials};
      io::CsvWriter w(out / "sweep.csv", {"velocity_offset", "spawn_rate", "extra_agents", "alpha", "trials",
                                          "collision_pct", "collision_sem", "success_pct", "success_sem",
                                          "timeout_pct", "mean_steps"});
      for (const auto& cell : eval::extrapolation_sweep(ag, rc.scenario, spec, rc.train.seed)) {
        const auto& s = cell.summary;
        w.row(cell.shift.velocity_offset, cell.shift.spawn_rate, cell.shift.extra_agents, cell.alpha, s.n,
              s.collision_pct, s.collision_sem, s.success_pct, s.success_sem, s.timeout_pct, s.mean_steps);
      }
      io::json j = common_json(rc, c);
      j["alphas"] = alphas;
      j["trials"] = trials;
      io::write_manifest(out, "sweep", rc.train.seed, j, {"sweep.csv"});
      return 0;
    }

    if (asweep->parsed()) {
      adopt_checkpoint_scenario(c);
      const io::RunConfig rc = resolve(c);
      const Agent ag = load_checked(c, rc);
      io::CsvWriter w(out / "alpha_sweep.csv", {"alpha", "trials", "return_p01", "return_p99", "mean_return",
                                                "mean_steps", "mean_sigma", "collision_pct", "success_pct"});
      for (const auto& r : eval::alpha_sweep(ag, rc.scenario, alphas, trials, rc.train.seed))
        w.row(r.alpha, r.summary.n, r.return_p01, r.return_p99, r.mean_return, r.mean_steps, r.mean_sigma,
              r.summary.collision_pct, r.summary.success_pct);
      io::json j = common_json(rc, c);
      j["alphas"] = alphas;
      j["trials"] = trials;
      io::write_manifest(out, "alpha-sweep", rc.train.seed, j, {"alpha_sweep.csv"});
      return 0;
    }

    if (trace->parsed()) {
      adopt_checkpoint_scenario(c);
      const io::RunConfig rc = resolve(c);
      const Agent ag = load_checked(c, rc);
      io::CsvWriter w(out / "trace.csv", {"decision", "step", "x", "y", "heading", "speed", "action", "reward",
                                          "critic_mean", "critic_sigma", "nearest", "terminal", "cause"});
      for (const auto& r : eval::uncertainty_trace(ag, rc.scenario, alpha, rc.train.seed))
        w.row(r.decision, r.step, r.x, r.y, r.heading, r.speed, r.action, r.reward, r.critic_mean, r.critic_sigma,
              r.nearest, r.terminal, r.cause);
      io::json j = common_json(rc, c);
      j["alpha"] = alpha;
      io::write_manifest(out, "trace", rc.train.seed, j, {"trace.csv"});
      return 0;
    }

    if (oracle->parsed()) {
      if (oracle->count("--alphas") == 0) {
        alphas.clear();
        for (int k = 1; k <= 20; ++k) alphas.push_back(k / 20.0);
      }
      const lanes::LaneMdp mdp;
      io::CsvWriter w(out / "oracle.csv", {"alpha", "best_p_change", "cvar"});
      for (const auto& r : lanes::alpha_sweep(mdp, alphas, static_cast<std::size_t>(grid), oracle_trials, c.seed))
        w.row(r.alpha, r.best_p_change, r.cvar);
      io::json j{{"alphas", alphas}, {"trials", oracle_trials}, {"grid", grid}, {"horizon", mdp.horizon}};
      io::write_manifest(out, "oracle", c.seed, j, {"oracle.csv"});
      return 0;
    }

    if (gc->parsed()) {
      eval::GradcheckOptions o;
      o.points = points;
      if (c.seed_set) o.seed = c.seed;
      const auto rows = eval::gradcheck_all(o);
      io::CsvWriter w(out / "gradcheck.csv", {"component", "worst_rel_error", "checked", "skipped_kinks", "pass"});
      bool ok = true;
      for (const auto& r : rows) {
        std::printf("%-15s worst relative error %.3e  (%zu checked, %zu at kinks)  %s\n", r.component.c_str(),
                    r.worst_rel_error, r.checked, r.skipped, r.pass ? "PASS" : "FAIL");
        w.row(r.component, r.worst_rel_error, r.checked, r.skipped, r.pass);
        ok = ok && r.pass;
      }
      io::write_manifest(out, "gradcheck", o.seed, {{"points", points}, {"h", o.h}, {"threshold", eval::kGradcheckThreshold}},
                         {"gradcheck.csv"});
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
