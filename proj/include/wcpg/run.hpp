#pragma once

// Training and evaluation runs with on-disk outputs, shared by the command
// line tool and the acceptance checks.

#include "wcpg/checkpoint.hpp"
#include "wcpg/eval.hpp"
#include "wcpg/io.hpp"
#include "wcpg/sim/world.hpp"
#include "wcpg/trainer.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace wcpg::run {

namespace fs = std::filesystem;

inline fs::path checkpoint_path(const io::RunConfig& rc, const fs::path& out) {
  return rc.train.checkpoint_dir.empty() ? out / "checkpoint" : fs::path(rc.train.checkpoint_dir);
}

inline void save_agent(const fs::path& dir, const Agent& ag, const io::RunConfig& rc, int episodes_done) {
  ckpt::Bundle b = ag.bundle();
  b.extra = {{"config", io::to_json(rc)}, {"episodes_done", episodes_done}};
  ckpt::save(dir, b);
}

inline Agent load_agent(const fs::path& dir) {
  const ckpt::Bundle b = ckpt::load(dir);
  return Agent::from_bundle(b, 1e-4, 1e-4);
}

/// Scenario a checkpoint was trained on, when recorded.
inline std::string checkpoint_scenario(const fs::path& dir) {
  const ckpt::Bundle b = ckpt::load(dir);
  if (b.extra.contains("config")) return b.extra["config"]["scenario"].value("scenario", "");
  return "";
}

/// Trains on the driving world. Writes train_log.csv, eval_log.csv (when
/// eval_every > 0), the checkpoint and run.json into `out`.
inline TrainResult train_driving(const io::RunConfig& rc, const fs::path& out,
                                 const std::function<void(const EpisodeRecord&)>& progress = {}) {
  rc.train.validate();
  rc.scenario.validate();
  fs::create_directories(out);
  const fs::path ck = checkpoint_path(rc, out);
  io::CsvWriter log(out / "train_log.csv", {"episode", "env_seed", "alpha", "return", "steps", "decisions", "cause",
                                            "mean_sigma", "critic_loss", "actor_objective", "updates"});
  std::unique_ptr<io::CsvWriter> eval_log;
  if (rc.train.eval_every > 0)
    eval_log = std::make_unique<io::CsvWriter>(
        out / "eval_log.csv", std::vector<std::string>{"episode", "alpha", "trials", "collision_pct", "success_pct",
                                                       "timeout_pct", "mean_steps", "mean_return", "mean_sigma"});
  sim::DrivingEnv env(rc.scenario);
  TrainConfig tc = rc.train;
  tc.max_steps = std::min(tc.max_steps, rc.scenario.max_steps);
  const EpisodeHook hook = [&](const EpisodeRecord& e, const Agent& ag) {
    log.row(e.episode, e.env_seed, e.alpha, e.episode_return, e.steps, e.decisions, e.cause, e.mean_sigma,
            e.mean_critic_loss, e.mean_actor_objective, e.updates);
    if (eval_log && (e.episode + 1) % tc.eval_every == 0) {
      for (double a : tc.eval_alphas) {
        const eval::Summary s =
            eval::evaluate(ag, rc.scenario, a, tc.eval_trials, 1'000'000'007ULL, {tc.max_steps, tc.action_repeat})
                .summary;
        eval_log->row(e.episode + 1, a, s.n, s.collision_pct, s.success_pct, s.timeout_pct, s.mean_steps,
                      s.mean_return, s.mean_sigma);
      }
      eval_log->flush();
      save_agent(ck, ag, rc, e.episode + 1);
    }
    if (progress) progress(e);
  };
  TrainResult r = train(env, tc, hook);
  save_agent(ck, r.agent, rc, tc.episodes);
  std::vector<std::string> outputs{"train_log.csv", fs::relative(ck, out).string()};
  if (eval_log) outputs.push_back("eval_log.csv");
  io::write_manifest(out, "train", tc.seed, io::to_json(rc), outputs);
  return r;
}

inline void write_eval_records(const fs::path& file, const std::vector<eval::EvalRecord>& rs) {
  io::CsvWriter w(file, {"seed", "alpha", "cause", "steps", "return", "mean_sigma", "max_sigma"});
  for (const auto& r : rs) w.row(r.seed, r.alpha, r.cause, r.steps, r.episode_return, r.mean_sigma, r.max_sigma);
}

inline std::vector<std::string> summary_columns() {
  return {"alpha",       "trials",      "collision_pct", "collision_sem", "success_pct", "success_sem",
          "timeout_pct", "timeout_sem", "mean_steps",    "mean_return",   "mean_sigma"};
}

inline void summary_row(io::CsvWriter& w, double alpha, const eval::Summary& s) {
  w.row(alpha, s.n, s.collision_pct, s.collision_sem, s.success_pct, s.success_sem, s.timeout_pct, s.timeout_sem,
        s.mean_steps, s.mean_return, s.mean_sigma);
}

}  // namespace wcpg::run
