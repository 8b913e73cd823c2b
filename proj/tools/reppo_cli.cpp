// reppo: train / eval / lab / ablate.
//
// Exit codes: 0 ok, 2 configuration, 3 numeric, 4 I/O, 1 anything else.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "reppo/checkpoint.hpp"
#include "reppo/config.hpp"
#include "reppo/envs.hpp"
#include "reppo/errors.hpp"
#include "reppo/estimator_lab.hpp"
#include "reppo/run.hpp"
#include "reppo/trainer.hpp"

namespace fs = std::filesystem;
using namespace reppo;

namespace {

struct TrainArgs {
  std::string preset = "cluster";
  std::string config_file;
  std::vector<std::string> overrides;
  std::string env;
  long long seed = -1;
  std::string out = "runs";
  bool quiet = false;
};

config::TrainConfig resolve_train_config(const TrainArgs& a) {
  config::TrainConfig c = config::preset(a.preset);
  const auto& schema = config::train_schema();
  if (!a.config_file.empty()) config::apply_file(c, schema, a.config_file);
  if (!a.env.empty()) c.env = a.env;
  if (a.seed >= 0) c.seed = static_cast<std::uint64_t>(a.seed);
  for (const auto& o : a.overrides) config::apply_override(c, schema, o);
  c.validate();
  return c;
}

void add_train_options(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--preset", a.preset, "cluster | desk | desk_small")->capture_default_str();
  cmd->add_option("--config", a.config_file, "sectioned key = value file, or a JSON config/summary");
  cmd->add_option("--set", a.overrides, "section.key=value override (repeatable)");
  cmd->add_option("--env", a.env, "environment name");
  cmd->add_option("--seed", a.seed, "run seed");
  cmd->add_option("--out", a.out, "output root")->capture_default_str();
  cmd->add_flag("--quiet", a.quiet, "no per-iteration progress");
}

void print_progress(const trainer::TrainMetrics& m) {
  std::fprintf(stderr, "iter %5zu  steps %9llu  eval %9.2f  success %.2f  H %7.3f  KL %.4f  alpha %.4f  beta %.4f\n",
               m.iteration, static_cast<unsigned long long>(m.env_steps), m.eval_return, m.eval_success,
               m.mean_entropy, m.mean_kl, m.alpha, m.beta);
}

int cmd_train(const TrainArgs& a) {
  const config::TrainConfig c = resolve_train_config(a);
  const auto result = run::train(c, a.out, a.quiet ? run::IterationCallback{} : run::IterationCallback{print_progress});
  std::cout << run::summary_json(result).dump(2) << "\n";
  std::cout << "run directory: " << result.directory.string() << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::size_t episodes = 16;
  std::uint64_t seed = 12345;
};

int cmd_eval(const EvalArgs& a) {
  if (!fs::exists(a.checkpoint)) throw IoError("checkpoint '" + a.checkpoint + "' does not exist");
  const auto snapshot = trainer::load_policy(Checkpoint::load(a.checkpoint));
  const auto env = envs::make_env(snapshot.config.env);
  const auto seeds = trainer::draw_seeds(a.seed, trainer::kEvalSeedStream, a.episodes);
  const auto result = trainer::evaluate(snapshot.actor, *env, snapshot.normalizer, seeds);
  nlohmann::json j = {{"env", snapshot.config.env},        {"episodes", a.episodes},
                      {"mean_return", result.mean_return}, {"success_rate", result.success_rate},
                      {"mean_length", result.mean_length}, {"returns", result.returns}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct LabArgs {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string out = "lab";
};

int cmd_lab(const LabArgs& a) {
  config::LabConfig c;
  const auto& schema = config::lab_schema();
  if (!a.config_file.empty()) config::apply_file(c, schema, a.config_file);
  for (const auto& o : a.overrides) config::apply_override(c, schema, o);
  c.validate();
  const fs::path dir = run::prepare_directory(a.out);
  const auto summary = lab::run_lab(c);
  run::write_text(dir / "traces.csv", lab::traces_csv(summary.first_seed_traces));
  run::write_text(dir / "paths.svg", lab::paths_svg(summary.first_seed_traces));
  nlohmann::json j = {{"config", schema.to_json(c)},
                      {"score_variance", summary.score_variance},
                      {"pathwise_variance", summary.pathwise_variance},
                      {"variance_ratio", summary.score_variance / summary.pathwise_variance},
                      {"weak_surrogate_rmse", summary.weak_rmse},
                      {"strong_surrogate_rmse", summary.strong_rmse}};
  for (const auto& m : summary.methods) {
    j["final_objective"][lab::method_name(m.method)] = m.mean_final_objective;
  }
  run::write_text(dir / "lab_summary.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct AblateArgs {
  std::vector<std::string> envs = {"pendulum"};
  std::size_t seeds = 3;
  std::vector<std::string> overrides;
  std::string out = "ablate";
};

int cmd_ablate(const AblateArgs& a) {
  // Validate overrides up front so a typo fails before hours of training.
  config::TrainConfig probe = config::desk_preset();
  for (const auto& o : a.overrides) config::apply_override(probe, config::train_schema(), o);
  const fs::path dir = run::prepare_directory(a.out);
  const auto rows = run::ablate(
      a.envs, a.seeds,
      [&](config::TrainConfig& c) {
        for (const auto& o : a.overrides) config::apply_override(c, config::train_schema(), o);
      },
      dir,
      [](const run::AblationRow& r) {
        std::fprintf(stderr, "%s %s %-14s final %9.2f  delta %+9.2f\n", r.env.c_str(), r.scale.c_str(),
                     r.variant.c_str(), r.mean_final_return, r.delta_vs_full);
      });
  const std::string table = run::ablation_csv(rows);
  run::write_text(dir / "ablation.csv", table);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pathwise on-policy actor-critic"};
  app.require_subcommand(1);

  TrainArgs train_args;
  add_train_options(app.add_subcommand("train", "train a policy and write run artifacts"), train_args);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint with deterministic actions");
  eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint.bin path")->required();
  eval->add_option("--episodes", eval_args.episodes)->capture_default_str();
  eval->add_option("--seed", eval_args.seed)->capture_default_str();

  LabArgs lab_args;
  auto* lab_cmd = app.add_subcommand("lab", "gradient estimator comparison on the camel objective");
  lab_cmd->add_option("--config", lab_args.config_file);
  lab_cmd->add_option("--set", lab_args.overrides, "lab.key=value override (repeatable)");
  lab_cmd->add_option("--out", lab_args.out)->capture_default_str();

  AblateArgs ablate_args;
  auto* ablate = app.add_subcommand("ablate", "component removals at two batch scales");
  ablate->add_option("--env", ablate_args.envs, "environments (repeatable)")->capture_default_str();
  ablate->add_option("--seeds", ablate_args.seeds)->capture_default_str();
  ablate->add_option("--set", ablate_args.overrides, "override applied to every cell");
  ablate->add_option("--out", ablate_args.out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand("train")) return cmd_train(train_args);
    if (app.got_subcommand("eval")) return cmd_eval(eval_args);
    if (app.got_subcommand("lab")) return cmd_lab(lab_args);
    if (app.got_subcommand("ablate")) return cmd_ablate(ablate_args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
