#pragma once

// Whole training runs and their on-disk artifacts:
//   <out>/<env>_seed<seed>_<hash8>/
//     metrics.csv  summary.json  config.json  checkpoint.bin  manifest.json
// metrics.csv carries no wall-clock columns, so identical configs give
// byte-identical files.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reppo/config.hpp"
#include "reppo/errors.hpp"
#include "reppo/trainer.hpp"

namespace reppo::run {

namespace fs = std::filesystem;
using config::TrainConfig;
using nlohmann::json;

/// Threshold for the reliability metric: success rate for goal tasks, return otherwise.
struct ReliabilityCriterion {
  bool use_success = false;
  double tau = 0.0;
};

inline ReliabilityCriterion reliability_criterion(const std::string& env) {
  if (env == "point_mass") return {true, 0.9};
  return {false, -200.0};
}

struct RunResult {
  TrainConfig config;
  std::string config_hash;
  std::vector<trainer::TrainMetrics> metrics;
  fs::path directory;  // empty when nothing was written
  double wall_seconds = 0.0;

  /// Evaluated iterations only, in order.
  std::vector<const trainer::TrainMetrics*> evaluations() const {
    std::vector<const trainer::TrainMetrics*> out;
    for (const auto& m : metrics) {
      if (!std::isnan(m.eval_return)) out.push_back(&m);
    }
    return out;
  }
  std::vector<double> eval_curve(bool success) const {
    std::vector<double> out;
    for (const auto* m : evaluations()) out.push_back(success ? m->eval_success : m->eval_return);
    return out;
  }
  double best_eval_return() const {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto* m : evaluations()) best = std::max(best, m->eval_return);
    return best;
  }
  double best_eval_success() const {
    double best = 0.0;
    for (const auto* m : evaluations()) best = std::max(best, m->eval_success);
    return best;
  }
  /// Mean evaluation return over the last `window` evaluations.
  double final_eval_return(std::size_t window = 5) const {
    const auto evals = evaluations();
    if (evals.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t k = std::min(window, evals.size());
    double sum = 0.0;
    for (std::size_t i = evals.size() - k; i < evals.size(); ++i) sum += evals[i]->eval_return;
    return sum / static_cast<double>(k);
  }
};

inline std::string run_directory_name(const TrainConfig& c, const std::string& hash) {
  return c.env + "_seed" + std::to_string(c.seed) + "_" + hash.substr(0, 8);
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline fs::path prepare_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  return dir;
}

inline json summary_json(const RunResult& r) {
  const ReliabilityCriterion crit = reliability_criterion(r.config.env);
  const auto curve = r.eval_curve(crit.use_success);
  const auto reliable = trainer::reliable_fraction({curve}, crit.tau);
  const auto evals = r.evaluations();
  json j = {{"config", config::train_schema().to_json(r.config)},
            {"config_hash", r.config_hash},
            {"seed", r.config.seed},
            {"iterations", r.metrics.size()},
            {"env_steps", r.metrics.empty() ? 0 : r.metrics.back().env_steps},
            {"best_eval_return", r.best_eval_return()},
            {"final_eval_return", r.final_eval_return()},
            {"best_eval_success", r.best_eval_success()},
            {"final_eval_success", evals.empty() ? 0.0 : evals.back()->eval_success},
            {"reliability_tau", crit.tau},
            {"reliability_on", crit.use_success ? "eval_success" : "eval_return"},
            {"reliable_fraction_final", reliable.empty() ? 0.0 : reliable.back()},
            {"wall_seconds", r.wall_seconds}};
  return j;
}

using IterationCallback = std::function<void(const trainer::TrainMetrics&)>;

/// Trains to completion. With a non-empty `out_root`, streams metrics.csv and
/// writes the remaining artifacts at the end; on a numeric failure a
/// diagnostic.json is left next to the partial metrics before rethrowing.
inline RunResult train(const TrainConfig& cfg, const fs::path& out_root = {},
                       const IterationCallback& on_iteration = {}) {
  cfg.validate();
  RunResult r;
  r.config = cfg;
  r.config_hash = config::config_hash(cfg, config::train_schema());
  const auto start = std::chrono::steady_clock::now();
  const std::string started_at = utc_timestamp();

  std::ofstream csv;
  if (!out_root.empty()) {
    r.directory = prepare_directory(out_root / run_directory_name(cfg, r.config_hash));
    write_text(r.directory / "config.json", config::train_schema().to_json(cfg).dump(2) + "\n");
    csv.open(r.directory / "metrics.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write '" + (r.directory / "metrics.csv").string() + "'");
    csv << trainer::metrics_csv_header() << "\n";
  }

  trainer::Trainer t(cfg);
  while (!t.done()) {
    trainer::TrainMetrics m;
    try {
      m = t.train_iteration();
    } catch (const trainer::IterationFailure& e) {
      if (!r.directory.empty()) write_text(r.directory / "diagnostic.json", e.diagnostic().dump(2) + "\n");
      throw;
    }
    if (csv.is_open()) csv << trainer::metrics_csv_row(m) << "\n" << std::flush;
    r.metrics.push_back(m);
    if (on_iteration) on_iteration(m);
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (!r.directory.empty()) {
    csv.close();
    t.checkpoint().save((r.directory / "checkpoint.bin").string());
    write_text(r.directory / "summary.json", summary_json(r).dump(2) + "\n");
    config::RunManifest manifest;
    manifest.config = config::train_schema().to_json(cfg);
    manifest.config_hash = r.config_hash;
    manifest.seed = cfg.seed;
    manifest.started_at = started_at;
    for (const char* name : {"metrics.csv", "summary.json", "config.json", "checkpoint.bin"}) {
      manifest.artifacts[name] = (r.directory / name).string();
    }
    write_text(r.directory / "manifest.json", manifest.to_json().dump(2) + "\n");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Ablation grid

struct AblationVariant {
  std::string name;
  std::function<void(TrainConfig&)> apply;
};

/// Full method plus the four single removals.
inline const std::vector<AblationVariant>& ablation_variants() {
  static const std::vector<AblationVariant> v = {
      {"full", [](TrainConfig&) {}},
      {"no_hl_gauss", [](TrainConfig& c) { c.use_hl_gauss = false; }},
      {"no_layer_norm", [](TrainConfig& c) { c.use_layer_norm = false; }},
      {"no_aux_loss", [](TrainConfig& c) { c.use_aux_loss = false; }},
      {"no_kl_reg", [](TrainConfig& c) { c.use_kl_reg = false; }},
  };
  return v;
}

struct AblationRow {
  std::string env;
  std::string scale;  // "large" or "small" batch
  std::string variant;
  std::size_t seeds = 0;
  double mean_final_return = 0.0;
  double delta_vs_full = 0.0;  // variant minus full, same scale
  std::vector<double> final_returns;
};

struct AblationScale {
  std::string name;
  TrainConfig base;
};

/// Runs every (scale, variant, seed) cell sequentially. `customize` is applied
/// after the preset so callers can shorten runs or change seeds uniformly.
inline std::vector<AblationRow> ablate(const std::vector<std::string>& env_names, std::size_t n_seeds,
                                       const std::function<void(TrainConfig&)>& customize,
                                       const fs::path& out_root = {},
                                       const std::function<void(const AblationRow&)>& on_row = {}) {
  const std::vector<AblationScale> scales = {{"large", config::desk_preset()},
                                             {"small", config::desk_small_preset()}};
  std::vector<AblationRow> rows;
  for (const auto& env : env_names) {
    for (const auto& scale : scales) {
      double full = 0.0;
      for (const auto& variant : ablation_variants()) {
        AblationRow row{env, scale.name, variant.name, n_seeds, 0.0, 0.0, {}};
        for (std::size_t s = 0; s < n_seeds; ++s) {
          TrainConfig c = scale.base;
          c.env = env;
          if (customize) customize(c);
          c.seed += s;
          variant.apply(c);
          const fs::path dir = out_root.empty() ? fs::path() : out_root / scale.name / variant.name;
          const RunResult r = train(c, dir);
          row.final_returns.push_back(r.final_eval_return());
          row.mean_final_return += row.final_returns.back() / static_cast<double>(n_seeds);
        }
        if (variant.name == "full") full = row.mean_final_return;
        row.delta_vs_full = row.mean_final_return - full;
        rows.push_back(row);
        if (on_row) on_row(rows.back());
      }
    }
  }
  return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "env,scale,variant,seeds,mean_final_return,delta_vs_full\n";
  for (const auto& r : rows) {
    out += r.env + "," + r.scale + "," + r.variant + "," + std::to_string(r.seeds) + "," +
           trainer::format_number(r.mean_final_return) + "," + trainer::format_number(r.delta_vs_full) + "\n";
  }
  return out;
}

}  // namespace reppo::run
