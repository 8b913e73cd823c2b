#pragma once

// Run configuration: typed schemas, presets, a sectioned key-value file
// format, JSON echo and a git-style content hash.
//
// File format:
//
//   # comment
//   [rollout]
//   n_envs = 64
//   [env]
//   name = pendulum
//
// Keys are addressed as "section.key". Values are JSON scalars; bare words
// are read as strings. Unknown keys and type mismatches are errors.

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "reppo/actor.hpp"
#include "reppo/envs.hpp"
#include "reppo/errors.hpp"

namespace reppo::config {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Schema

template <class Config>
class Schema {
 public:
  struct Field {
    std::string key;
    std::function<void(Config&, const json&)> set;
    std::function<json(const Config&)> get;
  };

  Schema& add(const std::string& key, std::size_t Config::*member) {
    return push(key, [member, key](Config& c, const json& v) {
      if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0)) {
        throw ConfigError(key + ": expected a non-negative integer, got " + v.dump());
      }
      c.*member = v.get<std::size_t>();
    }, [member](const Config& c) { return json(c.*member); });
  }
  Schema& add(const std::string& key, std::uint64_t Config::*member, int /*tag*/) {
    return push(key, [member, key](Config& c, const json& v) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw ConfigError(key + ": expected a non-negative integer, got " + v.dump());
      }
      c.*member = v.get<std::uint64_t>();
    }, [member](const Config& c) { return json(c.*member); });
  }
  Schema& add(const std::string& key, double Config::*member) {
    return push(key, [member, key](Config& c, const json& v) {
      if (!v.is_number()) throw ConfigError(key + ": expected a number, got " + v.dump());
      c.*member = v.get<double>();
    }, [member](const Config& c) { return json(c.*member); });
  }
  Schema& add(const std::string& key, bool Config::*member) {
    return push(key, [member, key](Config& c, const json& v) {
      if (!v.is_boolean()) throw ConfigError(key + ": expected true or false, got " + v.dump());
      c.*member = v.get<bool>();
    }, [member](const Config& c) { return json(c.*member); });
  }
  Schema& add(const std::string& key, std::string Config::*member) {
    return push(key, [member, key](Config& c, const json& v) {
      if (!v.is_string()) throw ConfigError(key + ": expected a string, got " + v.dump());
      c.*member = v.get<std::string>();
    }, [member](const Config& c) { return json(c.*member); });
  }
  Schema& add_custom(const std::string& key, std::function<void(Config&, const json&)> set,
                     std::function<json(const Config&)> get) {
    return push(key, std::move(set), std::move(get));
  }

  const Field& field(const std::string& key) const {
    for (const Field& f : fields_) {
      if (f.key == key) return f;
    }
    throw ConfigError("unknown config key '" + key + "'");
  }

  void set(Config& c, const std::string& key, const json& value) const { field(key).set(c, value); }

  /// Nested {"section": {"key": value}} object with every field materialized.
  json to_json(const Config& c) const {
    json out = json::object();
    for (const Field& f : fields_) {
      const auto dot = f.key.find('.');
      out[f.key.substr(0, dot)][f.key.substr(dot + 1)] = f.get(c);
    }
    return out;
  }

  void apply_json(Config& c, const json& nested) const {
    if (!nested.is_object()) throw ConfigError("config: expected a JSON object");
    for (const auto& [section, body] : nested.items()) {
      if (!body.is_object()) throw ConfigError("config: section '" + section + "' must be an object");
      for (const auto& [key, value] : body.items()) set(c, section + "." + key, value);
    }
  }

  const std::vector<Field>& fields() const { return fields_; }

 private:
  Schema& push(const std::string& key, std::function<void(Config&, const json&)> set,
               std::function<json(const Config&)> get) {
    fields_.push_back({key, std::move(set), std::move(get)});
    return *this;
  }
  std::vector<Field> fields_;
};

// ---------------------------------------------------------------------------
// Training configuration

struct TrainConfig {
  std::string env = "pendulum";
  std::uint64_t seed = 0;
  std::uint64_t total_steps = 50'000'000;
  std::size_t eval_interval = 10;  // iterations
  std::size_t eval_episodes = 16;

  std::size_t n_envs = 1024;
  std::size_t n_steps = 128;
  std::size_t n_epochs = 8;
  std::size_t n_minibatches = 64;
  double lr = 3e-4;
  double max_grad_norm = 0.5;
  double lambda = 0.95;

  double kl_target = 0.1;
  double entropy_target_scale = 0.5;  // entropy target = scale * action_dim nats
  double alpha_start = 0.01;
  double beta_start = 0.01;
  double aux_mult = 1.0;
  double dual_lr_alpha = 3e-4;
  double dual_lr_beta = 3e-4;
  actor::LossVariant loss_variant = actor::LossVariant::lagrangian;

  std::size_t critic_hidden_dim = 512;
  std::size_t actor_hidden_dim = 512;
  std::size_t actor_layers = 3;
  std::size_t critic_encoder_layers = 2;
  std::size_t critic_head_layers = 2;
  std::size_t critic_predictor_layers = 2;
  std::size_t num_bins = 151;

  bool use_hl_gauss = true;
  bool use_layer_norm = true;
  bool use_aux_loss = true;
  bool use_kl_reg = true;

  std::size_t transitions_per_iteration() const { return n_envs * n_steps; }
  std::size_t batch_size() const { return transitions_per_iteration() / n_minibatches; }
  std::size_t iterations() const {
    const auto per = static_cast<std::uint64_t>(transitions_per_iteration());
    return static_cast<std::size_t>(std::max<std::uint64_t>(1, total_steps / per));
  }

  void validate() const {
    const auto positive = [](std::size_t v, const char* key) {
      if (v < 1) throw ConfigError(std::string(key) + ": must be >= 1");
    };
    positive(n_envs, "rollout.n_envs");
    positive(n_steps, "rollout.n_steps");
    positive(n_epochs, "optim.n_epochs");
    positive(n_minibatches, "optim.n_minibatches");
    positive(eval_interval, "run.eval_interval");
    positive(eval_episodes, "run.eval_episodes");
    positive(critic_hidden_dim, "network.critic_hidden_dim");
    positive(actor_hidden_dim, "network.actor_hidden_dim");
    positive(actor_layers, "network.actor_layers");
    positive(critic_encoder_layers, "network.critic_encoder_layers");
    positive(critic_head_layers, "network.critic_head_layers");
    positive(critic_predictor_layers, "network.critic_predictor_layers");
    if (transitions_per_iteration() % n_minibatches != 0) {
      throw ConfigError("optim.n_minibatches: n_envs * n_steps (" +
                        std::to_string(transitions_per_iteration()) +
                        ") must be divisible by n_minibatches (" + std::to_string(n_minibatches) + ")");
    }
    if (num_bins < 2) throw ConfigError("network.num_bins: must be >= 2");
    if (!(lr >= 0.0)) throw ConfigError("optim.lr: must be >= 0");
    if (!(max_grad_norm > 0.0)) throw ConfigError("optim.max_grad_norm: must be > 0");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("returns.lambda: must lie in [0, 1]");
    if (!(kl_target > 0.0)) throw ConfigError("loss.kl_target: must be > 0");
    if (!(alpha_start > 0.0) || !(beta_start > 0.0)) {
      throw ConfigError("loss.alpha_start/beta_start: must be > 0");
    }
    if (!(aux_mult >= 0.0)) throw ConfigError("loss.aux_mult: must be >= 0");
    if (!(dual_lr_alpha >= 0.0) || !(dual_lr_beta >= 0.0)) {
      throw ConfigError("loss.dual_lr_*: must be >= 0");
    }
    if (total_steps < 1) throw ConfigError("run.total_steps: must be >= 1");
    envs::make_env(env);
  }
};

inline std::string to_string(actor::LossVariant v) {
  return v == actor::LossVariant::lagrangian ? "lagrangian" : "clipped";
}

inline actor::LossVariant parse_loss_variant(const std::string& s) {
  if (s == "lagrangian") return actor::LossVariant::lagrangian;
  if (s == "clipped") return actor::LossVariant::clipped;
  throw ConfigError("loss.variant: expected 'lagrangian' or 'clipped', got '" + s + "'");
}

inline const Schema<TrainConfig>& train_schema() {
  static const Schema<TrainConfig> schema = [] {
    using C = TrainConfig;
    Schema<C> s;
    s.add("env.name", &C::env)
        .add("run.seed", &C::seed, 0)
        .add("run.total_steps", &C::total_steps, 0)
        .add("run.eval_interval", &C::eval_interval)
        .add("run.eval_episodes", &C::eval_episodes)
        .add("rollout.n_envs", &C::n_envs)
        .add("rollout.n_steps", &C::n_steps)
        .add("optim.n_epochs", &C::n_epochs)
        .add("optim.n_minibatches", &C::n_minibatches)
        .add("optim.lr", &C::lr)
        .add("optim.max_grad_norm", &C::max_grad_norm)
        .add("returns.lambda", &C::lambda)
        .add("loss.kl_target", &C::kl_target)
        .add("loss.entropy_target_scale", &C::entropy_target_scale)
        .add("loss.alpha_start", &C::alpha_start)
        .add("loss.beta_start", &C::beta_start)
        .add("loss.aux_mult", &C::aux_mult)
        .add("loss.dual_lr_alpha", &C::dual_lr_alpha)
        .add("loss.dual_lr_beta", &C::dual_lr_beta)
        .add_custom(
            "loss.variant",
            [](C& c, const json& v) {
              if (!v.is_string()) throw ConfigError("loss.variant: expected a string");
              c.loss_variant = parse_loss_variant(v.get<std::string>());
            },
            [](const C& c) { return json(to_string(c.loss_variant)); })
        .add("network.critic_hidden_dim", &C::critic_hidden_dim)
        .add("network.actor_hidden_dim", &C::actor_hidden_dim)
        .add("network.actor_layers", &C::actor_layers)
        .add("network.critic_encoder_layers", &C::critic_encoder_layers)
        .add("network.critic_head_layers", &C::critic_head_layers)
        .add("network.critic_predictor_layers", &C::critic_predictor_layers)
        .add("network.num_bins", &C::num_bins)
        .add("ablation.use_hl_gauss", &C::use_hl_gauss)
        .add("ablation.use_layer_norm", &C::use_layer_norm)
        .add("ablation.use_aux_loss", &C::use_aux_loss)
        .add("ablation.use_kl_reg", &C::use_kl_reg);
    return s;
  }();
  return schema;
}

/// Large-scale defaults.
inline TrainConfig cluster_preset() { return TrainConfig{}; }

/// Single-core defaults: 64 envs x 64 steps, 16 minibatches, 128 hidden units.
inline TrainConfig desk_preset() {
  TrainConfig c;
  c.n_envs = 64;
  c.n_steps = 64;
  c.n_minibatches = 16;
  c.critic_hidden_dim = 128;
  c.actor_hidden_dim = 128;
  c.total_steps = 400'000;
  c.eval_interval = 1;
  // A 1-d tanh policy at +0.5 nats per dimension has to keep its pre-tanh mean
  // near zero, which caps pendulum torque; zero leaves room to saturate.
  c.entropy_target_scale = 0.0;
  c.dual_lr_alpha = 0.1;
  c.dual_lr_beta = 0.1;
  return c;
}

/// Quarter-size rollouts for the data-scale ablation.
inline TrainConfig desk_small_preset() {
  TrainConfig c = desk_preset();
  c.n_steps = 16;
  c.eval_interval = 4;
  return c;
}

inline TrainConfig preset(const std::string& name) {
  if (name == "cluster") return cluster_preset();
  if (name == "desk") return desk_preset();
  if (name == "desk_small") return desk_small_preset();
  throw ConfigError("unknown preset '" + name + "' (known: cluster, desk, desk_small)");
}

// ---------------------------------------------------------------------------
// Estimator-lab configuration

struct LabConfig {
  std::uint64_t seed = 0;
  std::size_t n_seeds = 20;
  std::size_t n_iterations = 300;
  std::size_t n_samples = 5;
  double lr = 0.01;
  double init_mean_x = 0.3;
  double init_mean_y = -0.5;
  double init_log_std = -2.0;
  bool score_baseline = true;
  double baseline_decay = 0.9;
  std::size_t weak_size = 32;
  std::size_t strong_size = 1024;
  std::size_t surrogate_hidden = 16;
  std::size_t surrogate_layers = 3;
  std::size_t fit_steps = 4000;
  double fit_lr = 1e-2;
  std::size_t variance_draws = 10'000;

  void validate() const {
    if (n_seeds < 1 || n_iterations < 1 || n_samples < 1) {
      throw ConfigError("lab: n_seeds, n_iterations and n_samples must be >= 1");
    }
    if (!(lr > 0.0) || !(fit_lr > 0.0)) throw ConfigError("lab: learning rates must be > 0");
    if (weak_size < 1 || strong_size < 1) throw ConfigError("lab: dataset sizes must be >= 1");
    if (surrogate_layers < 1 || surrogate_hidden < 1) throw ConfigError("lab: surrogate shape invalid");
    if (!(baseline_decay >= 0.0 && baseline_decay < 1.0)) {
      throw ConfigError("lab.baseline_decay: must lie in [0, 1)");
    }
  }
};

inline const Schema<LabConfig>& lab_schema() {
  static const Schema<LabConfig> schema = [] {
    using C = LabConfig;
    Schema<C> s;
    s.add("lab.seed", &C::seed, 0)
        .add("lab.n_seeds", &C::n_seeds)
        .add("lab.n_iterations", &C::n_iterations)
        .add("lab.n_samples", &C::n_samples)
        .add("lab.lr", &C::lr)
        .add("lab.init_mean_x", &C::init_mean_x)
        .add("lab.init_mean_y", &C::init_mean_y)
        .add("lab.init_log_std", &C::init_log_std)
        .add("lab.score_baseline", &C::score_baseline)
        .add("lab.baseline_decay", &C::baseline_decay)
        .add("lab.weak_size", &C::weak_size)
        .add("lab.strong_size", &C::strong_size)
        .add("lab.surrogate_hidden", &C::surrogate_hidden)
        .add("lab.surrogate_layers", &C::surrogate_layers)
        .add("lab.fit_steps", &C::fit_steps)
        .add("lab.fit_lr", &C::fit_lr)
        .add("lab.variance_draws", &C::variance_draws);
    return s;
  }();
  return schema;
}

// ---------------------------------------------------------------------------
// Parsing

/// Reads a value the way a config file spells it: JSON scalars, otherwise a bare string.
inline json parse_value(const std::string& text) {
  const auto first = text.find_first_not_of(" \t");
  if (first == std::string::npos) return json("");
  const std::string trimmed = text.substr(first, text.find_last_not_of(" \t") - first + 1);
  try {
    json v = json::parse(trimmed);
    if (v.is_primitive()) return v;
  } catch (const json::parse_error&) {
  }
  return json(trimmed);
}

/// Parses the sectioned key-value format into (key path, value) pairs in file order.
inline std::vector<std::pair<std::string, json>> parse_kv_text(const std::string& text,
                                                               const std::string& origin = "config") {
  std::vector<std::pair<std::string, json>> out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    line = line.substr(first, line.find_last_not_of(" \t\r") - first + 1);
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": malformed section header");
      }
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key = line.substr(0, eq);
    key = key.substr(0, key.find_last_not_of(" \t") + 1);
    const std::string path = section.empty() ? key : section + "." + key;
    out.emplace_back(path, parse_value(line.substr(eq + 1)));
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Applies a config file onto `base`. JSON files may be a nested config object
/// or a run summary carrying one under "config".
template <class Config>
void apply_file(Config& base, const Schema<Config>& schema, const std::string& path) {
  const std::string text = read_file(path);
  const bool is_json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
  if (is_json) {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(path + ": " + e.what());
    }
    schema.apply_json(base, j.contains("config") ? j.at("config") : j);
    return;
  }
  for (const auto& [key, value] : parse_kv_text(text, path)) schema.set(base, key, value);
}

/// "section.key=value" override as given on the command line.
template <class Config>
void apply_override(Config& base, const Schema<Config>& schema, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  schema.set(base, assignment.substr(0, eq), parse_value(assignment.substr(eq + 1)));
}

template <class Config>
std::string to_kv_text(const Config& c, const Schema<Config>& schema) {
  const json nested = schema.to_json(c);
  std::string out;
  for (const auto& [section, body] : nested.items()) {
    out += "[" + section + "]\n";
    for (const auto& [key, value] : body.items()) out += key + " = " + value.dump() + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hashing and manifest

/// SHA-1 over "blob <size>\0<content>", as git names objects.
inline std::string git_blob_hash(const std::string& content) {
  const std::string blob = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw Error("sha1 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 0xf];
  }
  return hex;
}

template <class Config>
std::string config_hash(const Config& c, const Schema<Config>& schema) {
  return git_blob_hash(schema.to_json(c).dump());
}

struct RunManifest {
  json config;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string started_at;
  std::map<std::string, std::string> artifacts;

  json to_json() const {
    return {{"config", config}, {"config_hash", config_hash}, {"seed", seed},
            {"started_at", started_at}, {"artifacts", artifacts}};
  }
  static RunManifest from_json(const json& j) {
    RunManifest m;
    m.config = j.at("config");
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.started_at = j.at("started_at").get<std::string>();
    m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
    return m;
  }
  friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

}  // namespace reppo::config
