#pragma once

// Training loop: rollout with the frozen behavior policy, entropy-augmented
// TD(lambda) targets, minibatch critic/actor/dual updates, behavior sync.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "reppo/actor.hpp"
#include "reppo/checkpoint.hpp"
#include "reppo/config.hpp"
#include "reppo/critic.hpp"
#include "reppo/envs.hpp"
#include "reppo/errors.hpp"
#include "reppo/nn.hpp"
#include "reppo/policy.hpp"
#include "reppo/random.hpp"
#include "reppo/returns.hpp"

namespace reppo::trainer {

using config::TrainConfig;
using nn::Matrix;
using nn::Vector;

// Stream ids for make_rng(seed, stream).
inline constexpr std::uint64_t kActorInitStream = 1;
inline constexpr std::uint64_t kCriticInitStream = 2;
inline constexpr std::uint64_t kNoiseStream = 3;
inline constexpr std::uint64_t kShuffleStream = 4;
inline constexpr std::uint64_t kEvalSeedStream = 5;
inline constexpr std::uint64_t kEnvSeedStream = 6;

/// One iteration of on-policy data. Column t * n_envs + e holds env e at step t,
/// so per-step vectors map onto [n_envs x n_steps] matrices without copying.
struct RolloutBatch {
  std::size_t n_envs = 0;
  std::size_t n_steps = 0;
  Matrix observations;       // obs_dim x N, normalized
  Matrix pre_tanh;           // d x N
  Matrix actions;            // d x N
  Matrix behavior_mean;      // d x N
  Matrix behavior_log_std;   // d x N
  Vector rewards;            // raw env rewards
  Vector augmented_rewards;  // r - e^alpha log pi'(a_{t+1}|x_{t+1}), masked at terminals
  Vector next_log_prob;
  Vector next_values;        // V_{t+1}
  Matrix target_embeddings;  // hidden x N
  Vector targets;            // G^lambda
  std::vector<std::uint8_t> terminated;
  std::vector<std::uint8_t> truncated;
  double alpha = 0.0;        // e^alpha frozen for this rollout

  std::size_t size() const { return n_envs * n_steps; }
  Eigen::Index column(std::size_t env, std::size_t step) const {
    return static_cast<Eigen::Index>(step * n_envs + env);
  }
};

inline returns::Flags as_flags(const std::vector<std::uint8_t>& v, std::size_t n_envs, std::size_t n_steps) {
  returns::Flags f(static_cast<Eigen::Index>(n_envs), static_cast<Eigen::Index>(n_steps));
  for (std::size_t t = 0; t < n_steps; ++t) {
    for (std::size_t e = 0; e < n_envs; ++e) {
      f(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(t)) = v[t * n_envs + e] != 0;
    }
  }
  return f;
}

inline Matrix as_grid(const Vector& v, std::size_t n_envs, std::size_t n_steps) {
  return Eigen::Map<const Matrix>(v.data(), static_cast<Eigen::Index>(n_envs),
                                  static_cast<Eigen::Index>(n_steps));
}

inline returns::TrajectoryTensor trajectory_of(const RolloutBatch& b) {
  returns::TrajectoryTensor traj;
  traj.rewards = as_grid(b.augmented_rewards, b.n_envs, b.n_steps);
  traj.next_log_prob = as_grid(b.next_log_prob, b.n_envs, b.n_steps);
  traj.next_soft_value = as_grid(b.next_values, b.n_envs, b.n_steps);
  traj.dones = as_flags(b.terminated, b.n_envs, b.n_steps);
  traj.truncated = as_flags(b.truncated, b.n_envs, b.n_steps);
  return traj;
}

/// Stores G^lambda in batch.targets.
inline void compute_targets(RolloutBatch& batch, double gamma, double lambda) {
  const Matrix g = returns::td_lambda_targets(trajectory_of(batch), gamma, lambda);
  batch.targets = Eigen::Map<const Vector>(g.data(), g.size());
}

// ---------------------------------------------------------------------------
// Metrics

struct TrainMetrics {
  std::size_t iteration = 0;
  std::uint64_t env_steps = 0;
  double mean_return = std::numeric_limits<double>::quiet_NaN();  // completed training episodes
  double mean_episode_length = std::numeric_limits<double>::quiet_NaN();
  double eval_return = std::numeric_limits<double>::quiet_NaN();
  double eval_success = std::numeric_limits<double>::quiet_NaN();
  double critic_loss = 0.0;
  double value_loss = 0.0;
  double aux_loss = 0.0;
  double actor_loss = 0.0;
  double mean_entropy = 0.0;
  double mean_kl = 0.0;
  double alpha = 0.0;  // e^alpha after the iteration
  double beta = 0.0;
  double critic_grad_norm = 0.0;  // mean pre-clip norm over minibatches
  double actor_grad_norm = 0.0;
  double mean_q = 0.0;
  double wall_seconds = 0.0;  // not written to CSV; it would break byte-identical replays
};

inline const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols = {
      "iteration",   "env_steps",    "mean_return", "mean_episode_length", "eval_return",
      "eval_success", "critic_loss", "value_loss",  "aux_loss",            "actor_loss",
      "mean_entropy", "mean_kl",     "alpha",       "beta",                "critic_grad_norm",
      "actor_grad_norm", "mean_q"};
  return cols;
}

inline std::string metrics_csv_header() {
  std::string out;
  for (const auto& c : metrics_columns()) out += (out.empty() ? "" : ",") + c;
  return out;
}

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string metrics_csv_row(const TrainMetrics& m) {
  std::string out = std::to_string(m.iteration) + "," + std::to_string(m.env_steps);
  for (double v : {m.mean_return, m.mean_episode_length, m.eval_return, m.eval_success, m.critic_loss,
                   m.value_loss, m.aux_loss, m.actor_loss, m.mean_entropy, m.mean_kl, m.alpha, m.beta,
                   m.critic_grad_norm, m.actor_grad_norm, m.mean_q}) {
    out += "," + format_number(v);
  }
  return out;
}

/// Hindsight reliability: seed s counts at step t when its curve stays at or
/// above tau from t through the end of the run.
inline std::vector<double> reliable_fraction(const std::vector<std::vector<double>>& curves, double tau) {
  if (curves.empty()) return {};
  const std::size_t len = curves.front().size();
  for (const auto& c : curves) {
    if (c.size() != len) throw ConfigError("reliable_fraction: curves must share one step axis");
  }
  std::vector<double> out(len, 0.0);
  for (const auto& c : curves) {
    bool holds = true;
    for (std::size_t t = len; t-- > 0;) {
      holds = holds && c[t] >= tau;
      if (holds) out[t] += 1.0;
    }
  }
  for (double& v : out) v /= static_cast<double>(curves.size());
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
  double mean_return = 0.0;
  double success_rate = 0.0;
  double mean_length = 0.0;
  std::vector<double> returns;
};

/// Runs one episode per seed with actions tanh(mean) and the normalizer frozen.
/// Success means the episode ended by termination rather than the time limit.
inline EvalResult evaluate(const nn::MlpParams& actor, const envs::Dynamics& env,
                           const envs::NormalizerState& normalizer,
                           const std::vector<std::uint64_t>& episode_seeds) {
  if (episode_seeds.empty()) throw ConfigError("evaluate: n_episodes must be >= 1");
  const std::size_t n = episode_seeds.size();
  auto reset = envs::reset_batch(env, episode_seeds);
  envs::BatchState& batch = reset.state;
  Matrix obs = reset.observations;
  std::vector<std::uint8_t> active(n, 1);
  EvalResult out;
  out.returns.assign(n, 0.0);
  std::vector<double> lengths(n, 0.0);
  std::size_t successes = 0;
  std::size_t remaining = n;
  while (remaining > 0) {
    const auto heads = actor::actor_heads(actor, envs::normalize(normalizer, obs));
    const Matrix act = heads.mean.array().tanh();
    auto step = envs::step_batch(env, batch, act);
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      out.returns[i] += step.rewards[static_cast<Eigen::Index>(i)];
      lengths[i] += 1.0;
      if (step.terminated[i] || step.truncated[i]) {
        active[i] = 0;
        --remaining;
        if (step.terminated[i]) ++successes;
      }
    }
    obs = std::move(step.observations);
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.mean_return = std::accumulate(out.returns.begin(), out.returns.end(), 0.0) * inv;
  out.mean_length = std::accumulate(lengths.begin(), lengths.end(), 0.0) * inv;
  out.success_rate = static_cast<double>(successes) * inv;
  return out;
}

inline std::vector<std::uint64_t> draw_seeds(std::uint64_t seed, std::uint64_t stream, std::size_t n) {
  Rng rng = make_rng(seed, stream);
  std::vector<std::uint64_t> out(n);
  for (auto& s : out) s = rng();
  return out;
}

// ---------------------------------------------------------------------------
// Trainer

/// A numeric failure inside an iteration, carrying the context needed to replay it.
class IterationFailure : public NumericError {
 public:
  IterationFailure(const std::string& what, nlohmann::json diagnostic)
      : NumericError(what), diagnostic_(std::move(diagnostic)) {}
  const nlohmann::json& diagnostic() const noexcept { return diagnostic_; }

 private:
  nlohmann::json diagnostic_;
};

inline critic::CriticSpec critic_spec_for(const TrainConfig& c, const envs::EnvSpec& env) {
  critic::CriticSpec s;
  s.obs_dim = env.obs_dim;
  s.action_dim = env.action_dim;
  s.hidden_dim = c.critic_hidden_dim;
  s.encoder_layers = c.critic_encoder_layers;
  s.head_layers = c.critic_head_layers;
  s.predictor_layers = c.critic_predictor_layers;
  s.use_layer_norm = c.use_layer_norm;
  s.use_hl_gauss = c.use_hl_gauss;
  s.support = env.value_support(c.num_bins);
  return s;
}

inline actor::ActorSpec actor_spec_for(const TrainConfig& c, const envs::EnvSpec& env) {
  return {env.obs_dim, env.action_dim, c.actor_hidden_dim, c.actor_layers, c.use_layer_norm};
}

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg)
      : config_(std::move(cfg)), env_((config_.validate(), envs::make_env(config_.env))) {
    const envs::EnvSpec& es = env_->spec();
    actor_spec_ = actor_spec_for(config_, es);
    critic_spec_ = critic_spec_for(config_, es);
    Rng actor_rng = make_rng(config_.seed, kActorInitStream);
    Rng critic_rng = make_rng(config_.seed, kCriticInitStream);
    actor_ = actor::init_actor(actor_spec_, actor_rng);
    behavior_ = actor_;
    critic_ = critic::init_critic(critic_spec_, critic_rng);
    actor_opt_ = nn::AdamState(actor_.flat().size());
    encoder_opt_ = nn::AdamState(critic_.encoder.flat().size());
    head_opt_ = nn::AdamState(critic_.head.flat().size());
    predictor_opt_ = nn::AdamState(critic_.predictor.flat().size());

    duals_.log_alpha = std::log(config_.alpha_start);
    duals_.log_beta = std::log(config_.beta_start);
    duals_.entropy_target = config_.entropy_target_scale * static_cast<double>(es.action_dim);
    duals_.kl_target = config_.kl_target;
    duals_.lr_alpha = config_.dual_lr_alpha;
    duals_.lr_beta = config_.dual_lr_beta;

    noise_rng_ = make_rng(config_.seed, kNoiseStream);
    shuffle_rng_ = make_rng(config_.seed, kShuffleStream);
    eval_seeds_ = draw_seeds(config_.seed, kEvalSeedStream, config_.eval_episodes);

    auto reset = envs::reset_batch(*env_, draw_seeds(config_.seed, kEnvSeedStream, config_.n_envs));
    env_state_ = std::move(reset.state);
    raw_obs_ = std::move(reset.observations);
    normalizer_ = envs::normalizer_update(envs::NormalizerState(static_cast<Eigen::Index>(es.obs_dim)), raw_obs_);
    episode_returns_.assign(config_.n_envs, 0.0);
    episode_lengths_.assign(config_.n_envs, 0);
  }

  const TrainConfig& config() const { return config_; }
  const envs::Dynamics& env() const { return *env_; }
  const actor::ActorSpec& actor_spec() const { return actor_spec_; }
  const critic::CriticSpec& critic_spec() const { return critic_spec_; }
  const nn::MlpParams& actor() const { return actor_; }
  const nn::MlpParams& behavior() const { return behavior_; }
  const critic::CriticParams& critic() const { return critic_; }
  const actor::DualState& duals() const { return duals_; }
  const envs::NormalizerState& normalizer() const { return normalizer_; }
  std::uint64_t env_steps() const { return env_steps_; }
  std::size_t iteration() const { return iteration_; }
  bool done() const { return iteration_ >= config_.iterations(); }
  const std::vector<std::uint64_t>& eval_seeds() const { return eval_seeds_; }

  /// Test hook: overrides the dual state (e.g. to pin e^alpha).
  void set_duals(const actor::DualState& d) { duals_ = d; }

  /// Steps every env n_steps times with the behavior policy. A fresh batch is
  /// allocated on each call; nothing is carried over between iterations.
  RolloutBatch collect_rollout() {
    const std::size_t n_envs = config_.n_envs;
    const std::size_t n_steps = config_.n_steps;
    const envs::EnvSpec& es = env_->spec();
    const auto d = static_cast<Eigen::Index>(es.action_dim);
    const auto obs_dim = static_cast<Eigen::Index>(es.obs_dim);
    const auto n = static_cast<Eigen::Index>(n_envs * n_steps);
    const auto e_cols = static_cast<Eigen::Index>(n_envs);

    RolloutBatch b;
    b.n_envs = n_envs;
    b.n_steps = n_steps;
    b.alpha = duals_.alpha();
    b.observations.resize(obs_dim, n);
    b.pre_tanh.resize(d, n);
    b.actions.resize(d, n);
    b.behavior_mean.resize(d, n);
    b.behavior_log_std.resize(d, n);
    b.rewards.resize(n);
    b.next_log_prob.resize(n);
    b.next_values.resize(n);
    b.target_embeddings.resize(static_cast<Eigen::Index>(critic_spec_.hidden_dim), n);
    b.terminated.assign(static_cast<std::size_t>(n), 0);
    b.truncated.assign(static_cast<std::size_t>(n), 0);
    completed_returns_.clear();
    completed_lengths_.clear();

    Matrix obs = envs::normalize(normalizer_, raw_obs_);
    for (std::size_t t = 0; t < n_steps; ++t) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(t * n_envs);
      const auto heads = actor::actor_heads(behavior_, obs);
      const Matrix eps = standard_normal(d, e_cols, noise_rng_);
      const Matrix z = heads.mean.array() + heads.log_std.array().exp() * eps.array();
      const Matrix a = z.array().tanh();

      envs::StepResult step;
      try {
        step = envs::step_batch(*env_, env_state_, a);
      } catch (const SimulationError& e) {
        throw SimulationError(std::string(e.what()) + " at iteration " + std::to_string(iteration_) +
                                  ", step " + std::to_string(t),
                              e.env_index());
      }
      normalizer_ = envs::normalizer_update(normalizer_, step.observations);
      const Matrix final_obs = envs::normalize(normalizer_, step.final_observations);

      const auto next_heads = actor::actor_heads(behavior_, final_obs);
      const Matrix eps_next = standard_normal(d, e_cols, noise_rng_);
      const Matrix z_next = next_heads.mean.array() + next_heads.log_std.array().exp() * eps_next.array();
      const Matrix a_next = z_next.array().tanh();
      const auto crit = critic::critic_forward(critic_, critic_spec_, final_obs, a_next);

      b.observations.middleCols(c0, e_cols) = obs;
      b.pre_tanh.middleCols(c0, e_cols) = z;
      b.actions.middleCols(c0, e_cols) = a;
      b.behavior_mean.middleCols(c0, e_cols) = heads.mean;
      b.behavior_log_std.middleCols(c0, e_cols) = heads.log_std;
      b.rewards.segment(c0, e_cols) = step.rewards;
      b.next_values.segment(c0, e_cols) = crit.q.transpose();
      b.target_embeddings.middleCols(c0, e_cols) = crit.embedding;
      for (Eigen::Index e = 0; e < e_cols; ++e) {
        double lp = 0.0;
        for (Eigen::Index k = 0; k < d; ++k) {
          lp += policy::kernel::log_prob(next_heads.mean(k, e), next_heads.log_std(k, e), z_next(k, e));
        }
        b.next_log_prob[c0 + e] = lp;
        const auto i = static_cast<std::size_t>(e);
        b.terminated[static_cast<std::size_t>(c0) + i] = step.terminated[i];
        b.truncated[static_cast<std::size_t>(c0) + i] = step.truncated[i];
        episode_returns_[i] += step.rewards[e];
        episode_lengths_[i] += 1;
        if (step.terminated[i] || step.truncated[i]) {
          completed_returns_.push_back(episode_returns_[i]);
          completed_lengths_.push_back(static_cast<double>(episode_lengths_[i]));
          episode_returns_[i] = 0.0;
          episode_lengths_[i] = 0;
        }
      }
      raw_obs_ = std::move(step.observations);
      obs = envs::normalize(normalizer_, raw_obs_);
    }
    env_steps_ += static_cast<std::uint64_t>(n);

    const Matrix augmented = returns::augment_rewards(
        as_grid(b.rewards, n_envs, n_steps), as_grid(b.next_log_prob, n_envs, n_steps),
        as_flags(b.terminated, n_envs, n_steps), b.alpha);
    b.augmented_rewards = Eigen::Map<const Vector>(augmented.data(), augmented.size());
    return b;
  }

  /// collect -> targets -> n_epochs of shuffled minibatch updates -> behavior sync.
  TrainMetrics train_iteration() {
    const auto start = std::chrono::steady_clock::now();
    TrainMetrics m;
    try {
      m = run_iteration();
    } catch (const IterationFailure&) {
      throw;
    } catch (const NumericError& e) {
      nlohmann::json diag = {{"error", e.what()},
                             {"iteration", iteration_},
                             {"seed", config_.seed},
                             {"env_steps", env_steps_},
                             {"config", config::train_schema().to_json(config_)}};
      throw IterationFailure(std::string(e.what()) + " (iteration " + std::to_string(iteration_) +
                                 ", seed " + std::to_string(config_.seed) + ")",
                             std::move(diag));
    }
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return m;
  }

  EvalResult evaluate_policy() const { return evaluate(actor_, *env_, normalizer_, eval_seeds_); }

  Checkpoint checkpoint() const {
    Checkpoint ck;
    ck.metadata = config::train_schema().to_json(config_).dump();
    ck.add("actor", actor_.flat());
    ck.add("critic/encoder", critic_.encoder.flat());
    ck.add("critic/head", critic_.head.flat());
    ck.add("critic/predictor", critic_.predictor.flat());
    ck.add("normalizer/mean", normalizer_.mean);
    ck.add("normalizer/sum_sq_dev", normalizer_.sum_sq_dev);
    ck.add_scalar("normalizer/count", normalizer_.count);
    ck.add_scalar("duals/log_alpha", duals_.log_alpha);
    ck.add_scalar("duals/log_beta", duals_.log_beta);
    ck.add_scalar("env_steps", static_cast<double>(env_steps_));
    return ck;
  }

 private:
  Matrix take(const Matrix& m, const std::vector<Eigen::Index>& idx) const { return m(Eigen::all, idx); }
  Vector take(const Vector& v, const std::vector<Eigen::Index>& idx) const { return v(idx); }

  TrainMetrics run_iteration() {
    RolloutBatch batch = collect_rollout();
    compute_targets(batch, env_->spec().gamma(), config_.lambda);

    const std::size_t n = batch.size();
    const std::size_t mb = config_.batch_size();
    std::vector<Eigen::Index> perm(n);
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    const double aux_mult = config_.use_aux_loss ? config_.aux_mult : 0.0;
    const auto d = static_cast<Eigen::Index>(actor_spec_.action_dim);

    TrainMetrics m;
    std::size_t updates = 0;
    for (std::size_t epoch = 0; epoch < config_.n_epochs; ++epoch) {
      std::shuffle(perm.begin(), perm.end(), shuffle_rng_);
      for (std::size_t k = 0; k < config_.n_minibatches; ++k) {
        const std::vector<Eigen::Index> idx(perm.begin() + static_cast<std::ptrdiff_t>(k * mb),
                                            perm.begin() + static_cast<std::ptrdiff_t>((k + 1) * mb));
        critic::CriticBatch cb{take(batch.observations, idx), take(batch.actions, idx),
                               take(batch.targets, idx), Matrix()};
        if (aux_mult != 0.0) cb.target_embeddings = take(batch.target_embeddings, idx);
        auto cl = critic::critic_loss(critic_, critic_spec_, cb, aux_mult);
        m.critic_grad_norm += nn::clip_grad_norm(
            {&cl.grads.encoder.flat(), &cl.grads.head.flat(), &cl.grads.predictor.flat()},
            config_.max_grad_norm);
        nn::adam_step(encoder_opt_, critic_.encoder, cl.grads.encoder, config_.lr);
        nn::adam_step(head_opt_, critic_.head, cl.grads.head, config_.lr);
        nn::adam_step(predictor_opt_, critic_.predictor, cl.grads.predictor, config_.lr);

        actor::ActorBatch ab{cb.observations, take(batch.behavior_mean, idx),
                             take(batch.behavior_log_std, idx), take(batch.pre_tanh, idx)};
        const Matrix noise = standard_normal(d, static_cast<Eigen::Index>(mb), noise_rng_);
        auto pl = config_.loss_variant == actor::LossVariant::lagrangian
                      ? actor::policy_loss(actor_, critic_, critic_spec_, ab, duals_, noise, config_.use_kl_reg)
                      : actor::clipped_policy_loss(actor_, critic_, critic_spec_, ab, duals_, noise,
                                                   config_.use_kl_reg);
        m.actor_grad_norm += nn::clip_grad_norm(pl.grads, config_.max_grad_norm);
        nn::adam_step(actor_opt_, actor_, pl.grads, config_.lr);
        duals_ = actor::dual_update(duals_, pl.mean_entropy, pl.mean_kl, config_.use_kl_reg);

        m.critic_loss += cl.loss;
        m.value_loss += cl.value_loss;
        m.aux_loss += cl.aux_loss;
        m.actor_loss += pl.loss;
        m.mean_entropy += pl.mean_entropy;
        m.mean_kl += pl.mean_kl;
        m.mean_q += pl.mean_q;
        ++updates;
      }
    }
    behavior_ = actor_;

    const double inv = 1.0 / static_cast<double>(updates);
    for (double* v : {&m.critic_loss, &m.value_loss, &m.aux_loss, &m.actor_loss, &m.mean_entropy,
                      &m.mean_kl, &m.mean_q, &m.critic_grad_norm, &m.actor_grad_norm}) {
      *v *= inv;
    }
    m.alpha = duals_.alpha();
    m.beta = duals_.beta();
    m.iteration = iteration_;
    m.env_steps = env_steps_;
    if (!completed_returns_.empty()) {
      const double c = static_cast<double>(completed_returns_.size());
      m.mean_return = std::accumulate(completed_returns_.begin(), completed_returns_.end(), 0.0) / c;
      m.mean_episode_length = std::accumulate(completed_lengths_.begin(), completed_lengths_.end(), 0.0) / c;
    }
    ++iteration_;
    if (iteration_ % config_.eval_interval == 0 || done()) {
      const EvalResult ev = evaluate_policy();
      m.eval_return = ev.mean_return;
      m.eval_success = ev.success_rate;
    }
    return m;
  }

  TrainConfig config_;
  std::unique_ptr<envs::Dynamics> env_;
  actor::ActorSpec actor_spec_;
  critic::CriticSpec critic_spec_;
  nn::MlpParams actor_;
  nn::MlpParams behavior_;
  critic::CriticParams critic_;
  nn::AdamState actor_opt_, encoder_opt_, head_opt_, predictor_opt_;
  actor::DualState duals_;
  envs::NormalizerState normalizer_;
  envs::BatchState env_state_;
  Matrix raw_obs_;
  Rng noise_rng_;
  Rng shuffle_rng_;
  std::vector<std::uint64_t> eval_seeds_;
  std::vector<double> episode_returns_;
  std::vector<std::size_t> episode_lengths_;
  std::vector<double> completed_returns_;
  std::vector<double> completed_lengths_;
  std::uint64_t env_steps_ = 0;
  std::size_t iteration_ = 0;
};

// ---------------------------------------------------------------------------
// Policy reloading

struct PolicySnapshot {
  TrainConfig config;
  actor::ActorSpec spec;
  nn::MlpParams actor;
  envs::NormalizerState normalizer;
};

inline PolicySnapshot load_policy(const Checkpoint& ck) {
  PolicySnapshot s;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ck.metadata);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(std::string("checkpoint: metadata is not a config: ") + e.what());
  }
  config::train_schema().apply_json(s.config, meta);
  const auto env = envs::make_env(s.config.env);
  s.spec = actor_spec_for(s.config, env->spec());
  s.actor = nn::MlpParams(s.spec.mlp());
  const Vector flat = ck.vector("actor");
  if (flat.size() != s.actor.flat().size()) throw IoError("checkpoint: actor size does not match its config");
  s.actor.flat() = flat;
  s.normalizer.mean = ck.vector("normalizer/mean");
  s.normalizer.sum_sq_dev = ck.vector("normalizer/sum_sq_dev");
  s.normalizer.count = ck.scalar("normalizer/count");
  return s;
}

}  // namespace reppo::trainer
