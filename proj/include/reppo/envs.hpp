#pragma once

// Vectorized analytic control tasks with auto-reset and running observation
// normalization. Actions arrive in (-1, 1)^d and are scaled by each task.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "reppo/errors.hpp"
#include "reppo/hl_gauss.hpp"
#include "reppo/random.hpp"

namespace reppo::envs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct EnvSpec {
  std::string name;
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;
  std::size_t episode_length = 1;
  double reward_min = 0.0;
  double reward_max = 0.0;
  std::map<std::string, double> physics;

  void validate() const {
    if (episode_length < 1) throw ConfigError(name + ": episode_length must be >= 1");
    if (!std::isfinite(reward_min) || !std::isfinite(reward_max) || reward_min > reward_max) {
      throw ConfigError(name + ": reward bounds must be finite and ordered");
    }
  }

  /// 1 - 10 / horizon.
  double gamma() const { return 1.0 - 10.0 / static_cast<double>(episode_length); }

  /// Value support [min r, max r] / (1 - gamma).
  hl_gauss::HlGaussSpec value_support(std::size_t num_bins) const {
    const double scale = 1.0 / (1.0 - gamma());
    double lo = reward_min * scale;
    double hi = reward_max * scale;
    if (!(lo < hi)) hi = lo + 1.0;
    return hl_gauss::HlGaussSpec::with_default_sigma(lo, hi, num_bins);
  }
};

struct Transition {
  Vector state;
  double reward = 0.0;
  bool terminated = false;
};

/// Single-environment physics. Implementations are stateless and const.
class Dynamics {
 public:
  virtual ~Dynamics() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual Vector initial_state(Rng& rng) const = 0;
  virtual Transition step(const Vector& state, const Vector& action) const = 0;
  virtual Vector observe(const Vector& state) const = 0;
};

inline double wrap_angle(double theta) {
  const double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(theta + std::numbers::pi, two_pi);
  if (w < 0.0) w += two_pi;
  return w - std::numbers::pi;
}

/// Torque-limited pendulum swing-up. State (theta, theta_dot) with theta = 0
/// upright; observation (cos theta, sin theta, theta_dot). Semi-implicit Euler.
class Pendulum final : public Dynamics {
 public:
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kDt = 0.05;
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;

  explicit Pendulum(std::size_t episode_length = 200) {
    spec_.name = "pendulum";
    spec_.obs_dim = 3;
    spec_.action_dim = 1;
    spec_.episode_length = episode_length;
    spec_.reward_min = -(std::numbers::pi * std::numbers::pi + 0.1 * kMaxSpeed * kMaxSpeed +
                         0.001 * kMaxTorque * kMaxTorque);
    spec_.reward_max = 0.0;
    spec_.physics = {{"dt", kDt},       {"g", kGravity},         {"m", kMass},
                     {"l", kLength},    {"max_torque", kMaxTorque}, {"max_speed", kMaxSpeed}};
    spec_.validate();
  }

  const EnvSpec& spec() const override { return spec_; }

  /// theta ~ U[-pi, pi], theta_dot ~ U[-1, 1].
  Vector initial_state(Rng& rng) const override {
    Vector s(2);
    s[0] = uniform(rng, -std::numbers::pi, std::numbers::pi);
    s[1] = uniform(rng, -1.0, 1.0);
    return s;
  }

  Transition step(const Vector& state, const Vector& action) const override {
    const double theta = state[0];
    const double theta_dot = state[1];
    const double torque = kMaxTorque * std::clamp(action[0], -1.0, 1.0);
    Transition t;
    const double angle = wrap_angle(theta);
    t.reward = -(angle * angle + 0.1 * theta_dot * theta_dot + 0.001 * torque * torque);
    double next_dot = theta_dot + (3.0 * kGravity / (2.0 * kLength) * std::sin(theta) +
                                   3.0 / (kMass * kLength * kLength) * torque) *
                                      kDt;
    next_dot = std::clamp(next_dot, -kMaxSpeed, kMaxSpeed);
    t.state = Vector(2);
    t.state << theta + next_dot * kDt, next_dot;
    return t;
  }

  Vector observe(const Vector& state) const override {
    Vector o(3);
    o << std::cos(state[0]), std::sin(state[0]), state[1];
    return o;
  }

  /// Conserved quantity of the torque-free continuous dynamics, zero at the
  /// hanging rest position.
  static double energy(const Vector& state) {
    return 0.5 * state[1] * state[1] + 1.5 * kGravity / kLength * (1.0 + std::cos(state[0]));
  }

 private:
  EnvSpec spec_;
};

/// 2-d double integrator in the box [-1, 1]^2 that must reach a random goal.
/// State (px, py, vx, vy, gx, gy); observation (px, py, vx, vy, gx - px, gy - py).
/// Terminates once within 0.05 of the goal.
class PointMass final : public Dynamics {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kMaxAccel = 2.0;
  static constexpr double kMaxSpeed = 1.0;
  static constexpr double kGoalRadius = 0.05;
  static constexpr double kMinStartDistance = 0.3;
  static constexpr double kActionCost = 0.01;

  explicit PointMass(std::size_t episode_length = 100) {
    spec_.name = "point_mass";
    spec_.obs_dim = 6;
    spec_.action_dim = 2;
    spec_.episode_length = episode_length;
    // Distance is at most the box diagonal and ||a||^2 <= 2.
    spec_.reward_min = -(2.0 * std::numbers::sqrt2 + 2.0 * kActionCost);
    spec_.reward_max = 0.0;
    spec_.physics = {{"dt", kDt},
                     {"max_accel", kMaxAccel},
                     {"max_speed", kMaxSpeed},
                     {"goal_radius", kGoalRadius},
                     {"action_cost", kActionCost}};
    spec_.validate();
  }

  const EnvSpec& spec() const override { return spec_; }

  /// Position and goal uniform in the box at least 0.3 apart, zero velocity.
  Vector initial_state(Rng& rng) const override {
    Vector s = Vector::Zero(6);
    do {
      s[0] = uniform(rng, -1.0, 1.0);
      s[1] = uniform(rng, -1.0, 1.0);
      s[4] = uniform(rng, -1.0, 1.0);
      s[5] = uniform(rng, -1.0, 1.0);
    } while (std::hypot(s[4] - s[0], s[5] - s[1]) < kMinStartDistance);
    return s;
  }

  Transition step(const Vector& state, const Vector& action) const override {
    Transition t;
    t.state = state;
    double action_sq = 0.0;
    for (int k = 0; k < 2; ++k) {
      const double a = std::clamp(action[k], -1.0, 1.0);
      action_sq += a * a;
      double v = std::clamp(state[2 + k] + kMaxAccel * a * kDt, -kMaxSpeed, kMaxSpeed);
      double p = state[k] + v * kDt;
      if (p > 1.0 || p < -1.0) {
        p = std::clamp(p, -1.0, 1.0);
        v = 0.0;
      }
      t.state[k] = p;
      t.state[2 + k] = v;
    }
    const double dist = std::hypot(t.state[4] - t.state[0], t.state[5] - t.state[1]);
    t.reward = -dist - kActionCost * action_sq;
    t.terminated = dist < kGoalRadius;
    return t;
  }

  Vector observe(const Vector& state) const override {
    Vector o(6);
    o << state[0], state[1], state[2], state[3], state[4] - state[0], state[5] - state[1];
    return o;
  }

 private:
  EnvSpec spec_;
};

inline std::vector<std::string> registered_envs() { return {"pendulum", "point_mass"}; }

inline std::unique_ptr<Dynamics> make_env(const std::string& name) {
  if (name == "pendulum") return std::make_unique<Pendulum>();
  if (name == "point_mass") return std::make_unique<PointMass>();
  throw ConfigError("unknown environment '" + name + "' (known: pendulum, point_mass)");
}

// ---------------------------------------------------------------------------
// Vectorized stepping

struct BatchState {
  std::vector<Vector> states;
  std::vector<std::size_t> steps;
  std::vector<Rng> rngs;

  std::size_t size() const { return states.size(); }
};

struct StepResult {
  Matrix observations;        // obs_dim x n, post-reset where an episode ended
  Matrix final_observations;  // obs_dim x n, the true successor observations
  Vector rewards;
  std::vector<std::uint8_t> terminated;
  std::vector<std::uint8_t> truncated;
};

struct ResetResult {
  BatchState state;
  Matrix observations;
};

inline ResetResult reset_batch(const Dynamics& env, const std::vector<std::uint64_t>& seeds) {
  const auto n = seeds.size();
  ResetResult r;
  r.observations.resize(static_cast<Eigen::Index>(env.spec().obs_dim), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    r.state.rngs.push_back(make_rng(seeds[i], 0x656e76));
    r.state.states.push_back(env.initial_state(r.state.rngs.back()));
    r.state.steps.push_back(0);
    r.observations.col(static_cast<Eigen::Index>(i)) = env.observe(r.state.states.back());
  }
  return r;
}

/// Advances every env one step. Envs that terminate or hit the episode limit
/// are reset in the same call; their successor observation is kept in
/// `final_observations`.
inline StepResult step_batch(const Dynamics& env, BatchState& batch, const Matrix& actions) {
  const std::size_t n = batch.size();
  const EnvSpec& spec = env.spec();
  if (static_cast<std::size_t>(actions.cols()) != n ||
      static_cast<std::size_t>(actions.rows()) != spec.action_dim) {
    throw ConfigError("step_batch: action batch has wrong shape");
  }
  StepResult out;
  const auto obs_dim = static_cast<Eigen::Index>(spec.obs_dim);
  out.observations.resize(obs_dim, static_cast<Eigen::Index>(n));
  out.final_observations.resize(obs_dim, static_cast<Eigen::Index>(n));
  out.rewards.resize(static_cast<Eigen::Index>(n));
  out.terminated.assign(n, 0);
  out.truncated.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const Vector a = actions.col(col).cwiseMax(-1.0).cwiseMin(1.0);
    Transition t = env.step(batch.states[i], a);
    if (!t.state.allFinite() || !std::isfinite(t.reward)) {
      throw SimulationError(spec.name + ": non-finite state", i);
    }
    batch.states[i] = std::move(t.state);
    batch.steps[i] += 1;
    out.rewards[col] = t.reward;
    out.terminated[i] = t.terminated;
    out.truncated[i] = !t.terminated && batch.steps[i] >= spec.episode_length;
    out.final_observations.col(col) = env.observe(batch.states[i]);
    if (out.terminated[i] || out.truncated[i]) {
      batch.states[i] = env.initial_state(batch.rngs[i]);
      batch.steps[i] = 0;
      out.observations.col(col) = env.observe(batch.states[i]);
    } else {
      out.observations.col(col) = out.final_observations.col(col);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Observation normalization

struct NormalizerState {
  Vector mean;
  Vector sum_sq_dev;  // running sum of squared deviations from the mean
  double count = 0.0;

  NormalizerState() = default;
  explicit NormalizerState(Eigen::Index dim) : mean(Vector::Zero(dim)), sum_sq_dev(Vector::Zero(dim)) {}

  Vector variance() const {
    if (count <= 0.0) return Vector::Ones(mean.size());
    return sum_sq_dev / count;
  }
};

inline constexpr double kMinStd = 1e-6;
inline constexpr double kNormClip = 10.0;

/// Parallel merge of the running moments with a batch (columns are samples).
inline NormalizerState normalizer_update(const NormalizerState& stats, const Matrix& batch) {
  if (batch.rows() != stats.mean.size()) throw ConfigError("normalizer_update: dimension mismatch");
  if (batch.cols() == 0) return stats;
  const double n_b = static_cast<double>(batch.cols());
  const Vector batch_mean = batch.rowwise().mean();
  const Vector batch_m2 = (batch.colwise() - batch_mean).rowwise().squaredNorm();
  NormalizerState out = stats;
  const double total = stats.count + n_b;
  const Vector delta = batch_mean - stats.mean;
  out.mean = stats.mean + delta * (n_b / total);
  out.sum_sq_dev = stats.sum_sq_dev + batch_m2 + delta.cwiseAbs2() * (stats.count * n_b / total);
  out.count = total;
  return out;
}

/// (obs - mean) / max(std, 1e-6), clipped to [-10, 10]. Identity before any update.
inline Matrix normalize(const NormalizerState& stats, const Matrix& obs) {
  if (stats.count <= 0.0) return obs;
  const Vector inv_std = stats.variance().cwiseSqrt().cwiseMax(kMinStd).cwiseInverse();
  Matrix out = (obs.colwise() - stats.mean).array().colwise() * inv_std.array();
  return out.cwiseMax(-kNormClip).cwiseMin(kNormClip);
}

inline Matrix denormalize(const NormalizerState& stats, const Matrix& obs_norm) {
  if (stats.count <= 0.0) return obs_norm;
  const Vector std = stats.variance().cwiseSqrt().cwiseMax(kMinStd);
  return (obs_norm.array().colwise() * std.array()).matrix().colwise() + stats.mean;
}

}  // namespace reppo::envs
