#pragma once

// Entropy-augmented rewards and TD(lambda) state-action targets.
//
// Tensors are [n_envs x n_steps]. next_soft_value(e, t) holds V_{t+1}, the
// critic's value at the successor state of step t with a fresh behavior action.
// `dones` marks true terminations (no bootstrap). `truncated` marks time-limit
// resets: the episode ends for the lambda chain but V_{t+1} is still used,
// exactly as at the rollout horizon.

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "reppo/errors.hpp"

namespace reppo::returns {

using Matrix = Eigen::MatrixXd;
using Flags = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct TrajectoryTensor {
  Matrix rewards;          // already augmented when fed to the target computations
  Matrix next_log_prob;
  Matrix next_soft_value;
  Flags dones;
  Flags truncated;         // may be left empty: treated as all false

  Eigen::Index n_envs() const { return rewards.rows(); }
  Eigen::Index n_steps() const { return rewards.cols(); }

  bool is_truncated(Eigen::Index e, Eigen::Index t) const {
    return truncated.size() != 0 && truncated(e, t);
  }

  void validate() const {
    const auto same = [&](Eigen::Index r, Eigen::Index c) {
      return r == rewards.rows() && c == rewards.cols();
    };
    if (!same(next_soft_value.rows(), next_soft_value.cols()) || !same(dones.rows(), dones.cols())) {
      throw ConfigError("trajectory: tensors must share the [n_envs x n_steps] shape");
    }
    if (next_log_prob.size() != 0 && !same(next_log_prob.rows(), next_log_prob.cols())) {
      throw ConfigError("trajectory: next_log_prob shape mismatch");
    }
    if (truncated.size() != 0 && !same(truncated.rows(), truncated.cols())) {
      throw ConfigError("trajectory: truncated shape mismatch");
    }
    if (!rewards.allFinite() || !next_soft_value.allFinite()) {
      throw NumericError("trajectory: non-finite rewards or values");
    }
  }
};

using LambdaTargets = Matrix;

/// r - alpha * log pi(a_{t+1} | x_{t+1}), with the bonus dropped on terminal steps.
inline Matrix augment_rewards(const Matrix& rewards, const Matrix& next_log_prob,
                              const Flags& dones, double alpha) {
  if (alpha < 0.0) throw ConfigError("augment_rewards: alpha must be >= 0");
  if (rewards.rows() != next_log_prob.rows() || rewards.cols() != next_log_prob.cols() ||
      rewards.rows() != dones.rows() || rewards.cols() != dones.cols()) {
    throw ConfigError("augment_rewards: shape mismatch");
  }
  Matrix out = rewards;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      if (!dones(i, j)) out(i, j) -= alpha * next_log_prob(i, j);
    }
  }
  return out;
}

inline void check_discounts(double gamma, double lambda) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
}

/// Backward recursion
///   G_t = r_t + gamma (1 - d_t) (lambda G_{t+1} + (1 - lambda) V_{t+1}),
/// seeded with G_T := V_T at the horizon and at truncation boundaries.
inline LambdaTargets td_lambda_targets(const TrajectoryTensor& traj, double gamma, double lambda) {
  traj.validate();
  check_discounts(gamma, lambda);
  const Eigen::Index n_steps = traj.n_steps();
  LambdaTargets g(traj.n_envs(), n_steps);
  for (Eigen::Index e = 0; e < traj.n_envs(); ++e) {
    double next = 0.0;
    for (Eigen::Index t = n_steps - 1; t >= 0; --t) {
      const double v = traj.next_soft_value(e, t);
      const bool chain_ends = t == n_steps - 1 || traj.is_truncated(e, t);
      const double tail = chain_ends ? v : lambda * next + (1.0 - lambda) * v;
      const double continuation = traj.dones(e, t) ? 0.0 : gamma * tail;
      g(e, t) = traj.rewards(e, t) + continuation;
      next = g(e, t);
    }
  }
  return g;
}

/// Brute-force lambda-return: builds every n-step return explicitly and mixes
/// them with weights (1 - lambda) lambda^(n-1), the longest available return
/// taking the residual weight lambda^(N-1). Quadratic in T.
inline LambdaTargets nstep_oracle(const TrajectoryTensor& traj, double gamma, double lambda) {
  traj.validate();
  check_discounts(gamma, lambda);
  const Eigen::Index n_steps = traj.n_steps();
  LambdaTargets out(traj.n_envs(), n_steps);
  for (Eigen::Index e = 0; e < traj.n_envs(); ++e) {
    for (Eigen::Index t = 0; t < n_steps; ++t) {
      // Last index whose successor still belongs to the chain starting at t.
      Eigen::Index last = t;
      while (last < n_steps - 1 && !traj.dones(e, last) && !traj.is_truncated(e, last)) ++last;
      const Eigen::Index longest = last - t + 1;
      double mixed = 0.0;
      double discounted_rewards = 0.0;
      for (Eigen::Index n = 1; n <= longest; ++n) {
        const Eigen::Index k = t + n - 1;
        discounted_rewards += std::pow(gamma, static_cast<double>(n - 1)) * traj.rewards(e, k);
        const double bootstrap =
            traj.dones(e, k) ? 0.0 : std::pow(gamma, static_cast<double>(n)) * traj.next_soft_value(e, k);
        const double g_n = discounted_rewards + bootstrap;
        const double weight = n < longest
                                  ? (1.0 - lambda) * std::pow(lambda, static_cast<double>(n - 1))
                                  : std::pow(lambda, static_cast<double>(n - 1));
        mixed += weight * g_n;
      }
      out(e, t) = mixed;
    }
  }
  return out;
}

}  // namespace reppo::returns
