#pragma once

// Pathwise policy objective with entropy and forward-KL terms, and the
// log-space dual updates that keep entropy and KL near their targets.
//
// Per state i, with a_i = tanh(mean + std * eps_i) drawn from the current
// policy and z_i the stored behavior pre-tanh sample:
//   l_i = -Q(x_i, a_i) + e^alpha log pi(a_i|x_i)
//         + e^beta [log pi'(z_i|x_i) - log pi(z_i|x_i)]
// The clipped variant keeps only the first two terms while the sampled KL is
// below target, and only the KL term otherwise.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "reppo/critic.hpp"
#include "reppo/errors.hpp"
#include "reppo/nn.hpp"
#include "reppo/policy.hpp"
#include "reppo/random.hpp"

namespace reppo::actor {

using nn::Matrix;
using nn::RowVector;
using nn::Vector;

inline constexpr double kPolicyHeadGain = 0.01;
inline constexpr double kLogDualMin = -20.0;
inline constexpr double kLogDualMax = 5.0;

struct ActorSpec {
  std::size_t obs_dim = 1;
  std::size_t action_dim = 1;
  std::size_t hidden_dim = 128;
  std::size_t num_layers = 3;
  bool use_layer_norm = true;

  /// Outputs [mean; raw log_std], each action_dim rows.
  nn::MlpSpec mlp() const {
    return {obs_dim, hidden_dim, 2 * action_dim, num_layers, use_layer_norm};
  }
};

inline nn::MlpParams init_actor(const ActorSpec& spec, Rng& rng) {
  return nn::init_mlp(spec.mlp(), rng, kPolicyHeadGain);
}

struct HeadBatch {
  Matrix mean;         // d x B
  Matrix raw_log_std;  // d x B, before clamping
  Matrix log_std;      // d x B, clamped to [-5, 2]

  policy::GaussianHead at(Eigen::Index i) const { return {mean.col(i), log_std.col(i)}; }
};

inline HeadBatch split_heads(const Matrix& out) {
  const Eigen::Index d = out.rows() / 2;
  HeadBatch h;
  h.mean = out.topRows(d);
  h.raw_log_std = out.bottomRows(d);
  h.log_std = h.raw_log_std.unaryExpr([](double v) { return policy::clamp_log_std(v); });
  return h;
}

inline HeadBatch actor_heads(const nn::MlpParams& params, const Matrix& obs) {
  return split_heads(nn::mlp_apply(params, obs));
}

struct DualState {
  double log_alpha = std::log(0.01);
  double log_beta = std::log(0.01);
  double entropy_target = 0.0;
  double kl_target = 0.1;
  double lr_alpha = 3e-4;
  double lr_beta = 3e-4;

  double alpha() const { return std::exp(log_alpha); }
  double beta() const { return std::exp(log_beta); }
};

/// Gradient root-finding step in log space. alpha grows while entropy is below
/// target; beta grows while the KL exceeds its target.
inline DualState dual_update(const DualState& duals, double mean_entropy, double mean_kl,
                             bool update_beta = true) {
  if (!std::isfinite(mean_entropy) || !std::isfinite(mean_kl)) {
    throw NumericError("dual_update: non-finite entropy or KL");
  }
  DualState next = duals;
  next.log_alpha = std::clamp(
      duals.log_alpha - duals.lr_alpha * duals.alpha() * (mean_entropy - duals.entropy_target),
      kLogDualMin, kLogDualMax);
  if (update_beta) {
    next.log_beta = std::clamp(
        duals.log_beta + duals.lr_beta * duals.beta() * (mean_kl - duals.kl_target), kLogDualMin,
        kLogDualMax);
  }
  return next;
}

struct ActorBatch {
  Matrix observations;       // obs_dim x B
  Matrix behavior_mean;      // d x B
  Matrix behavior_log_std;   // d x B (clamped)
  Matrix behavior_pre_tanh;  // d x B
};

enum class LossVariant { lagrangian, clipped };

struct PolicyLoss {
  double loss = 0.0;
  double mean_entropy = 0.0;  // -mean log pi of the fresh samples
  double mean_kl = 0.0;       // mean sampled forward KL
  double mean_q = 0.0;
  std::size_t kl_branch_rows = 0;  // clipped variant: rows using the KL branch
  nn::MlpGrads grads;
};

namespace detail {

inline PolicyLoss policy_objective(const nn::MlpParams& actor, const critic::CriticParams& critic,
                                   const critic::CriticSpec& critic_spec, const ActorBatch& batch,
                                   const DualState& duals, const Matrix& noise, LossVariant variant,
                                   bool use_kl) {
  const Eigen::Index b = batch.observations.cols();
  const Eigen::Index d = static_cast<Eigen::Index>(critic_spec.action_dim);
  if (noise.rows() != d || noise.cols() != b || batch.behavior_pre_tanh.rows() != d ||
      batch.behavior_pre_tanh.cols() != b || batch.behavior_mean.cols() != b ||
      batch.behavior_log_std.cols() != b) {
    throw ConfigError("policy_loss: batch shapes do not match");
  }
  if (actor.spec().output_dim != static_cast<std::size_t>(2 * d)) {
    throw ConfigError("policy_loss: actor output width must be 2 x action_dim");
  }
  auto fwd = nn::mlp_forward(actor, batch.observations);
  const HeadBatch heads = split_heads(fwd.output);

  Matrix pre_tanh = heads.mean.array() + heads.log_std.array().exp() * noise.array();
  const Matrix action = pre_tanh.array().tanh();
  const auto qa = critic::q_action_gradient(critic, critic_spec, batch.observations, action);

  const double alpha = duals.alpha();
  const double beta = use_kl ? duals.beta() : 0.0;
  const double inv_b = 1.0 / static_cast<double>(b);

  PolicyLoss out;
  Matrix upstream(2 * d, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    double log_prob = 0.0;
    double kl = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      log_prob += policy::kernel::log_prob(heads.mean(k, i), heads.log_std(k, i), pre_tanh(k, i));
      const double zb = batch.behavior_pre_tanh(k, i);
      kl += policy::kernel::log_prob(batch.behavior_mean(k, i), batch.behavior_log_std(k, i), zb) -
            policy::kernel::log_prob(heads.mean(k, i), heads.log_std(k, i), zb);
    }
    double w_q = 1.0, w_ent = alpha, w_kl = beta;
    if (variant == LossVariant::clipped) {
      if (use_kl && kl >= duals.kl_target) {
        w_q = 0.0;
        w_ent = 0.0;
        ++out.kl_branch_rows;
      } else {
        w_kl = 0.0;
      }
    }
    // 0 * (-inf) guards: a zero weight drops the term entirely.
    double row = 0.0;
    if (w_q != 0.0) row -= w_q * qa.q[i];
    if (w_ent != 0.0) row += w_ent * log_prob;
    if (w_kl != 0.0) row += w_kl * kl;
    out.loss += row * inv_b;
    out.mean_entropy -= log_prob * inv_b;
    out.mean_kl += kl * inv_b;
    out.mean_q += qa.q[i] * inv_b;

    for (Eigen::Index k = 0; k < d; ++k) {
      const double mean = heads.mean(k, i);
      const double log_std = heads.log_std(k, i);
      const double z = pre_tanh(k, i);
      const double std_noise = std::exp(log_std) * noise(k, i);
      const auto fresh = policy::kernel::log_prob_partials(mean, log_std, z);
      const double d_action = -w_q * qa.d_action(k, i);
      const double dz = d_action * std::exp(policy::log_tanh_jacobian(z)) + w_ent * fresh.d_pre_tanh;
      double d_mean = dz + w_ent * fresh.d_mean;
      double d_log_std = dz * std_noise + w_ent * fresh.d_log_std;
      if (w_kl != 0.0) {
        const auto anchor =
            policy::kernel::log_prob_partials(mean, log_std, batch.behavior_pre_tanh(k, i));
        d_mean -= w_kl * anchor.d_mean;
        d_log_std -= w_kl * anchor.d_log_std;
      }
      const double raw = heads.raw_log_std(k, i);
      const bool inside = raw > policy::kLogStdMin && raw < policy::kLogStdMax;
      upstream(k, i) = d_mean * inv_b;
      upstream(d + k, i) = inside ? d_log_std * inv_b : 0.0;
    }
  }
  if (!std::isfinite(out.loss)) throw NumericError("policy_loss: non-finite loss");
  out.grads = std::move(nn::mlp_backward(actor, fwd.cache, upstream).grads);
  return out;
}

}  // namespace detail

/// Lagrangian objective. Critic parameters are read only; the gradient reaches
/// the actor through dQ/da, the fresh-sample log density, and the current
/// density of the stored behavior samples.
inline PolicyLoss policy_loss(const nn::MlpParams& actor, const critic::CriticParams& critic,
                              const critic::CriticSpec& critic_spec, const ActorBatch& batch,
                              const DualState& duals, const Matrix& noise, bool use_kl = true) {
  return detail::policy_objective(actor, critic, critic_spec, batch, duals, noise,
                                  LossVariant::lagrangian, use_kl);
}

/// Per-state switch between the return/entropy terms and the KL term.
inline PolicyLoss clipped_policy_loss(const nn::MlpParams& actor, const critic::CriticParams& critic,
                                      const critic::CriticSpec& critic_spec, const ActorBatch& batch,
                                      const DualState& duals, const Matrix& noise,
                                      bool use_kl = true) {
  return detail::policy_objective(actor, critic, critic_spec, batch, duals, noise,
                                  LossVariant::clipped, use_kl);
}

}  // namespace reppo::actor
