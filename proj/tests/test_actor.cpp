#include <cmath>

#include <gtest/gtest.h>

#include "grad_checks.hpp"
#include "reppo/actor.hpp"

using namespace reppo;
using namespace reppo::actor;
using checks::ActorInstance;
using checks::evaluate;
using checks::random_actor_instance;

namespace {

// Sampled forward KL of the actor `params` against the stored behavior samples.
double batch_kl(const ActorInstance& in, const nn::MlpParams& params) {
  const auto heads = actor_heads(params, in.batch.observations);
  double kl = 0.0;
  for (Eigen::Index i = 0; i < in.batch.observations.cols(); ++i) {
    const policy::GaussianHead behavior{in.batch.behavior_mean.col(i), in.batch.behavior_log_std.col(i)};
    const Vector z = in.batch.behavior_pre_tanh.col(i);
    kl += policy::log_prob(behavior, z) - policy::log_prob(heads.at(i), z);
  }
  return kl / static_cast<double>(in.batch.observations.cols());
}

void set_duals(ActorInstance& in, double log_value) {
  in.duals.log_alpha = log_value;
  in.duals.log_beta = log_value;
}

}  // namespace

TEST(ActorInit, SmallOutputs) {
  Rng rng = make_rng(1);
  const ActorSpec spec{3, 2, 16, 3, true};
  const auto p = init_actor(spec, rng);
  const auto heads = actor_heads(p, standard_normal(3, 32, rng));
  EXPECT_LT(heads.mean.cwiseAbs().maxCoeff(), 0.5);
  EXPECT_EQ(heads.mean.rows(), 2);
}

TEST(PolicyLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_LT(checks::actor_fd_error(seed, LossVariant::lagrangian), 1e-5) << seed;
    EXPECT_LT(checks::actor_fd_error(seed, LossVariant::clipped), 1e-5) << seed;
  }
}

TEST(PolicyLoss, VanishingDualsLeavePurePathwiseTerm) {
  ActorInstance in = random_actor_instance(3);

  // Direct composition: dQ/da -> da/d(mean, log_std) -> actor backprop.
  auto fwd = nn::mlp_forward(in.actor, in.batch.observations);
  const auto heads = split_heads(fwd.output);
  const Eigen::Index b = in.batch.observations.cols();
  const Matrix z = heads.mean.array() + heads.log_std.array().exp() * in.noise.array();
  const auto qa = critic::q_action_gradient(in.critic, in.critic_spec, in.batch.observations, z.array().tanh());
  Matrix upstream(4, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index k = 0; k < 2; ++k) {
      const double t = std::tanh(z(k, i));
      const double dz = -qa.d_action(k, i) * (1.0 - t * t) / static_cast<double>(b);
      upstream(k, i) = dz;
      upstream(2 + k, i) = dz * std::exp(heads.log_std(k, i)) * in.noise(k, i);
    }
  }
  const Vector direct = nn::mlp_backward(in.actor, fwd.cache, upstream).grads.flat();

  // e^-40 is below double resolution relative to the pathwise term.
  set_duals(in, -40.0);
  auto l = evaluate(in, in.actor, LossVariant::lagrangian);
  EXPECT_NEAR(l.loss, -l.mean_q, 1e-12);
  EXPECT_LT((direct - l.grads.flat()).cwiseAbs().maxCoeff(), 1e-10);

  // At the stored clamp the coefficients are e^-20 ~ 2e-9, so the entropy and
  // KL terms still leave a residue of that order.
  set_duals(in, kLogDualMin);
  l = evaluate(in, in.actor, LossVariant::lagrangian);
  EXPECT_LT((direct - l.grads.flat()).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(PolicyLoss, NoKlContributionWhenActorIsBehavior) {
  ActorInstance in = random_actor_instance(4);
  const auto heads = actor_heads(in.actor, in.batch.observations);
  in.batch.behavior_mean = heads.mean;
  in.batch.behavior_log_std = heads.log_std;
  const auto with_kl = evaluate(in, in.actor, LossVariant::lagrangian);
  EXPECT_EQ(with_kl.mean_kl, 0.0);
  const auto without = policy_loss(in.actor, in.critic, in.critic_spec, in.batch, in.duals, in.noise, false);
  EXPECT_NEAR(with_kl.loss, without.loss, 1e-14);
}

TEST(PolicyLoss, CriticIsReadOnly) {
  ActorInstance in = random_actor_instance(5);
  const auto before = checks::flatten(in.critic);
  (void)evaluate(in, in.actor, LossVariant::lagrangian);
  EXPECT_EQ(checks::flatten(in.critic), before);
}

TEST(ClippedLoss, AllWithinTargetDropsKlTerm) {
  ActorInstance in = random_actor_instance(6);
  in.duals.kl_target = 1e9;
  const auto clipped = evaluate(in, in.actor, LossVariant::clipped);
  const auto plain = policy_loss(in.actor, in.critic, in.critic_spec, in.batch, in.duals, in.noise, false);
  EXPECT_EQ(clipped.kl_branch_rows, 0u);
  EXPECT_NEAR(clipped.loss, plain.loss, 1e-14);
  EXPECT_LT((clipped.grads.flat() - plain.grads.flat()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ClippedLoss, AllViolatingOnlyShrinksKl) {
  ActorInstance in = random_actor_instance(7);
  in.duals.kl_target = -1e9;
  const auto l = evaluate(in, in.actor, LossVariant::clipped);
  EXPECT_EQ(l.kl_branch_rows, static_cast<std::size_t>(in.batch.observations.cols()));
  EXPECT_NEAR(l.loss, in.duals.beta() * batch_kl(in, in.actor), 1e-12);
  // A small descent step along the gradient lowers the sampled KL.
  nn::MlpParams stepped = in.actor;
  stepped.flat() -= 1e-3 * l.grads.flat() / l.grads.flat().norm();
  EXPECT_LT(batch_kl(in, stepped), batch_kl(in, in.actor));
}

TEST(ClippedLoss, LossIsRowwiseRecomposition) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ActorInstance in = random_actor_instance(20 + seed, 12);
    in.duals.kl_target = evaluate(in, in.actor, LossVariant::lagrangian).mean_kl;
    const auto clipped = evaluate(in, in.actor, LossVariant::clipped);
    // Evaluate each row alone under the Lagrangian loss with the unused terms zeroed.
    double expected = 0.0;
    const Eigen::Index b = in.batch.observations.cols();
    for (Eigen::Index i = 0; i < b; ++i) {
      ActorInstance row = in;
      row.batch.observations = in.batch.observations.col(i);
      row.batch.behavior_mean = in.batch.behavior_mean.col(i);
      row.batch.behavior_log_std = in.batch.behavior_log_std.col(i);
      row.batch.behavior_pre_tanh = in.batch.behavior_pre_tanh.col(i);
      row.noise = in.noise.col(i);
      const double kl = batch_kl(row, row.actor);
      if (kl >= in.duals.kl_target) {
        expected += in.duals.beta() * kl;
      } else {
        expected += policy_loss(row.actor, row.critic, row.critic_spec, row.batch, row.duals, row.noise, false).loss;
      }
    }
    EXPECT_NEAR(clipped.loss, expected / static_cast<double>(b), 1e-12);
    EXPECT_GT(clipped.kl_branch_rows, 0u);
    EXPECT_LT(clipped.kl_branch_rows, static_cast<std::size_t>(b));
  }
}

TEST(PolicyLoss, LargerBetaReducesKlIncreasingComponent) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ActorInstance in = random_actor_instance(40 + seed);
    // Gradient of the sampled KL by finite differences, independent of the loss code.
    Vector kl_grad(in.actor.flat().size());
    for (Eigen::Index j = 0; j < kl_grad.size(); ++j) {
      nn::MlpParams up = in.actor, down = in.actor;
      up.flat()[j] += 1e-5;
      down.flat()[j] -= 1e-5;
      kl_grad[j] = (batch_kl(in, up) - batch_kl(in, down)) / 2e-5;
    }
    const Vector g_low = evaluate(in, in.actor, LossVariant::lagrangian).grads.flat();
    in.duals.log_beta += 1.0;
    const Vector g_high = evaluate(in, in.actor, LossVariant::lagrangian).grads.flat();
    // The descent step -g moves KL by -g . grad KL; raising beta makes that smaller.
    EXPECT_LT(-g_high.dot(kl_grad), -g_low.dot(kl_grad)) << seed;
  }
}

TEST(DualUpdate, FixedPointAtTargets) {
  DualState d;
  d.log_alpha = -1.3;
  d.log_beta = 0.4;
  d.entropy_target = 0.5;
  d.kl_target = 0.1;
  const DualState n = dual_update(d, 0.5, 0.1);
  EXPECT_EQ(n.log_alpha, d.log_alpha);
  EXPECT_EQ(n.log_beta, d.log_beta);
}

TEST(DualUpdate, Directions) {
  DualState d;
  d.entropy_target = 0.5;
  d.lr_alpha = d.lr_beta = 0.1;
  EXPECT_GT(dual_update(d, 0.0, 0.1).log_alpha, d.log_alpha);
  EXPECT_LT(dual_update(d, 1.0, 0.1).log_alpha, d.log_alpha);
  EXPECT_GT(dual_update(d, 0.5, 0.5).log_beta, d.log_beta);
  EXPECT_LT(dual_update(d, 0.5, 0.0).log_beta, d.log_beta);
  EXPECT_EQ(dual_update(d, 0.5, 0.5, false).log_beta, d.log_beta);
  // Exact rule.
  EXPECT_DOUBLE_EQ(dual_update(d, 0.2, 0.1).log_alpha, d.log_alpha - 0.1 * d.alpha() * (0.2 - 0.5));
}

TEST(DualUpdate, ClampedAndPositive) {
  DualState d;
  d.log_alpha = 4.99;
  d.log_beta = -19.9999999;
  d.lr_alpha = d.lr_beta = 10.0;
  const DualState n = dual_update(d, -100.0, -100.0);
  EXPECT_EQ(n.log_alpha, kLogDualMax);
  EXPECT_EQ(n.log_beta, kLogDualMin);
  EXPECT_GT(n.beta(), 0.0);
  EXPECT_THROW(dual_update(d, std::nan(""), 0.0), NumericError);
}

TEST(DualUpdate, ConvergesInLinearEntropyModel) {
  // Synthetic plant: entropy responds linearly to the coefficient.
  DualState d;
  d.entropy_target = 0.5;
  d.lr_alpha = 1.0;
  const auto plant = [](double alpha) { return -1.0 + 2.0 * alpha; };
  for (int i = 0; i < 2000; ++i) d = dual_update(d, plant(d.alpha()), d.kl_target);
  EXPECT_LT(std::abs(plant(d.alpha()) - 0.5), 0.05 * 0.5);
}
