#include <cmath>

#include <gtest/gtest.h>

#include "grad_checks.hpp"
#include "reppo/critic.hpp"
#include "reppo/hl_gauss.hpp"

using namespace reppo;
using namespace reppo::critic;
using checks::random_critic;
using checks::random_critic_batch;
using checks::small_critic_spec;

TEST(CriticForward, ZeroWeightsGiveSupportMidpoint) {
  const auto spec = small_critic_spec();
  CriticParams p{nn::MlpParams(spec.encoder()), nn::MlpParams(spec.head()), nn::MlpParams(spec.predictor())};
  Rng rng = make_rng(1);
  const auto out = critic_forward(p, spec, standard_normal(3, 4, rng), Matrix::Zero(2, 4));
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(out.q[i], 0.0, 1e-12);
}

TEST(CriticForward, QIsExpectedValueOfLogits) {
  const auto spec = small_critic_spec();
  Rng rng = make_rng(2);
  for (int seed = 0; seed < 10; ++seed) {
    const auto p = random_critic(spec, rng);
    const auto out = critic_forward(p, spec, standard_normal(3, 5, rng), standard_normal(2, 5, rng));
    for (Eigen::Index i = 0; i < 5; ++i) {
      EXPECT_NEAR(out.q[i], hl_gauss::expected_value(out.logits.col(i), spec.support), 1e-12);
      EXPECT_GE(out.q[i], spec.support.vmin);
      EXPECT_LE(out.q[i], spec.support.vmax);
    }
  }
}

TEST(CriticForward, RejectsWrongShapes) {
  const auto spec = small_critic_spec();
  Rng rng = make_rng(3);
  const auto p = random_critic(spec, rng);
  EXPECT_THROW(critic_forward(p, spec, Matrix::Zero(2, 4), Matrix::Zero(2, 4)), ConfigError);
  EXPECT_THROW(critic_forward(p, spec, Matrix::Zero(3, 4), Matrix::Zero(2, 3)), ConfigError);
}

TEST(TargetEmbedding, MatchesForwardEmbeddingBits) {
  const auto spec = small_critic_spec();
  Rng rng = make_rng(4);
  const auto p = random_critic(spec, rng);
  const Matrix x = standard_normal(3, 7, rng), a = standard_normal(2, 7, rng);
  EXPECT_TRUE((target_embedding(p, spec, x, a).array() == critic_forward(p, spec, x, a).embedding.array()).all());
}

TEST(TargetEmbedding, DependsOnAction) {
  const auto spec = small_critic_spec();
  Rng rng = make_rng(5);
  for (int i = 0; i < 10; ++i) {
    const auto p = random_critic(spec, rng);
    const Matrix x = standard_normal(3, 1, rng), a = standard_normal(2, 1, rng);
    const Matrix a2 = a.array() + 0.1;
    EXPECT_GT((target_embedding(p, spec, x, a) - target_embedding(p, spec, x, a2)).norm(), 0.0);
  }
}

TEST(TargetEmbedding, ZeroEncoderWeightsGiveBiasPattern) {
  const auto spec = small_critic_spec(false);
  Rng rng = make_rng(6);
  auto p = random_critic(spec, rng);
  const auto& enc = spec.encoder();
  for (std::size_t l = 0; l < enc.num_layers; ++l) p.encoder.weight(l).setZero();
  const Matrix a = target_embedding(p, spec, standard_normal(3, 1, rng), standard_normal(2, 1, rng));
  const Matrix b = target_embedding(p, spec, standard_normal(3, 1, rng), standard_normal(2, 1, rng));
  EXPECT_EQ(a, b);
}

TEST(CriticLoss, PureCrossEntropyWithoutAux) {
  const auto spec = small_critic_spec();
  Rng rng = make_rng(7);
  const auto p = random_critic(spec, rng);
  const auto batch = random_critic_batch(spec, 5, rng);
  const auto l = critic_loss(p, spec, batch, 0.0);
  const auto out = critic_forward(p, spec, batch.observations, batch.actions);
  double expected = 0.0;
  for (Eigen::Index i = 0; i < 5; ++i) {
    expected += hl_gauss::hl_cross_entropy(out.logits.col(i), hl_gauss::project_target(batch.targets[i], spec.support)).loss;
  }
  EXPECT_NEAR(l.loss, expected / 5.0, 1e-12);
  EXPECT_EQ(l.grads.predictor.flat().cwiseAbs().maxCoeff(), 0.0);
}

TEST(CriticLoss, AuxVanishesWhenPredictorMatches) {
  const auto spec = small_critic_spec();
  Rng rng = make_rng(8);
  const auto p = random_critic(spec, rng);
  auto batch = random_critic_batch(spec, 5, rng);
  const auto out = critic_forward(p, spec, batch.observations, batch.actions);
  batch.target_embeddings = nn::mlp_apply(p.predictor, out.embedding);
  const auto l = critic_loss(p, spec, batch, 1.0);
  EXPECT_NEAR(l.aux_loss, 0.0, 1e-24);
  EXPECT_NEAR(l.loss, l.value_loss, 1e-12);
  batch.target_embeddings.array() += 0.1;
  EXPECT_GT(critic_loss(p, spec, batch, 1.0).aux_loss, 0.0);
}

TEST(CriticLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_LT(checks::critic_fd_error(seed), 1e-5) << seed;
    EXPECT_LT(checks::critic_fd_error(seed, false, true, 0.5), 1e-5) << seed;
    EXPECT_LT(checks::critic_fd_error(seed, true, false), 1e-5) << seed;
  }
}

TEST(CriticLoss, AdamFitsFrozenBatch) {
  // The cross-entropy floor is the entropy of the projected targets, so the
  // fit is measured on the excess loss above it.
  const auto spec = small_critic_spec();
  Rng rng = make_rng(9);
  auto p = random_critic(spec, rng);
  const auto batch = random_critic_batch(spec, 16, rng);
  double floor = 0.0;
  for (Eigen::Index i = 0; i < 16; ++i) {
    for (double q : hl_gauss::project_target(batch.targets[i], spec.support)) {
      if (q > 0.0) floor -= q * std::log(q) / 16.0;
    }
  }
  const double initial = critic_loss(p, spec, batch, 1.0).loss - floor;
  nn::AdamState se(p.encoder.flat().size()), sh(p.head.flat().size()), sp(p.predictor.flat().size());
  for (int step = 0; step < 1000; ++step) {
    const auto l = critic_loss(p, spec, batch, 1.0);
    nn::adam_step(se, p.encoder, l.grads.encoder, 3e-3);
    nn::adam_step(sh, p.head, l.grads.head, 3e-3);
    nn::adam_step(sp, p.predictor, l.grads.predictor, 3e-3);
  }
  EXPECT_LT(critic_loss(p, spec, batch, 1.0).loss - floor, 0.1 * initial);
}

TEST(QActionGradient, MatchesFiniteDifferencesInAction) {
  Rng rng = make_rng(10);
  for (bool hl : {true, false}) {
    const auto spec = small_critic_spec(true, hl);
    for (int i = 0; i < 10; ++i) {
      const auto p = random_critic(spec, rng);
      const Matrix x = standard_normal(3, 1, rng);
      const Matrix a = standard_normal(2, 1, rng);
      const auto g = q_action_gradient(p, spec, x, a);
      EXPECT_NEAR(g.q[0], critic_forward(p, spec, x, a).q[0], 1e-12);
      auto loss = [&](const Vector& v) { return critic_forward(p, spec, x, v).q[0]; };
      const Vector analytic = g.d_action.col(0);
      EXPECT_LT(nn::finite_diff_check(loss, a.col(0), analytic, 1e-3), 1e-6);
    }
  }
}

TEST(CriticLoss, RejectsBadBatch) {
  const auto spec = small_critic_spec();
  Rng rng = make_rng(11);
  const auto p = random_critic(spec, rng);
  auto batch = random_critic_batch(spec, 4, rng);
  batch.targets[2] = std::nan("");
  EXPECT_THROW(critic_loss(p, spec, batch, 1.0), NumericError);
  batch = random_critic_batch(spec, 4, rng);
  batch.target_embeddings = Matrix::Zero(3, 4);
  EXPECT_THROW(critic_loss(p, spec, batch, 1.0), ConfigError);
  EXPECT_NO_THROW(critic_loss(p, spec, batch, 0.0));
}
