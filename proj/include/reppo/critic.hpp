#pragma once

// Q(x, a) = head(encoder(x, a)) with a latent self-prediction branch
// predictor(encoder(x, a)) regressed onto stored successor embeddings.

#include <cmath>
#include <cstddef>

#include <Eigen/Dense>

#include "reppo/errors.hpp"
#include "reppo/hl_gauss.hpp"
#include "reppo/nn.hpp"
#include "reppo/random.hpp"

namespace reppo::critic {

using nn::Matrix;
using nn::RowVector;
using nn::Vector;

struct CriticSpec {
  std::size_t obs_dim = 1;
  std::size_t action_dim = 1;
  std::size_t hidden_dim = 128;
  std::size_t encoder_layers = 2;
  std::size_t head_layers = 2;
  std::size_t predictor_layers = 2;
  bool use_layer_norm = true;
  bool use_hl_gauss = true;  // false: scalar head trained with squared error
  hl_gauss::HlGaussSpec support;

  nn::MlpSpec encoder() const {
    return {obs_dim + action_dim, hidden_dim, hidden_dim, encoder_layers, use_layer_norm};
  }
  nn::MlpSpec head() const {
    return {hidden_dim, hidden_dim, use_hl_gauss ? support.num_bins : 1, head_layers, use_layer_norm};
  }
  nn::MlpSpec predictor() const {
    return {hidden_dim, hidden_dim, hidden_dim, predictor_layers, use_layer_norm};
  }
};

struct CriticParams {
  nn::MlpParams encoder;
  nn::MlpParams head;
  nn::MlpParams predictor;
};

struct CriticGrads {
  nn::MlpGrads encoder;
  nn::MlpGrads head;
  nn::MlpGrads predictor;
};

inline CriticParams init_critic(const CriticSpec& spec, Rng& rng) {
  spec.support.validate();
  return {nn::init_mlp(spec.encoder(), rng), nn::init_mlp(spec.head(), rng),
          nn::init_mlp(spec.predictor(), rng)};
}

namespace detail {

inline Matrix join(const Matrix& obs, const Matrix& act) {
  if (obs.cols() != act.cols()) throw ConfigError("critic: observation/action batch mismatch");
  Matrix x(obs.rows() + act.rows(), obs.cols());
  x << obs, act;
  return x;
}

inline Matrix column_softmax(const Matrix& logits) {
  Matrix p = logits.rowwise() - logits.colwise().maxCoeff();
  p = p.array().exp();
  p.array().rowwise() /= p.colwise().sum().array();
  return p;
}

inline void check_dims(const CriticSpec& spec, const Matrix& obs, const Matrix& act) {
  if (static_cast<std::size_t>(obs.rows()) != spec.obs_dim ||
      static_cast<std::size_t>(act.rows()) != spec.action_dim) {
    throw ConfigError("critic: observation or action width does not match the critic");
  }
}

}  // namespace detail

struct CriticOutput {
  Matrix embedding;
  Matrix logits;
  RowVector q;
};

/// Scalar values from head outputs: the softmax expectation over bin centers,
/// or the raw output when the categorical head is disabled.
inline RowVector q_from_logits(const Matrix& logits, const CriticSpec& spec) {
  if (!spec.use_hl_gauss) return logits.row(0);
  return hl_gauss::bin_centers(spec.support).transpose() * detail::column_softmax(logits);
}

inline CriticOutput critic_forward(const CriticParams& params, const CriticSpec& spec,
                                   const Matrix& obs, const Matrix& act) {
  detail::check_dims(spec, obs, act);
  CriticOutput out;
  out.embedding = nn::mlp_apply(params.encoder, detail::join(obs, act));
  out.logits = nn::mlp_apply(params.head, out.embedding);
  out.q = q_from_logits(out.logits, spec);
  return out;
}

/// psi = encoder(x_next, a_next), detached.
inline Matrix target_embedding(const CriticParams& params, const CriticSpec& spec,
                               const Matrix& next_obs, const Matrix& next_act) {
  detail::check_dims(spec, next_obs, next_act);
  return nn::mlp_apply(params.encoder, detail::join(next_obs, next_act));
}

struct CriticBatch {
  Matrix observations;       // obs_dim x B
  Matrix actions;            // action_dim x B
  Vector targets;            // lambda targets, B
  Matrix target_embeddings;  // hidden_dim x B, constants
};

struct CriticLoss {
  double loss = 0.0;
  double value_loss = 0.0;
  double aux_loss = 0.0;
  CriticGrads grads;
};

/// Mean HL-Gauss cross-entropy against projected lambda targets plus
/// aux_mult times the mean squared self-prediction error.
inline CriticLoss critic_loss(const CriticParams& params, const CriticSpec& spec,
                              const CriticBatch& batch, double aux_mult) {
  detail::check_dims(spec, batch.observations, batch.actions);
  const Eigen::Index b = batch.observations.cols();
  if (batch.targets.size() != b) throw ConfigError("critic_loss: target count mismatch");
  if (!batch.targets.allFinite()) throw NumericError("critic_loss: non-finite targets");
  const bool use_aux = aux_mult != 0.0;
  if (use_aux && (batch.target_embeddings.cols() != b ||
                  static_cast<std::size_t>(batch.target_embeddings.rows()) != spec.hidden_dim)) {
    throw ConfigError("critic_loss: target embedding shape mismatch");
  }
  const double inv_b = 1.0 / static_cast<double>(b);

  auto enc = nn::mlp_forward(params.encoder, detail::join(batch.observations, batch.actions));
  const Matrix& embedding = enc.output;
  auto head = nn::mlp_forward(params.head, embedding);

  CriticLoss out;
  Matrix d_logits(head.output.rows(), b);
  if (spec.use_hl_gauss) {
    const Matrix probs = detail::column_softmax(head.output);
    for (Eigen::Index i = 0; i < b; ++i) {
      const Vector target = hl_gauss::project_target(batch.targets[i], spec.support);
      const Vector logp = hl_gauss::log_softmax(head.output.col(i));
      out.value_loss -= target.dot(logp);
      d_logits.col(i) = (probs.col(i) - target) * inv_b;
    }
  } else {
    for (Eigen::Index i = 0; i < b; ++i) {
      const double diff = head.output(0, i) - batch.targets[i];
      out.value_loss += diff * diff;
      d_logits(0, i) = 2.0 * diff * inv_b;
    }
  }
  out.value_loss *= inv_b;

  auto head_back = nn::mlp_backward(params.head, head.cache, d_logits);
  Matrix d_embedding = std::move(head_back.input_grad);
  out.grads.head = std::move(head_back.grads);

  if (use_aux) {
    auto pred = nn::mlp_forward(params.predictor, embedding);
    const Matrix residual = pred.output - batch.target_embeddings;
    out.aux_loss = residual.squaredNorm() * inv_b;
    auto pred_back = nn::mlp_backward(params.predictor, pred.cache, (2.0 * aux_mult * inv_b) * residual);
    d_embedding += pred_back.input_grad;
    out.grads.predictor = std::move(pred_back.grads);
  } else {
    out.grads.predictor = nn::MlpGrads(spec.predictor());
  }

  out.grads.encoder = std::move(nn::mlp_backward(params.encoder, enc.cache, d_embedding).grads);
  out.loss = out.value_loss + aux_mult * out.aux_loss;
  if (!std::isfinite(out.loss)) throw NumericError("critic_loss: non-finite loss");
  return out;
}

struct ActionValueGrad {
  RowVector q;
  Matrix d_action;  // dQ/da per column
};

/// Q(x, a) and its gradient with respect to the action input. No parameter
/// gradients are formed.
inline ActionValueGrad q_action_gradient(const CriticParams& params, const CriticSpec& spec,
                                         const Matrix& obs, const Matrix& act) {
  detail::check_dims(spec, obs, act);
  auto enc = nn::mlp_forward(params.encoder, detail::join(obs, act));
  auto head = nn::mlp_forward(params.head, enc.output);
  ActionValueGrad out;
  Matrix d_logits;
  if (spec.use_hl_gauss) {
    const Matrix probs = detail::column_softmax(head.output);
    const Vector centers = hl_gauss::bin_centers(spec.support);
    out.q = centers.transpose() * probs;
    d_logits = (probs.array().colwise() * centers.array()).matrix() -
               (probs.array().rowwise() * out.q.array()).matrix();
  } else {
    out.q = head.output.row(0);
    d_logits = Matrix::Ones(1, obs.cols());
  }
  const Matrix d_embedding = nn::mlp_backward(params.head, head.cache, d_logits, false).input_grad;
  const Matrix d_input = nn::mlp_backward(params.encoder, enc.cache, d_embedding, false).input_grad;
  out.d_action = d_input.bottomRows(static_cast<Eigen::Index>(spec.action_dim));
  return out;
}

}  // namespace reppo::critic
