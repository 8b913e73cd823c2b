#pragma once

// Tanh-squashed diagonal Gaussian policy.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>

#include <Eigen/Dense>

#include "reppo/errors.hpp"
#include "reppo/random.hpp"

namespace reppo::policy {

using Vector = Eigen::VectorXd;

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

/// log(1 - tanh(z)^2) in the form 2 (log 2 - z - softplus(-2 z)), finite for every finite z.
inline double log_tanh_jacobian(double z) {
  return 2.0 * (std::numbers::ln2 - z - softplus(-2.0 * z));
}

inline double clamp_log_std(double raw) { return std::clamp(raw, kLogStdMin, kLogStdMax); }

namespace kernel {

// Per-dimension log density of the squashed variable, parameterized by pre_tanh.
inline double log_prob(double mean, double log_std, double z) {
  const double u = (z - mean) * std::exp(-log_std);
  return -0.5 * u * u - log_std - 0.5 * std::log(2.0 * std::numbers::pi) - log_tanh_jacobian(z);
}

// Partials of log_prob with z held fixed, and its partial in z.
struct LogProbPartials {
  double d_mean;
  double d_log_std;
  double d_pre_tanh;
};

inline LogProbPartials log_prob_partials(double mean, double log_std, double z) {
  const double inv_var = std::exp(-2.0 * log_std);
  const double diff = z - mean;
  return {diff * inv_var, diff * diff * inv_var - 1.0, -diff * inv_var + 2.0 * std::tanh(z)};
}

}  // namespace kernel

struct GaussianHead {
  Vector mean;
  Vector log_std;

  Eigen::Index dim() const { return mean.size(); }

  /// Builds a head from raw network outputs, clamping log_std into [-5, 2].
  static GaussianHead from_raw(const Vector& mean, const Vector& raw_log_std) {
    return {mean, raw_log_std.unaryExpr([](double v) { return clamp_log_std(v); })};
  }
};

struct ActionSample {
  Vector pre_tanh;
  Vector action;
  double log_prob = 0.0;
};

inline double log_prob(const GaussianHead& head, const Vector& pre_tanh) {
  if (pre_tanh.size() != head.dim() || head.log_std.size() != head.dim()) {
    throw ConfigError("log_prob: dimension mismatch");
  }
  double total = 0.0;
  for (Eigen::Index d = 0; d < head.dim(); ++d) {
    total += kernel::log_prob(head.mean[d], head.log_std[d], pre_tanh[d]);
  }
  return total;
}

/// Reparameterized draw: pre_tanh = mean + exp(log_std) * noise, action = tanh(pre_tanh).
inline ActionSample rsample(const GaussianHead& head, const Vector& noise) {
  if (noise.size() != head.dim()) throw ConfigError("rsample: noise dimension mismatch");
  ActionSample s;
  s.pre_tanh = head.mean.array() + head.log_std.array().exp() * noise.array();
  s.action = s.pre_tanh.array().tanh();
  s.log_prob = log_prob(head, s.pre_tanh);
  return s;
}

struct HeadGrad {
  Vector d_mean;
  Vector d_log_std;
};

/// Gradient of log_prob(head, z) in (mean, log_std) for a fixed z.
inline HeadGrad log_prob_grad(const GaussianHead& head, const Vector& pre_tanh) {
  HeadGrad g{Vector(head.dim()), Vector(head.dim())};
  for (Eigen::Index d = 0; d < head.dim(); ++d) {
    const auto p = kernel::log_prob_partials(head.mean[d], head.log_std[d], pre_tanh[d]);
    g.d_mean[d] = p.d_mean;
    g.d_log_std[d] = p.d_log_std;
  }
  return g;
}

/// Vector-Jacobian product of the reparameterized sample: gradient in
/// (mean, log_std) of <d_action, action> + d_log_prob * log_prob, where both
/// depend on the head through pre_tanh = mean + exp(log_std) * noise.
inline HeadGrad rsample_vjp(const GaussianHead& head, const Vector& noise, const Vector& d_action,
                            double d_log_prob) {
  HeadGrad g{Vector(head.dim()), Vector(head.dim())};
  for (Eigen::Index d = 0; d < head.dim(); ++d) {
    const double std_noise = std::exp(head.log_std[d]) * noise[d];
    const double z = head.mean[d] + std_noise;
    const auto p = kernel::log_prob_partials(head.mean[d], head.log_std[d], z);
    const double dz = d_action[d] * std::exp(log_tanh_jacobian(z)) + d_log_prob * p.d_pre_tanh;
    g.d_mean[d] = dz + d_log_prob * p.d_mean;
    g.d_log_std[d] = dz * std_noise + d_log_prob * p.d_log_std;
  }
  return g;
}

/// -(1/k) sum log_prob over k fresh draws.
inline double entropy_estimate(const GaussianHead& head, std::size_t k, Rng& rng) {
  if (k < 1) throw ConfigError("entropy_estimate: k must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector noise(head.dim());
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    for (Eigen::Index d = 0; d < head.dim(); ++d) noise[d] = normal(rng);
    sum += rsample(head, noise).log_prob;
  }
  return -sum / static_cast<double>(k);
}

/// (1/k) sum [log pi_behavior(z_j) - log pi_current(z_j)] over behavior draws.
/// The tanh Jacobian is common to both densities and cancels.
inline double forward_kl_estimate(const GaussianHead& behavior, const GaussianHead& current,
                                  std::span<const ActionSample> behavior_samples) {
  if (behavior_samples.empty()) throw ConfigError("forward_kl_estimate: no samples");
  double sum = 0.0;
  for (const ActionSample& s : behavior_samples) {
    sum += log_prob(behavior, s.pre_tanh) - log_prob(current, s.pre_tanh);
  }
  return sum / static_cast<double>(behavior_samples.size());
}

}  // namespace reppo::policy
