#pragma once

// Histogram-loss value regression with Gaussian smoothing (HL-Gauss).

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "reppo/errors.hpp"

namespace reppo::hl_gauss {

using Vector = Eigen::VectorXd;

struct HlGaussSpec {
  double vmin = -1.0;
  double vmax = 1.0;
  std::size_t num_bins = 2;
  double sigma = 1.0;

  /// Smoothing width defaults to 0.75 bin widths.
  static HlGaussSpec with_default_sigma(double vmin, double vmax, std::size_t num_bins) {
    HlGaussSpec s{vmin, vmax, num_bins, 1.0};
    s.sigma = 0.75 * s.bin_width();
    return s;
  }

  void validate() const {
    if (!(vmin < vmax)) throw ConfigError("hl_gauss: vmin must be < vmax");
    if (num_bins < 2) throw ConfigError("hl_gauss: num_bins must be >= 2");
    if (!(sigma > 0.0)) throw ConfigError("hl_gauss: sigma must be > 0");
  }

  double bin_width() const { return (vmax - vmin) / static_cast<double>(num_bins); }
  double edge(std::size_t i) const { return vmin + static_cast<double>(i) * bin_width(); }
  double center(std::size_t i) const { return vmin + (static_cast<double>(i) + 0.5) * bin_width(); }
};

inline Vector bin_centers(const HlGaussSpec& spec) {
  Vector c(static_cast<Eigen::Index>(spec.num_bins));
  for (std::size_t i = 0; i < spec.num_bins; ++i) c[static_cast<Eigen::Index>(i)] = spec.center(i);
  return c;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Gaussian N(y, sigma) integrated over each bin; the first and last bins
/// absorb the tails beyond [vmin, vmax]. Renormalized to sum to one.
inline Vector project_target(double y, const HlGaussSpec& spec) {
  const auto n = static_cast<Eigen::Index>(spec.num_bins);
  Vector cdf(n + 1);
  cdf[0] = 0.0;
  cdf[n] = 1.0;
  for (Eigen::Index i = 1; i < n; ++i) {
    cdf[i] = normal_cdf((spec.edge(static_cast<std::size_t>(i)) - y) / spec.sigma);
  }
  Vector mass = cdf.tail(n) - cdf.head(n);
  return mass / mass.sum();
}

inline Vector softmax(const Vector& logits) {
  const Vector shifted = (logits.array() - logits.maxCoeff()).exp();
  return shifted / shifted.sum();
}

inline Vector log_softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

struct CrossEntropy {
  double loss = 0.0;
  Vector grad_logits;
};

/// -sum_i target_i * log softmax(logits)_i with gradient softmax(logits) - target.
inline CrossEntropy hl_cross_entropy(const Vector& logits, const Vector& target) {
  if (logits.size() != target.size()) throw ConfigError("hl_cross_entropy: length mismatch");
  const double total = target.sum();
  if (std::abs(total - 1.0) > 1e-6) {
    throw ContractViolation("hl_cross_entropy: target sums to " + std::to_string(total));
  }
  CrossEntropy out;
  // Zero-mass bins contribute nothing even where log softmax is -inf.
  const Vector lp = log_softmax(logits);
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    if (target[i] > 0.0) out.loss -= target[i] * lp[i];
  }
  out.grad_logits = softmax(logits) - target;
  return out;
}

inline double expected_value(const Vector& logits, const HlGaussSpec& spec) {
  if (static_cast<std::size_t>(logits.size()) != spec.num_bins) {
    throw ConfigError("expected_value: logits length does not match bin count");
  }
  return softmax(logits).dot(bin_centers(spec));
}

}  // namespace reppo::hl_gauss
