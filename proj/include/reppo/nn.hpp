#pragma once

// Reverse-mode multilayer perceptrons over column batches (features x batch).
//
// A hidden block is linear -> optional layer norm -> silu; the last layer is
// linear only. Parameters live in one contiguous vector so optimizers,
// clipping and finite differences can treat a network as a flat array.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "reppo/errors.hpp"
#include "reppo/random.hpp"

namespace reppo::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline constexpr double kLayerNormEps = 1e-5;

enum class Activation { silu };

struct MlpSpec {
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 1;
  std::size_t output_dim = 1;
  std::size_t num_layers = 1;
  bool use_layer_norm = false;
  Activation activation = Activation::silu;

  void validate() const {
    if (num_layers < 1) throw ConfigError("mlp: num_layers must be >= 1");
    if (input_dim < 1 || hidden_dim < 1 || output_dim < 1) {
      throw ConfigError("mlp: all dimensions must be >= 1");
    }
  }
  std::size_t layer_input(std::size_t l) const { return l == 0 ? input_dim : hidden_dim; }
  std::size_t layer_output(std::size_t l) const {
    return l + 1 == num_layers ? output_dim : hidden_dim;
  }
  bool normalized(std::size_t l) const { return use_layer_norm && l + 1 < num_layers; }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct ParamTag {};
struct GradTag {};

/// Flat storage for one network's weights, biases and layer-norm affine terms.
/// Instantiated twice so parameters and gradients cannot be mixed up.
template <class Tag>
class MlpTensor {
 public:
  MlpTensor() = default;

  explicit MlpTensor(const MlpSpec& spec) : spec_(spec) {
    spec.validate();
    std::size_t offset = 0;
    for (std::size_t l = 0; l < spec.num_layers; ++l) {
      Slots s;
      s.rows = spec.layer_output(l);
      s.cols = spec.layer_input(l);
      s.weight = offset;
      offset += s.rows * s.cols;
      s.bias = offset;
      offset += s.rows;
      if (spec.normalized(l)) {
        s.scale = offset;
        offset += s.rows;
        s.shift = offset;
        offset += s.rows;
      }
      slots_.push_back(s);
    }
    data_ = Vector::Zero(static_cast<Eigen::Index>(offset));
  }

  template <class Other>
  static MlpTensor zeros_like(const MlpTensor<Other>& other) {
    return MlpTensor(other.spec());
  }

  const MlpSpec& spec() const { return spec_; }
  std::size_t num_layers() const { return slots_.size(); }
  Eigen::Index size() const { return data_.size(); }

  Vector& flat() { return data_; }
  const Vector& flat() const { return data_; }

  Eigen::Map<Matrix> weight(std::size_t l) {
    const auto& s = slots_.at(l);
    return {data_.data() + s.weight, idx(s.rows), idx(s.cols)};
  }
  Eigen::Map<const Matrix> weight(std::size_t l) const {
    const auto& s = slots_.at(l);
    return {data_.data() + s.weight, idx(s.rows), idx(s.cols)};
  }
  Eigen::Map<Vector> bias(std::size_t l) { return segment(slots_.at(l).bias, l); }
  Eigen::Map<const Vector> bias(std::size_t l) const { return segment(slots_.at(l).bias, l); }
  Eigen::Map<Vector> ln_scale(std::size_t l) { return segment(normalized_slot(l).scale, l); }
  Eigen::Map<const Vector> ln_scale(std::size_t l) const {
    return segment(normalized_slot(l).scale, l);
  }
  Eigen::Map<Vector> ln_offset(std::size_t l) { return segment(normalized_slot(l).shift, l); }
  Eigen::Map<const Vector> ln_offset(std::size_t l) const {
    return segment(normalized_slot(l).shift, l);
  }

  bool all_finite() const { return data_.allFinite(); }

 private:
  struct Slots {
    std::size_t rows = 0, cols = 0;
    std::size_t weight = 0, bias = 0, scale = 0, shift = 0;
  };

  static Eigen::Index idx(std::size_t n) { return static_cast<Eigen::Index>(n); }

  const Slots& normalized_slot(std::size_t l) const {
    if (!spec_.normalized(l)) throw ConfigError("mlp: layer " + std::to_string(l) + " has no layer norm");
    return slots_.at(l);
  }
  Eigen::Map<Vector> segment(std::size_t offset, std::size_t l) {
    return {data_.data() + offset, idx(slots_[l].rows)};
  }
  Eigen::Map<const Vector> segment(std::size_t offset, std::size_t l) const {
    return {data_.data() + offset, idx(slots_[l].rows)};
  }

  MlpSpec spec_;
  Vector data_;
  std::vector<Slots> slots_;
};

using MlpParams = MlpTensor<ParamTag>;
using MlpGrads = MlpTensor<GradTag>;

// ---------------------------------------------------------------------------
// Elementwise pieces

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
inline double silu(double z) { return z * sigmoid(z); }
inline double silu_grad(double z) {
  const double s = sigmoid(z);
  return s * (1.0 + z * (1.0 - s));
}

namespace detail {

inline Matrix silu(const Matrix& z) {
  return z.unaryExpr([](double v) { return nn::silu(v); });
}

inline Matrix silu_grad(const Matrix& z) {
  return z.unaryExpr([](double v) { return nn::silu_grad(v); });
}

// Column-wise standardization with population variance.
inline void standardize(const Matrix& z, Matrix& normalized, RowVector& inv_std) {
  const double n = static_cast<double>(z.rows());
  const RowVector mean = z.colwise().sum() / n;
  normalized = z.rowwise() - mean;
  const RowVector var = normalized.array().square().colwise().sum() / n;
  inv_std = (var.array() + kLayerNormEps).rsqrt();
  normalized.array().rowwise() *= inv_std.array();
}

// Gradient through standardize given dL/d(normalized).
inline Matrix standardize_backward(const Matrix& d_normalized, const Matrix& normalized,
                                   const RowVector& inv_std) {
  const double n = static_cast<double>(normalized.rows());
  const RowVector sum_d = d_normalized.colwise().sum();
  const RowVector sum_dx = (d_normalized.array() * normalized.array()).colwise().sum();
  Matrix out = (d_normalized * n).rowwise() - sum_d;
  out.array() -= normalized.array().rowwise() * sum_dx.array();
  out.array().rowwise() *= (inv_std / n).array();
  return out;
}

}  // namespace detail

/// scale * (x - mean) / sqrt(var + 1e-5) + offset over the feature axis.
inline Vector layer_norm(const Vector& x, const Vector& scale, const Vector& offset) {
  if (x.size() != scale.size() || x.size() != offset.size()) {
    throw ConfigError("layer_norm: dimension mismatch");
  }
  Matrix normalized;
  RowVector inv_std;
  detail::standardize(x, normalized, inv_std);
  return scale.cwiseProduct(normalized.col(0)) + offset;
}

// ---------------------------------------------------------------------------
// Forward / backward

struct LayerCache {
  Matrix input;           // in x B
  Matrix normalized;      // out x B, standardized pre-affine (layer norm only)
  RowVector inv_std;      // per column (layer norm only)
  Matrix pre_activation;  // silu input (hidden layers only)
};

struct ForwardCache {
  MlpSpec spec;
  std::vector<LayerCache> layers;
  Eigen::Index batch() const { return layers.empty() ? 0 : layers.front().input.cols(); }
};

struct ForwardResult {
  Matrix output;
  ForwardCache cache;
};

struct BackwardResult {
  MlpGrads grads;
  Matrix input_grad;
};

namespace detail {

inline void check_input(const MlpSpec& spec, const Matrix& x, const char* where) {
  if (static_cast<std::size_t>(x.rows()) != spec.input_dim) {
    throw ConfigError(std::string(where) + ": input has " + std::to_string(x.rows()) +
                      " rows, network expects " + std::to_string(spec.input_dim));
  }
  if (!x.allFinite()) throw NumericError(std::string(where) + ": non-finite input");
}

}  // namespace detail

inline ForwardResult mlp_forward(const MlpParams& params, const Matrix& x) {
  const MlpSpec& spec = params.spec();
  detail::check_input(spec, x, "mlp_forward");
  ForwardResult result;
  result.cache.spec = spec;
  result.cache.layers.resize(spec.num_layers);
  Matrix h = x;
  for (std::size_t l = 0; l < spec.num_layers; ++l) {
    LayerCache& c = result.cache.layers[l];
    c.input = std::move(h);
    Matrix z = params.weight(l) * c.input;
    z.colwise() += params.bias(l);
    if (l + 1 == spec.num_layers) {
      result.output = std::move(z);
      break;
    }
    if (spec.normalized(l)) {
      detail::standardize(z, c.normalized, c.inv_std);
      z = (c.normalized.array().colwise() * params.ln_scale(l).array()).colwise() +
          params.ln_offset(l).array();
    }
    h = detail::silu(z);
    c.pre_activation = std::move(z);
  }
  return result;
}

/// Forward pass without keeping activations.
inline Matrix mlp_apply(const MlpParams& params, const Matrix& x) {
  const MlpSpec& spec = params.spec();
  detail::check_input(spec, x, "mlp_apply");
  Matrix h = x;
  Matrix normalized;
  RowVector inv_std;
  for (std::size_t l = 0; l < spec.num_layers; ++l) {
    Matrix z = params.weight(l) * h;
    z.colwise() += params.bias(l);
    if (l + 1 == spec.num_layers) return z;
    if (spec.normalized(l)) {
      detail::standardize(z, normalized, inv_std);
      z = (normalized.array().colwise() * params.ln_scale(l).array()).colwise() +
          params.ln_offset(l).array();
    }
    h = detail::silu(z);
  }
  return h;
}

/// Exact reverse-mode derivatives of <upstream, output>. With
/// `param_grads == false` only the input gradient is produced.
inline BackwardResult mlp_backward(const MlpParams& params, const ForwardCache& cache,
                                   const Matrix& upstream, bool param_grads = true) {
  const MlpSpec& spec = params.spec();
  if (!(cache.spec == spec) || cache.layers.size() != spec.num_layers) {
    throw ConfigError("mlp_backward: cache was produced by a different network");
  }
  if (static_cast<std::size_t>(upstream.rows()) != spec.output_dim ||
      upstream.cols() != cache.batch()) {
    throw ConfigError("mlp_backward: upstream shape does not match forward output");
  }
  BackwardResult result;
  if (param_grads) result.grads = MlpGrads(spec);
  Matrix g = upstream;
  for (std::size_t step = 0; step < spec.num_layers; ++step) {
    const std::size_t l = spec.num_layers - 1 - step;
    const LayerCache& c = cache.layers[l];
    if (l + 1 < spec.num_layers) {
      g.array() *= detail::silu_grad(c.pre_activation).array();
      if (spec.normalized(l)) {
        if (param_grads) {
          result.grads.ln_scale(l) = (g.array() * c.normalized.array()).rowwise().sum();
          result.grads.ln_offset(l) = g.rowwise().sum();
        }
        const Matrix d_normalized = g.array().colwise() * params.ln_scale(l).array();
        g = detail::standardize_backward(d_normalized, c.normalized, c.inv_std);
      }
    }
    if (param_grads) {
      result.grads.weight(l).noalias() = g * c.input.transpose();
      result.grads.bias(l) = g.rowwise().sum();
    }
    g = params.weight(l).transpose() * g;
  }
  result.input_grad = std::move(g);
  return result;
}

// ---------------------------------------------------------------------------
// Initialization

/// Scaled-uniform init: weights ~ U(-a, a) with a = gain * sqrt(3 / fan_in)
/// (variance gain^2 / fan_in). The last layer uses `final_gain`. Biases and
/// layer-norm offsets start at 0, layer-norm scales at 1.
inline MlpParams init_mlp(const MlpSpec& spec, Rng& rng, double final_gain = 1.0) {
  MlpParams params(spec);
  for (std::size_t l = 0; l < spec.num_layers; ++l) {
    const double gain = l + 1 == spec.num_layers ? final_gain : 1.0;
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(spec.layer_input(l)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto w = params.weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    }
    if (spec.normalized(l)) params.ln_scale(l).setOnes();
  }
  return params;
}

// ---------------------------------------------------------------------------
// Optimization

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  std::int64_t step = 0;
  AdamConfig config;

  AdamState() = default;
  explicit AdamState(Eigen::Index size, AdamConfig cfg = {})
      : first_moment(Vector::Zero(size)), second_moment(Vector::Zero(size)), config(cfg) {}
};

/// One bias-corrected Adam step. Rejects non-finite gradients before touching
/// either the parameters or the optimizer state.
inline void adam_step(AdamState& state, Vector& params, const Vector& grads, double lr) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size()) {
    throw ConfigError("adam_step: shape mismatch");
  }
  if (!grads.allFinite()) throw NumericError("adam_step: non-finite gradient");
  const AdamConfig& c = state.config;
  state.step += 1;
  state.first_moment = c.beta1 * state.first_moment + (1.0 - c.beta1) * grads;
  state.second_moment = c.beta2 * state.second_moment + (1.0 - c.beta2) * grads.cwiseAbs2();
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  params.array() -= lr * (state.first_moment.array() / correction1) /
                    ((state.second_moment.array() / correction2).sqrt() + c.eps);
}

inline void adam_step(AdamState& state, MlpParams& params, const MlpGrads& grads, double lr) {
  if (!(params.spec() == grads.spec())) throw ConfigError("adam_step: network mismatch");
  adam_step(state, params.flat(), grads.flat(), lr);
}

inline double global_norm(std::initializer_list<const Vector*> blocks) {
  double sq = 0.0;
  for (const Vector* b : blocks) sq += b->squaredNorm();
  return std::sqrt(sq);
}

/// Rescales all blocks jointly so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_grad_norm(std::initializer_list<Vector*> blocks, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_grad_norm: max_norm must be > 0");
  double sq = 0.0;
  for (const Vector* b : blocks) sq += b->squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (Vector* b : blocks) *b *= scale;
  }
  return norm;
}

inline double clip_grad_norm(MlpGrads& grads, double max_norm) {
  return clip_grad_norm({&grads.flat()}, max_norm);
}

// ---------------------------------------------------------------------------
// Verification

/// Max over coordinates of |analytic - numeric| / max(1e-8, |numeric|), where
/// numeric is the fourth-order five-point central difference with step eps.
template <class LossFn>
double finite_diff_check(LossFn&& loss_fn, const Vector& params, const Vector& analytic,
                         double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite_diff_check: eps must be > 0");
  if (analytic.size() != params.size()) throw ConfigError("finite_diff_check: shape mismatch");
  Vector probe = params;
  double worst = 0.0;
  const auto at = [&](Eigen::Index i, double offset) {
    probe[i] = params[i] + offset;
    const double v = loss_fn(static_cast<const Vector&>(probe));
    if (!std::isfinite(v)) {
      throw NumericError("finite_diff_check: non-finite loss at coordinate " + std::to_string(i));
    }
    return v;
  };
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double numeric =
        (at(i, -2.0 * eps) - 8.0 * at(i, -eps) + 8.0 * at(i, eps) - at(i, 2.0 * eps)) / (12.0 * eps);
    probe[i] = params[i];
    const double err = std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace reppo::nn
