#pragma once

// Score-function vs pathwise gradient estimators on a static objective:
// maximize E_{x ~ N(mu, diag sigma^2)}[g(x)] with g the negated six-hump camel.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "reppo/config.hpp"
#include "reppo/errors.hpp"
#include "reppo/nn.hpp"
#include "reppo/random.hpp"

namespace reppo::lab {

using nn::Matrix;
using nn::RowVector;
using nn::Vector;
using Vec2 = Eigen::Vector2d;

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 1.0;
inline constexpr double kBoxX = 2.0;  // inputs and means live in [-2, 2] x [-1, 1]
inline constexpr double kBoxY = 1.0;

/// f(x, y) = (4 - 2.1x^2 + x^4/3)x^2 + xy + (-4 + 4y^2)y^2.
inline double camel(double x, double y) {
  const double x2 = x * x;
  const double y2 = y * y;
  return (4.0 - 2.1 * x2 + x2 * x2 / 3.0) * x2 + x * y + (-4.0 + 4.0 * y2) * y2;
}

inline Vec2 camel_grad(double x, double y) {
  const double x2 = x * x;
  return {8.0 * x - 8.4 * x2 * x + 2.0 * x2 * x2 * x + y, x - 8.0 * y + 16.0 * y * y * y};
}

/// Batched objective: values are 1 x n, gradients 2 x n for inputs 2 x n.
struct Objective {
  std::function<RowVector(const Matrix&)> values;
  std::function<Matrix(const Matrix&)> grads;
};

/// g = -camel.
inline Objective negated_camel() {
  return {[](const Matrix& x) {
            RowVector v(x.cols());
            for (Eigen::Index i = 0; i < x.cols(); ++i) v[i] = -camel(x(0, i), x(1, i));
            return v;
          },
          [](const Matrix& x) {
            Matrix g(2, x.cols());
            for (Eigen::Index i = 0; i < x.cols(); ++i) g.col(i) = -camel_grad(x(0, i), x(1, i));
            return g;
          }};
}

struct SearchDistribution {
  Vec2 mean = Vec2::Zero();
  Vec2 log_std = Vec2::Zero();

  Vec2 std() const { return log_std.array().exp(); }
  Matrix sample(const Matrix& noise) const {
    return (noise.array().colwise() * std().array()).matrix().colwise() + mean;
  }
};

struct DistGradient {
  Vec2 d_mean = Vec2::Zero();
  Vec2 d_log_std = Vec2::Zero();
};

/// Mean of (g(x_i) - baseline) * grad log N(x_i; mu, sigma) over the samples.
inline DistGradient score_gradient(const SearchDistribution& dist, const Matrix& samples,
                                   const RowVector& values, double baseline = 0.0) {
  DistGradient out;
  const Vec2 inv_var = (-2.0 * dist.log_std).array().exp();
  const double inv_n = 1.0 / static_cast<double>(samples.cols());
  for (Eigen::Index i = 0; i < samples.cols(); ++i) {
    const Vec2 diff = samples.col(i) - dist.mean;
    const double w = (values[i] - baseline) * inv_n;
    out.d_mean += w * diff.cwiseProduct(inv_var);
    out.d_log_std += w * (diff.cwiseAbs2().cwiseProduct(inv_var) - Vec2::Ones());
  }
  return out;
}

/// Reparameterized gradient of mean g(mu + sigma * eps) for the given noise.
inline DistGradient pathwise_gradient(const SearchDistribution& dist, const Objective& objective,
                                      const Matrix& noise) {
  const Matrix grads = objective.grads(dist.sample(noise));
  DistGradient out;
  const double inv_n = 1.0 / static_cast<double>(noise.cols());
  out.d_mean = grads.rowwise().sum() * inv_n;
  out.d_log_std = (grads.array() * noise.array()).rowwise().sum().matrix().cwiseProduct(dist.std()) * inv_n;
  return out;
}

/// Gradient ascent step with the mean kept inside the box and log_std clamped.
inline SearchDistribution ascend(const SearchDistribution& dist, const DistGradient& g, double lr) {
  SearchDistribution next;
  next.mean = dist.mean + lr * g.d_mean;
  next.mean[0] = std::clamp(next.mean[0], -kBoxX, kBoxX);
  next.mean[1] = std::clamp(next.mean[1], -kBoxY, kBoxY);
  next.log_std = (dist.log_std + lr * g.d_log_std).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  if (!next.mean.allFinite() || !next.log_std.allFinite()) throw NumericError("lab: non-finite distribution");
  return next;
}

/// Exponential running mean of observed objective values, used as a control variate.
struct RunningBaseline {
  double value = 0.0;
  bool initialized = false;
  double decay = 0.9;

  void update(double mean_value) {
    value = initialized ? decay * value + (1.0 - decay) * mean_value : mean_value;
    initialized = true;
  }
};

inline SearchDistribution score_gradient_step(const SearchDistribution& dist, const Objective& objective,
                                              std::size_t n_samples, double lr, Rng& rng,
                                              RunningBaseline* baseline = nullptr) {
  const Matrix x = dist.sample(standard_normal(2, static_cast<Eigen::Index>(n_samples), rng));
  const RowVector v = objective.values(x);
  const double b = baseline != nullptr && baseline->initialized ? baseline->value : 0.0;
  const DistGradient g = score_gradient(dist, x, v, b);
  if (baseline != nullptr) baseline->update(v.mean());
  return ascend(dist, g, lr);
}

inline SearchDistribution pathwise_step(const SearchDistribution& dist, const Objective& objective,
                                        std::size_t n_samples, double lr, Rng& rng) {
  const Matrix noise = standard_normal(2, static_cast<Eigen::Index>(n_samples), rng);
  return ascend(dist, pathwise_gradient(dist, objective, noise), lr);
}

// ---------------------------------------------------------------------------
// Surrogates

struct SurrogateDataset {
  Matrix inputs;     // 2 x n
  RowVector values;  // g(inputs)
};

/// Inputs uniform over the box, labelled with the true objective.
inline SurrogateDataset make_dataset(std::size_t n, Rng& rng) {
  SurrogateDataset d;
  d.inputs.resize(2, static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < d.inputs.cols(); ++i) {
    d.inputs(0, i) = uniform(rng, -kBoxX, kBoxX);
    d.inputs(1, i) = uniform(rng, -kBoxY, kBoxY);
  }
  d.values = negated_camel().values(d.inputs);
  return d;
}

inline nn::MlpSpec surrogate_spec(const config::LabConfig& c) {
  return {2, c.surrogate_hidden, 1, c.surrogate_layers, false};
}

inline double surrogate_mse(const nn::MlpParams& params, const SurrogateDataset& data) {
  return (nn::mlp_apply(params, data.inputs) - data.values).squaredNorm() /
         static_cast<double>(data.values.size());
}

struct SurrogateLoss {
  double loss = 0.0;
  nn::MlpGrads grads;
};

/// Mean squared error over the dataset and its parameter gradient.
inline SurrogateLoss surrogate_loss(const nn::MlpParams& params, const SurrogateDataset& data) {
  const double inv_n = 1.0 / static_cast<double>(data.values.size());
  auto fwd = nn::mlp_forward(params, data.inputs);
  const Matrix residual = fwd.output - data.values;
  SurrogateLoss out;
  out.loss = residual.squaredNorm() * inv_n;
  out.grads = std::move(nn::mlp_backward(params, fwd.cache, (2.0 * inv_n) * residual).grads);
  return out;
}

struct SurrogateFit {
  nn::MlpParams params;
  double train_loss = 0.0;
  std::size_t steps = 0;
};

/// Full-batch Adam on squared error with a linearly decaying step size. Stops
/// early once the training loss falls below 1e-10.
inline SurrogateFit fit_surrogate(const SurrogateDataset& data, const config::LabConfig& c, Rng& rng) {
  if (data.inputs.cols() == 0 || data.inputs.cols() != data.values.size()) {
    throw ConfigError("fit_surrogate: dataset is empty or inconsistent");
  }
  SurrogateFit fit{nn::init_mlp(surrogate_spec(c), rng), 0.0, 0};
  nn::AdamState opt(fit.params.flat().size());
  for (std::size_t step = 0; step < c.fit_steps; ++step) {
    auto l = surrogate_loss(fit.params, data);
    fit.train_loss = l.loss;
    if (fit.train_loss < 1e-10) break;
    const double frac = static_cast<double>(step) / static_cast<double>(c.fit_steps);
    nn::adam_step(opt, fit.params, l.grads, c.fit_lr * (1.0 - 0.99 * frac));
    fit.steps = step + 1;
  }
  fit.train_loss = surrogate_mse(fit.params, data);
  return fit;
}

inline Objective surrogate_objective(nn::MlpParams params) {
  auto shared = std::make_shared<nn::MlpParams>(std::move(params));
  return {[shared](const Matrix& x) -> RowVector { return nn::mlp_apply(*shared, x); },
          [shared](const Matrix& x) -> Matrix {
            auto fwd = nn::mlp_forward(*shared, x);
            return nn::mlp_backward(*shared, fwd.cache, Matrix::Ones(1, x.cols()), false).input_grad;
          }};
}

/// Root mean squared error of the surrogate against g on a regular grid over the box.
inline double grid_rmse(const Objective& surrogate, std::size_t per_axis = 41) {
  Matrix grid(2, static_cast<Eigen::Index>(per_axis * per_axis));
  for (std::size_t i = 0; i < per_axis; ++i) {
    for (std::size_t j = 0; j < per_axis; ++j) {
      const double u = static_cast<double>(i) / static_cast<double>(per_axis - 1);
      const double v = static_cast<double>(j) / static_cast<double>(per_axis - 1);
      grid.col(static_cast<Eigen::Index>(i * per_axis + j)) << -kBoxX + 2 * kBoxX * u, -kBoxY + 2 * kBoxY * v;
    }
  }
  const RowVector diff = surrogate.values(grid) - negated_camel().values(grid);
  return std::sqrt(diff.squaredNorm() / static_cast<double>(diff.size()));
}

// ---------------------------------------------------------------------------
// Comparison runs

enum class Method { score, pathwise_true, pathwise_weak, pathwise_strong };

inline constexpr std::array<Method, 4> kMethods = {Method::score, Method::pathwise_true,
                                                   Method::pathwise_weak, Method::pathwise_strong};

inline std::string method_name(Method m) {
  switch (m) {
    case Method::score: return "score_function";
    case Method::pathwise_true: return "pathwise_ground_truth";
    case Method::pathwise_weak: return "pathwise_weak_surrogate";
    case Method::pathwise_strong: return "pathwise_strong_surrogate";
  }
  return "?";
}

struct TracePoint {
  std::size_t step = 0;
  SearchDistribution dist;
  double objective = 0.0;  // E[g] under dist, common random numbers
};

struct Trace {
  Method method = Method::score;
  std::vector<TracePoint> points;
};

/// E[g(x)] with a fixed set of standard-normal draws shared by every call.
inline double expected_objective(const SearchDistribution& dist) {
  static const Matrix noise = [] {
    Rng rng = make_rng(0x0b1ec7, 0);
    return standard_normal(2, 4096, rng);
  }();
  return negated_camel().values(dist.sample(noise)).mean();
}

inline SearchDistribution initial_distribution(const config::LabConfig& c) {
  SearchDistribution d;
  d.mean << c.init_mean_x, c.init_mean_y;
  d.log_std.setConstant(c.init_log_std);
  return d;
}

struct Surrogates {
  SurrogateFit weak;
  SurrogateFit strong;
};

inline Surrogates fit_surrogates(const config::LabConfig& c, std::uint64_t seed) {
  Rng weak_data = make_rng(seed, 11);
  Rng strong_data = make_rng(seed, 12);
  Rng weak_init = make_rng(seed, 13);
  Rng strong_init = make_rng(seed, 14);
  return {fit_surrogate(make_dataset(c.weak_size, weak_data), c, weak_init),
          fit_surrogate(make_dataset(c.strong_size, strong_data), c, strong_init)};
}

/// All four methods from the same start with equal lr and samples per step.
inline std::vector<Trace> run_comparison(const config::LabConfig& c, std::uint64_t seed,
                                         const Surrogates& surrogates) {
  c.validate();
  const Objective truth = negated_camel();
  const Objective weak = surrogate_objective(surrogates.weak.params);
  const Objective strong = surrogate_objective(surrogates.strong.params);
  std::vector<Trace> traces;
  for (std::size_t k = 0; k < kMethods.size(); ++k) {
    const Method m = kMethods[k];
    Rng rng = make_rng(seed, 20 + k);
    RunningBaseline baseline{0.0, false, c.baseline_decay};
    SearchDistribution dist = initial_distribution(c);
    Trace tr{m, {}};
    tr.points.push_back({0, dist, expected_objective(dist)});
    for (std::size_t step = 1; step <= c.n_iterations; ++step) {
      switch (m) {
        case Method::score:
          dist = score_gradient_step(dist, truth, c.n_samples, c.lr, rng, c.score_baseline ? &baseline : nullptr);
          break;
        case Method::pathwise_true: dist = pathwise_step(dist, truth, c.n_samples, c.lr, rng); break;
        case Method::pathwise_weak: dist = pathwise_step(dist, weak, c.n_samples, c.lr, rng); break;
        case Method::pathwise_strong: dist = pathwise_step(dist, strong, c.n_samples, c.lr, rng); break;
      }
      tr.points.push_back({step, dist, expected_objective(dist)});
    }
    traces.push_back(std::move(tr));
  }
  return traces;
}

/// Trace of the covariance of the mean-gradient estimate over `draws`
/// independent steps at a fixed distribution. The score baseline is the true
/// E[g] at that distribution, the fixed point of the running mean.
inline double mean_gradient_variance(Method m, const SearchDistribution& dist, const Objective& objective,
                                     std::size_t n_samples, std::size_t draws, bool baseline, Rng& rng) {
  Matrix samples(2, static_cast<Eigen::Index>(draws));
  const double b = baseline ? expected_objective(dist) : 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const Matrix noise = standard_normal(2, static_cast<Eigen::Index>(n_samples), rng);
    DistGradient g;
    if (m == Method::score) {
      const Matrix x = dist.sample(noise);
      g = score_gradient(dist, x, objective.values(x), b);
    } else {
      g = pathwise_gradient(dist, objective, noise);
    }
    samples.col(static_cast<Eigen::Index>(i)) = g.d_mean;
  }
  const Matrix centered = samples.colwise() - samples.rowwise().mean();
  return centered.squaredNorm() / static_cast<double>(draws - 1);
}

struct MethodSummary {
  Method method = Method::score;
  double mean_final_objective = 0.0;
  std::vector<double> final_objectives;  // per seed
};

struct LabSummary {
  std::vector<MethodSummary> methods;
  double score_variance = 0.0;
  double pathwise_variance = 0.0;
  double weak_rmse = 0.0;    // seed-averaged
  double strong_rmse = 0.0;
  std::vector<Trace> first_seed_traces;

  const MethodSummary& at(Method m) const {
    for (const auto& s : methods) {
      if (s.method == m) return s;
    }
    throw ConfigError("lab: unknown method");
  }
};

inline LabSummary run_lab(const config::LabConfig& c) {
  c.validate();
  LabSummary out;
  for (Method m : kMethods) out.methods.push_back({m, 0.0, {}});
  for (std::size_t s = 0; s < c.n_seeds; ++s) {
    const std::uint64_t seed = c.seed + s;
    const Surrogates sur = fit_surrogates(c, seed);
    out.weak_rmse += grid_rmse(surrogate_objective(sur.weak.params));
    out.strong_rmse += grid_rmse(surrogate_objective(sur.strong.params));
    auto traces = run_comparison(c, seed, sur);
    for (std::size_t k = 0; k < traces.size(); ++k) {
      const double final = traces[k].points.back().objective;
      out.methods[k].final_objectives.push_back(final);
      out.methods[k].mean_final_objective += final / static_cast<double>(c.n_seeds);
    }
    if (s == 0) out.first_seed_traces = std::move(traces);
  }
  out.weak_rmse /= static_cast<double>(c.n_seeds);
  out.strong_rmse /= static_cast<double>(c.n_seeds);
  Rng rng = make_rng(c.seed, 99);
  const SearchDistribution ref = initial_distribution(c);
  out.score_variance = mean_gradient_variance(Method::score, ref, negated_camel(), c.n_samples,
                                              c.variance_draws, c.score_baseline, rng);
  out.pathwise_variance = mean_gradient_variance(Method::pathwise_true, ref, negated_camel(), c.n_samples,
                                                 c.variance_draws, false, rng);
  return out;
}

// ---------------------------------------------------------------------------
// Output

inline std::string traces_csv(const std::vector<Trace>& traces) {
  std::string out = "method,step,mean_x,mean_y,log_std_x,log_std_y,objective\n";
  char buf[256];
  for (const Trace& t : traces) {
    for (const TracePoint& p : t.points) {
      std::snprintf(buf, sizeof(buf), "%s,%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", method_name(t.method).c_str(),
                    p.step, p.dist.mean[0], p.dist.mean[1], p.dist.log_std[0], p.dist.log_std[1], p.objective);
      out += buf;
    }
  }
  return out;
}

/// Objective heat map over the box with each method's mean path drawn on top.
inline std::string paths_svg(const std::vector<Trace>& traces, int width = 640) {
  const int height = width / 2;
  const int cells_x = 80;
  const int cells_y = 40;
  const double cw = static_cast<double>(width) / cells_x;
  const double ch = static_cast<double>(height) / cells_y;
  const auto px = [&](double x) { return (x + kBoxX) / (2 * kBoxX) * width; };
  const auto py = [&](double y) { return (kBoxY - y) / (2 * kBoxY) * height; };
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
                    "\" height=\"" + std::to_string(height) + "\">\n";
  char buf[256];
  for (int i = 0; i < cells_x; ++i) {
    for (int j = 0; j < cells_y; ++j) {
      const double x = -kBoxX + (i + 0.5) * 2 * kBoxX / cells_x;
      const double y = kBoxY - (j + 0.5) * 2 * kBoxY / cells_y;
      // Map g in [-6, 1.1] to a grey ramp; clipped below.
      const double g = std::clamp(-camel(x, y), -6.0, 1.1);
      const int shade = static_cast<int>(40 + 200 * (g + 6.0) / 7.1);
      std::snprintf(buf, sizeof(buf), "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"rgb(%d,%d,%d)\"/>\n",
                    i * cw, j * ch, cw + 0.5, ch + 0.5, shade, shade, shade);
      svg += buf;
    }
  }
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"};
  for (std::size_t k = 0; k < traces.size(); ++k) {
    svg += "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" + std::string(kColors[k % 4]) + "\" points=\"";
    for (const TracePoint& p : traces[k].points) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(p.dist.mean[0]), py(p.dist.mean[1]));
      svg += buf;
    }
    svg += "\"><title>" + method_name(traces[k].method) + "</title></polyline>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace reppo::lab
