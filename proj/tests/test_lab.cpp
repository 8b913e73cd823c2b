#include <cmath>

#include <gtest/gtest.h>

#include "grad_checks.hpp"
#include "reppo/estimator_lab.hpp"

using namespace reppo;
using namespace reppo::lab;

TEST(Camel, KnownGlobalMinima) {
  // Six-hump camel minima, tabulated to four decimals in optimization benchmarks.
  EXPECT_NEAR(camel(0.0898, -0.7126), -1.0316, 1e-4);
  EXPECT_NEAR(camel(-0.0898, 0.7126), -1.0316, 1e-4);
  EXPECT_LT(camel_grad(0.08984201, -0.71265640).norm(), 1e-5);
  EXPECT_EQ(camel(0.0, 0.0), 0.0);
}

TEST(Camel, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(1);
  for (int i = 0; i < 50; ++i) {
    Vector p(2);
    p << uniform(rng, -kBoxX, kBoxX), uniform(rng, -kBoxY, kBoxY);
    const auto f = [](const Vector& v) { return camel(v[0], v[1]); };
    EXPECT_LT(nn::finite_diff_check(f, p, camel_grad(p[0], p[1]), 1e-3), 1e-6);
  }
}

TEST(Estimators, BothUnbiasedForTheSameGradient) {
  SearchDistribution dist;
  dist.mean << 0.4, -0.3;
  dist.log_std << -1.0, -1.5;
  const Objective g = negated_camel();
  Rng rng = make_rng(2);

  // Reference: pathwise with a very large sample.
  const DistGradient ref = pathwise_gradient(dist, g, standard_normal(2, 2'000'000, rng));

  const int draws = 20000;
  Matrix score(4, draws), path(4, draws);
  for (int i = 0; i < draws; ++i) {
    const Matrix noise = standard_normal(2, 5, rng);
    const Matrix x = dist.sample(noise);
    const DistGradient s = score_gradient(dist, x, g.values(x), 0.0);
    const DistGradient p = pathwise_gradient(dist, g, noise);
    score.col(i) << s.d_mean, s.d_log_std;
    path.col(i) << p.d_mean, p.d_log_std;
  }
  Vector want(4);
  want << ref.d_mean, ref.d_log_std;
  for (const Matrix* m : {&score, &path}) {
    const Vector mean = m->rowwise().mean();
    const Vector se = ((m->colwise() - mean).rowwise().squaredNorm() / (draws - 1.0)).cwiseSqrt() /
                      std::sqrt(static_cast<double>(draws));
    for (Eigen::Index k = 0; k < 4; ++k) EXPECT_LT(std::abs(mean[k] - want[k]), 5.0 * se[k] + 1e-3) << k;
  }
}

TEST(Estimators, ScoreOfConstantObjectiveIsZeroWithMatchingBaseline) {
  SearchDistribution dist;
  Rng rng = make_rng(3);
  const Matrix x = dist.sample(standard_normal(2, 7, rng));
  const RowVector v = RowVector::Constant(7, 2.5);
  const DistGradient g = score_gradient(dist, x, v, 2.5);
  EXPECT_EQ(g.d_mean, Vec2::Zero());
  EXPECT_EQ(g.d_log_std, Vec2::Zero());
}

TEST(Estimators, PathwiseVarianceFarBelowScore) {
  const config::LabConfig c;
  Rng rng = make_rng(4);
  const auto dist = initial_distribution(c);
  const double vs = mean_gradient_variance(Method::score, dist, negated_camel(), 5, 5000, true, rng);
  const double vp = mean_gradient_variance(Method::pathwise_true, dist, negated_camel(), 5, 5000, false, rng);
  EXPECT_LE(vp, vs / 5.0);
}

TEST(Ascend, KeepsMeanInBoxAndClampsScale) {
  SearchDistribution d;
  DistGradient g;
  g.d_mean << 100.0, -100.0;
  g.d_log_std << 100.0, -100.0;
  const auto n = ascend(d, g, 1.0);
  EXPECT_EQ(n.mean[0], kBoxX);
  EXPECT_EQ(n.mean[1], -kBoxY);
  EXPECT_EQ(n.log_std[0], kLogStdMax);
  EXPECT_EQ(n.log_std[1], kLogStdMin);
}

TEST(Surrogate, LossGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) EXPECT_LT(checks::surrogate_fd_error(seed), 1e-5) << seed;
}

TEST(Surrogate, InputGradientMatchesFiniteDifferences) {
  config::LabConfig c;
  Rng rng = make_rng(5);
  const Objective s = surrogate_objective(nn::init_mlp(surrogate_spec(c), rng));
  for (int i = 0; i < 10; ++i) {
    const Vector p = standard_normal(2, 1, rng);
    const auto f = [&](const Vector& v) { return s.values(v)[0]; };
    EXPECT_LT(nn::finite_diff_check(f, p, s.grads(p).col(0), 1e-3), 1e-6);
  }
}

TEST(Surrogate, MoreDataFitsBetter) {
  config::LabConfig c;
  c.fit_steps = 1500;
  const Surrogates s = fit_surrogates(c, 0);
  const double weak = grid_rmse(surrogate_objective(s.weak.params));
  const double strong = grid_rmse(surrogate_objective(s.strong.params));
  EXPECT_LT(strong, weak);
  // The weak fit interpolates its few points but still misses the function between them.
  EXPECT_LT(s.weak.train_loss, weak * weak);
}

TEST(Comparison, DeterministicAndStartsTogether) {
  config::LabConfig c;
  c.n_iterations = 20;
  c.fit_steps = 200;
  const Surrogates s = fit_surrogates(c, 1);
  const auto a = run_comparison(c, 1, s);
  const auto b = run_comparison(c, 1, s);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].points.size(), 21u);
    EXPECT_EQ(a[k].points.front().objective, a[0].points.front().objective);
    EXPECT_EQ(a[k].points.back().objective, b[k].points.back().objective);
  }
  const std::string csv = traces_csv(a);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 4 * 21);
}

TEST(Comparison, TruePathwiseImprovesObjective) {
  config::LabConfig c;
  c.fit_steps = 10;
  const auto traces = run_comparison(c, 2, fit_surrogates(c, 2));
  const auto& tr = traces[1];
  ASSERT_EQ(tr.method, Method::pathwise_true);
  EXPECT_GT(tr.points.back().objective, tr.points.front().objective);
}
