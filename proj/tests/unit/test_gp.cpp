#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "mixopt/errors.hpp"
#include "mixopt/gp/gp.hpp"

using namespace mixopt;
using namespace mixopt::gp;

namespace {

Eigen::MatrixXd column(std::initializer_list<double> v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

GpParams rbf(double scale, double ell, double noise) {
  return {KernelParams::exponentiated_quadratic(scale, {ell}), noise};
}

// Direct dense-inverse evaluation of the posterior.
PosteriorGaussian dense_oracle(const GpParams& p, const TrainingData& d, const Eigen::MatrixXd& q) {
  Eigen::MatrixXd k = kernel_matrix(p.kernel, d.inputs);
  k.diagonal() += d.noise_diagonal(p.noise_variance);
  const Eigen::MatrixXd kinv = k.inverse();
  const Eigen::MatrixXd kqx = kernel_matrix(p.kernel, q, d.inputs);
  return {kqx * kinv * d.targets, kernel_matrix(p.kernel, q, q) - kqx * kinv * kqx.transpose()};
}

}  // namespace

TEST_CASE("noiseless single point interpolation and prior recovery") {
  const auto data = TrainingData::with_fixed_noise(column({0.0}), Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1));
  const GaussianProcess gp(rbf(1.0, 1.0, 0.0), data);
  const auto at = gp.posterior(column({0.0}));
  CHECK(at.mean[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(at.covariance(0, 0) <= 1e-6);

  const auto far = gp.posterior(column({40.0}));
  CHECK(std::abs(far.mean[0]) < 1e-12);
  CHECK(far.covariance(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("two-point posterior matches explicit 2x2 inverse") {
  const Eigen::MatrixXd x = column({0.0, 1.0});
  Eigen::VectorXd y(2);
  y << 1.0, -0.5;
  const double noise = 0.1;
  const auto data = TrainingData::with_learned_noise(x, y);
  const GpParams p = rbf(1.0, 1.0, noise);

  // Hand-assembled 2x2 inverse.
  const double k01 = std::exp(-0.5);
  const double a = 1.0 + noise, b = k01, det = a * a - b * b;
  Eigen::Matrix2d inv;
  inv << a / det, -b / det, -b / det, a / det;
  const double xs = 0.4;
  Eigen::Vector2d ks(std::exp(-0.5 * xs * xs), std::exp(-0.5 * (xs - 1) * (xs - 1)));
  const double mean = ks.dot(inv * y);
  const double var = 1.0 - ks.dot(inv * ks);

  const auto post = posterior(p, data, column({xs}));
  CHECK(std::abs(post.mean[0] - mean) < 1e-10);
  CHECK(std::abs(post.covariance(0, 0) - var) < 1e-10);
}

TEST_CASE("posterior properties on random datasets") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u(0.2, 2.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + trial % 6, d = 2, m = 5;
    Eigen::MatrixXd x(n, d), q(m, d);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      y[i] = n01(rng);
      for (int j = 0; j < d; ++j) x(i, j) = n01(rng);
    }
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < d; ++j) q(i, j) = n01(rng);
    const GpParams p{KernelParams::matern52(u(rng), {u(rng), u(rng)}), 0.05 * u(rng)};
    const auto data = TrainingData::with_learned_noise(x, y);
    const GaussianProcess gp(p, data);
    const auto post = gp.posterior(q);
    const auto oracle = dense_oracle(p, data, q);
    CHECK((post.mean - oracle.mean).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((post.covariance - oracle.covariance).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((post.covariance - post.covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(post.covariance);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8);
    // Information never hurts.
    const Eigen::VectorXd var = gp.variance(q);
    for (int i = 0; i < m; ++i) {
      CHECK(var[i] <= kernel_eval(p.kernel, q.row(i).transpose(), q.row(i).transpose()) + 1e-8);
      CHECK(var[i] == doctest::Approx(post.covariance(i, i)).epsilon(1e-9));
    }
    CHECK((gp.mean(q) - post.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((gp.cross_covariance(q, q) - post.covariance).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("noiseless training targets are reproduced") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd x(6, 2);
  Eigen::VectorXd y(6);
  for (int i = 0; i < 6; ++i) {
    y[i] = n01(rng);
    x(i, 0) = i;
    x(i, 1) = n01(rng);
  }
  const auto data = TrainingData::with_fixed_noise(x, y, Eigen::VectorXd::Zero(6));
  const GaussianProcess gp({KernelParams::matern52(1.0, {0.7, 0.7}), 0.0}, data);
  CHECK((gp.mean(x) - y).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("jitter escalation") {
  // Duplicated noiseless inputs make K singular.
  const auto data =
      TrainingData::with_fixed_noise(column({0.0, 0.0, 1.0}), Eigen::Vector3d(1.0, 1.0, 0.0), Eigen::VectorXd::Zero(3));
  const GaussianProcess gp(rbf(1.0, 1.0, 0.0), data);
  CHECK(gp.jitter() > 0.0);
  CHECK(gp.jitter() <= 1e-4);
  CHECK(gp.mean(column({0.0}))[0] == doctest::Approx(1.0).epsilon(1e-4));

  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // indefinite
  try {
    robust_cholesky(bad);
    FAIL("expected ConditioningError");
  } catch (const ConditioningError& e) {
    CHECK(e.final_jitter() == doctest::Approx(1e-4));
  }
}

TEST_CASE("marginal likelihood scalar cases") {
  // k(x, x) + sigma^2 = 1
  const auto data1 = TrainingData::with_learned_noise(column({0.0}), Eigen::VectorXd::Ones(1));
  CHECK(log_marginal_likelihood(rbf(0.75, 1.0, 0.25), data1).value ==
        doctest::Approx(-0.5 - 0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-14));
  CHECK(log_marginal_likelihood(rbf(0.75, 1.0, 0.25), data1).value == doctest::Approx(-1.418939).epsilon(1e-6));
  const auto data0 = TrainingData::with_learned_noise(column({0.0}), Eigen::VectorXd::Zero(1));
  CHECK(log_marginal_likelihood(rbf(0.75, 1.0, 0.25), data0).value == doctest::Approx(-0.918939).epsilon(1e-6));
}

TEST_CASE("marginal likelihood equals sum of one-step-ahead predictive densities") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd x(6, 2);
  Eigen::VectorXd y(6);
  for (int i = 0; i < 6; ++i) {
    y[i] = n01(rng);
    x(i, 0) = n01(rng);
    x(i, 1) = n01(rng);
  }
  const GpParams p{KernelParams::matern52(1.3, {0.6, 1.4}), 0.2};
  const auto data = TrainingData::with_learned_noise(x, y);

  double chain = 0.0;
  for (int i = 0; i < 6; ++i) {
    const Eigen::MatrixXd xi = x.row(i);
    double mu = 0.0;
    double var = kernel_eval(p.kernel, xi.row(0).transpose(), xi.row(0).transpose()) + p.noise_variance;
    if (i > 0) {
      Eigen::MatrixXd k = kernel_matrix(p.kernel, x.topRows(i));
      k.diagonal().array() += p.noise_variance;
      const Eigen::MatrixXd kinv = k.inverse();
      const Eigen::RowVectorXd ks = kernel_matrix(p.kernel, xi, x.topRows(i));
      mu = ks * kinv * y.head(i);
      var -= (ks * kinv * ks.transpose())(0, 0);
    }
    chain += -0.5 * std::log(2 * std::numbers::pi * var) - 0.5 * (y[i] - mu) * (y[i] - mu) / var;
  }
  CHECK(log_marginal_likelihood(p, data).value == doctest::Approx(chain).epsilon(1e-12));
}

TEST_CASE("marginal likelihood gradient matches central differences") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n01;
  const GpParams shape{KernelParams::additive(KernelParams::exponentiated_quadratic(0.5, {0.8}, {2}),
                                              KernelParams::matern52(1.0, {0.5, 0.5, 0.5})),
                       0.1};
  Eigen::MatrixXd x(12, 3);
  Eigen::VectorXd y(12);
  for (int i = 0; i < 12; ++i) {
    y[i] = n01(rng);
    for (int j = 0; j < 3; ++j) x(i, j) = n01(rng);
  }
  auto data = TrainingData::with_learned_noise(x, y);
  data.learned_noise[0] = false;  // mix of fixed and learned noise
  data.fixed_noise[0] = 0.01;
  for (int setting = 0; setting < 20; ++setting) {
    Eigen::VectorXd theta = pack(shape, true);
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += 0.7 * n01(rng);
    const GpParams p = unpack(shape, theta, true);
    const MllResult r = log_marginal_likelihood(p, data);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp[i] += 1e-5;
      tm[i] -= 1e-5;
      const double fd = (log_marginal_likelihood(unpack(shape, tp, true), data).value -
                         log_marginal_likelihood(unpack(shape, tm, true), data).value) / 2e-5;
      const double rel = std::abs(r.gradient[i] - fd) / std::max({std::abs(fd), std::abs(r.gradient[i]), 1e-4});
      CHECK(rel < 1e-4);
    }
  }
}

TEST_CASE("fit recovers a known lengthscale") {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  std::normal_distribution<double> n01;
  const int n = 40;
  Eigen::MatrixXd x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = u(rng);
  const GpParams truth = rbf(1.0, 0.5, 1e-3);
  Eigen::MatrixXd k = kernel_matrix(truth.kernel, x);
  k.diagonal().array() += 1e-10;
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z[i] = n01(rng);
  Eigen::VectorXd y = k.llt().matrixL() * z;
  for (int i = 0; i < n; ++i) y[i] += std::sqrt(truth.noise_variance) * n01(rng);
  const auto data = TrainingData::with_learned_noise(x, y);

  FitConfig cfg;
  cfg.seed = 4;
  const FitResult fit = fit_hyperparameters(rbf(1.0, 1.0, 0.1), data, cfg);
  const double ell = fit.params.kernel.lengthscales[0];
  CHECK(ell > 0.3);
  CHECK(ell < 0.8);
  CHECK(fit.mll == doctest::Approx(log_marginal_likelihood(fit.params, data).value));
  for (double v : fit.restart_objectives) CHECK(fit.objective >= v);

  // Grid-search oracle over the lengthscale with the other parameters held at the optimum.
  double best_ell = 0.0, best_val = -1e300;
  for (double e = 0.1; e <= 2.0; e += 0.005) {
    GpParams p = fit.params;
    p.kernel.lengthscales[0] = e;
    const double v = log_marginal_likelihood(p, data).value - 0.5 * std::log(e) * std::log(e);
    if (v > best_val) {
      best_val = v;
      best_ell = e;
    }
  }
  CHECK(best_ell > 0.3);
  CHECK(best_ell < 0.8);
  CHECK(std::abs(best_ell - ell) < 0.01);

  SUBCASE("refit from optimum is a fixed point") {
    const FitResult again = fit_hyperparameters(fit.params, data, cfg);
    CHECK(std::abs(again.mll - fit.mll) < 1e-6);
  }
  SUBCASE("same seed is bit-identical") {
    const FitResult again = fit_hyperparameters(rbf(1.0, 1.0, 0.1), data, cfg);
    CHECK(again.params == fit.params);
  }
}

TEST_CASE("fit preconditions") {
  const auto one = TrainingData::with_learned_noise(column({0.0}), Eigen::VectorXd::Ones(1));
  CHECK_THROWS_AS(fit_hyperparameters(rbf(1.0, 1.0, 0.1), one), InsufficientDataError);
  auto bad = TrainingData::with_learned_noise(column({0.0, 1.0}), Eigen::VectorXd::Ones(3));
  CHECK_THROWS_AS(fit_hyperparameters(rbf(1.0, 1.0, 0.1), bad), ShapeError);
}
