#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "mixopt/errors.hpp"
#include "mixopt/gp/kernel.hpp"

using namespace mixopt;
using namespace mixopt::gp;

TEST_CASE("exponentiated quadratic closed forms") {
  const auto k = KernelParams::exponentiated_quadratic(1.0, {1.0});
  Eigen::VectorXd z(2), zp(2);
  z << 0.3, -1.2;
  CHECK(kernel_eval(k, z, z) == doctest::Approx(1.0));
  zp << 1.3, -0.2;  // |z - z'| = sqrt(2)
  CHECK(kernel_eval(k, z, zp) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(kernel_eval(k, z, zp) == doctest::Approx(0.367879).epsilon(1e-6));
}

TEST_CASE("matern ARD treats equal scaled distances identically") {
  const auto k = KernelParams::matern52(1.0, {1.0, 2.0});
  Eigen::VectorXd o = Eigen::VectorXd::Zero(2), a(2), b(2);
  a << 1.0, 0.0;
  b << 0.0, 2.0;
  CHECK(kernel_eval(k, o, a) == doctest::Approx(kernel_eval(k, o, b)).epsilon(1e-15));
  // Known value at r = 1.
  const double r = 1.0;
  const double expected = (1 + std::sqrt(5.0) * r + 5.0 / 3.0 * r * r) * std::exp(-std::sqrt(5.0) * r);
  CHECK(kernel_eval(k, o, a) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("composite kernel at zero distance sums child scales") {
  const auto time = KernelParams::exponentiated_quadratic(0.7, {1.0}, {2});
  const auto joint = KernelParams::matern52(1.9, {0.5, 0.5, 0.5});
  const auto k = KernelParams::additive(time, joint);
  Eigen::VectorXd z(3);
  z << 0.1, 0.2, 0.3;
  CHECK(kernel_eval(k, z, z) == doctest::Approx(2.6));

  // The time child ignores every coordinate but the last.
  Eigen::VectorXd a(3), b(3);
  a << 0.0, 0.0, 1.0;
  b << 5.0, -3.0, 1.0;
  CHECK(kernel_eval(time, a, b) == doctest::Approx(0.7));
}

TEST_CASE("kernel_eval errors") {
  const auto k = KernelParams::exponentiated_quadratic(1.0, {1.0});
  Eigen::VectorXd a(2), b(3);
  a.setZero();
  b.setZero();
  CHECK_THROWS_AS(kernel_eval(k, a, b), ShapeError);
  b.resize(2);
  b << 0.0, std::nan("");
  CHECK_THROWS_AS(kernel_eval(k, a, b), ValidationError);
  CHECK_THROWS_AS(kernel_eval(KernelParams::matern52(1.0, {1.0, 1.0, 1.0}), a, a), ShapeError);
  CHECK_THROWS_AS(kernel_eval(KernelParams::matern52(-1.0, {1.0}), a, a), ValidationError);
  CHECK_THROWS_AS(kernel_eval(KernelParams::matern52(1.0, {0.0}), a, a), ValidationError);
}

TEST_CASE("kernel_matrix properties") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  auto random_matrix = [&](int r, int c) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = n01(rng);
    return m;
  };
  const auto k = KernelParams::additive(KernelParams::exponentiated_quadratic(0.5, {0.8}, {2}),
                                        KernelParams::matern52(1.2, {0.4, 1.1, 2.0}));

  SUBCASE("single row gives output scale") {
    const Eigen::MatrixXd a = random_matrix(1, 3);
    const Eigen::MatrixXd g = kernel_matrix(k, a, a);
    CHECK(g.rows() == 1);
    CHECK(g(0, 0) == doctest::Approx(1.7));
  }

  SUBCASE("transpose symmetry") {
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::MatrixXd a = random_matrix(4, 3), b = random_matrix(6, 3);
      CHECK((kernel_matrix(k, a, b) - kernel_matrix(k, b, a).transpose()).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  SUBCASE("gram plus small jitter is positive definite (eigen oracle)") {
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::MatrixXd a = random_matrix(5, 3);
      Eigen::MatrixXd g = kernel_matrix(k, a);
      g.diagonal().array() += 1e-6;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
      CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
  }

  SUBCASE("simultaneous permutation") {
    const Eigen::MatrixXd a = random_matrix(7, 3);
    std::vector<int> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd pa(7, 3);
    for (int i = 0; i < 7; ++i) pa.row(i) = a.row(perm[i]);
    const Eigen::MatrixXd g = kernel_matrix(k, a), pg = kernel_matrix(k, pa);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j) CHECK(pg(i, j) == g(perm[i], perm[j]));
  }

  SUBCASE("symmetric overload agrees with general") {
    const Eigen::MatrixXd a = random_matrix(6, 3);
    CHECK((kernel_matrix(k, a) - kernel_matrix(k, a, a)).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("kernel gradient against finite differences") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  const auto shape = KernelParams::additive(KernelParams::exponentiated_quadratic(0.5, {0.8}, {2}),
                                            KernelParams::matern52(1.2, {0.4, 1.1, 2.0}));
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd theta = to_unconstrained(shape);
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += 0.5 * n01(rng);
    const auto p = from_unconstrained(shape, theta);
    Eigen::VectorXd z(3), zp(3);
    for (int i = 0; i < 3; ++i) {
      z[i] = n01(rng);
      zp[i] = n01(rng);
    }
    Eigen::VectorXd g(theta.size());
    const double v = kernel_eval_with_gradient(p, z.data(), zp.data(), 3, g.data());
    CHECK(v == doctest::Approx(kernel_eval(p, z, zp)).epsilon(1e-14));
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp[i] += 1e-6;
      tm[i] -= 1e-6;
      const double fd = (kernel_eval(from_unconstrained(shape, tp), z, zp) -
                         kernel_eval(from_unconstrained(shape, tm), z, zp)) / 2e-6;
      CHECK(std::abs(g[i] - fd) < 1e-7 * (1.0 + std::abs(fd)));
    }
  }
}

TEST_CASE("kernel params json round trip") {
  const auto k = KernelParams::additive(KernelParams::exponentiated_quadratic(0.5, {0.8}, {2}),
                                        KernelParams::matern52(1.2, {0.4, 1.1, 2.0}));
  const nlohmann::json j = k;
  CHECK(j["variant"] == "additive");
  CHECK(j.get<KernelParams>() == k);
}
