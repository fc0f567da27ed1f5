#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mixopt/errors.hpp"
#include "mixopt/moo/acquisition.hpp"
#include "mixopt/moo/hypervolume.hpp"
#include "mixopt/moo/pareto.hpp"
#include "mixopt/moo/sampling.hpp"
#include "support/gp_objective_model.hpp"

using namespace mixopt;
using namespace mixopt::moo;
using test_support::FixedGaussianModel;
using test_support::GpObjectiveModel;

namespace {

JointPosterior point_mass(std::initializer_list<double> y) {
  JointPosterior p;
  p.mean = Eigen::VectorXd::Map(std::data(y), static_cast<Eigen::Index>(y.size()));
  p.covariance = Eigen::MatrixXd::Zero(p.mean.size(), p.mean.size());
  return p;
}

// Exact 2D hypervolume improvement of a single point by integrating the
// staircase profile of the frontier column by column.
double hvi_2d(double y0, double y1, const Eigen::MatrixXd& frontier, double r0, double r1) {
  if (y0 <= r0 || y1 <= r1) return 0.0;
  std::vector<double> cuts = {r0, y0};
  for (Eigen::Index i = 0; i < frontier.rows(); ++i) {
    if (frontier(i, 0) > r0 && frontier(i, 0) < y0) cuts.push_back(frontier(i, 0));
  }
  std::sort(cuts.begin(), cuts.end());
  double area = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double mid = 0.5 * (cuts[k] + cuts[k + 1]);
    double h = r1;
    for (Eigen::Index i = 0; i < frontier.rows(); ++i) {
      if (frontier(i, 0) >= mid) h = std::max(h, frontier(i, 1));
    }
    area += (cuts[k + 1] - cuts[k]) * std::max(0.0, y1 - h);
  }
  return area;
}

double normal_pdf(double x, double mu, double sd) {
  const double z = (x - mu) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

domain::Constraints two_ingredient_space() {
  using domain::IngredientId;
  domain::Constraints c;
  c.set_bounds(IngredientId::cement, {100.0, 500.0});
  c.set_bounds(IngredientId::water, {120.0, 250.0});
  c.set_bounds(IngredientId::fine_aggregate, {800.0, 800.0});
  c.set_bounds(IngredientId::coarse_aggregate, {1000.0, 1000.0});
  return c;
}

// Two objectives over (cement, water): trade-off between a cement-driven and
// a water-driven response, known at a handful of points.
struct TwoIngredientProblem {
  Eigen::MatrixXd observed;  // n x 7
  std::unique_ptr<GpObjectiveModel> model;

  TwoIngredientProblem() {
    const double pts[][2] = {{150, 200}, {300, 160}, {450, 230}, {250, 130}, {400, 180}};
    observed = Eigen::MatrixXd::Zero(5, 7);
    Eigen::MatrixXd cw(5, 2);
    Eigen::VectorXd f1(5), f2(5);
    for (int i = 0; i < 5; ++i) {
      observed(i, 0) = pts[i][0];
      observed(i, 3) = pts[i][1];
      observed(i, 4) = 800;
      observed(i, 5) = 1000;
      cw(i, 0) = pts[i][0] / 100.0;
      cw(i, 1) = pts[i][1] / 100.0;
      f1[i] = std::sin(cw(i, 0)) + 0.3 * cw(i, 1);
      f2[i] = 1.5 - 0.2 * cw(i, 0) + 0.4 * std::cos(2.0 * cw(i, 1));
    }
    gp::GpParams p;
    p.kernel = gp::KernelParams::matern52(1.0, {100.0, 100.0});
    p.noise_variance = 1e-4;
    std::vector<GpObjectiveModel::Objective> objs;
    Eigen::MatrixXd x2(5, 2);
    x2.col(0) = observed.col(0);
    x2.col(1) = observed.col(3);
    objs.push_back({gp::GaussianProcess(p, gp::TrainingData::with_fixed_noise(x2, f1, Eigen::VectorXd::Constant(5, 1e-4))), {0, 3}});
    objs.push_back({gp::GaussianProcess(p, gp::TrainingData::with_fixed_noise(x2, f2, Eigen::VectorXd::Constant(5, 1e-4))), {0, 3}});
    model = std::make_unique<GpObjectiveModel>(std::move(objs));
  }
};

}  // namespace

TEST_CASE("normal base samples") {
  const Eigen::MatrixXd a = normal_base_samples(256, 5, 7);
  const Eigen::MatrixXd b = normal_base_samples(256, 9, 7);
  CHECK(a.rows() == 256);
  CHECK(a.cols() == 5);
  CHECK((b.leftCols(5) - a).cwiseAbs().maxCoeff() == 0.0);  // nested columns
  CHECK((normal_base_samples(256, 5, 7) - a).cwiseAbs().maxCoeff() == 0.0);
  CHECK((normal_base_samples(256, 5, 8) - a).cwiseAbs().maxCoeff() > 0.0);
  CHECK(a.allFinite());
  const Eigen::MatrixXd big = normal_base_samples(4096, 3, 1);
  for (Eigen::Index j = 0; j < 3; ++j) {
    const double mean = big.col(j).mean();
    const double var = (big.col(j).array() - mean).square().mean();
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
  }
}

TEST_CASE("psd_factor") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd a(6, 4);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n01(rng);
    Eigen::MatrixXd cov = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(6, 6);
    // Zero out one coordinate completely (deterministic objective).
    cov.row(2).setZero();
    cov.col(2).setZero();
    const auto f = psd_factor(cov);
    CHECK((f.factor * f.factor.transpose() - cov).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(f.factor.row(2).cwiseAbs().maxCoeff() == 0.0);
    CHECK((cov * f.whitening - f.factor).cwiseAbs().maxCoeff() < 1e-9);
    // The leading block's factor does not depend on what follows.
    const auto lead = psd_factor(cov.topLeftCorner(3, 3));
    CHECK((lead.factor - f.factor.topLeftCorner(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("qehvi deterministic collapses") {
  const Eigen::MatrixXd base = normal_base_samples(128, 4, 1);
  Eigen::MatrixXd frontier(1, 2);
  frontier << 1.0, 1.0;
  const Eigen::Vector2d r(0, 0);
  CHECK(qehvi(point_mass({2.0, 2.0}), 2, frontier, r, base) == 3.0);
  CHECK(qehvi(point_mass({0.5, 0.9}), 2, frontier, r, base) == 0.0);
  CHECK(qehvi(point_mass({1.0, 1.0}), 2, frontier, r, base) == 0.0);
  // q = 2 deterministic batch equals the exact joint improvement.
  CHECK(qehvi(point_mass({2.0, 0.5, 0.5, 3.0}), 2, frontier, r, base) ==
        doctest::Approx(hypervolume((Eigen::MatrixXd(3, 2) << 1, 1, 2, 0.5, 0.5, 3).finished(), r) - 1.0));
}

TEST_CASE("qehvi against 2D quadrature") {
  Eigen::MatrixXd frontier(3, 2);
  frontier << 1.0, 1.2, 1.5, 0.5, 0.5, 1.6;
  const double r0 = 0.0, r1 = 0.0;
  struct Case {
    double mu0, mu1, sd0, sd1;
  };
  for (const Case c : {Case{1.2, 0.9, 0.5, 0.3}, Case{1.6, 1.4, 0.2, 0.4}, Case{0.9, 1.0, 0.6, 0.6}}) {
    JointPosterior post;
    post.mean = Eigen::Vector2d(c.mu0, c.mu1);
    post.covariance = Eigen::Vector2d(c.sd0 * c.sd0, c.sd1 * c.sd1).asDiagonal();
    const double mc = qehvi(post, 2, frontier, Eigen::Vector2d(r0, r1), normal_base_samples(8192, 2, 5));

    using boost::math::quadrature::gauss_kronrod;
    auto inner = [&](double y0) {
      auto g = [&](double y1) { return hvi_2d(y0, y1, frontier, r0, r1) * normal_pdf(y1, c.mu1, c.sd1); };
      return gauss_kronrod<double, 31>::integrate(g, c.mu1 - 8 * c.sd1, c.mu1 + 8 * c.sd1, 12, 1e-10) *
             normal_pdf(y0, c.mu0, c.sd0);
    };
    const double oracle = gauss_kronrod<double, 31>::integrate(inner, c.mu0 - 8 * c.sd0, c.mu0 + 8 * c.sd0, 12, 1e-9);
    REQUIRE(oracle > 0.0);
    CHECK(std::abs(mc - oracle) / oracle < 0.02);
  }
}

TEST_CASE("qehvi is non-negative and vanishes deep in the dominated region") {
  Eigen::MatrixXd frontier(1, 2);
  frontier << 1.0, 1.0;
  const Eigen::MatrixXd base = normal_base_samples(512, 2, 2);
  double prev = std::numeric_limits<double>::infinity();
  for (double sd : {1.0, 0.3, 0.1, 0.01}) {
    JointPosterior post;
    post.mean = Eigen::Vector2d(0.5, 0.5);
    post.covariance = Eigen::Matrix2d::Identity() * sd * sd;
    const double v = qehvi(post, 2, frontier, Eigen::Vector2d(0, 0), base);
    CHECK(v >= 0.0);
    CHECK(v <= prev);
    prev = v;
  }
  CHECK(prev == 0.0);
}

TEST_CASE("acquisition values are reproducible and seed dependent") {
  TwoIngredientProblem prob;
  AcquisitionConfig cfg;
  cfg.q = 2;
  cfg.variant = AcquisitionVariant::qNEHVI;
  cfg.seed = 11;
  const Eigen::Vector2d r(0.0, 0.0);
  const Acquisition a(*prob.model, prob.observed, r, cfg), b(*prob.model, prob.observed, r, cfg);
  Eigen::MatrixXd cand = prob.observed.topRows(2);
  cand(0, 0) = 330.0;
  cand(1, 3) = 145.0;
  CHECK(a(cand) == b(cand));
  cfg.seed = 12;
  const Acquisition c(*prob.model, prob.observed, r, cfg);
  CHECK(a(cand) != c(cand));
  CHECK_THROWS_AS(a(Eigen::MatrixXd::Zero(3, 7)), ShapeError);
  cfg.mc_samples = 32;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("noisy variant with noiseless observations matches qehvi") {
  TwoIngredientProblem prob;
  AcquisitionConfig cfg;
  cfg.q = 1;
  cfg.mc_samples = 4096;
  cfg.variant = AcquisitionVariant::qNEHVI;
  const Eigen::Vector2d r(0.0, 0.0);
  const Acquisition noisy(*prob.model, prob.observed, r, cfg);
  cfg.variant = AcquisitionVariant::qEHVI;
  const Acquisition plain(*prob.model, prob.observed, r, cfg);  // frontier from posterior means
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uc(100, 500), uw(120, 250);
  int compared = 0;
  for (int i = 0; i < 15; ++i) {
    Eigen::MatrixXd x = prob.observed.topRows(1);
    x(0, 0) = uc(rng);
    x(0, 3) = uw(rng);
    const double a = noisy(x), b = plain(x);
    if (std::max(a, b) < 1e-4) continue;
    ++compared;
    CHECK(std::abs(a - b) <= 0.03 * std::max(a, b) + 2e-4);
  }
  CHECK(compared > 3);
}

TEST_CASE("log variant ordering follows the plain variant beyond the smoothing margin") {
  TwoIngredientProblem prob;
  AcquisitionConfig cfg;
  cfg.q = 1;
  cfg.variant = AcquisitionVariant::qNEHVI;
  const Eigen::Vector2d r(0.0, 0.0);
  const Acquisition plain(*prob.model, prob.observed, r, cfg);
  cfg.variant = AcquisitionVariant::qLogNEHVI;
  const Acquisition logv(*prob.model, prob.observed, r, cfg);
  const double norm = logv.scale().prod();
  const double margin = cfg.temperature * std::log(2.0);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> uc(100, 500), uw(120, 250);
  std::vector<double> raw, lg;
  for (int i = 0; i < 40; ++i) {
    Eigen::MatrixXd x = prob.observed.topRows(1);
    x(0, 0) = uc(rng);
    x(0, 3) = uw(rng);
    raw.push_back(plain(x) / norm);
    lg.push_back(logv(x));
    CHECK(std::isfinite(lg.back()));
    // Smoothed value brackets the plain one: raw <= exp(log) <= raw + tau ln 2.
    CHECK(std::exp(lg.back()) >= raw.back() - 1e-12);
    CHECK(std::exp(lg.back()) <= raw.back() + margin + 1e-12);
  }
  int pairs = 0;
  for (std::size_t i = 0; i < raw.size(); ++i)
    for (std::size_t j = 0; j < raw.size(); ++j) {
      if (raw[i] - raw[j] > margin) {
        ++pairs;
        CHECK(lg[i] > lg[j]);
      }
    }
  CHECK(pairs > 10);
}

TEST_CASE("log variant stays finite and decreases into the dominated region") {
  // Observed points 0..2 with a tight posterior; candidates 3.. slide away.
  const int n_far = 8;
  Eigen::MatrixXd means(3 + n_far, 2), sds(3 + n_far, 2);
  means.topRows(3) << 3.0, 1.0, 2.0, 2.0, 1.0, 3.0;
  sds.setConstant(0.05);
  for (int k = 0; k < n_far; ++k) means.row(3 + k) = Eigen::RowVector2d(1.5, 1.5) - Eigen::RowVector2d::Constant(0.5 * k);
  const FixedGaussianModel model(means, sds);
  Eigen::MatrixXd observed(3, 1);
  observed << 0, 1, 2;
  AcquisitionConfig cfg;
  cfg.q = 1;
  cfg.variant = AcquisitionVariant::qLogNEHVI;
  const Acquisition acq(model, observed, Eigen::Vector2d(-10.0, -10.0), cfg);
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n_far; ++k) {
    const double v = acq(Eigen::MatrixXd::Constant(1, 1, 3.0 + k));
    CHECK(std::isfinite(v));
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("optimize_acquisition on a two-ingredient problem") {
  TwoIngredientProblem prob;
  const auto space = two_ingredient_space();
  const Eigen::Vector2d r(0.0, 0.0);
  AcquisitionConfig cfg;
  cfg.q = 1;
  cfg.variant = AcquisitionVariant::qEHVI;
  cfg.raw_candidates = 128;
  cfg.seed = 3;

  const auto result = optimize_acquisition(*prob.model, prob.observed, r, space, cfg);
  REQUIRE(result.batch.rows() == 1);
  CHECK(result.value >= result.best_raw_value);
  CHECK(space.is_feasible(domain::Mixture::from_vector(result.batch.row(0).transpose()), 1e-9));

  SUBCASE("within 5% of a 100 x 100 grid maximum") {
    const Acquisition acq(*prob.model, prob.observed, r, cfg);
    double grid_max = 0.0;
    Eigen::MatrixXd x = prob.observed.topRows(1);
    for (int i = 0; i < 100; ++i) {
      for (int j = 0; j < 100; ++j) {
        x(0, 0) = 100.0 + 400.0 * i / 99.0;
        x(0, 3) = 120.0 + 130.0 * j / 99.0;
        grid_max = std::max(grid_max, acq(x));
      }
    }
    REQUIRE(grid_max > 0.0);
    CHECK(result.value >= 0.95 * grid_max);
  }

  SUBCASE("deterministic given the seed") {
    const auto again = optimize_acquisition(*prob.model, prob.observed, r, space, cfg);
    CHECK((again.batch - result.batch).cwiseAbs().maxCoeff() == 0.0);
    CHECK(again.value == result.value);
  }

  SUBCASE("batches are feasible and novel") {
    cfg.q = 3;
    cfg.variant = AcquisitionVariant::qLogNEHVI;
    cfg.raw_candidates = 64;
    const auto batch = optimize_acquisition(*prob.model, prob.observed, r, space, cfg);
    REQUIRE(batch.batch.rows() == 3);
    CHECK(batch.value >= batch.best_raw_value);
    for (Eigen::Index p = 0; p < 3; ++p) {
      const Eigen::VectorXd x = batch.batch.row(p).transpose();
      CHECK(space.is_feasible(domain::Mixture::from_vector(x), 1e-9));
      for (Eigen::Index o = 0; o < prob.observed.rows(); ++o) {
        CHECK((prob.observed.row(o).transpose() - x).cwiseAbs().maxCoeff() >= cfg.novelty_kg);
      }
    }
  }
}

TEST_CASE("optimize_acquisition degenerate and infeasible regions") {
  using domain::IngredientId;
  TwoIngredientProblem prob;
  AcquisitionConfig cfg;
  cfg.q = 3;
  cfg.raw_candidates = 16;

  auto single = two_ingredient_space();
  single.set_bounds(IngredientId::cement, {320.0, 320.0});
  single.set_bounds(IngredientId::water, {170.0, 170.0});
  const auto res = optimize_acquisition(*prob.model, prob.observed, Eigen::Vector2d(0, 0), single, cfg);
  CHECK(res.degenerate);
  REQUIRE(res.batch.rows() == 3);
  for (Eigen::Index p = 0; p < 3; ++p) {
    CHECK(res.batch(p, 0) == 320.0);
    CHECK(res.batch(p, 3) == 170.0);
  }

  auto empty = two_ingredient_space();
  empty.set_binder_total_window({600.0, 700.0});  // cement is the only binder and tops out at 500
  CHECK_THROWS_AS(optimize_acquisition(*prob.model, prob.observed, Eigen::Vector2d(0, 0), empty, cfg), ConstraintError);
}
