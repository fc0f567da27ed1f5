#include "mixopt/moo/sampling.hpp"

#include <random>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <boost/math/distributions/normal.hpp>
#include <boost/random/sobol.hpp>

#include "mixopt/errors.hpp"

namespace mixopt::moo {

Eigen::MatrixXd normal_base_samples(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Eigen::MatrixXd z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  if (n == 0 || dim == 0) return z;
  if (dim > boost::random::default_sobol_table::max_dimension) {
    throw ConfigurationError("base samples limited to " + std::to_string(boost::random::default_sobol_table::max_dimension) +
                             " dimensions, requested " + std::to_string(dim));
  }
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> shift(dim);
  for (auto& s : shift) s = static_cast<std::uint32_t>(rng() >> 32);

  boost::random::sobol_engine<std::uint32_t, 32, boost::random::default_sobol_table> sobol(dim);
  const boost::math::normal normal;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      const std::uint32_t v = sobol() ^ shift[j];
      const double u = (static_cast<double>(v) + 0.5) / 4294967296.0;
      z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = boost::math::quantile(normal, u);
    }
  }
  return z;
}

PsdFactor psd_factor(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols()) throw ShapeError("covariance must be square");
  const Eigen::Index n = cov.rows();
  PsdFactor out;
  out.factor = Eigen::MatrixXd::Zero(n, n);
  out.whitening = Eigen::MatrixXd::Zero(n, n);
  if (n == 0) return out;

  // Coordinates with (numerically) zero variance are deterministic.
  const double top = cov.diagonal().cwiseAbs().maxCoeff();
  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (cov(i, i) > 1e-12 * top && cov(i, i) > 0.0) kept.push_back(i);
  }
  const auto k = static_cast<Eigen::Index>(kept.size());
  if (k == 0) return out;
  Eigen::MatrixXd sub(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b) sub(a, b) = 0.5 * (cov(kept[a], kept[b]) + cov(kept[b], kept[a]));

  // Unpivoted Cholesky keeps the factor of a leading block independent of
  // what follows it; escalate a small jitter if needed.
  Eigen::MatrixXd l, w;
  const double mean_diag = sub.diagonal().mean();
  for (double jitter = 0.0; jitter <= 1e-6 * mean_diag; jitter = (jitter == 0.0 ? 1e-12 * mean_diag : 10.0 * jitter)) {
    Eigen::MatrixXd a = sub;
    a.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
      l = llt.matrixL();
      w = Eigen::MatrixXd::Identity(k, k);
      l.transpose().triangularView<Eigen::Upper>().solveInPlace(w);
      break;
    }
  }
  if (l.size() == 0) {
    // Indefinite beyond round-off: fall back to a clipped eigen factor.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sub);
    const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
    Eigen::VectorXd inv(k);
    for (Eigen::Index i = 0; i < k; ++i) inv[i] = lam[i] > 1e-12 * lam.maxCoeff() ? 1.0 / std::sqrt(lam[i]) : 0.0;
    l = es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
    w = es.eigenvectors() * inv.asDiagonal();
  }
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) {
      out.factor(kept[a], kept[b]) = l(a, b);
      out.whitening(kept[a], kept[b]) = w(a, b);
    }
  }
  return out;
}

}  // namespace mixopt::moo
