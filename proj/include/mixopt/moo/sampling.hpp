#pragma once

#include <cstddef>
#include <cstdint>

#include <Eigen/Core>

namespace mixopt::moo {

/// n x dim standard-normal base samples from a Sobol sequence with a random
/// digital shift drawn from `seed`. Column prefixes are nested: the first k
/// columns do not depend on `dim`.
Eigen::MatrixXd normal_base_samples(std::size_t n, std::size_t dim, std::uint64_t seed);

/// A factor F with F F^T = cov for a symmetric PSD matrix. Zero-variance
/// coordinates get zero rows; the rest use an unpivoted Cholesky so the
/// factor of a leading block does not depend on trailing coordinates.
struct PsdFactor {
  Eigen::MatrixXd factor;
  /// G with cov G = F on the range of cov, so cross G maps whitened draws of
  /// this block into conditional mean shifts of a correlated block.
  Eigen::MatrixXd whitening;
};

PsdFactor psd_factor(const Eigen::MatrixXd& cov);

}  // namespace mixopt::moo
