#pragma once

#include <cstddef>

#include <Eigen/Core>

namespace mixopt::moo {

/// Joint Gaussian over the objectives of several points, point-major:
/// entry p * m + j is objective j of point p.
struct JointPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// What the acquisition machinery needs from a probabilistic model of the
/// objectives. Points are rows of design vectors; objectives are maximized.
class ObjectiveModel {
 public:
  virtual ~ObjectiveModel() = default;
  virtual Eigen::Index num_objectives() const = 0;
  virtual JointPosterior posterior(const Eigen::MatrixXd& points) const = 0;
  /// Posterior covariance between the objectives of two point sets,
  /// (|a| m) x (|b| m), point-major on both sides.
  virtual Eigen::MatrixXd cross_covariance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const = 0;
};

}  // namespace mixopt::moo
