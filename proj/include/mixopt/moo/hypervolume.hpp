#pragma once

#include <Eigen/Core>

namespace mixopt::moo {

/// Exact Lebesgue measure of the union of boxes [r, y_i] (maximize-all).
/// Points not strictly above r in every coordinate are dropped with a warning.
/// ShapeError on a dimension mismatch.
double hypervolume(const Eigen::MatrixXd& points, const Eigen::VectorXd& ref);

namespace detail {
/// Same measure without validation or logging; rows not strictly above
/// `ref` contribute nothing. Used inside Monte-Carlo loops.
double hypervolume_quiet(const Eigen::MatrixXd& points, const Eigen::VectorXd& ref);
}  // namespace detail

}  // namespace mixopt::moo
