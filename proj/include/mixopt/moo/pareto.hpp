#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace mixopt::moo {

/// Non-dominated subset of a point set (rows), maximize-all convention.
struct ParetoFrontier {
  Eigen::MatrixXd points;
  /// Row index of each frontier point in the input, ascending.
  std::vector<std::size_t> indices;

  Eigen::Index size() const { return points.rows(); }
};

/// Keeps every point not weakly dominated by another distinct point; among
/// exact duplicates only the first occurrence survives. Output follows input order.
ParetoFrontier pareto_filter(const Eigen::MatrixXd& points);

/// a >= b componentwise and a != b.
bool dominates(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b);

}  // namespace mixopt::moo
