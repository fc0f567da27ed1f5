#include "mixopt/moo/pareto.hpp"

#include <algorithm>
#include <numeric>

#include "mixopt/errors.hpp"

namespace mixopt::moo {

bool dominates(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  if (a.size() != b.size()) throw ShapeError("objective vectors differ in dimension");
  bool strict = false;
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    if (a[j] < b[j]) return false;
    strict = strict || a[j] > b[j];
  }
  return strict;
}

ParetoFrontier pareto_filter(const Eigen::MatrixXd& points) {
  const Eigen::Index n = points.rows(), m = points.cols();
  ParetoFrontier out;
  if (n == 0) {
    out.points.resize(0, m);
    return out;
  }
  if (m < 1) throw ShapeError("objective vectors need at least one coordinate");

  // Lexicographically descending: a point can only be dominated by one sorted before it.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < m; ++j) {
      if (points(a, j) != points(b, j)) return points(a, j) > points(b, j);
    }
    return false;
  });

  std::vector<Eigen::Index> archive;
  for (Eigen::Index i : order) {
    bool covered = false;
    for (Eigen::Index a : archive) {
      // Weak domination also discards later duplicates.
      if ((points.row(a).array() >= points.row(i).array()).all()) {
        covered = true;
        break;
      }
    }
    if (!covered) archive.push_back(i);
  }
  std::sort(archive.begin(), archive.end());
  out.points.resize(static_cast<Eigen::Index>(archive.size()), m);
  for (std::size_t k = 0; k < archive.size(); ++k) {
    out.points.row(static_cast<Eigen::Index>(k)) = points.row(archive[k]);
    out.indices.push_back(static_cast<std::size_t>(archive[k]));
  }
  return out;
}

}  // namespace mixopt::moo
