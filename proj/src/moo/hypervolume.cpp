#include "mixopt/moo/hypervolume.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <spdlog/spdlog.h>

#include "mixopt/errors.hpp"

namespace mixopt::moo {

namespace {

// Points are rows of `p` restricted to `rows`, all strictly above `ref` in the
// first `m` coordinates.
double sweep(const Eigen::MatrixXd& p, std::vector<Eigen::Index> rows, const Eigen::VectorXd& ref, Eigen::Index m) {
  if (rows.empty()) return 0.0;
  if (m == 1) {
    double best = ref[0];
    for (auto i : rows) best = std::max(best, p(i, 0));
    return best - ref[0];
  }
  if (m == 2) {
    std::sort(rows.begin(), rows.end(), [&](Eigen::Index a, Eigen::Index b) {
      return p(a, 0) != p(b, 0) ? p(a, 0) > p(b, 0) : p(a, 1) > p(b, 1);
    });
    double area = 0.0, top = ref[1];
    for (auto i : rows) {
      if (p(i, 1) > top) {
        area += (p(i, 0) - ref[0]) * (p(i, 1) - top);
        top = p(i, 1);
      }
    }
    return area;
  }
  // Slice along the last coordinate, from the top down.
  const Eigen::Index last = m - 1;
  std::sort(rows.begin(), rows.end(), [&](Eigen::Index a, Eigen::Index b) { return p(a, last) > p(b, last); });
  double volume = 0.0;
  std::vector<Eigen::Index> active;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    active.push_back(rows[k]);
    const double lower = (k + 1 < rows.size()) ? p(rows[k + 1], last) : ref[last];
    const double height = p(rows[k], last) - lower;
    if (height > 0.0) volume += height * sweep(p, active, ref, last);
  }
  return volume;
}

std::vector<Eigen::Index> strictly_above(const Eigen::MatrixXd& points, const Eigen::VectorXd& ref) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if ((points.row(i).transpose().array() > ref.array()).all()) rows.push_back(i);
  }
  return rows;
}

}  // namespace

double detail::hypervolume_quiet(const Eigen::MatrixXd& points, const Eigen::VectorXd& ref) {
  return sweep(points, strictly_above(points, ref), ref, ref.size());
}

double hypervolume(const Eigen::MatrixXd& points, const Eigen::VectorXd& ref) {
  if (ref.size() < 1) throw ShapeError("reference point is empty");
  if (points.rows() > 0 && points.cols() != ref.size()) {
    throw ShapeError("frontier has " + std::to_string(points.cols()) + " objectives but the reference point has " +
                     std::to_string(ref.size()));
  }
  if (!ref.allFinite() || !points.allFinite()) throw ValidationError("hypervolume inputs must be finite");
  const auto rows = strictly_above(points, ref);
  if (static_cast<Eigen::Index>(rows.size()) < points.rows()) {
    spdlog::warn("hypervolume: dropped {} point(s) not strictly above the reference point",
                 points.rows() - static_cast<Eigen::Index>(rows.size()));
  }
  return sweep(points, rows, ref, ref.size());
}

}  // namespace mixopt::moo
