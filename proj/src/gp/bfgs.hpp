#pragma once

#include <functional>

#include <Eigen/Core>

namespace mixopt::gp::detail {

/// Objective returning f(x) and writing grad f(x).
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes with GSL's vector_bfgs2 until the gradient infinity norm drops
/// below `gradient_tolerance` or the line search stops making progress.
BfgsResult minimize_bfgs(const Objective& f, const Eigen::VectorXd& x0, int max_iterations,
                         double gradient_tolerance);

}  // namespace mixopt::gp::detail
