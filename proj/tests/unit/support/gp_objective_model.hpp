#pragma once

#include <utility>
#include <vector>

#include "mixopt/gp/gp.hpp"
#include "mixopt/moo/objective_model.hpp"

namespace test_support {

/// Independent GPs, one per objective, each looking at a subset of the
/// design coordinates. Objectives are uncorrelated with each other.
class GpObjectiveModel : public mixopt::moo::ObjectiveModel {
 public:
  struct Objective {
    mixopt::gp::GaussianProcess gp;
    std::vector<int> dims;
  };

  explicit GpObjectiveModel(std::vector<Objective> objectives) : objectives_(std::move(objectives)) {}

  Eigen::Index num_objectives() const override { return static_cast<Eigen::Index>(objectives_.size()); }

  mixopt::moo::JointPosterior posterior(const Eigen::MatrixXd& points) const override {
    const Eigen::Index m = num_objectives(), n = points.rows();
    mixopt::moo::JointPosterior out{Eigen::VectorXd(n * m), Eigen::MatrixXd::Zero(n * m, n * m)};
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto& o = objectives_[static_cast<std::size_t>(j)];
      const auto post = o.gp.posterior(select(points, o.dims));
      for (Eigen::Index a = 0; a < n; ++a) {
        out.mean[a * m + j] = post.mean[a];
        for (Eigen::Index b = 0; b < n; ++b) out.covariance(a * m + j, b * m + j) = post.covariance(a, b);
      }
    }
    return out;
  }

  Eigen::MatrixXd cross_covariance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const override {
    const Eigen::Index m = num_objectives();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows() * m, b.rows() * m);
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto& o = objectives_[static_cast<std::size_t>(j)];
      const Eigen::MatrixXd c = o.gp.cross_covariance(select(a, o.dims), select(b, o.dims));
      for (Eigen::Index p = 0; p < a.rows(); ++p)
        for (Eigen::Index q = 0; q < b.rows(); ++q) out(p * m + j, q * m + j) = c(p, q);
    }
    return out;
  }

 private:
  static Eigen::MatrixXd select(const Eigen::MatrixXd& x, const std::vector<int>& dims) {
    Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(dims.size()));
    for (std::size_t k = 0; k < dims.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = x.col(dims[k]);
    return out;
  }

  std::vector<Objective> objectives_;
};

/// A model with a fixed Gaussian per point, independent across points.
class FixedGaussianModel : public mixopt::moo::ObjectiveModel {
 public:
  // Each design point's first coordinate indexes `means` / `sds`.
  FixedGaussianModel(Eigen::MatrixXd means, Eigen::MatrixXd sds) : means_(std::move(means)), sds_(std::move(sds)) {}

  Eigen::Index num_objectives() const override { return means_.cols(); }

  mixopt::moo::JointPosterior posterior(const Eigen::MatrixXd& points) const override {
    const Eigen::Index m = num_objectives(), n = points.rows();
    mixopt::moo::JointPosterior out{Eigen::VectorXd(n * m), Eigen::MatrixXd::Zero(n * m, n * m)};
    for (Eigen::Index p = 0; p < n; ++p) {
      const auto i = static_cast<Eigen::Index>(points(p, 0));
      for (Eigen::Index j = 0; j < m; ++j) {
        out.mean[p * m + j] = means_(i, j);
        for (Eigen::Index q = 0; q < n; ++q) {
          if (static_cast<Eigen::Index>(points(q, 0)) == i) out.covariance(p * m + j, q * m + j) = sds_(i, j) * sds_(i, j);
        }
      }
    }
    return out;
  }

  Eigen::MatrixXd cross_covariance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const override {
    const Eigen::Index m = num_objectives();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows() * m, b.rows() * m);
    for (Eigen::Index p = 0; p < a.rows(); ++p)
      for (Eigen::Index q = 0; q < b.rows(); ++q) {
        const auto i = static_cast<Eigen::Index>(a(p, 0));
        if (i != static_cast<Eigen::Index>(b(q, 0))) continue;
        for (Eigen::Index j = 0; j < m; ++j) out(p * m + j, q * m + j) = sds_(i, j) * sds_(i, j);
      }
    return out;
  }

 private:
  Eigen::MatrixXd means_, sds_;
};

}  // namespace test_support
