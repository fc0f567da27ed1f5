#pragma once

#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

namespace mixopt::gp {

enum class KernelVariant { ExponentiatedQuadratic, Matern52Ard, AdditiveComposite };

/// Hyperparameters of a (possibly composite) stationary kernel.
///
/// Leaves act on `active_dims` (all input dimensions when empty) and carry
/// either one shared lengthscale or one per active dimension (ARD). An
/// AdditiveComposite sums exactly two children; its own `output_scale` is a
/// fixed multiplier that is not optimized, the children's output scales play
/// the role of the additive weights.
struct KernelParams {
  KernelVariant variant = KernelVariant::ExponentiatedQuadratic;
  double output_scale = 1.0;
  std::vector<double> lengthscales;
  std::vector<int> active_dims;
  std::vector<KernelParams> children;

  static KernelParams exponentiated_quadratic(double output_scale, std::vector<double> lengthscales,
                                              std::vector<int> active_dims = {});
  static KernelParams matern52(double output_scale, std::vector<double> lengthscales,
                               std::vector<int> active_dims = {});
  static KernelParams additive(KernelParams first, KernelParams second);

  bool is_leaf() const { return variant != KernelVariant::AdditiveComposite; }

  /// Throws ValidationError / ShapeError if invariants fail for inputs of
  /// dimension `input_dim`.
  void validate(Eigen::Index input_dim) const;

  bool operator==(const KernelParams&) const = default;
};

/// k(z, z'). Throws ShapeError on dimension mismatch, ValidationError on NaN.
double kernel_eval(const KernelParams& params, const Eigen::Ref<const Eigen::VectorXd>& z,
                   const Eigen::Ref<const Eigen::VectorXd>& z_prime);

/// Entry (i, j) = k(A_i, B_j).
Eigen::MatrixXd kernel_matrix(const KernelParams& params, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
/// Symmetric special case, computes only one triangle.
Eigen::MatrixXd kernel_matrix(const KernelParams& params, const Eigen::MatrixXd& a);

// Unconstrained (log-space) parameterization. Layout: depth-first, each leaf
// contributes [log output_scale, log lengthscale...]; composites contribute
// nothing of their own.
Eigen::Index num_hyperparameters(const KernelParams& params);
Eigen::VectorXd to_unconstrained(const KernelParams& params);
KernelParams from_unconstrained(const KernelParams& shape, const Eigen::Ref<const Eigen::VectorXd>& theta);
/// Mask over the unconstrained vector marking log-lengthscale entries.
std::vector<bool> lengthscale_mask(const KernelParams& params);

/// k(z, z') and its gradient w.r.t. the unconstrained parameters (written to
/// `grad`, which must have num_hyperparameters entries).
double kernel_eval_with_gradient(const KernelParams& params, const double* z, const double* z_prime,
                                 Eigen::Index dim, double* grad);

void to_json(nlohmann::json& j, const KernelParams& p);
void from_json(const nlohmann::json& j, KernelParams& p);

}  // namespace mixopt::gp
