#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "mixopt/gp/kernel.hpp"

namespace mixopt::gp {

/// Lower bound on the learned noise variance (standardized units).
inline constexpr double kMinNoiseVariance = 1e-6;

/// n x d inputs, n targets, and a per-point noise model: points flagged in
/// `learned_noise` use the single learned variance, the rest use `fixed_noise`.
struct TrainingData {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd targets;
  Eigen::VectorXd fixed_noise;
  std::vector<bool> learned_noise;

  static TrainingData with_learned_noise(Eigen::MatrixXd x, Eigen::VectorXd y);
  static TrainingData with_fixed_noise(Eigen::MatrixXd x, Eigen::VectorXd y, Eigen::VectorXd noise);

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index dim() const { return inputs.cols(); }
  bool has_learned_noise() const;
  /// Diagonal noise given the learned variance.
  Eigen::VectorXd noise_diagonal(double learned_variance) const;
  void validate() const;
};

/// Kernel hyperparameters plus the learned noise variance.
struct GpParams {
  KernelParams kernel;
  double noise_variance = 1e-2;
  bool operator==(const GpParams&) const = default;
};

struct PosteriorGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// Jitter schedule: a plain factorization first, then start * mean(diag K)
/// escalated by `growth` until `max_relative`.
struct JitterPolicy {
  double start = 1e-8;
  double growth = 10.0;
  double max_relative = 1e-4;
};

/// Cholesky factor of K + diag(noise) + jitter I, with the jitter that was needed.
struct Factorization {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
};

/// Factorizes `k` in place semantics (copies); throws ConditioningError after the
/// last escalation step fails.
Factorization robust_cholesky(const Eigen::MatrixXd& k, const JitterPolicy& policy = {});

/// A GP conditioned on training data; immutable after construction.
class GaussianProcess {
 public:
  GaussianProcess(GpParams params, TrainingData data, JitterPolicy policy = {});

  PosteriorGaussian posterior(const Eigen::MatrixXd& queries) const;
  Eigen::VectorXd mean(const Eigen::MatrixXd& queries) const;
  Eigen::VectorXd variance(const Eigen::MatrixXd& queries) const;
  /// Posterior cross-covariance Sigma_p(A, B).
  Eigen::MatrixXd cross_covariance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const;
  /// L^{-1} k(X, queries); the building block for cached cross-covariances.
  Eigen::MatrixXd whitened_cross(const Eigen::MatrixXd& queries) const;

  const GpParams& params() const { return params_; }
  const TrainingData& data() const { return data_; }
  double jitter() const { return factor_.jitter; }

 private:
  GpParams params_;
  TrainingData data_;
  Factorization factor_;
  Eigen::VectorXd alpha_;
};

/// Stateless convenience wrapper around GaussianProcess.
PosteriorGaussian posterior(const GpParams& params, const TrainingData& data, const Eigen::MatrixXd& queries);

struct MllResult {
  double value = 0.0;
  /// Gradient w.r.t. the unconstrained vector of `pack`.
  Eigen::VectorXd gradient;
};

/// log p(y | X, params) and its gradient. The unconstrained layout is the
/// kernel's followed by log(noise - kMinNoiseVariance) when the data has
/// learned-noise points.
MllResult log_marginal_likelihood(const GpParams& params, const TrainingData& data, const JitterPolicy& policy = {});

Eigen::VectorXd pack(const GpParams& params, bool learned_noise);
GpParams unpack(const GpParams& shape, const Eigen::Ref<const Eigen::VectorXd>& theta, bool learned_noise);

struct FitConfig {
  int restarts = 8;
  int max_iterations = 200;
  double gradient_tolerance = 1e-6;
  double init_lengthscale_min = 0.05;
  double init_lengthscale_max = 5.0;
  /// MAP fitting with N(0, 1) priors on log lengthscales.
  bool lengthscale_prior = true;
  std::uint64_t seed = 0;
  JitterPolicy jitter;
};

struct FitResult {
  GpParams params;
  double mll = 0.0;        // log marginal likelihood at the optimum
  double objective = 0.0;  // mll plus log prior (what was maximized)
  std::vector<double> restart_objectives;
  int best_restart = 0;
};

/// Multi-start quasi-Newton maximization of the (penalized) marginal
/// likelihood. Restart 0 starts from `init`; the others redraw lengthscales
/// log-uniformly. Throws FittingError when every restart fails.
FitResult fit_hyperparameters(const GpParams& init, const TrainingData& data, const FitConfig& config = {});

void to_json(nlohmann::json& j, const GpParams& p);
void from_json(const nlohmann::json& j, GpParams& p);

}  // namespace mixopt::gp
