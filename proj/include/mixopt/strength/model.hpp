#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "mixopt/domain/constraints.hpp"
#include "mixopt/gp/gp.hpp"
#include "mixopt/strength/observation.hpp"

namespace mixopt::strength {

enum class TimeTransform { log_offset, linear };

/// Input and target scaling of a fitted model. Ingredients map to
/// (q - lower) / range; the time feature is ln(t + tau) or t / time_scale.
struct Normalization {
  std::array<double, domain::kNumIngredients> lower{};
  std::array<double, domain::kNumIngredients> range{};
  double target_mean = 0.0;
  double target_sd = 1.0;
  TimeTransform time = TimeTransform::log_offset;
  double tau_days = 1.0 / 24.0;
  double time_scale = 1.0;

  Eigen::VectorXd normalize(const Mixture& m) const;
  Mixture denormalize(const Eigen::Ref<const Eigen::VectorXd>& features) const;
  double time_feature(double age_days) const;
  void validate() const;
  bool operator==(const Normalization&) const = default;
};

inline constexpr Eigen::Index kFeatureDim = static_cast<Eigen::Index>(domain::kNumIngredients) + 1;
inline constexpr int kTimeFeature = static_cast<int>(domain::kNumIngredients);

/// [normalized ingredients..., time feature]. Throws ValidationError on a negative age.
Eigen::VectorXd featurize(const Mixture& mixture, double age_days, const Normalization& norm);

struct StrengthModelConfig {
  double tau_days = 1.0 / 24.0;
  bool log_time = true;
  bool zero_day_augmentation = true;
  /// Additive time + joint kernel; otherwise a single ARD Matern-5/2.
  bool composite_kernel = true;
  /// Unset means max(5, n_mixtures / 4).
  std::optional<std::size_t> extra_zero_compositions;
  double augmented_noise_sd_mpa = 0.5;
  /// Normalization bounds and the region for extra zero-day compositions.
  /// Unset means the bounding box of the observed mixtures.
  std::optional<domain::Constraints> design_space;
  gp::FitConfig fit;
  std::optional<gp::GpParams> warm_start;
  std::uint64_t seed = 0;

  /// Plain GP baseline: linear time, no augmentation, single Matern kernel.
  static StrengthModelConfig ablated();
};

struct StrengthPrediction {
  double age_days = 0.0;
  double mean_mpa = 0.0;
  double sd_mpa = 0.0;
};

/// Joint Gaussian over strength at (mixture, age) pairs, in MPa.
struct JointStrength {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

class StrengthModel {
 public:
  /// Conditions a GP with given hyperparameters on the (augmented) observations.
  static StrengthModel condition(std::span<const StrengthObservation> observations, const gp::GpParams& params,
                                 const StrengthModelConfig& config);
  /// Rebuilds a snapshot on the same observations; IntegrityError if their digest differs.
  static StrengthModel restore(const nlohmann::json& snapshot, std::span<const StrengthObservation> observations);

  std::vector<StrengthPrediction> predict(const Mixture& mixture, std::span<const double> ages,
                                          bool include_noise = false) const;
  /// Mixture-major joint posterior over every (mixture, age) pair.
  JointStrength predict_joint(std::span<const Mixture> mixtures, std::span<const double> ages) const;
  /// Posterior means only, for large candidate sets.
  Eigen::VectorXd predict_mean(std::span<const Mixture> mixtures, double age_days) const;
  /// Mixture-major feature rows.
  Eigen::MatrixXd features(std::span<const Mixture> mixtures, std::span<const double> ages) const;

  const gp::GaussianProcess& gp() const { return gp_; }
  const gp::GpParams& params() const { return gp_.params(); }
  const Normalization& normalization() const { return norm_; }
  const StrengthModelConfig& config() const { return config_; }
  /// Observations after augmentation, in training order.
  const std::vector<StrengthObservation>& training() const { return training_; }
  const std::string& training_digest() const { return digest_; }
  double noise_sd_mpa() const;
  double log_marginal_likelihood() const { return mll_; }

  nlohmann::json snapshot() const;

 private:
  StrengthModel(StrengthModelConfig config, Normalization norm, std::vector<StrengthObservation> training,
                gp::GaussianProcess gp, std::string digest);

  StrengthModelConfig config_;
  Normalization norm_;
  std::vector<StrengthObservation> training_;
  gp::GaussianProcess gp_;
  std::string digest_;
  double mll_ = 0.0;

  friend StrengthModel fit_strength_model(std::span<const StrengthObservation>, const StrengthModelConfig&);
};

/// Augments, normalizes and fits hyperparameters. InsufficientDataError
/// unless there are at least two measured observations at two distinct ages.
StrengthModel fit_strength_model(std::span<const StrengthObservation> observations,
                                 const StrengthModelConfig& config = {});

std::vector<StrengthPrediction> predict_strength(const StrengthModel& model, const Mixture& mixture,
                                                 std::span<const double> ages);

/// Normalization for a dataset (bounds from the design space or the data).
Normalization make_normalization(std::span<const StrengthObservation> measured, const StrengthModelConfig& config);

/// Initial hyperparameters with the kernel structure selected by `config`.
gp::GpParams initial_params(const StrengthModelConfig& config);

struct CvPoint {
  std::size_t observation = 0;  // index into the input list
  std::size_t fold = 0;
  double actual_mpa = 0.0;
  double mean_mpa = 0.0;
  double sd_mpa = 0.0;  // predictive, including noise
};

struct CvResult {
  std::vector<CvPoint> points;
  std::vector<std::vector<Mixture>> fold_mixtures;
  double rmse = 0.0;
  double coverage95 = 0.0;
};

/// Grouped K-fold: each distinct mixture lives in exactly one fold.
/// ValidationError when folds < 2 or exceeds the number of mixtures.
CvResult cross_validate(std::span<const StrengthObservation> observations, std::size_t folds, std::uint64_t seed,
                        const StrengthModelConfig& config = {});

void to_json(nlohmann::json& j, const Normalization& n);
void from_json(const nlohmann::json& j, Normalization& n);
void to_json(nlohmann::json& j, const StrengthModelConfig& c);
void from_json(const nlohmann::json& j, StrengthModelConfig& c);

}  // namespace mixopt::strength
