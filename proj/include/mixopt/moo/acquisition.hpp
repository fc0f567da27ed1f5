#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "mixopt/domain/constraints.hpp"
#include "mixopt/moo/objective_model.hpp"

namespace mixopt::moo {

enum class AcquisitionVariant { qEHVI, qNEHVI, qLogNEHVI };

std::string_view to_string(AcquisitionVariant v);
std::optional<AcquisitionVariant> parse_variant(std::string_view name);

struct AcquisitionConfig {
  std::size_t q = 6;
  std::size_t mc_samples = 128;
  std::uint64_t seed = 0;
  std::size_t raw_candidates = 512;
  std::size_t restarts = 2;
  AcquisitionVariant variant = AcquisitionVariant::qLogNEHVI;
  /// Softplus temperature of the log variant, in normalized hypervolume units.
  double temperature = 1e-3;
  /// Pattern-search sweeps per restart; 0 disables the polish.
  std::size_t local_iterations = 30;
  /// Minimum L-infinity distance (kg/m^3) from already tested mixtures.
  double novelty_kg = 1.0;

  /// ValidationError unless q >= 1, mc_samples >= 64 and temperature > 0.
  void validate() const;
};

void to_json(nlohmann::json& j, const AcquisitionConfig& c);
/// Missing keys keep their defaults; unknown variants raise SchemaError.
void from_json(const nlohmann::json& j, AcquisitionConfig& c);

/// Monte-Carlo expected hypervolume improvement of a batch against a fixed
/// frontier: mean over draws of the positive part of HV(P u Y) - HV(P).
/// `candidates` is point-major with m objectives per point; `base_samples`
/// has at least q * m columns.
double qehvi(const JointPosterior& candidates, Eigen::Index num_objectives, const Eigen::MatrixXd& frontier,
             const Eigen::VectorXd& ref, const Eigen::MatrixXd& base_samples);

/// Acquisition function with cached base samples and, for the noisy
/// variants, cached posterior draws at the observed points.
class Acquisition {
 public:
  /// `observed` rows are previously evaluated design points. The plain qEHVI
  /// variant uses `frontier` when given, else the Pareto set of the posterior
  /// means at `observed`.
  Acquisition(const ObjectiveModel& model, const Eigen::MatrixXd& observed, Eigen::VectorXd ref,
              const AcquisitionConfig& config, std::optional<Eigen::MatrixXd> frontier = std::nullopt);

  /// Value of a batch (1 <= rows <= config.q). The log variant returns the
  /// log of the smoothed improvement.
  double operator()(const Eigen::MatrixXd& candidates) const;

  const AcquisitionConfig& config() const { return config_; }
  /// Per-objective scale used by the log variant (range above the reference).
  const Eigen::VectorXd& scale() const { return scale_; }

 private:
  const ObjectiveModel& model_;
  AcquisitionConfig config_;
  Eigen::VectorXd ref_;
  Eigen::Index m_ = 0;
  Eigen::MatrixXd observed_;
  Eigen::MatrixXd base_;  // mc x (n_obs m + q m)
  Eigen::Index obs_dims_ = 0;
  Eigen::VectorXd scale_;
  // Per draw: frontier (in the variant's working coordinates) and its HV.
  std::vector<Eigen::MatrixXd> frontiers_;
  std::vector<double> base_hv_;
  Eigen::MatrixXd whitening_;  // observed block, see PsdFactor
};

struct AcquisitionResult {
  Eigen::MatrixXd batch;  // q x d
  double value = 0.0;
  double best_raw_value = 0.0;
  std::vector<double> restart_values;
  /// The feasible region is a single point; the batch repeats it.
  bool degenerate = false;
};

/// Samples raw feasible candidates, evaluates them with shared base samples,
/// builds batches greedily from the best raw points and polishes each restart
/// with a feasible pattern search along the polytope's free directions.
/// Candidates closer than the novelty distance to `tested` are skipped.
/// Throws ConstraintError when the constraints are infeasible.
AcquisitionResult optimize_acquisition(const ObjectiveModel& model, const Eigen::MatrixXd& observed,
                                       const Eigen::VectorXd& ref, const domain::Constraints& constraints,
                                       const AcquisitionConfig& config,
                                       const std::optional<Eigen::MatrixXd>& frontier = std::nullopt,
                                       const std::optional<Eigen::MatrixXd>& tested = std::nullopt);

}  // namespace mixopt::moo
