#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "mixopt/moo/objective_model.hpp"
#include "mixopt/objectives/gwp.hpp"
#include "mixopt/strength/model.hpp"

namespace mixopt::objectives {

/// Objectives are [strength at each age..., -GWP], all maximized.
struct ObjectiveSpec {
  std::vector<double> ages_days{1.0, 28.0};
  /// Minimum acceptable value per objective (MPa..., -kg CO2e/m3).
  Eigen::VectorXd reference_point = Eigen::Vector3d(0.0, 0.0, -600.0);

  Eigen::Index num_objectives() const { return static_cast<Eigen::Index>(ages_days.size()) + 1; }
  std::vector<std::string> names() const;
  void validate() const;
  bool operator==(const ObjectiveSpec& o) const { return ages_days == o.ages_days && reference_point == o.reference_point; }
};

void to_json(nlohmann::json& j, const ObjectiveSpec& s);
void from_json(const nlohmann::json& j, ObjectiveSpec& s);

struct ObjectivePosterior {
  Eigen::VectorXd mean;        // m
  Eigen::MatrixXd covariance;  // m x m, last row/column zero
};

/// Per-mixture objective mean and covariance; ages share the model's joint posterior.
std::vector<ObjectivePosterior> objective_posterior(const strength::StrengthModel& model, const GwpTable& table,
                                                    std::span<const domain::Mixture> mixtures,
                                                    const ObjectiveSpec& spec = {});

/// The objectives as seen by the acquisition code. Design points are rows of
/// ingredient quantities (kg/m3) in the canonical ingredient order.
class MixtureObjectiveModel : public moo::ObjectiveModel {
 public:
  MixtureObjectiveModel(const strength::StrengthModel& model, GwpTable table, std::vector<double> ages_days);

  Eigen::Index num_objectives() const override { return static_cast<Eigen::Index>(ages_.size()) + 1; }
  moo::JointPosterior posterior(const Eigen::MatrixXd& points) const override;
  Eigen::MatrixXd cross_covariance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const override;

  const GwpTable& table() const { return table_; }

 private:
  std::vector<domain::Mixture> mixtures(const Eigen::MatrixXd& points) const;

  const strength::StrengthModel& model_;
  GwpTable table_;
  std::vector<double> ages_;
};

}  // namespace mixopt::objectives
