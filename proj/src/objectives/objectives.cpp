#include "mixopt/objectives/objectives.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mixopt/errors.hpp"

namespace mixopt::objectives {

std::vector<std::string> ObjectiveSpec::names() const {
  std::vector<std::string> out;
  for (double a : ages_days) {
    std::ostringstream s;
    s << "strength_day_" << a;
    out.push_back(s.str());
  }
  out.push_back("neg_gwp");
  return out;
}

void ObjectiveSpec::validate() const {
  if (ages_days.empty()) throw ValidationError("objective spec needs at least one strength age");
  for (double a : ages_days) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw ValidationError("objective ages must be finite and non-negative");
  }
  if (reference_point.size() != num_objectives()) {
    throw ShapeError("reference point has " + std::to_string(reference_point.size()) + " entries, expected " +
                     std::to_string(num_objectives()));
  }
  if (!reference_point.allFinite()) throw ValidationError("reference point must be finite");
}

void to_json(nlohmann::json& j, const ObjectiveSpec& s) {
  j = {{"ages_days", s.ages_days},
       {"reference_point", std::vector<double>(s.reference_point.data(), s.reference_point.data() + s.reference_point.size())}};
}

void from_json(const nlohmann::json& j, ObjectiveSpec& s) {
  s.ages_days = j.at("ages_days").get<std::vector<double>>();
  const auto r = j.at("reference_point").get<std::vector<double>>();
  s.reference_point = Eigen::VectorXd::Map(r.data(), static_cast<Eigen::Index>(r.size()));
  s.validate();
}

std::vector<ObjectivePosterior> objective_posterior(const strength::StrengthModel& model, const GwpTable& table,
                                                    std::span<const domain::Mixture> mixtures,
                                                    const ObjectiveSpec& spec) {
  spec.validate();
  const MixtureObjectiveModel adapter(model, table, spec.ages_days);
  std::vector<ObjectivePosterior> out;
  out.reserve(mixtures.size());
  for (const auto& mix : mixtures) {
    const auto post = adapter.posterior(mix.to_vector().transpose());
    out.push_back({post.mean, post.covariance});
  }
  return out;
}

MixtureObjectiveModel::MixtureObjectiveModel(const strength::StrengthModel& model, GwpTable table,
                                             std::vector<double> ages_days)
    : model_(model), table_(std::move(table)), ages_(std::move(ages_days)) {
  table_.validate();
  if (ages_.empty()) throw ValidationError("at least one strength age is required");
}

std::vector<domain::Mixture> MixtureObjectiveModel::mixtures(const Eigen::MatrixXd& points) const {
  if (points.cols() != static_cast<Eigen::Index>(domain::kNumIngredients)) {
    throw ShapeError("design points must have one column per ingredient");
  }
  std::vector<domain::Mixture> out;
  out.reserve(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) out.push_back(domain::Mixture::from_vector(points.row(i).transpose()));
  return out;
}

moo::JointPosterior MixtureObjectiveModel::posterior(const Eigen::MatrixXd& points) const {
  const auto mix = mixtures(points);
  const Eigen::Index n = points.rows(), a = static_cast<Eigen::Index>(ages_.size()), m = a + 1;
  const auto js = model_.predict_joint(mix, ages_);  // index p * a + k
  moo::JointPosterior out{Eigen::VectorXd(n * m), Eigen::MatrixXd::Zero(n * m, n * m)};
  for (Eigen::Index p = 0; p < n; ++p) {
    out.mean.segment(p * m, a) = js.mean.segment(p * a, a);
    out.mean[p * m + a] = -gwp(table_, mix[static_cast<std::size_t>(p)]);
    for (Eigen::Index r = 0; r < n; ++r) out.covariance.block(p * m, r * m, a, a) = js.covariance.block(p * a, r * a, a, a);
  }
  return out;
}

Eigen::MatrixXd MixtureObjectiveModel::cross_covariance(const Eigen::MatrixXd& pa, const Eigen::MatrixXd& pb) const {
  const auto ma = mixtures(pa), mb = mixtures(pb);
  const Eigen::Index a = static_cast<Eigen::Index>(ages_.size()), m = a + 1;
  const double var = model_.normalization().target_sd * model_.normalization().target_sd;
  const Eigen::MatrixXd c = model_.gp().cross_covariance(model_.features(ma, ages_), model_.features(mb, ages_)) * var;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(pa.rows() * m, pb.rows() * m);
  for (Eigen::Index p = 0; p < pa.rows(); ++p)
    for (Eigen::Index r = 0; r < pb.rows(); ++r) out.block(p * m, r * m, a, a) = c.block(p * a, r * a, a, a);
  return out;
}

}  // namespace mixopt::objectives
