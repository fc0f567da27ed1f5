#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "mixopt/errors.hpp"
#include "mixopt/moo/acquisition.hpp"

namespace mixopt::moo {

namespace {

constexpr double kFeasTol = 1e-9;

struct Search {
  const Acquisition& acq;
  const domain::PolytopeSampler& sampler;
  const Eigen::MatrixXd& tested;
  double novelty;

  bool novel(const Eigen::VectorXd& x) const {
    for (Eigen::Index i = 0; i < tested.rows(); ++i) {
      if ((tested.row(i).transpose() - x).cwiseAbs().maxCoeff() < novelty) return false;
    }
    return true;
  }

  bool acceptable(const Eigen::VectorXd& x) const {
    return sampler.constraints().is_feasible(domain::Mixture::from_vector(x), kFeasTol) && novel(x);
  }

  double max_range() const {
    double r = 0.0;
    for (auto id : domain::kAllIngredients) {
      const auto b = sampler.constraints().bounds(id);
      r = std::max(r, b.hi - b.lo);
    }
    return r;
  }

  // Coordinate pattern search over every batch member along the free directions.
  double polish(Eigen::MatrixXd& batch, double value, std::size_t sweeps) const {
    const Eigen::MatrixXd& dirs = sampler.free_directions();
    const double range = max_range();
    double step = 0.05 * range;
    const double min_step = 1e-4 * range;
    for (std::size_t it = 0; it < sweeps && step >= min_step && dirs.cols() > 0; ++it) {
      bool improved = false;
      for (Eigen::Index p = 0; p < batch.rows(); ++p) {
        for (Eigen::Index d = 0; d < dirs.cols(); ++d) {
          for (double sign : {1.0, -1.0}) {
            const Eigen::VectorXd x = sampler.polish(batch.row(p).transpose() + sign * step * dirs.col(d));
            if (!acceptable(x)) continue;
            Eigen::MatrixXd trial = batch;
            trial.row(p) = x.transpose();
            const double v = acq(trial);
            if (v > value) {
              batch = std::move(trial);
              value = v;
              improved = true;
              break;
            }
          }
        }
      }
      if (!improved) step *= 0.5;
    }
    return value;
  }
};

}  // namespace

AcquisitionResult optimize_acquisition(const ObjectiveModel& model, const Eigen::MatrixXd& observed,
                                       const Eigen::VectorXd& ref, const domain::Constraints& constraints,
                                       const AcquisitionConfig& config, const std::optional<Eigen::MatrixXd>& frontier,
                                       const std::optional<Eigen::MatrixXd>& tested) {
  config.validate();
  const domain::PolytopeSampler sampler(constraints);
  const Acquisition acq(model, observed, ref, config, frontier);
  const Eigen::MatrixXd tested_points = tested ? *tested : observed;
  const auto q = static_cast<Eigen::Index>(config.q);
  AcquisitionResult result;

  if (sampler.dimension() == 0) {
    spdlog::warn("feasible region is a single point; returning {} copies of it", config.q);
    const Eigen::RowVectorXd x = sampler.feasible_point().to_vector().transpose();
    result.batch = x.replicate(q, 1);
    result.value = acq(result.batch);
    result.best_raw_value = acq(result.batch.topRows(1));
    result.restart_values = {result.value};
    result.degenerate = true;
    return result;
  }

  const Search search{acq, sampler, tested_points, config.novelty_kg};
  std::vector<Eigen::VectorXd> raw;
  for (const auto& m : sampler.sample(config.raw_candidates, config.seed ^ 0x9e3779b97f4a7c15ULL)) {
    const Eigen::VectorXd x = m.to_vector();
    if (search.novel(x)) raw.push_back(x);
  }
  if (raw.empty()) throw ConstraintError("no feasible candidate", "every raw candidate lies within the novelty distance of a tested mixture");

  std::vector<double> single(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) single[i] = acq(raw[i].transpose());
  std::vector<std::size_t> order(raw.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return single[a] > single[b]; });
  result.best_raw_value = single[order.front()];

  const std::size_t restarts = std::min(config.restarts, raw.size());
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    Eigen::MatrixXd batch = raw[order[r]].transpose();
    double value = single[order[r]];
    std::vector<bool> used(raw.size(), false);
    used[order[r]] = true;
    // Greedy growth: add the raw candidate that helps the batch most.
    while (batch.rows() < q) {
      std::size_t pick = raw.size();
      double pick_value = -std::numeric_limits<double>::infinity();
      Eigen::MatrixXd trial(batch.rows() + 1, batch.cols());
      trial.topRows(batch.rows()) = batch;
      for (std::size_t i = 0; i < raw.size(); ++i) {
        if (used[i] && raw.size() >= config.q) continue;
        trial.bottomRows(1) = raw[i].transpose();
        const double v = acq(trial);
        if (v > pick_value) {
          pick_value = v;
          pick = i;
        }
      }
      used[pick] = true;
      batch.conservativeResize(batch.rows() + 1, Eigen::NoChange);
      batch.bottomRows(1) = raw[pick].transpose();
      value = pick_value;
    }
    value = search.polish(batch, value, config.local_iterations);
    spdlog::debug("acquisition restart {}: value {}", r, value);
    result.restart_values.push_back(value);
    if (value > best) {
      best = value;
      result.batch = batch;
      result.value = value;
    }
  }
  return result;
}

}  // namespace mixopt::moo
