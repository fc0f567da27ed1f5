#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "mixopt/errors.hpp"
#include "mixopt/strength/model.hpp"

namespace mixopt::strength {

namespace {
constexpr double kZ975 = 1.959963984540054;
}

CvResult cross_validate(std::span<const StrengthObservation> observations, std::size_t folds, std::uint64_t seed,
                        const StrengthModelConfig& config) {
  if (folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
  std::vector<std::size_t> measured;
  for (std::size_t i = 0; i < observations.size(); ++i) {
    if (observations[i].provenance == Provenance::measured) measured.push_back(i);
  }
  std::vector<StrengthObservation> meas;
  for (auto i : measured) meas.push_back(observations[i]);
  auto mixtures = distinct_mixtures(meas);
  if (mixtures.size() < folds) {
    throw ValidationError("cross-validation with " + std::to_string(folds) + " folds needs at least that many mixtures (have " +
                          std::to_string(mixtures.size()) + ")");
  }

  std::vector<std::size_t> order(mixtures.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::map<Mixture, std::size_t> fold_of;
  CvResult result;
  result.fold_mixtures.resize(folds);
  for (std::size_t p = 0; p < order.size(); ++p) {
    const auto& m = mixtures[order[p]];
    fold_of[m] = p % folds;
    result.fold_mixtures[p % folds].push_back(m);
  }

  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<StrengthObservation> train;
    std::vector<std::size_t> test;
    for (auto i : measured) {
      if (fold_of.at(observations[i].mixture) == f) {
        test.push_back(i);
      } else {
        train.push_back(observations[i]);
      }
    }
    std::optional<StrengthModel> model;
    try {
      model.emplace(fit_strength_model(train, config));
    } catch (const InsufficientDataError& e) {
      throw ValidationError(std::string("fold ") + std::to_string(f) + " has too little training data: " + e.what());
    }
    for (auto i : test) {
      const auto& o = observations[i];
      const double age[1] = {o.age_days};
      const auto pred = model->predict(o.mixture, age, /*include_noise=*/true).front();
      result.points.push_back({i, f, o.strength_mpa, pred.mean_mpa, pred.sd_mpa});
    }
  }

  std::sort(result.points.begin(), result.points.end(),
            [](const CvPoint& a, const CvPoint& b) { return a.observation < b.observation; });
  double sq = 0.0;
  std::size_t inside = 0;
  for (const auto& p : result.points) {
    sq += std::pow(p.actual_mpa - p.mean_mpa, 2);
    if (std::abs(p.actual_mpa - p.mean_mpa) <= kZ975 * p.sd_mpa) ++inside;
  }
  const double n = static_cast<double>(result.points.size());
  result.rmse = std::sqrt(sq / n);
  result.coverage95 = static_cast<double>(inside) / n;
  return result;
}

}  // namespace mixopt::strength
