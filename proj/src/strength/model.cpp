#include "mixopt/strength/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "mixopt/errors.hpp"

namespace mixopt::strength {

namespace {

constexpr double kVarianceFloor = 1e-12;  // standardized units

std::vector<StrengthObservation> measured_only(std::span<const StrengthObservation> obs) {
  std::vector<StrengthObservation> out;
  for (const auto& o : obs) {
    if (o.provenance == Provenance::measured) out.push_back(o);
  }
  return out;
}

domain::Constraints bounding_box(std::span<const StrengthObservation> obs) {
  domain::Constraints c;
  for (auto id : domain::kAllIngredients) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& o : obs) {
      lo = std::min(lo, o.mixture[id]);
      hi = std::max(hi, o.mixture[id]);
    }
    c.set_bounds(id, {lo, hi});
  }
  return c;
}

struct Prepared {
  Normalization norm;
  std::vector<StrengthObservation> training;
  gp::TrainingData data;
};

Prepared prepare(std::span<const StrengthObservation> observations, const StrengthModelConfig& config) {
  if (observations.empty()) throw InsufficientDataError("no observations to fit");
  for (const auto& o : observations) o.validate();
  const auto measured = measured_only(observations);
  if (measured.empty()) throw InsufficientDataError("no measured observations");

  Prepared p;
  p.norm = make_normalization(measured, config);
  if (config.zero_day_augmentation) {
    const auto n_mix = distinct_mixtures(measured).size();
    const auto extra = config.extra_zero_compositions.value_or(default_extra_zero_compositions(n_mix));
    std::optional<domain::PolytopeSampler> space;
    if (extra > 0) space.emplace(config.design_space ? *config.design_space : bounding_box(measured));
    p.training = augment_zero_day(observations, extra, config.seed, space ? &*space : nullptr);
  } else {
    p.training = measured;
  }

  const auto n = static_cast<Eigen::Index>(p.training.size());
  p.data.inputs.resize(n, kFeatureDim);
  p.data.targets.resize(n);
  p.data.fixed_noise = Eigen::VectorXd::Zero(n);
  p.data.learned_noise.assign(p.training.size(), true);
  const double anchor_var = std::pow(config.augmented_noise_sd_mpa / p.norm.target_sd, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = p.training[static_cast<std::size_t>(i)];
    p.data.inputs.row(i) = featurize(o.mixture, o.age_days, p.norm).transpose();
    p.data.targets[i] = (o.strength_mpa - p.norm.target_mean) / p.norm.target_sd;
    if (o.provenance == Provenance::augmented_zero) {
      p.data.fixed_noise[i] = anchor_var;
      p.data.learned_noise[static_cast<std::size_t>(i)] = false;
    }
  }
  return p;
}

void check_enough_data(std::span<const StrengthObservation> observations) {
  std::size_t n = 0;
  std::set<double> ages;
  for (const auto& o : observations) {
    if (o.provenance != Provenance::measured) continue;
    ++n;
    ages.insert(o.age_days);
  }
  if (n < 2 || ages.size() < 2) {
    throw InsufficientDataError("fitting needs at least 2 measured observations at 2 distinct ages (have " +
                                std::to_string(n) + " at " + std::to_string(ages.size()) + " ages)");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Normalization

Eigen::VectorXd Normalization::normalize(const Mixture& m) const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(domain::kNumIngredients));
  for (std::size_t i = 0; i < domain::kNumIngredients; ++i) v[static_cast<Eigen::Index>(i)] = (m.quantities()[i] - lower[i]) / range[i];
  return v;
}

Mixture Normalization::denormalize(const Eigen::Ref<const Eigen::VectorXd>& features) const {
  if (features.size() < static_cast<Eigen::Index>(domain::kNumIngredients)) {
    throw ShapeError("feature vector shorter than the ingredient count");
  }
  std::array<double, domain::kNumIngredients> q{};
  for (std::size_t i = 0; i < domain::kNumIngredients; ++i) q[i] = features[static_cast<Eigen::Index>(i)] * range[i] + lower[i];
  return Mixture(q);
}

double Normalization::time_feature(double age_days) const {
  if (!(age_days >= 0.0) || !std::isfinite(age_days)) throw ValidationError("age must be finite and >= 0");
  return time == TimeTransform::log_offset ? std::log(age_days + tau_days) : age_days / time_scale;
}

void Normalization::validate() const {
  for (std::size_t i = 0; i < domain::kNumIngredients; ++i) {
    if (!std::isfinite(lower[i]) || !std::isfinite(range[i]) || !(range[i] > 0.0)) {
      throw ValidationError("normalization constants must be finite with positive range");
    }
  }
  if (!std::isfinite(target_mean) || !std::isfinite(target_sd) || !(target_sd > 0.0)) {
    throw ValidationError("target normalization must be finite with positive sd");
  }
  if (!(tau_days > 0.0) || !std::isfinite(tau_days)) throw ValidationError("tau must be positive");
  if (!(time_scale > 0.0) || !std::isfinite(time_scale)) throw ValidationError("time scale must be positive");
}

Eigen::VectorXd featurize(const Mixture& mixture, double age_days, const Normalization& norm) {
  Eigen::VectorXd f(kFeatureDim);
  f.head(static_cast<Eigen::Index>(domain::kNumIngredients)) = norm.normalize(mixture);
  f[kTimeFeature] = norm.time_feature(age_days);
  return f;
}

Normalization make_normalization(std::span<const StrengthObservation> measured, const StrengthModelConfig& config) {
  Normalization n;
  const auto box = config.design_space ? *config.design_space : bounding_box(measured);
  for (auto id : domain::kAllIngredients) {
    const auto b = box.declared_bounds(id);
    const auto i = domain::index(id);
    n.lower[i] = b.lo;
    n.range[i] = (b.hi - b.lo > 0.0) ? b.hi - b.lo : 1.0;
  }
  double sum = 0.0, sq = 0.0, max_age = 0.0;
  for (const auto& o : measured) {
    sum += o.strength_mpa;
    max_age = std::max(max_age, o.age_days);
  }
  const double count = static_cast<double>(measured.size());
  n.target_mean = count > 0 ? sum / count : 0.0;
  for (const auto& o : measured) sq += std::pow(o.strength_mpa - n.target_mean, 2);
  const double sd = count > 1 ? std::sqrt(sq / (count - 1)) : 0.0;
  n.target_sd = sd > 0.0 ? sd : 1.0;
  n.time = config.log_time ? TimeTransform::log_offset : TimeTransform::linear;
  n.tau_days = config.tau_days;
  n.time_scale = max_age > 0.0 ? max_age : 1.0;
  n.validate();
  return n;
}

StrengthModelConfig StrengthModelConfig::ablated() {
  StrengthModelConfig c;
  c.log_time = false;
  c.zero_day_augmentation = false;
  c.composite_kernel = false;
  return c;
}

gp::GpParams initial_params(const StrengthModelConfig& config) {
  gp::GpParams p;
  const std::vector<double> ones(static_cast<std::size_t>(kFeatureDim), 1.0);
  if (config.composite_kernel) {
    p.kernel = gp::KernelParams::additive(gp::KernelParams::exponentiated_quadratic(0.5, {2.0}, {kTimeFeature}),
                                          gp::KernelParams::matern52(0.5, ones));
  } else {
    p.kernel = gp::KernelParams::matern52(1.0, ones);
  }
  p.noise_variance = 0.05;
  return p;
}

// ---------------------------------------------------------------------------
// StrengthModel

StrengthModel::StrengthModel(StrengthModelConfig config, Normalization norm, std::vector<StrengthObservation> training,
                             gp::GaussianProcess gp, std::string digest)
    : config_(std::move(config)),
      norm_(norm),
      training_(std::move(training)),
      gp_(std::move(gp)),
      digest_(std::move(digest)) {}

StrengthModel StrengthModel::condition(std::span<const StrengthObservation> observations, const gp::GpParams& params,
                                       const StrengthModelConfig& config) {
  auto p = prepare(observations, config);
  params.kernel.validate(kFeatureDim);
  gp::GaussianProcess gp(params, std::move(p.data), config.fit.jitter);
  return StrengthModel(config, p.norm, std::move(p.training), std::move(gp), digest(observations));
}

StrengthModel fit_strength_model(std::span<const StrengthObservation> observations, const StrengthModelConfig& config) {
  check_enough_data(observations);
  auto p = prepare(observations, config);
  gp::GpParams init = initial_params(config);
  if (config.warm_start &&
      gp::num_hyperparameters(config.warm_start->kernel) == gp::num_hyperparameters(init.kernel) &&
      config.warm_start->kernel.variant == init.kernel.variant) {
    init = *config.warm_start;
  }
  gp::FitConfig fc = config.fit;
  fc.seed = config.seed;
  const auto fit = gp::fit_hyperparameters(init, p.data, fc);
  gp::GaussianProcess gp(fit.params, std::move(p.data), fc.jitter);
  StrengthModel model(config, p.norm, std::move(p.training), std::move(gp), digest(observations));
  model.mll_ = fit.mll;
  return model;
}

Eigen::MatrixXd StrengthModel::features(std::span<const Mixture> mixtures, std::span<const double> ages) const {
  Eigen::MatrixXd f(static_cast<Eigen::Index>(mixtures.size() * ages.size()), kFeatureDim);
  Eigen::Index row = 0;
  for (const auto& m : mixtures) {
    m.validate_quantities();
    const Eigen::VectorXd x = norm_.normalize(m);
    for (double a : ages) {
      f.row(row).head(x.size()) = x.transpose();
      f(row, kTimeFeature) = norm_.time_feature(a);
      ++row;
    }
  }
  return f;
}

std::vector<StrengthPrediction> StrengthModel::predict(const Mixture& mixture, std::span<const double> ages,
                                                       bool include_noise) const {
  const auto post = gp_.posterior(features(std::span(&mixture, 1), ages));
  const double noise = include_noise ? gp_.params().noise_variance : 0.0;
  std::vector<StrengthPrediction> out;
  out.reserve(ages.size());
  for (std::size_t i = 0; i < ages.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double var = std::max(post.covariance(k, k), kVarianceFloor) + noise;
    out.push_back({ages[i], post.mean[k] * norm_.target_sd + norm_.target_mean, std::sqrt(var) * norm_.target_sd});
  }
  return out;
}

JointStrength StrengthModel::predict_joint(std::span<const Mixture> mixtures, std::span<const double> ages) const {
  auto post = gp_.posterior(features(mixtures, ages));
  JointStrength out;
  out.mean = post.mean.array() * norm_.target_sd + norm_.target_mean;
  out.covariance = post.covariance * (norm_.target_sd * norm_.target_sd);
  return out;
}

Eigen::VectorXd StrengthModel::predict_mean(std::span<const Mixture> mixtures, double age_days) const {
  const double age[1] = {age_days};
  return gp_.mean(features(mixtures, age)).array() * norm_.target_sd + norm_.target_mean;
}

double StrengthModel::noise_sd_mpa() const { return std::sqrt(gp_.params().noise_variance) * norm_.target_sd; }

std::vector<StrengthPrediction> predict_strength(const StrengthModel& model, const Mixture& mixture,
                                                 std::span<const double> ages) {
  return model.predict(mixture, ages);
}

// ---------------------------------------------------------------------------
// Snapshots

nlohmann::json StrengthModel::snapshot() const {
  return {{"params", gp_.params()},
          {"normalization", norm_},
          {"config", config_},
          {"training_digest", digest_},
          {"n_training", training_.size()},
          {"log_marginal_likelihood", mll_}};
}

StrengthModel StrengthModel::restore(const nlohmann::json& snapshot, std::span<const StrengthObservation> observations) {
  std::string stored;
  StrengthModelConfig config;
  gp::GpParams params;
  try {
    stored = snapshot.at("training_digest").get<std::string>();
    config = snapshot.at("config").get<StrengthModelConfig>();
    params = snapshot.at("params").get<gp::GpParams>();
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed model snapshot: ") + e.what(), stored);
  }
  if (digest(observations) != stored) {
    throw IntegrityError("observations do not match the snapshot's training digest " + stored, stored);
  }
  auto model = condition(observations, params, config);
  model.mll_ = snapshot.value("log_marginal_likelihood", 0.0);
  return model;
}

void to_json(nlohmann::json& j, const Normalization& n) {
  j = {{"lower", n.lower},
       {"range", n.range},
       {"target_mean", n.target_mean},
       {"target_sd", n.target_sd},
       {"time", n.time == TimeTransform::log_offset ? "log_offset" : "linear"},
       {"tau_days", n.tau_days},
       {"time_scale", n.time_scale}};
}

void from_json(const nlohmann::json& j, Normalization& n) {
  n.lower = j.at("lower").get<std::array<double, domain::kNumIngredients>>();
  n.range = j.at("range").get<std::array<double, domain::kNumIngredients>>();
  n.target_mean = j.at("target_mean").get<double>();
  n.target_sd = j.at("target_sd").get<double>();
  n.time = j.at("time").get<std::string>() == "linear" ? TimeTransform::linear : TimeTransform::log_offset;
  n.tau_days = j.at("tau_days").get<double>();
  n.time_scale = j.at("time_scale").get<double>();
  n.validate();
}

void to_json(nlohmann::json& j, const StrengthModelConfig& c) {
  j = {{"tau_days", c.tau_days},
       {"log_time", c.log_time},
       {"zero_day_augmentation", c.zero_day_augmentation},
       {"composite_kernel", c.composite_kernel},
       {"augmented_noise_sd_mpa", c.augmented_noise_sd_mpa},
       {"seed", c.seed},
       {"fit",
        {{"restarts", c.fit.restarts},
         {"max_iterations", c.fit.max_iterations},
         {"gradient_tolerance", c.fit.gradient_tolerance},
         {"lengthscale_prior", c.fit.lengthscale_prior}}}};
  j["extra_zero_compositions"] =
      c.extra_zero_compositions ? nlohmann::json(*c.extra_zero_compositions) : nlohmann::json(nullptr);
  j["design_space"] = c.design_space ? nlohmann::json(*c.design_space) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, StrengthModelConfig& c) {
  c = StrengthModelConfig{};
  c.tau_days = j.value("tau_days", c.tau_days);
  c.log_time = j.value("log_time", c.log_time);
  c.zero_day_augmentation = j.value("zero_day_augmentation", c.zero_day_augmentation);
  c.composite_kernel = j.value("composite_kernel", c.composite_kernel);
  c.augmented_noise_sd_mpa = j.value("augmented_noise_sd_mpa", c.augmented_noise_sd_mpa);
  c.seed = j.value("seed", c.seed);
  if (j.contains("fit")) {
    const auto& f = j["fit"];
    c.fit.restarts = f.value("restarts", c.fit.restarts);
    c.fit.max_iterations = f.value("max_iterations", c.fit.max_iterations);
    c.fit.gradient_tolerance = f.value("gradient_tolerance", c.fit.gradient_tolerance);
    c.fit.lengthscale_prior = f.value("lengthscale_prior", c.fit.lengthscale_prior);
  }
  if (j.contains("extra_zero_compositions") && !j["extra_zero_compositions"].is_null()) {
    c.extra_zero_compositions = j["extra_zero_compositions"].get<std::size_t>();
  }
  if (j.contains("design_space") && !j["design_space"].is_null()) {
    c.design_space = domain::constraints_from_json(j["design_space"]);
  }
}

}  // namespace mixopt::strength
