#include "mixopt/moo/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mixopt/errors.hpp"
#include "mixopt/moo/hypervolume.hpp"
#include "mixopt/moo/pareto.hpp"
#include "mixopt/moo/sampling.hpp"

namespace mixopt::moo {

namespace {

Eigen::MatrixXd as_points(const Eigen::VectorXd& flat, Eigen::Index m) {
  const Eigen::Index k = flat.size() / m;
  Eigen::MatrixXd y(k, m);
  for (Eigen::Index p = 0; p < k; ++p) y.row(p) = flat.segment(p * m, m).transpose();
  return y;
}

// True if some row of `y` is strictly above ref and not weakly dominated by the frontier.
bool can_improve(const Eigen::MatrixXd& y, const Eigen::MatrixXd& frontier, const Eigen::VectorXd& ref) {
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    if (!(y.row(i).transpose().array() > ref.array()).all()) continue;
    bool covered = false;
    for (Eigen::Index p = 0; p < frontier.rows() && !covered; ++p) {
      covered = (frontier.row(p).array() >= y.row(i).array()).all();
    }
    if (!covered) return true;
  }
  return false;
}

double improvement(const Eigen::MatrixXd& y, const Eigen::MatrixXd& frontier, double base_hv,
                   const Eigen::VectorXd& ref) {
  if (!can_improve(y, frontier, ref)) return 0.0;
  Eigen::MatrixXd all(frontier.rows() + y.rows(), ref.size());
  all << frontier, y;
  return std::max(0.0, detail::hypervolume_quiet(all, ref) - base_hv);
}

// Smallest uniform shift that lets one of the rows of `y` improve the frontier.
double shift_to_improve(const Eigen::MatrixXd& y, const Eigen::MatrixXd& frontier, const Eigen::VectorXd& ref) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    double t = (ref.transpose() - y.row(i)).maxCoeff();
    for (Eigen::Index p = 0; p < frontier.rows(); ++p) t = std::max(t, (frontier.row(p) - y.row(i)).minCoeff());
    best = std::min(best, t);
  }
  return best;
}

// log(tau * softplus(x / tau))
double log_softplus(double x, double tau) {
  const double u = x / tau;
  double log_sp;
  if (u > 30.0) {
    log_sp = std::log(u + std::log1p(std::exp(-u)));
  } else if (u < -30.0) {
    log_sp = u;
  } else {
    log_sp = std::log(std::log1p(std::exp(u)));
  }
  return std::log(tau) + log_sp;
}

double log_mean_exp(const std::vector<double>& v) {
  const double top = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s / static_cast<double>(v.size()));
}

}  // namespace

std::string_view to_string(AcquisitionVariant v) {
  switch (v) {
    case AcquisitionVariant::qEHVI: return "qEHVI";
    case AcquisitionVariant::qNEHVI: return "qNEHVI";
    case AcquisitionVariant::qLogNEHVI: return "qLogNEHVI";
  }
  return "unknown";
}

std::optional<AcquisitionVariant> parse_variant(std::string_view name) {
  for (auto v : {AcquisitionVariant::qEHVI, AcquisitionVariant::qNEHVI, AcquisitionVariant::qLogNEHVI}) {
    if (name == to_string(v)) return v;
  }
  return std::nullopt;
}

void AcquisitionConfig::validate() const {
  if (q < 1) throw ValidationError("batch size q must be at least 1");
  if (mc_samples < 64) throw ValidationError("mc_samples must be at least 64");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ValidationError("temperature must be positive");
  if (raw_candidates < 1) throw ValidationError("raw_candidates must be at least 1");
  if (restarts < 1) throw ValidationError("restarts must be at least 1");
  if (!(novelty_kg >= 0.0)) throw ValidationError("novelty distance must be non-negative");
}

void to_json(nlohmann::json& j, const AcquisitionConfig& c) {
  j = {{"q", c.q},
       {"mc_samples", c.mc_samples},
       {"seed", c.seed},
       {"raw_candidates", c.raw_candidates},
       {"restarts", c.restarts},
       {"variant", to_string(c.variant)},
       {"temperature", c.temperature},
       {"local_iterations", c.local_iterations},
       {"novelty_kg", c.novelty_kg}};
}

void from_json(const nlohmann::json& j, AcquisitionConfig& c) {
  c = AcquisitionConfig{};
  c.q = j.value("q", c.q);
  c.mc_samples = j.value("mc_samples", c.mc_samples);
  c.seed = j.value("seed", c.seed);
  c.raw_candidates = j.value("raw_candidates", c.raw_candidates);
  c.restarts = j.value("restarts", c.restarts);
  if (j.contains("variant")) {
    const auto name = j.at("variant").get<std::string>();
    const auto v = parse_variant(name);
    if (!v) throw SchemaError("unknown acquisition variant '" + name + "'");
    c.variant = *v;
  }
  c.temperature = j.value("temperature", c.temperature);
  c.local_iterations = j.value("local_iterations", c.local_iterations);
  c.novelty_kg = j.value("novelty_kg", c.novelty_kg);
  c.validate();
}

double qehvi(const JointPosterior& candidates, Eigen::Index num_objectives, const Eigen::MatrixXd& frontier,
             const Eigen::VectorXd& ref, const Eigen::MatrixXd& base_samples) {
  const Eigen::Index dim = candidates.mean.size();
  if (num_objectives < 1 || dim % num_objectives != 0 || ref.size() != num_objectives) {
    throw ShapeError("candidate posterior, objective count and reference point disagree");
  }
  if (frontier.rows() > 0 && frontier.cols() != num_objectives) throw ShapeError("frontier dimension mismatch");
  if (base_samples.cols() < dim) throw ShapeError("not enough base-sample columns");
  const Eigen::MatrixXd f = psd_factor(candidates.covariance).factor;
  const double base_hv = detail::hypervolume_quiet(frontier, ref);
  double total = 0.0;
  for (Eigen::Index s = 0; s < base_samples.rows(); ++s) {
    const Eigen::VectorXd y = candidates.mean + f * base_samples.row(s).head(dim).transpose();
    total += improvement(as_points(y, num_objectives), frontier, base_hv, ref);
  }
  return total / static_cast<double>(base_samples.rows());
}

// ---------------------------------------------------------------------------

Acquisition::Acquisition(const ObjectiveModel& model, const Eigen::MatrixXd& observed, Eigen::VectorXd ref,
                         const AcquisitionConfig& config, std::optional<Eigen::MatrixXd> frontier)
    : model_(model), config_(config), ref_(std::move(ref)), m_(model.num_objectives()), observed_(observed) {
  config_.validate();
  if (ref_.size() != m_) throw ShapeError("reference point length differs from the objective count");
  if (!ref_.allFinite()) throw ValidationError("reference point must be finite");
  const bool noisy = config_.variant != AcquisitionVariant::qEHVI;
  const bool log_variant = config_.variant == AcquisitionVariant::qLogNEHVI;
  const Eigen::Index n_obs = observed_.rows();
  obs_dims_ = noisy ? n_obs * m_ : 0;
  base_ = normal_base_samples(config_.mc_samples, static_cast<std::size_t>(obs_dims_ + static_cast<Eigen::Index>(config_.q) * m_),
                              config_.seed);

  JointPosterior obs_post;
  if (n_obs > 0) obs_post = model_.posterior(observed_);

  scale_ = Eigen::VectorXd::Ones(m_);
  if (log_variant && n_obs > 0) {
    const Eigen::MatrixXd means = as_points(obs_post.mean, m_);
    for (Eigen::Index j = 0; j < m_; ++j) {
      const double range = means.col(j).maxCoeff() - ref_[j];
      if (range > 0.0) scale_[j] = range;
    }
  }
  const Eigen::VectorXd wref = log_variant ? Eigen::VectorXd::Zero(m_) : ref_;
  auto to_working = [&](Eigen::MatrixXd y) {
    if (log_variant) {
      for (Eigen::Index j = 0; j < m_; ++j) y.col(j) = (y.col(j).array() - ref_[j]) / scale_[j];
    }
    return y;
  };
  auto reduce = [&](const Eigen::MatrixXd& y) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      if ((y.row(i).transpose().array() > wref.array()).all()) rows.push_back(i);
    }
    Eigen::MatrixXd above(static_cast<Eigen::Index>(rows.size()), m_);
    for (std::size_t k = 0; k < rows.size(); ++k) above.row(static_cast<Eigen::Index>(k)) = y.row(rows[k]);
    return pareto_filter(above).points;
  };

  if (!noisy) {
    Eigen::MatrixXd p;
    if (frontier) {
      p = *frontier;
      if (p.rows() > 0 && p.cols() != m_) throw ShapeError("frontier dimension mismatch");
    } else if (n_obs > 0) {
      p = as_points(obs_post.mean, m_);
    } else {
      p.resize(0, m_);
    }
    const Eigen::MatrixXd w = reduce(to_working(p));
    frontiers_.assign(1, w);
    base_hv_.assign(1, detail::hypervolume_quiet(w, wref));
    return;
  }

  Eigen::MatrixXd f_obs;
  if (n_obs > 0) {
    const auto pf = psd_factor(obs_post.covariance);
    f_obs = pf.factor;
    whitening_ = pf.whitening;
  }
  frontiers_.reserve(config_.mc_samples);
  base_hv_.reserve(config_.mc_samples);
  for (Eigen::Index s = 0; s < base_.rows(); ++s) {
    Eigen::MatrixXd w(0, m_);
    if (n_obs > 0) {
      const Eigen::VectorXd y = obs_post.mean + f_obs * base_.row(s).head(obs_dims_).transpose();
      w = reduce(to_working(as_points(y, m_)));
    }
    base_hv_.push_back(detail::hypervolume_quiet(w, wref));
    frontiers_.push_back(std::move(w));
  }
}

double Acquisition::operator()(const Eigen::MatrixXd& candidates) const {
  const Eigen::Index k = candidates.rows();
  if (k < 1 || k > static_cast<Eigen::Index>(config_.q)) {
    throw ShapeError("batch has " + std::to_string(k) + " rows, expected 1.." + std::to_string(config_.q));
  }
  const bool noisy = config_.variant != AcquisitionVariant::qEHVI;
  const bool log_variant = config_.variant == AcquisitionVariant::qLogNEHVI;
  const auto post = model_.posterior(candidates);
  const Eigen::Index dim = k * m_;

  Eigen::MatrixXd shift;  // dim x obs_dims
  Eigen::MatrixXd cond = post.covariance;
  if (noisy && observed_.rows() > 0) {
    shift = model_.cross_covariance(candidates, observed_) * whitening_;
    cond -= shift * shift.transpose();
  }
  const Eigen::MatrixXd f = psd_factor(cond).factor;
  const Eigen::VectorXd wref = log_variant ? Eigen::VectorXd::Zero(m_) : ref_;

  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(base_.rows()));
  double total = 0.0;
  for (Eigen::Index s = 0; s < base_.rows(); ++s) {
    Eigen::VectorXd y = post.mean + f * base_.row(s).segment(obs_dims_, dim).transpose();
    if (shift.size() > 0) y.noalias() += shift * base_.row(s).head(obs_dims_).transpose();
    Eigen::MatrixXd pts = as_points(y, m_);
    const std::size_t draw = noisy ? static_cast<std::size_t>(s) : 0;
    const auto& frontier = frontiers_[draw];
    if (log_variant) {
      for (Eigen::Index j = 0; j < m_; ++j) pts.col(j) = (pts.col(j).array() - ref_[j]) / scale_[j];
      const double hvi = improvement(pts, frontier, base_hv_[draw], wref);
      const double signed_gain = hvi > 0.0 ? hvi : -shift_to_improve(pts, frontier, wref);
      terms.push_back(log_softplus(signed_gain, config_.temperature));
    } else {
      total += improvement(pts, frontier, base_hv_[draw], wref);
    }
  }
  if (log_variant) return log_mean_exp(terms);
  return total / static_cast<double>(base_.rows());
}

}  // namespace mixopt::moo
