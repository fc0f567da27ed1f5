#include "mixopt/gp/gp.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "bfgs.hpp"
#include "mixopt/errors.hpp"

namespace mixopt::gp {

namespace {

constexpr Eigen::Index kChunk = 4096;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::MatrixXd noisy_gram(const GpParams& params, const TrainingData& data) {
  Eigen::MatrixXd k = kernel_matrix(params.kernel, data.inputs);
  k.diagonal() += data.noise_diagonal(params.noise_variance);
  return k;
}

}  // namespace

// ---------------------------------------------------------------------------
// TrainingData

TrainingData TrainingData::with_learned_noise(Eigen::MatrixXd x, Eigen::VectorXd y) {
  TrainingData d;
  const auto n = x.rows();
  d.inputs = std::move(x);
  d.targets = std::move(y);
  d.fixed_noise = Eigen::VectorXd::Zero(n);
  d.learned_noise.assign(static_cast<std::size_t>(n), true);
  return d;
}

TrainingData TrainingData::with_fixed_noise(Eigen::MatrixXd x, Eigen::VectorXd y, Eigen::VectorXd noise) {
  TrainingData d;
  const auto n = x.rows();
  d.inputs = std::move(x);
  d.targets = std::move(y);
  d.fixed_noise = std::move(noise);
  d.learned_noise.assign(static_cast<std::size_t>(n), false);
  return d;
}

bool TrainingData::has_learned_noise() const {
  for (bool b : learned_noise) {
    if (b) return true;
  }
  return false;
}

Eigen::VectorXd TrainingData::noise_diagonal(double learned_variance) const {
  Eigen::VectorXd d = fixed_noise;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (learned_noise[static_cast<std::size_t>(i)]) d[i] = learned_variance;
  }
  return d;
}

void TrainingData::validate() const {
  const auto n = inputs.rows();
  if (n < 1) throw ShapeError("training data needs at least one point");
  if (targets.size() != n || fixed_noise.size() != n || static_cast<Eigen::Index>(learned_noise.size()) != n) {
    throw ShapeError("training inputs, targets and noise have inconsistent lengths");
  }
  if (!inputs.allFinite() || !targets.allFinite()) throw ValidationError("training data must be finite");
  if ((fixed_noise.array() < 0.0).any() || !fixed_noise.allFinite()) {
    throw ValidationError("fixed noise variances must be finite and non-negative");
  }
}

// ---------------------------------------------------------------------------
// Factorization

Factorization robust_cholesky(const Eigen::MatrixXd& k, const JitterPolicy& policy) {
  Factorization f;
  f.llt.compute(k);
  if (f.llt.info() == Eigen::Success) return f;
  const double scale = std::max(k.diagonal().mean(), std::numeric_limits<double>::min());
  double rel = policy.start;
  double tried = 0.0;
  while (rel <= policy.max_relative * (1.0 + 1e-9)) {
    tried = rel * scale;
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += tried;
    f.llt.compute(kj);
    if (f.llt.info() == Eigen::Success) {
      f.jitter = tried;
      return f;
    }
    rel *= policy.growth;
  }
  throw ConditioningError("covariance matrix not positive definite after jitter " + std::to_string(tried), tried);
}

// ---------------------------------------------------------------------------
// GaussianProcess

GaussianProcess::GaussianProcess(GpParams params, TrainingData data, JitterPolicy policy)
    : params_(std::move(params)), data_(std::move(data)) {
  data_.validate();
  params_.kernel.validate(data_.dim());
  if (data_.has_learned_noise() && !(params_.noise_variance >= 0.0)) {
    throw ValidationError("noise variance must be non-negative");
  }
  factor_ = robust_cholesky(noisy_gram(params_, data_), policy);
  alpha_ = factor_.llt.solve(data_.targets);
}

Eigen::MatrixXd GaussianProcess::whitened_cross(const Eigen::MatrixXd& queries) const {
  Eigen::MatrixXd v = kernel_matrix(params_.kernel, data_.inputs, queries);
  factor_.llt.matrixL().solveInPlace(v);
  return v;
}

PosteriorGaussian GaussianProcess::posterior(const Eigen::MatrixXd& queries) const {
  if (queries.cols() != data_.dim()) throw ShapeError("query dimension does not match training inputs");
  const Eigen::MatrixXd kxq = kernel_matrix(params_.kernel, data_.inputs, queries);
  PosteriorGaussian p;
  p.mean = kxq.transpose() * alpha_;
  Eigen::MatrixXd v = kxq;
  factor_.llt.matrixL().solveInPlace(v);
  p.covariance = kernel_matrix(params_.kernel, queries);
  p.covariance.noalias() -= v.transpose() * v;
  p.covariance = 0.5 * (p.covariance + p.covariance.transpose()).eval();
  return p;
}

Eigen::VectorXd GaussianProcess::mean(const Eigen::MatrixXd& queries) const {
  if (queries.cols() != data_.dim()) throw ShapeError("query dimension does not match training inputs");
  Eigen::VectorXd out(queries.rows());
  for (Eigen::Index start = 0; start < queries.rows(); start += kChunk) {
    const Eigen::Index len = std::min(kChunk, queries.rows() - start);
    const Eigen::MatrixXd kqx = kernel_matrix(params_.kernel, queries.middleRows(start, len), data_.inputs);
    out.segment(start, len) = kqx * alpha_;
  }
  return out;
}

Eigen::VectorXd GaussianProcess::variance(const Eigen::MatrixXd& queries) const {
  if (queries.cols() != data_.dim()) throw ShapeError("query dimension does not match training inputs");
  Eigen::VectorXd out(queries.rows());
  for (Eigen::Index start = 0; start < queries.rows(); start += kChunk) {
    const Eigen::Index len = std::min(kChunk, queries.rows() - start);
    const Eigen::MatrixXd block = queries.middleRows(start, len);
    const Eigen::MatrixXd v = whitened_cross(block);
    for (Eigen::Index i = 0; i < len; ++i) {
      const double prior = kernel_eval(params_.kernel, block.row(i).transpose(), block.row(i).transpose());
      out[start + i] = prior - v.col(i).squaredNorm();
    }
  }
  return out;
}

Eigen::MatrixXd GaussianProcess::cross_covariance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const {
  const Eigen::MatrixXd va = whitened_cross(a);
  const Eigen::MatrixXd vb = whitened_cross(b);
  Eigen::MatrixXd c = kernel_matrix(params_.kernel, a, b);
  c.noalias() -= va.transpose() * vb;
  return c;
}

PosteriorGaussian posterior(const GpParams& params, const TrainingData& data, const Eigen::MatrixXd& queries) {
  return GaussianProcess(params, data).posterior(queries);
}

// ---------------------------------------------------------------------------
// Marginal likelihood

Eigen::VectorXd pack(const GpParams& params, bool learned_noise) {
  Eigen::VectorXd k = to_unconstrained(params.kernel);
  if (!learned_noise) return k;
  Eigen::VectorXd out(k.size() + 1);
  out.head(k.size()) = k;
  out[k.size()] = std::log(std::max(params.noise_variance - kMinNoiseVariance, 1e-300));
  return out;
}

GpParams unpack(const GpParams& shape, const Eigen::Ref<const Eigen::VectorXd>& theta, bool learned_noise) {
  const Eigen::Index nk = num_hyperparameters(shape.kernel);
  if (theta.size() != nk + (learned_noise ? 1 : 0)) throw ShapeError("hyperparameter vector has wrong length");
  GpParams p;
  p.kernel = from_unconstrained(shape.kernel, theta.head(nk));
  p.noise_variance = learned_noise ? kMinNoiseVariance + std::exp(theta[nk]) : shape.noise_variance;
  return p;
}

MllResult log_marginal_likelihood(const GpParams& params, const TrainingData& data, const JitterPolicy& policy) {
  data.validate();
  params.kernel.validate(data.dim());
  const bool learned = data.has_learned_noise();
  const auto n = data.size();
  const auto d = data.dim();

  const Factorization f = robust_cholesky(noisy_gram(params, data), policy);
  const Eigen::VectorXd alpha = f.llt.solve(data.targets);
  const Eigen::MatrixXd l = f.llt.matrixL();
  double logdet_half = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet_half += std::log(l(i, i));

  MllResult r;
  r.value = -0.5 * data.targets.dot(alpha) - logdet_half - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

  // dL/dtheta_p = 1/2 tr((alpha alpha^T - K^{-1}) dK/dtheta_p)
  Eigen::MatrixXd w = f.llt.solve(Eigen::MatrixXd::Identity(n, n));
  w = (alpha * alpha.transpose() - w).eval();

  const Eigen::Index nk = num_hyperparameters(params.kernel);
  r.gradient = Eigen::VectorXd::Zero(nk + (learned ? 1 : 0));
  const RowMajor x = data.inputs;
  Eigen::VectorXd g(nk);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(nk);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      kernel_eval_with_gradient(params.kernel, x.row(i).data(), x.row(j).data(), d, g.data());
      const double weight = (i == j) ? w(i, j) : 2.0 * w(i, j);
      acc.noalias() += weight * g;
    }
  }
  r.gradient.head(nk) = 0.5 * acc;
  if (learned) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (data.learned_noise[static_cast<std::size_t>(i)]) s += w(i, i);
    }
    r.gradient[nk] = 0.5 * s * (params.noise_variance - kMinNoiseVariance);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Fitting

FitResult fit_hyperparameters(const GpParams& init, const TrainingData& data, const FitConfig& config) {
  data.validate();
  if (data.size() < 2) throw InsufficientDataError("hyperparameter fitting needs at least two points");
  init.kernel.validate(data.dim());
  const bool learned = data.has_learned_noise();
  const std::vector<bool> ls_mask = lengthscale_mask(init.kernel);
  const double log_norm = 0.5 * std::log(2.0 * std::numbers::pi);

  auto log_prior = [&](const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
    if (!config.lengthscale_prior) return 0.0;
    double lp = 0.0;
    for (std::size_t i = 0; i < ls_mask.size(); ++i) {
      if (!ls_mask[i]) continue;
      const double t = theta[static_cast<Eigen::Index>(i)];
      lp += -0.5 * t * t - log_norm;
      if (grad != nullptr) (*grad)[static_cast<Eigen::Index>(i)] -= t;
    }
    return lp;
  };

  detail::Objective objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    try {
      const GpParams p = unpack(init, theta, learned);
      MllResult m = log_marginal_likelihood(p, data, config.jitter);
      grad = m.gradient;
      const double lp = log_prior(theta, &grad);
      grad = -grad;
      return -(m.value + lp);
    } catch (const ConditioningError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> log_ls(std::log(config.init_lengthscale_min),
                                                std::log(config.init_lengthscale_max));
  FitResult best;
  bool have_best = false;
  const int restarts = std::max(1, config.restarts);
  for (int r = 0; r < restarts; ++r) {
    Eigen::VectorXd theta0 = pack(init, learned);
    if (r > 0) {
      for (std::size_t i = 0; i < ls_mask.size(); ++i) {
        if (ls_mask[i]) theta0[static_cast<Eigen::Index>(i)] = log_ls(rng);
      }
    }
    const detail::BfgsResult res =
        detail::minimize_bfgs(objective, theta0, config.max_iterations, config.gradient_tolerance);
    const double value = -res.value;
    best.restart_objectives.push_back(std::isfinite(value) && res.value < 1e10 ? value
                                                                               : -std::numeric_limits<double>::infinity());
    if (!(res.value < 1e10) || !std::isfinite(res.value)) continue;
    if (!have_best || value > best.objective) {
      have_best = true;
      best.objective = value;
      best.params = unpack(init, res.x, learned);
      best.best_restart = r;
    }
  }
  if (!have_best) throw FittingError("no restart produced a finite marginal likelihood");
  best.mll = log_marginal_likelihood(best.params, data, config.jitter).value;
  return best;
}

void to_json(nlohmann::json& j, const GpParams& p) {
  j = {{"kernel", p.kernel}, {"noise_variance", p.noise_variance}};
}

void from_json(const nlohmann::json& j, GpParams& p) {
  p.kernel = j.at("kernel").get<KernelParams>();
  p.noise_variance = j.at("noise_variance").get<double>();
}

}  // namespace mixopt::gp
