#include "mixopt/gp/kernel.hpp"

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "mixopt/errors.hpp"

namespace mixopt::gp {

namespace {

const double kSqrt5 = std::sqrt(5.0);

Eigen::Index leaf_dim_count(const KernelParams& p, Eigen::Index dim) {
  return p.active_dims.empty() ? dim : static_cast<Eigen::Index>(p.active_dims.size());
}

int leaf_dim(const KernelParams& p, Eigen::Index k) {
  return p.active_dims.empty() ? static_cast<int>(k) : p.active_dims[static_cast<std::size_t>(k)];
}

// Scaled squared distance; fills per-lengthscale contributions if requested.
double scaled_sq_dist(const KernelParams& p, const double* z, const double* zp, Eigen::Index dim,
                      double* per_lengthscale) {
  const Eigen::Index n = leaf_dim_count(p, dim);
  const bool ard = p.lengthscales.size() > 1;
  double r2 = 0.0;
  if (per_lengthscale != nullptr && !ard) per_lengthscale[0] = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const int i = leaf_dim(p, k);
    const double ell = ard ? p.lengthscales[static_cast<std::size_t>(k)] : p.lengthscales[0];
    const double u = (z[i] - zp[i]) / ell;
    const double t = u * u;
    r2 += t;
    if (per_lengthscale != nullptr) {
      if (ard) {
        per_lengthscale[k] = t;
      } else {
        per_lengthscale[0] += t;
      }
    }
  }
  return r2;
}

double leaf_value(const KernelParams& p, double r2) {
  if (p.variant == KernelVariant::ExponentiatedQuadratic) return p.output_scale * std::exp(-0.5 * r2);
  const double r = std::sqrt(r2);
  return p.output_scale * (1.0 + kSqrt5 * r + 5.0 / 3.0 * r2) * std::exp(-kSqrt5 * r);
}

double eval_recursive(const KernelParams& p, const double* z, const double* zp, Eigen::Index dim) {
  if (p.is_leaf()) return leaf_value(p, scaled_sq_dist(p, z, zp, dim, nullptr));
  return p.output_scale * (eval_recursive(p.children[0], z, zp, dim) + eval_recursive(p.children[1], z, zp, dim));
}

double eval_grad_recursive(const KernelParams& p, const double* z, const double* zp, Eigen::Index dim,
                           double scale, double*& grad) {
  if (!p.is_leaf()) {
    const double s = scale * p.output_scale;
    const double a = eval_grad_recursive(p.children[0], z, zp, dim, s, grad);
    const double b = eval_grad_recursive(p.children[1], z, zp, dim, s, grad);
    return p.output_scale * (a + b);
  }
  double* out = grad;
  grad += 1 + static_cast<std::ptrdiff_t>(p.lengthscales.size());
  double* per_ls = out + 1;
  const double r2 = scaled_sq_dist(p, z, zp, dim, per_ls);
  const std::size_t nls = p.lengthscales.size();
  if (p.variant == KernelVariant::ExponentiatedQuadratic) {
    const double k = p.output_scale * std::exp(-0.5 * r2);
    out[0] = scale * k;
    for (std::size_t i = 0; i < nls; ++i) per_ls[i] *= scale * k;
    return k;
  }
  const double r = std::sqrt(r2);
  const double e = std::exp(-kSqrt5 * r);
  const double k = p.output_scale * (1.0 + kSqrt5 * r + 5.0 / 3.0 * r2) * e;
  const double dfac = p.output_scale * (5.0 / 3.0) * (1.0 + kSqrt5 * r) * e;
  out[0] = scale * k;
  for (std::size_t i = 0; i < nls; ++i) per_ls[i] *= scale * dfac;
  return k;
}

void check_dims(const KernelParams& p, Eigen::Index dim) { p.validate(dim); }

void append_unconstrained(const KernelParams& p, std::vector<double>& out) {
  if (!p.is_leaf()) {
    for (const auto& c : p.children) append_unconstrained(c, out);
    return;
  }
  out.push_back(std::log(p.output_scale));
  for (double l : p.lengthscales) out.push_back(std::log(l));
}

void assign_unconstrained(KernelParams& p, const Eigen::Ref<const Eigen::VectorXd>& theta, Eigen::Index& pos) {
  if (!p.is_leaf()) {
    for (auto& c : p.children) assign_unconstrained(c, theta, pos);
    return;
  }
  p.output_scale = std::exp(theta[pos++]);
  for (double& l : p.lengthscales) l = std::exp(theta[pos++]);
}

void append_mask(const KernelParams& p, std::vector<bool>& out) {
  if (!p.is_leaf()) {
    for (const auto& c : p.children) append_mask(c, out);
    return;
  }
  out.push_back(false);
  out.insert(out.end(), p.lengthscales.size(), true);
}

}  // namespace

KernelParams KernelParams::exponentiated_quadratic(double output_scale, std::vector<double> lengthscales,
                                                   std::vector<int> active_dims) {
  return {KernelVariant::ExponentiatedQuadratic, output_scale, std::move(lengthscales), std::move(active_dims), {}};
}

KernelParams KernelParams::matern52(double output_scale, std::vector<double> lengthscales,
                                    std::vector<int> active_dims) {
  return {KernelVariant::Matern52Ard, output_scale, std::move(lengthscales), std::move(active_dims), {}};
}

KernelParams KernelParams::additive(KernelParams first, KernelParams second) {
  KernelParams p;
  p.variant = KernelVariant::AdditiveComposite;
  p.output_scale = 1.0;
  p.children = {std::move(first), std::move(second)};
  return p;
}

void KernelParams::validate(Eigen::Index input_dim) const {
  // A zero scale switches a component off; it is still a valid kernel.
  if (!(output_scale >= 0.0) || !std::isfinite(output_scale)) {
    throw ValidationError("kernel output_scale must be finite and non-negative");
  }
  if (!is_leaf()) {
    if (children.size() != 2) throw ValidationError("additive composite kernel needs exactly two children");
    if (!lengthscales.empty()) throw ValidationError("composite kernels carry no lengthscales");
    for (const auto& c : children) c.validate(input_dim);
    return;
  }
  if (!children.empty()) throw ValidationError("leaf kernels have no children");
  for (int d : active_dims) {
    if (d < 0 || d >= input_dim) {
      throw ShapeError("kernel active dimension " + std::to_string(d) + " outside input dimension " +
                       std::to_string(input_dim));
    }
  }
  const Eigen::Index n = leaf_dim_count(*this, input_dim);
  if (lengthscales.empty() || (lengthscales.size() != 1 && static_cast<Eigen::Index>(lengthscales.size()) != n)) {
    throw ShapeError("kernel needs 1 or " + std::to_string(n) + " lengthscales, got " +
                     std::to_string(lengthscales.size()));
  }
  for (double l : lengthscales) {
    if (!(l > 0.0) || !std::isfinite(l)) throw ValidationError("lengthscales must be finite and strictly positive");
  }
}

double kernel_eval(const KernelParams& params, const Eigen::Ref<const Eigen::VectorXd>& z,
                   const Eigen::Ref<const Eigen::VectorXd>& z_prime) {
  if (z.size() != z_prime.size()) throw ShapeError("kernel inputs have different dimensions");
  if (!z.allFinite() || !z_prime.allFinite()) throw ValidationError("kernel inputs must be finite");
  check_dims(params, z.size());
  return eval_recursive(params, z.data(), z_prime.data(), z.size());
}

Eigen::MatrixXd kernel_matrix(const KernelParams& params, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw ShapeError("kernel_matrix inputs have different column counts");
  if (a.rows() == 0 || b.rows() == 0) throw ShapeError("kernel_matrix inputs must be non-empty");
  if (!a.allFinite() || !b.allFinite()) throw ValidationError("kernel inputs must be finite");
  check_dims(params, a.cols());
  // Row-major copies give contiguous feature vectors.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> ar = a, br = b;
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      k(i, j) = eval_recursive(params, ar.row(i).data(), br.row(j).data(), a.cols());
    }
  }
  return k;
}

Eigen::MatrixXd kernel_matrix(const KernelParams& params, const Eigen::MatrixXd& a) {
  if (a.rows() == 0) throw ShapeError("kernel_matrix input must be non-empty");
  if (!a.allFinite()) throw ValidationError("kernel inputs must be finite");
  check_dims(params, a.cols());
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> ar = a;
  Eigen::MatrixXd k(a.rows(), a.rows());
  for (Eigen::Index j = 0; j < a.rows(); ++j) {
    for (Eigen::Index i = j; i < a.rows(); ++i) {
      const double v = eval_recursive(params, ar.row(i).data(), ar.row(j).data(), a.cols());
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

Eigen::Index num_hyperparameters(const KernelParams& params) {
  if (!params.is_leaf()) {
    Eigen::Index n = 0;
    for (const auto& c : params.children) n += num_hyperparameters(c);
    return n;
  }
  return 1 + static_cast<Eigen::Index>(params.lengthscales.size());
}

Eigen::VectorXd to_unconstrained(const KernelParams& params) {
  std::vector<double> v;
  append_unconstrained(params, v);
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

KernelParams from_unconstrained(const KernelParams& shape, const Eigen::Ref<const Eigen::VectorXd>& theta) {
  if (theta.size() != num_hyperparameters(shape)) throw ShapeError("hyperparameter vector has wrong length");
  KernelParams p = shape;
  Eigen::Index pos = 0;
  assign_unconstrained(p, theta, pos);
  return p;
}

std::vector<bool> lengthscale_mask(const KernelParams& params) {
  std::vector<bool> m;
  append_mask(params, m);
  return m;
}

double kernel_eval_with_gradient(const KernelParams& params, const double* z, const double* z_prime,
                                 Eigen::Index dim, double* grad) {
  double* cursor = grad;
  return eval_grad_recursive(params, z, z_prime, dim, 1.0, cursor);
}

// ---------------------------------------------------------------------------

namespace {
const char* variant_tag(KernelVariant v) {
  switch (v) {
    case KernelVariant::ExponentiatedQuadratic:
      return "exponentiated_quadratic";
    case KernelVariant::Matern52Ard:
      return "matern52_ard";
    case KernelVariant::AdditiveComposite:
      return "additive";
  }
  return "unknown";
}
}  // namespace

void to_json(nlohmann::json& j, const KernelParams& p) {
  j = {{"variant", variant_tag(p.variant)}, {"output_scale", p.output_scale}};
  if (p.is_leaf()) {
    j["lengthscales"] = p.lengthscales;
    j["active_dims"] = p.active_dims;
  } else {
    j["children"] = p.children;
  }
}

void from_json(const nlohmann::json& j, KernelParams& p) {
  const auto tag = j.at("variant").get<std::string>();
  if (tag == "exponentiated_quadratic") {
    p.variant = KernelVariant::ExponentiatedQuadratic;
  } else if (tag == "matern52_ard") {
    p.variant = KernelVariant::Matern52Ard;
  } else if (tag == "additive") {
    p.variant = KernelVariant::AdditiveComposite;
  } else {
    throw SchemaError("unknown kernel variant '" + tag + "'");
  }
  p.output_scale = j.at("output_scale").get<double>();
  p.lengthscales.clear();
  p.active_dims.clear();
  p.children.clear();
  if (p.is_leaf()) {
    p.lengthscales = j.at("lengthscales").get<std::vector<double>>();
    p.active_dims = j.value("active_dims", std::vector<int>{});
  } else {
    p.children = j.at("children").get<std::vector<KernelParams>>();
  }
}

}  // namespace mixopt::gp
