#include "mixopt/domain/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mixopt/errors.hpp"

namespace mixopt::domain {

namespace {

constexpr const char* kWaterBinderPrefix = "water_binder";
constexpr const char* kBinderTotalPrefix = "binder_total";

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

std::array<double, kNumIngredients> binder_coefficients(double scale) {
  std::array<double, kNumIngredients> c{};
  c[index(IngredientId::cement)] = scale;
  c[index(IngredientId::fly_ash)] = scale;
  c[index(IngredientId::slag)] = scale;
  return c;
}

// water - ratio * binder
std::array<double, kNumIngredients> water_binder_coefficients(double ratio) {
  auto c = binder_coefficients(-ratio);
  c[index(IngredientId::water)] = 1.0;
  return c;
}

Eigen::RowVectorXd as_row(const std::array<double, kNumIngredients>& c) {
  Eigen::RowVectorXd r(kNumIngredients);
  for (std::size_t i = 0; i < kNumIngredients; ++i) r[static_cast<Eigen::Index>(i)] = c[i];
  return r;
}

}  // namespace

double LinearConstraint::evaluate(const Mixture& m) const {
  double s = 0.0;
  for (std::size_t i = 0; i < kNumIngredients; ++i) s += coefficients[i] * m.quantities()[i];
  return s;
}

bool ConstraintOverrides::empty() const {
  return bounds.empty() && !water_binder && !binder_total && extra_linear.empty() && exclusions.empty();
}

Constraints::Constraints() { bounds_.fill(Bounds{0.0, 0.0}); }

void Constraints::set_bounds(IngredientId id, Bounds b) { bounds_[index(id)] = b; }

Bounds Constraints::bounds(IngredientId id) const {
  if (exclusions_.contains(id)) return {0.0, 0.0};
  return bounds_[index(id)];
}

void Constraints::remove_rows_with_prefix(const std::string& prefix) {
  std::erase_if(linear_, [&](const LinearConstraint& c) { return c.name.rfind(prefix, 0) == 0; });
}

void Constraints::set_water_binder_window(Bounds w) {
  remove_rows_with_prefix(kWaterBinderPrefix);
  if (w.lo == w.hi) {
    linear_.push_back({kWaterBinderPrefix, water_binder_coefficients(w.lo), 0.0, 0.0});
    return;
  }
  if (std::isfinite(w.lo) && w.lo > 0.0) {
    linear_.push_back({std::string(kWaterBinderPrefix) + "_min", water_binder_coefficients(w.lo), 0.0, kInf});
  }
  if (std::isfinite(w.hi)) {
    linear_.push_back({std::string(kWaterBinderPrefix) + "_max", water_binder_coefficients(w.hi), -kInf, 0.0});
  }
}

void Constraints::set_binder_total_window(Bounds w) {
  remove_rows_with_prefix(kBinderTotalPrefix);
  linear_.push_back({kBinderTotalPrefix, binder_coefficients(1.0), w.lo, w.hi});
}

Constraints Constraints::with_overrides(const ConstraintOverrides& o) const {
  Constraints c = *this;
  for (const auto& [id, b] : o.bounds) c.set_bounds(id, b);
  if (o.water_binder) c.set_water_binder_window(*o.water_binder);
  if (o.binder_total) c.set_binder_total_window(*o.binder_total);
  for (const auto& row : o.extra_linear) c.add_linear(row);
  for (auto id : o.exclusions) c.exclude(id);
  return c;
}

Violation Constraints::max_violation(const Mixture& m) const {
  Violation worst;
  auto consider = [&](double amount, auto&& describe) {
    if (amount > worst.amount) {
      worst.amount = amount;
      worst.constraint = describe();
    }
  };
  for (auto id : kAllIngredients) {
    const Bounds b = bounds(id);
    const double q = m[id];
    consider(b.lo - q, [&] { return std::string(to_string(id)) + " >= " + format_number(b.lo); });
    consider(q - b.hi, [&] { return std::string(to_string(id)) + " <= " + format_number(b.hi); });
  }
  for (const auto& row : linear_) {
    const double v = row.evaluate(m);
    consider(row.lo - v, [&] { return row.name + " >= " + format_number(row.lo); });
    consider(v - row.hi, [&] { return row.name + " <= " + format_number(row.hi); });
  }
  return worst;
}

void Constraints::validate() const {
  for (auto id : kAllIngredients) {
    const Bounds b = bounds(id);
    if (!std::isfinite(b.lo) || !std::isfinite(b.hi)) {
      throw ConstraintError("infeasible constraints",
                            "bounds of " + std::string(to_string(id)) + " must be finite");
    }
    if (b.lo > b.hi) {
      throw ConstraintError("infeasible constraints", std::string(to_string(id)) + " lo " +
                                                          format_number(b.lo) + " > hi " + format_number(b.hi));
    }
    if (b.lo < 0.0) {
      throw ConstraintError("infeasible constraints",
                            std::string(to_string(id)) + " lower bound must be non-negative");
    }
  }
  for (const auto& row : linear_) {
    if (row.lo > row.hi) {
      throw ConstraintError("infeasible constraints", row.name + " lo > hi");
    }
    // Range of the row over the box.
    double min_v = 0.0, max_v = 0.0;
    for (auto id : kAllIngredients) {
      const double a = row.coefficients[index(id)];
      const Bounds b = bounds(id);
      min_v += a >= 0 ? a * b.lo : a * b.hi;
      max_v += a >= 0 ? a * b.hi : a * b.lo;
    }
    const double tol = 1e-9 * (1.0 + std::abs(min_v) + std::abs(max_v));
    if (max_v < row.lo - tol) {
      throw ConstraintError("infeasible constraints",
                            row.name + " >= " + format_number(row.lo) + " (box maximum " + format_number(max_v) + ")");
    }
    if (min_v > row.hi + tol) {
      throw ConstraintError("infeasible constraints",
                            row.name + " <= " + format_number(row.hi) + " (box minimum " + format_number(min_v) + ")");
    }
  }
}

// ---------------------------------------------------------------------------
// PolytopeSampler

PolytopeSampler::PolytopeSampler(Constraints constraints) : constraints_(std::move(constraints)) {
  constraints_.validate();
  const auto d = static_cast<Eigen::Index>(kNumIngredients);
  lo_.resize(d);
  hi_.resize(d);
  std::vector<Eigen::RowVectorXd> eq_rows;
  std::vector<double> eq_rhs;
  for (auto id : kAllIngredients) {
    const Bounds b = constraints_.bounds(id);
    const auto i = static_cast<Eigen::Index>(index(id));
    lo_[i] = b.lo;
    hi_[i] = b.hi;
    if (b.lo == b.hi) {
      Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(d);
      e[i] = 1.0;
      eq_rows.push_back(e);
      eq_rhs.push_back(b.lo);
    }
  }
  std::vector<Eigen::RowVectorXd> ineq;
  std::vector<double> ineq_lo, ineq_hi;
  bool has_linear_equality = false;
  for (const auto& row : constraints_.linear()) {
    if (row.lo == row.hi) {
      eq_rows.push_back(as_row(row.coefficients));
      eq_rhs.push_back(row.lo);
      has_linear_equality = true;
    } else {
      ineq.push_back(as_row(row.coefficients));
      ineq_lo.push_back(row.lo);
      ineq_hi.push_back(row.hi);
    }
  }
  ineq_rows_.resize(static_cast<Eigen::Index>(ineq.size()), d);
  ineq_lo_.resize(static_cast<Eigen::Index>(ineq.size()));
  ineq_hi_.resize(static_cast<Eigen::Index>(ineq.size()));
  for (std::size_t k = 0; k < ineq.size(); ++k) {
    ineq_rows_.row(static_cast<Eigen::Index>(k)) = ineq[k];
    ineq_lo_[static_cast<Eigen::Index>(k)] = ineq_lo[k];
    ineq_hi_[static_cast<Eigen::Index>(k)] = ineq_hi[k];
  }
  eq_rows_.resize(static_cast<Eigen::Index>(eq_rows.size()), d);
  eq_rhs_.resize(static_cast<Eigen::Index>(eq_rows.size()));
  for (std::size_t k = 0; k < eq_rows.size(); ++k) {
    eq_rows_.row(static_cast<Eigen::Index>(k)) = eq_rows[k];
    eq_rhs_[static_cast<Eigen::Index>(k)] = eq_rhs[k];
  }

  if (eq_rows_.rows() > 0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(eq_rows_, Eigen::ComputeFullV | Eigen::ComputeThinU);
    const double tol = 1e-12 * std::max(1.0, svd.singularValues().maxCoeff());
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
      if (svd.singularValues()[i] > tol) ++rank;
    }
    free_directions_ = svd.matrixV().rightCols(d - rank);
    eq_pinv_ = svd.solve(Eigen::MatrixXd::Identity(eq_rows_.rows(), eq_rows_.rows()));
  } else {
    free_directions_ = Eigen::MatrixXd::Identity(d, d);
  }

  // Alternating projections onto the box, the equality subspace and each slab.
  Eigen::VectorXd x = 0.5 * (lo_ + hi_);
  auto project_equalities = [&](Eigen::VectorXd& v) {
    if (eq_rows_.rows() > 0) v -= eq_pinv_ * (eq_rows_ * v - eq_rhs_);
  };
  Violation v;
  for (int sweep = 0; sweep < 50000; ++sweep) {
    project_equalities(x);
    for (Eigen::Index k = 0; k < ineq_rows_.rows(); ++k) {
      const double a = ineq_rows_.row(k).dot(x);
      const double nn = ineq_rows_.row(k).squaredNorm();
      if (a > ineq_hi_[k]) x -= (a - ineq_hi_[k]) / nn * ineq_rows_.row(k).transpose();
      if (a < ineq_lo_[k]) x += (ineq_lo_[k] - a) / nn * ineq_rows_.row(k).transpose();
    }
    x = x.cwiseMax(lo_).cwiseMin(hi_);
    v = constraints_.max_violation(Mixture::from_vector(x));
    if (v.amount <= 1e-10) break;
  }
  if (v.amount > 1e-9) throw ConstraintError("infeasible constraints", v.constraint);
  feasible_point_ = Mixture::from_vector(x);

  if (has_linear_equality) {
    hit_and_run_ = true;
  } else {
    // Pilot run decides between rejection and hit-and-run.
    std::mt19937_64 rng(0x5eed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    constexpr int kPilot = 2000;
    int accepted = 0;
    for (int s = 0; s < kPilot; ++s) {
      Eigen::VectorXd y(d);
      for (Eigen::Index i = 0; i < d; ++i) y[i] = lo_[i] + u(rng) * (hi_[i] - lo_[i]);
      if (constraints_.is_feasible(Mixture::from_vector(y), 0.0)) ++accepted;
    }
    hit_and_run_ = accepted < kPilot / 100;
  }
}

Eigen::VectorXd PolytopeSampler::polish(const Eigen::VectorXd& x) const {
  Eigen::VectorXd y = x;
  if (eq_rows_.rows() > 0) y -= eq_pinv_ * (eq_rows_ * y - eq_rhs_);
  y = y.cwiseMax(lo_).cwiseMin(hi_);
  return y;
}

std::vector<Mixture> PolytopeSampler::sample(std::size_t n, std::uint64_t seed) const {
  if (dimension() == 0) return std::vector<Mixture>(n, feasible_point_);
  return hit_and_run_ ? sample_hit_and_run(n, seed) : sample_rejection(n, seed);
}

std::vector<Mixture> PolytopeSampler::sample_rejection(std::size_t n, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Mixture> out;
  out.reserve(n);
  const auto d = lo_.size();
  while (out.size() < n) {
    Eigen::VectorXd y(d);
    for (Eigen::Index i = 0; i < d; ++i) y[i] = lo_[i] + u(rng) * (hi_[i] - lo_[i]);
    Mixture m = Mixture::from_vector(y);
    if (constraints_.is_feasible(m, 0.0)) out.push_back(m);
  }
  return out;
}

std::vector<Mixture> PolytopeSampler::sample_hit_and_run(std::size_t n, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto k = free_directions_.cols();
  const auto d = lo_.size();

  // Free coordinates only; fixed ones have a zero row in free_directions_.
  auto chord = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& dir, double& tmin, double& tmax) {
    tmin = -kInf;
    tmax = kInf;
    auto clamp_by = [&](double a_dot_d, double slack_lo, double slack_hi) {
      // slack_lo <= t * a_dot_d <= slack_hi
      if (std::abs(a_dot_d) < 1e-14) return;
      double t1 = slack_lo / a_dot_d, t2 = slack_hi / a_dot_d;
      if (t1 > t2) std::swap(t1, t2);
      tmin = std::max(tmin, t1);
      tmax = std::min(tmax, t2);
    };
    for (Eigen::Index i = 0; i < d; ++i) {
      if (lo_[i] == hi_[i]) continue;
      clamp_by(dir[i], lo_[i] - x[i], hi_[i] - x[i]);
    }
    for (Eigen::Index r = 0; r < ineq_rows_.rows(); ++r) {
      const double ax = ineq_rows_.row(r).dot(x);
      clamp_by(ineq_rows_.row(r).dot(dir), ineq_lo_[r] - ax, ineq_hi_[r] - ax);
    }
    tmin = std::min(tmin, 0.0);
    tmax = std::max(tmax, 0.0);
  };

  Eigen::VectorXd x = feasible_point_.to_vector();
  auto step = [&] {
    for (int attempt = 0; attempt < 16; ++attempt) {
      Eigen::VectorXd g(k);
      for (Eigen::Index i = 0; i < k; ++i) g[i] = normal(rng);
      Eigen::VectorXd dir = free_directions_ * g;
      const double len = dir.norm();
      if (len < 1e-300) continue;
      dir /= len;
      double tmin, tmax;
      chord(x, dir, tmin, tmax);
      if (!(tmax - tmin > 1e-12) || !std::isfinite(tmin) || !std::isfinite(tmax)) continue;
      const double t = tmin + u(rng) * (tmax - tmin);
      Eigen::VectorXd y = polish(x + t * dir);
      if (constraints_.is_feasible(Mixture::from_vector(y))) {
        x = y;
        return;
      }
    }
  };

  const auto dim = static_cast<int>(k);
  const int burn_in = 100 * (dim + 1);
  const int thin = 2 * dim + 1;
  for (int s = 0; s < burn_in; ++s) step();
  std::vector<Mixture> out;
  out.reserve(n);
  while (out.size() < n) {
    for (int s = 0; s < thin; ++s) step();
    out.push_back(Mixture::from_vector(x));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double parse_bound(const nlohmann::json& j, double if_null) {
  if (j.is_null()) return if_null;
  if (!j.is_number()) throw SchemaError("bound must be a number or null");
  return j.get<double>();
}

Bounds parse_pair(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2) throw SchemaError(what + " must be a [lo, hi] pair");
  return {parse_bound(j[0], -kInf), parse_bound(j[1], kInf)};
}

IngredientId parse_ingredient_or_throw(const std::string& name) {
  auto id = parse_ingredient(name);
  if (!id) throw SchemaError("unknown ingredient '" + name + "'");
  return *id;
}

LinearConstraint parse_linear(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("linear constraint must be an object");
  LinearConstraint c;
  c.name = j.value("name", std::string("linear"));
  if (!j.contains("coefficients") || !j["coefficients"].is_object()) {
    throw SchemaError("linear constraint '" + c.name + "' needs a coefficients object");
  }
  for (const auto& [name, value] : j["coefficients"].items()) {
    c.coefficients[index(parse_ingredient_or_throw(name))] = value.get<double>();
  }
  c.lo = j.contains("lo") ? parse_bound(j["lo"], -kInf) : -kInf;
  c.hi = j.contains("hi") ? parse_bound(j["hi"], kInf) : kInf;
  return c;
}

void parse_common(const nlohmann::json& j, ConstraintOverrides& o) {
  if (!j.is_object()) throw SchemaError("constraints must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "bounds") {
      if (!value.is_object()) throw SchemaError("bounds must be an object");
      for (const auto& [name, pair] : value.items()) {
        o.bounds[parse_ingredient_or_throw(name)] = parse_pair(pair, "bounds." + name);
      }
    } else if (key == "water_binder") {
      o.water_binder = parse_pair(value, "water_binder");
    } else if (key == "binder_total") {
      o.binder_total = parse_pair(value, "binder_total");
    } else if (key == "linear") {
      if (!value.is_array()) throw SchemaError("linear must be an array");
      for (const auto& row : value) o.extra_linear.push_back(parse_linear(row));
    } else if (key == "exclude") {
      if (!value.is_array()) throw SchemaError("exclude must be an array of ingredient names");
      for (const auto& name : value) {
        if (!name.is_string()) throw SchemaError("exclude entries must be strings");
        o.exclusions.insert(parse_ingredient_or_throw(name.get<std::string>()));
      }
    } else {
      throw SchemaError("unknown constraints key '" + key + "'");
    }
  }
}

}  // namespace

void to_json(nlohmann::json& j, const Bounds& b) { j = nlohmann::json::array({number_or_null(b.lo), number_or_null(b.hi)}); }

void to_json(nlohmann::json& j, const LinearConstraint& c) {
  nlohmann::json coeffs = nlohmann::json::object();
  for (auto id : kAllIngredients) {
    if (c.coefficients[index(id)] != 0.0) coeffs[std::string(to_string(id))] = c.coefficients[index(id)];
  }
  j = {{"name", c.name}, {"coefficients", coeffs}, {"lo", number_or_null(c.lo)}, {"hi", number_or_null(c.hi)}};
}

void to_json(nlohmann::json& j, const Constraints& c) {
  nlohmann::json bounds = nlohmann::json::object();
  for (auto id : kAllIngredients) bounds[std::string(to_string(id))] = c.declared_bounds(id);
  nlohmann::json exclude = nlohmann::json::array();
  for (auto id : c.exclusions()) exclude.push_back(std::string(to_string(id)));
  j = {{"bounds", bounds}, {"linear", c.linear()}, {"exclude", exclude}};
}

void to_json(nlohmann::json& j, const ConstraintOverrides& o) {
  j = nlohmann::json::object();
  if (!o.bounds.empty()) {
    nlohmann::json bounds = nlohmann::json::object();
    for (const auto& [id, b] : o.bounds) bounds[std::string(to_string(id))] = b;
    j["bounds"] = bounds;
  }
  if (o.water_binder) j["water_binder"] = *o.water_binder;
  if (o.binder_total) j["binder_total"] = *o.binder_total;
  if (!o.extra_linear.empty()) j["linear"] = o.extra_linear;
  if (!o.exclusions.empty()) {
    nlohmann::json exclude = nlohmann::json::array();
    for (auto id : o.exclusions) exclude.push_back(std::string(to_string(id)));
    j["exclude"] = exclude;
  }
}

Constraints constraints_from_json(const nlohmann::json& j) {
  ConstraintOverrides o;
  try {
    parse_common(j, o);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed constraints: ") + e.what());
  }
  Constraints c;
  for (auto id : kAllIngredients) {
    if (!o.bounds.contains(id)) {
      throw SchemaError("constraints must declare bounds for " + std::string(to_string(id)));
    }
  }
  return c.with_overrides(o);
}

ConstraintOverrides overrides_from_json(const nlohmann::json& j) {
  ConstraintOverrides o;
  try {
    parse_common(j, o);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed scenario: ") + e.what());
  }
  return o;
}

}  // namespace mixopt::domain
