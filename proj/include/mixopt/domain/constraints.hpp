#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "mixopt/domain/mixture.hpp"

namespace mixopt::domain {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Bounds {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Bounds&) const = default;
};

/// lo <= coefficients . x <= hi; either side may be infinite.
struct LinearConstraint {
  std::string name;
  std::array<double, kNumIngredients> coefficients{};
  double lo = -kInf;
  double hi = kInf;

  double evaluate(const Mixture& m) const;
  bool operator==(const LinearConstraint&) const = default;
};

struct Violation {
  double amount = 0.0;     // 0 when satisfied
  std::string constraint;  // human-readable name of the worst offender
};

/// Post-hoc scenario edits applied on top of campaign constraints.
struct ConstraintOverrides {
  std::map<IngredientId, Bounds> bounds;
  std::optional<Bounds> water_binder;
  std::optional<Bounds> binder_total;
  std::vector<LinearConstraint> extra_linear;
  std::set<IngredientId> exclusions;

  bool empty() const;
  bool operator==(const ConstraintOverrides&) const = default;
};

/// The feasible design space: per-ingredient boxes, linear windows and exclusions.
class Constraints {
 public:
  Constraints();

  void set_bounds(IngredientId id, Bounds b);
  /// Bounds after exclusions are applied.
  Bounds bounds(IngredientId id) const;
  const Bounds& declared_bounds(IngredientId id) const { return bounds_[index(id)]; }

  void exclude(IngredientId id) { exclusions_.insert(id); }
  const std::set<IngredientId>& exclusions() const { return exclusions_; }

  void add_linear(LinearConstraint c) { linear_.push_back(std::move(c)); }
  const std::vector<LinearConstraint>& linear() const { return linear_; }

  /// Replaces any existing water/binder rows with lo <= water/binder <= hi.
  void set_water_binder_window(Bounds window);
  /// Replaces any existing binder total row.
  void set_binder_total_window(Bounds window);

  Constraints with_overrides(const ConstraintOverrides& o) const;

  Violation max_violation(const Mixture& m) const;
  bool is_feasible(const Mixture& m, double tol = 1e-9) const { return max_violation(m).amount <= tol; }

  /// Throws ConstraintError with a certificate when lo > hi somewhere or the
  /// region is provably empty.
  void validate() const;

  bool operator==(const Constraints&) const = default;

 private:
  void remove_rows_with_prefix(const std::string& prefix);

  std::array<Bounds, kNumIngredients> bounds_;
  std::vector<LinearConstraint> linear_;
  std::set<IngredientId> exclusions_;
};

/// Uniform-ish sampling of the feasible polytope. Rejection sampling from the
/// ingredient box when its acceptance rate is at least 1%, hit-and-run
/// restricted to the equality subspace otherwise.
class PolytopeSampler {
 public:
  explicit PolytopeSampler(Constraints constraints);

  std::vector<Mixture> sample(std::size_t n, std::uint64_t seed) const;

  const Constraints& constraints() const { return constraints_; }
  const Mixture& feasible_point() const { return feasible_point_; }
  /// Orthonormal basis (7 x k) of directions that keep every equality satisfied.
  const Eigen::MatrixXd& free_directions() const { return free_directions_; }
  std::size_t dimension() const { return static_cast<std::size_t>(free_directions_.cols()); }
  bool uses_hit_and_run() const { return hit_and_run_; }

  /// Re-imposes equalities and clips to the box; removes round-off drift.
  Eigen::VectorXd polish(const Eigen::VectorXd& x) const;

 private:
  std::vector<Mixture> sample_rejection(std::size_t n, std::uint64_t seed) const;
  std::vector<Mixture> sample_hit_and_run(std::size_t n, std::uint64_t seed) const;

  Constraints constraints_;
  Eigen::VectorXd lo_, hi_;
  Eigen::MatrixXd ineq_rows_;  // linear rows with lo < hi
  Eigen::VectorXd ineq_lo_, ineq_hi_;
  Eigen::MatrixXd eq_rows_;  // fixed coordinates and lo == hi rows
  Eigen::VectorXd eq_rhs_;
  Eigen::MatrixXd eq_pinv_;
  Eigen::MatrixXd free_directions_;
  Mixture feasible_point_;
  bool hit_and_run_ = false;
};

void to_json(nlohmann::json& j, const Bounds& b);
void to_json(nlohmann::json& j, const LinearConstraint& c);
void to_json(nlohmann::json& j, const Constraints& c);
void to_json(nlohmann::json& j, const ConstraintOverrides& o);
/// Parses the constraints config; throws SchemaError on malformed input.
Constraints constraints_from_json(const nlohmann::json& j);
ConstraintOverrides overrides_from_json(const nlohmann::json& j);

}  // namespace mixopt::domain
