#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

namespace mixopt::domain {

enum class IngredientId : std::size_t {
  cement = 0,
  fly_ash,
  slag,
  water,
  fine_aggregate,
  coarse_aggregate,
  superplasticizer,
};

inline constexpr std::size_t kNumIngredients = 7;

inline constexpr std::array<IngredientId, kNumIngredients> kAllIngredients = {
    IngredientId::cement,         IngredientId::fly_ash,          IngredientId::slag,
    IngredientId::water,          IngredientId::fine_aggregate,   IngredientId::coarse_aggregate,
    IngredientId::superplasticizer,
};

std::string_view to_string(IngredientId id);
std::optional<IngredientId> parse_ingredient(std::string_view name);

constexpr std::size_t index(IngredientId id) { return static_cast<std::size_t>(id); }

/// A concrete composition in kg per cubic meter.
class Mixture {
 public:
  Mixture() { quantities_.fill(0.0); }
  explicit Mixture(const std::array<double, kNumIngredients>& q) : quantities_(q) {}

  static Mixture from_vector(const Eigen::VectorXd& v);
  Eigen::VectorXd to_vector() const;

  double operator[](IngredientId id) const { return quantities_[index(id)]; }
  double& operator[](IngredientId id) { return quantities_[index(id)]; }

  const std::array<double, kNumIngredients>& quantities() const { return quantities_; }

  double binder() const {
    return (*this)[IngredientId::cement] + (*this)[IngredientId::fly_ash] +
           (*this)[IngredientId::slag];
  }
  double water_binder_ratio() const { return (*this)[IngredientId::water] / binder(); }

  /// Throws ValidationError unless quantities are finite and non-negative.
  void validate_quantities() const;
  /// Additionally requires a positive binder and finite positive w/b.
  void validate() const;

  auto operator<=>(const Mixture&) const = default;

 private:
  std::array<double, kNumIngredients> quantities_;
};

double linf_distance(const Mixture& a, const Mixture& b);

/// {"cement": kg, ...}; missing ingredients read as 0, unknown names raise SchemaError.
void to_json(nlohmann::json& j, const Mixture& m);
void from_json(const nlohmann::json& j, Mixture& m);

}  // namespace mixopt::domain
