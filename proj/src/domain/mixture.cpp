#include "mixopt/domain/mixture.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "mixopt/errors.hpp"

namespace mixopt::domain {

namespace {
constexpr std::array<std::string_view, kNumIngredients> kNames = {
    "cement", "fly_ash", "slag", "water", "fine_aggregate", "coarse_aggregate", "superplasticizer",
};
}  // namespace

std::string_view to_string(IngredientId id) { return kNames[index(id)]; }

std::optional<IngredientId> parse_ingredient(std::string_view name) {
  for (auto id : kAllIngredients) {
    if (kNames[index(id)] == name) return id;
  }
  return std::nullopt;
}

Mixture Mixture::from_vector(const Eigen::VectorXd& v) {
  if (v.size() != static_cast<Eigen::Index>(kNumIngredients)) {
    throw ShapeError("mixture vector must have " + std::to_string(kNumIngredients) + " entries");
  }
  std::array<double, kNumIngredients> q{};
  for (std::size_t i = 0; i < kNumIngredients; ++i) q[i] = v[static_cast<Eigen::Index>(i)];
  return Mixture(q);
}

Eigen::VectorXd Mixture::to_vector() const {
  Eigen::VectorXd v(kNumIngredients);
  for (std::size_t i = 0; i < kNumIngredients; ++i) v[static_cast<Eigen::Index>(i)] = quantities_[i];
  return v;
}

void Mixture::validate_quantities() const {
  for (auto id : kAllIngredients) {
    const double q = (*this)[id];
    if (!std::isfinite(q) || q < 0.0) {
      throw ValidationError("ingredient " + std::string(to_string(id)) +
                            " must be finite and non-negative");
    }
  }
}

void Mixture::validate() const {
  validate_quantities();
  if (!(binder() > 0.0)) throw ValidationError("binder mass (cement + fly_ash + slag) must be positive");
  const double wb = water_binder_ratio();
  if (!std::isfinite(wb) || wb <= 0.0) throw ValidationError("water/binder ratio must be finite and positive");
}

double linf_distance(const Mixture& a, const Mixture& b) {
  double d = 0.0;
  for (auto id : kAllIngredients) d = std::max(d, std::abs(a[id] - b[id]));
  return d;
}

void to_json(nlohmann::json& j, const Mixture& m) {
  j = nlohmann::json::object();
  for (auto id : kAllIngredients) j[std::string(to_string(id))] = m[id];
}

void from_json(const nlohmann::json& j, Mixture& m) {
  if (!j.is_object()) throw SchemaError("mixture must be an object of ingredient quantities");
  m = Mixture();
  for (const auto& [name, value] : j.items()) {
    const auto id = parse_ingredient(name);
    if (!id) throw SchemaError("unknown ingredient '" + name + "'");
    if (!value.is_number()) throw SchemaError("quantity of " + name + " must be a number");
    m[*id] = value.get<double>();
  }
}

}  // namespace mixopt::domain
