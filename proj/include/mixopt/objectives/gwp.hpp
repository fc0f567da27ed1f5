#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "mixopt/domain/mixture.hpp"

namespace mixopt::objectives {

/// Linear global-warming-potential model: kg CO2e per kg of each ingredient.
struct GwpTable {
  struct Entry {
    double kg_co2e_per_kg = 0.0;
    std::string source;
    bool operator==(const Entry&) const = default;
  };

  std::string name;
  std::array<std::optional<Entry>, domain::kNumIngredients> entries{};

  void set(domain::IngredientId id, double kg_co2e_per_kg, std::string source = {});
  bool has(domain::IngredientId id) const { return entries[domain::index(id)].has_value(); }
  /// ConfigurationError naming the ingredient when it has no coefficient.
  double coefficient(domain::IngredientId id) const;
  /// Every coefficient multiplied by `factor` (> 0).
  GwpTable scaled(double factor) const;
  /// Coefficients finite and non-negative.
  void validate() const;

  /// JSON (object with "coefficients" rows) or CSV (ingredient,kgCO2e_per_kg,source).
  static GwpTable load(const std::filesystem::path& path);
  static GwpTable parse_csv(const std::string& text, std::string name = {});

  bool operator==(const GwpTable&) const = default;
};

/// kg CO2e per cubic meter. Ingredients with zero quantity need no coefficient.
double gwp(const GwpTable& table, const domain::Mixture& mixture);

void to_json(nlohmann::json& j, const GwpTable& t);
void from_json(const nlohmann::json& j, GwpTable& t);

}  // namespace mixopt::objectives
