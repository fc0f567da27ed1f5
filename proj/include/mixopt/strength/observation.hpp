#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mixopt/domain/constraints.hpp"
#include "mixopt/domain/mixture.hpp"

namespace mixopt::strength {

using domain::Mixture;

inline constexpr double kPsiPerMpa = 145.0377;

enum class Provenance { measured, augmented_zero };

struct StrengthObservation {
  Mixture mixture;
  double age_days = 0.0;
  double strength_mpa = 0.0;
  std::optional<int> replicate_id;
  Provenance provenance = Provenance::measured;

  /// Throws ValidationError when the provenance invariants do not hold.
  void validate() const;
  bool operator==(const StrengthObservation&) const = default;
};

/// Distinct mixtures in first-occurrence order.
std::vector<Mixture> distinct_mixtures(std::span<const StrengthObservation> observations);

/// Default count of extra random zero-day compositions: max(5, n_mixtures / 4).
std::size_t default_extra_zero_compositions(std::size_t n_mixtures);

/// Appends one (t = 0, strength = 0) record per distinct mixture that lacks
/// one, plus `extra_compositions` records at mixtures drawn from `design_space`.
/// The input records come first and unchanged. Deterministic given `seed`.
std::vector<StrengthObservation> augment_zero_day(std::span<const StrengthObservation> observations,
                                                  std::size_t extra_compositions, std::uint64_t seed,
                                                  const domain::PolytopeSampler* design_space);

/// Hex FNV-1a digest over the observation list (order-sensitive).
std::string digest(std::span<const StrengthObservation> observations);

void to_json(nlohmann::json& j, const StrengthObservation& o);
void from_json(const nlohmann::json& j, StrengthObservation& o);

}  // namespace mixopt::strength
