#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "mixopt/domain/constraints.hpp"
#include "mixopt/strength/observation.hpp"

namespace mixopt::datasets {

using domain::Mixture;
using strength::StrengthObservation;

/// Noise-free strength ground truth for simulations: a water/effective-binder
/// exponential law at 28 days times a hyperbolic maturity curve whose
/// early-age lag grows with the fly ash and slag fractions.
struct ConcreteSurrogate {
  double strength_28d(const Mixture& m) const;
  double strength(const Mixture& m, double age_days) const;
  /// Measurement noise sd at a given mean strength.
  double noise_sd(double strength_mpa) const { return 1.0 + 0.05 * strength_mpa; }
  /// Noisy measurement, clamped at zero.
  double measure(const Mixture& m, double age_days, std::uint64_t seed) const;
};

/// Ingredient ranges of the public concrete-strength dataset.
domain::Constraints uci_design_space();

/// Deterministic stand-in with the public dataset's schema and size:
/// 425 mixtures, 1030 rows, its age histogram and ingredient ranges.
std::vector<StrengthObservation> synthetic_uci(std::uint64_t seed = 2024);

/// Reads the public dataset exported as CSV (header row, columns in its
/// original order: cement, slag, fly ash, water, superplasticizer, coarse,
/// fine, age, strength).
std::vector<StrengthObservation> load_uci_csv(const std::filesystem::path& path);

/// The real dataset when MIXOPT_UCI_CSV names a readable file, else the stand-in.
std::vector<StrengthObservation> uci_or_synthetic(bool* is_real = nullptr);

}  // namespace mixopt::datasets
