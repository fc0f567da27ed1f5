#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mixopt/errors.hpp"
#include "mixopt/strength/observation.hpp"

namespace mixopt::campaign {

/// Label for measurements that belong to no recorded batch.
inline constexpr const char* kExternalBatch = "external";

struct RowError {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string message;
  bool operator==(const RowError&) const = default;
};

struct IngestReport {
  std::size_t rows = 0;
  std::size_t accepted = 0;
  std::vector<RowError> errors;
  bool operator==(const IngestReport&) const = default;
};

struct IngestedRow {
  std::size_t line = 0;
  std::string batch = kExternalBatch;
  strength::StrengthObservation observation;
  bool operator==(const IngestedRow&) const = default;
};

struct IngestResult {
  std::vector<IngestedRow> rows;
  IngestReport report;
};

/// Strict-mode failure: at least one row was rejected and nothing is accepted.
class RowErrors : public SchemaError {
 public:
  explicit RowErrors(IngestReport report);
  const IngestReport& report() const noexcept { return report_; }

 private:
  IngestReport report_;
};

/// Observation CSV: ingredient columns by name (kg/m3, missing columns read
/// as 0), age_days, strength, optional unit (MPa | psi), batch, replicate.
/// Unknown columns raise SchemaError. Bad rows are reported with their line
/// number; in strict mode any bad row raises RowErrors.
IngestResult ingest_csv(std::istream& in, bool strict = false);
IngestResult ingest_csv_text(const std::string& text, bool strict = false);

/// Same contract for JSON rows:
/// [{"mixture": {...}, "age_days", "strength", "unit"?, "batch"?, "replicate"?}].
/// Line numbers are 1-based row positions.
IngestResult ingest_json_rows(const nlohmann::json& rows, bool strict = false);

void to_json(nlohmann::json& j, const IngestReport& r);
void from_json(const nlohmann::json& j, IngestReport& r);

}  // namespace mixopt::campaign
