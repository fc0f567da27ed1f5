#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mixopt/campaign/ingest.hpp"
#include "support/campaign_fixture.hpp"

using namespace mixopt;
using namespace mixopt::campaign;
using domain::IngredientId;

TEST_CASE("ingest_csv single row and psi conversion") {
  const auto r = ingest_csv_text(
      "cement,slag,fly_ash,water,fine_aggregate,coarse_aggregate,superplasticizer,age_days,strength,unit\n"
      "300,150,0,160,1400,0,2,28,41.2,MPa\n"
      "300,150,0,160,1400,0,2,28,5979,psi\n");
  REQUIRE(r.rows.size() == 2);
  const auto& o = r.rows[0].observation;
  CHECK(o.mixture[IngredientId::cement] == 300.0);
  CHECK(o.mixture[IngredientId::slag] == 150.0);
  CHECK(o.mixture[IngredientId::fine_aggregate] == 1400.0);
  CHECK(o.mixture[IngredientId::superplasticizer] == 2.0);
  CHECK(o.age_days == 28.0);
  CHECK(o.strength_mpa == 41.2);
  CHECK(r.rows[0].batch == kExternalBatch);
  CHECK(std::abs(r.rows[1].observation.strength_mpa - 41.22) < 0.005);
  CHECK(r.report.rows == 2);
  CHECK(r.report.accepted == 2);
}

TEST_CASE("ingest_csv empty input") {
  auto r = ingest_csv_text("");
  CHECK(r.rows.empty());
  CHECK(r.report.rows == 0);
  r = ingest_csv_text("cement,water,age_days,strength\n\n");
  CHECK(r.rows.empty());
  CHECK(r.report.errors.empty());
}

TEST_CASE("ingest_csv schema errors") {
  CHECK_THROWS_AS(ingest_csv_text("cement,rice,age_days,strength\n1,2,3,4\n"), SchemaError);
  CHECK_THROWS_AS(ingest_csv_text("cement,water,strength\n300,150,40\n"), SchemaError);
}

TEST_CASE("ingest golden file") {
  std::ifstream in(test_support::source_path("tests/golden/ingest_input.csv"));
  const auto got = ingest_csv(in);
  const auto expected = test_support::read_json(test_support::source_path("tests/golden/ingest_expected.json"));

  CHECK(got.report.rows == expected["report"]["rows"].get<std::size_t>());
  CHECK(got.report.accepted == expected["report"]["accepted"].get<std::size_t>());
  std::vector<std::size_t> error_lines;
  for (const auto& e : got.report.errors) error_lines.push_back(e.line);
  CHECK(error_lines == expected["report"]["error_lines"].get<std::vector<std::size_t>>());

  const auto& exp_obs = expected["observations"];
  REQUIRE(got.rows.size() == exp_obs.size());
  for (std::size_t i = 0; i < got.rows.size(); ++i) {
    const auto& g = got.rows[i];
    const auto& e = exp_obs[i];
    CHECK(g.line == e["line"].get<std::size_t>());
    CHECK(g.batch == e["batch"].get<std::string>());
    CHECK(g.observation.mixture == e["mixture"].get<domain::Mixture>());
    CHECK(g.observation.age_days == e["age_days"].get<double>());
    CHECK(g.observation.strength_mpa == doctest::Approx(e["strength_mpa"].get<double>()).epsilon(1e-14));
    if (e["replicate"].is_null()) {
      CHECK_FALSE(g.observation.replicate_id.has_value());
    } else {
      CHECK(g.observation.replicate_id == e["replicate"].get<int>());
    }
  }

  // Strict mode rejects the whole file and reports the same diagnostics.
  std::ifstream again(test_support::source_path("tests/golden/ingest_input.csv"));
  try {
    ingest_csv(again, true);
    FAIL("strict ingest should throw");
  } catch (const RowErrors& e) {
    CHECK(e.report() == got.report);
  }
}

TEST_CASE("ingest_json_rows mirrors the CSV contract") {
  const auto rows = nlohmann::json::parse(R"([
    {"mixture": {"cement": 300, "slag": 150, "water": 160, "fine_aggregate": 1400, "superplasticizer": 2},
     "age_days": 28, "strength": 5979, "unit": "psi", "batch": "B1", "replicate": 2},
    {"mixture": {"cement": 300, "water": 160}, "age_days": 3, "strength": 12.5},
    {"mixture": {"cement": -1, "water": 160}, "age_days": 3, "strength": 12.5},
    {"mixture": {"cement": 300, "gravel": 1}, "age_days": 3, "strength": 12.5},
    {"mixture": {"cement": 300, "water": 160}, "age_days": 3, "strength": 12.5, "colour": "grey"}
  ])");
  const auto r = ingest_json_rows(rows);
  REQUIRE(r.rows.size() == 2);
  CHECK(r.rows[0].observation.strength_mpa == doctest::Approx(5979 / 145.0377).epsilon(1e-14));
  CHECK(r.rows[0].batch == "B1");
  CHECK(r.rows[0].observation.replicate_id == 2);
  CHECK(r.rows[1].batch == kExternalBatch);
  REQUIRE(r.report.errors.size() == 3);
  CHECK(r.report.errors[0].line == 3);
  CHECK(r.report.errors[0].message.find("negative") != std::string::npos);
  CHECK_THROWS_AS(ingest_json_rows(rows, true), RowErrors);
  CHECK_THROWS_AS(ingest_json_rows(nlohmann::json::object()), SchemaError);
  const IngestReport back = nlohmann::json(r.report).get<IngestReport>();
  CHECK(back == r.report);
}
