#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "mixopt/datasets/concrete.hpp"
#include "mixopt/errors.hpp"

using namespace mixopt;
using namespace mixopt::datasets;
using domain::IngredientId;

TEST_CASE("synthetic stand-in matches the public dataset's shape") {
  const auto data = synthetic_uci();
  CHECK(data.size() == 1030);
  CHECK(strength::distinct_mixtures(data).size() == 425);
  std::map<double, int> ages;
  for (const auto& o : data) {
    ++ages[o.age_days];
    CHECK_NOTHROW(o.validate());
    CHECK(uci_design_space().is_feasible(o.mixture));
  }
  CHECK(ages.size() == 14);
  CHECK(ages[28.0] == 425);
  CHECK(ages[3.0] == 134);
  CHECK(ages[365.0] == 14);
  CHECK(synthetic_uci() == data);
  CHECK(synthetic_uci(7) != data);
}

TEST_CASE("surrogate closed forms") {
  const ConcreteSurrogate truth;
  Mixture m;
  m[IngredientId::cement] = 400.0;
  m[IngredientId::water] = 200.0;
  // w/b = 0.5 and no admixtures: 105 exp(-1.05)
  CHECK(truth.strength_28d(m) == doctest::Approx(105.0 * std::exp(-1.05)));
  CHECK(truth.strength(m, 28.0) == doctest::Approx(truth.strength_28d(m)));
  CHECK(truth.strength(m, 0.0) == 0.0);
  // a = 3: g(1) = 1 / (3 + 25/28)
  CHECK(truth.strength(m, 1.0) == doctest::Approx(truth.strength_28d(m) / (3.0 + 25.0 / 28.0)));
  double prev = 0.0;
  for (double t : {0.5, 1.0, 3.0, 7.0, 28.0, 90.0, 365.0}) {
    CHECK(truth.strength(m, t) > prev);
    prev = truth.strength(m, t);
  }
  // Fly ash slows early gain relative to 28 days.
  auto f = m;
  f[IngredientId::cement] = 300.0;
  f[IngredientId::fly_ash] = 100.0;
  CHECK(truth.strength(f, 3.0) / truth.strength(f, 28.0) < truth.strength(m, 3.0) / truth.strength(m, 28.0));
  CHECK(truth.measure(m, 7.0, 5) == truth.measure(m, 7.0, 5));
}

TEST_CASE("public dataset csv loader") {
  const auto path = std::filesystem::temp_directory_path() / "mixopt_uci_test.csv";
  {
    std::ofstream out(path);
    out << "Cement,Slag,FlyAsh,Water,SP,Coarse,Fine,Age,Strength\n";
    out << "540,0,0,162,2.5,1040,676,28,79.99\n";
    out << "332.5,142.5,0,228,0,932,594,270,40.27\n";
  }
  const auto data = load_uci_csv(path);
  REQUIRE(data.size() == 2);
  CHECK(data[0].mixture[IngredientId::cement] == 540.0);
  CHECK(data[0].mixture[IngredientId::superplasticizer] == 2.5);
  CHECK(data[0].mixture[IngredientId::fine_aggregate] == 676.0);
  CHECK(data[1].mixture[IngredientId::slag] == 142.5);
  CHECK(data[1].age_days == 270.0);
  CHECK(data[1].strength_mpa == doctest::Approx(40.27));
  {
    std::ofstream out(path);
    out << "h\n1,2,3\n";
  }
  CHECK_THROWS_AS(load_uci_csv(path), SchemaError);
  std::filesystem::remove(path);
}
