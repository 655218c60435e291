#include <catch2/catch_amalgamated.hpp>

#include "jomi/scores.hpp"

using namespace jomi;

namespace {

Unit regression_unit() {
  Unit u;
  u.id = "t";
  u.point_pred = 1.0;
  u.sigma_hat = 2.0;
  u.quantile_lo = 0.0;
  u.quantile_hi = 3.0;
  return u;
}

}  // namespace

TEST_CASE("score family values") {
  const Unit u = regression_unit();
  CHECK(ScoreFamily{ScoreKind::AbsResidual}.value(u, 4.0) == 3.0);
  CHECK(ScoreFamily{ScoreKind::ScaledResidual}.value(u, 4.0) == 1.5);
  CHECK(ScoreFamily{ScoreKind::Cqr}.value(u, 4.0) == 1.0);
  CHECK(ScoreFamily{ScoreKind::Cqr}.value(u, -2.0) == 2.0);
  CHECK(ScoreFamily{ScoreKind::Cqr}.value(u, 1.5) == -1.5);

  Unit b;
  b.id = "b";
  b.point_pred = 0.8;
  CHECK(ScoreFamily{ScoreKind::Binary}.value(b, 1.0) == Catch::Approx(0.2));
  CHECK(ScoreFamily{ScoreKind::Binary}.value(b, 0.0) == Catch::Approx(0.8));
}

TEST_CASE("aps accumulates sorted probabilities through the label") {
  Unit u;
  u.id = "a";
  u.class_probs = {0.2, 0.5, 0.3};
  ScoreFamily fam{ScoreKind::Aps, 3};
  CHECK(fam.value(u, 1.0) == Catch::Approx(0.5));
  CHECK(fam.value(u, 2.0) == Catch::Approx(0.8));
  CHECK(fam.value(u, 0.0) == Catch::Approx(1.0));
}

TEST_CASE("sublevel sets match the comparison direction") {
  const Unit u = regression_unit();
  const ScoreFamily cqr{ScoreKind::Cqr};
  const IntervalSet closed_set = cqr.sublevel(u, 0.5);
  CHECK(closed_set.contains(-0.5));
  CHECK(closed_set.contains(3.5));
  CHECK_FALSE(closed_set.contains(-0.6));
  const IntervalSet strict_set = cqr.sublevel(u, 0.5, true);
  CHECK_FALSE(strict_set.contains(-0.5));
  CHECK(strict_set.contains(-0.49));

  // negative thresholds can empty the set, or shrink CQR from the inside
  CHECK(ScoreFamily{ScoreKind::AbsResidual}.sublevel(u, -0.1).empty());
  const IntervalSet inner = cqr.sublevel(u, -1.0);
  CHECK(inner.contains(1.5));
  CHECK_FALSE(inner.contains(0.4));
}

TEST_CASE("field validation is eager and names the unit") {
  Unit u;
  u.id = "bad";
  CHECK_THROWS_AS(ScoreFamily{ScoreKind::Cqr}.validate_unit(u), data_error);
  u.class_probs = {0.5, 0.6};
  CHECK_THROWS_AS((ScoreFamily{ScoreKind::Aps, 2}.validate_unit(u)), data_error);
  u.class_probs = {0.4, 0.6};
  CHECK_NOTHROW((ScoreFamily{ScoreKind::Aps, 2}.validate_unit(u)));
}

TEST_CASE("calibration units must carry outcomes") {
  Unit u = regression_unit();
  CHECK_THROWS_AS(ScoreFamily{ScoreKind::AbsResidual}.value_at_truth(u), data_error);
  u.outcome = 2.0;
  CHECK(ScoreFamily{ScoreKind::AbsResidual}.value_at_truth(u) == 1.0);
}
