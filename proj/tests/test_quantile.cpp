#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "jomi/quantile.hpp"
#include "jomi/rng.hpp"

using namespace jomi;

TEST_CASE("conformal quantile follows the ceil(level * N) convention") {
  CHECK(conformal_quantile(0.5, std::vector<double>{1, 2, 3, 4}, false) == 2.0);
  CHECK(conformal_quantile(0.9, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9}, true) == 9.0);
  CHECK(std::isinf(conformal_quantile(1.0, std::vector<double>{5}, true)));
  CHECK(conformal_quantile(1.0, std::vector<double>{5}, false) == 5.0);
  CHECK_THROWS(conformal_quantile(0.5, std::vector<double>{}, false));
  CHECK(std::isinf(conformal_quantile(0.5, std::vector<double>{}, true)));
}

TEST_CASE("conformal quantile handles tied scores as a multiset") {
  const std::vector<double> tied{2, 2, 2, 7};
  CHECK(conformal_quantile(0.5, tied, false) == 2.0);
  CHECK(conformal_quantile(0.8, tied, false) == 7.0);
}

TEST_CASE("conformal quantile is monotone in level and in the scores") {
  Rng rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 1 + static_cast<int>(rng.below(20));
    std::vector<double> scores(n);
    for (double& s : scores) s = rng.normal();
    const double l1 = 0.05 + 0.9 * rng.u01();
    const double l2 = 0.05 + 0.9 * rng.u01();
    const double lo = std::min(l1, l2), hi = std::max(l1, l2);
    CHECK(conformal_quantile(lo, scores, true) <= conformal_quantile(hi, scores, true));

    std::vector<double> bumped = scores;
    for (double& s : bumped) s += rng.u01();
    CHECK(conformal_quantile(lo, scores, true) <= conformal_quantile(lo, bumped, true));
  }
}

TEST_CASE("randomized membership matches the rank formula") {
  std::vector<double> refs(9);
  for (int i = 0; i < 9; ++i) refs[i] = i + 1.0;  // 1..9
  // v below every reference score: (0 + 0.5)/10 <= 0.9
  CHECK(randomized_membership(0.5, refs, 0.5, 0.1));
  // v above every reference score: (9 + 0.5)/10 > 0.9
  CHECK_FALSE(randomized_membership(10.0, refs, 0.5, 0.1));
  // alpha -> 0 keeps everything when u < 1
  CHECK(randomized_membership(10.0, refs, 0.99, 0.0));
  // degenerate empty pool reduces to u <= 1 - alpha
  CHECK(randomized_membership(3.0, std::vector<double>{}, 0.3, 0.1));
  CHECK_FALSE(randomized_membership(3.0, std::vector<double>{}, 0.95, 0.1));
  // single reference score at alpha = 0.5, u = 0.2
  CHECK_FALSE(randomized_membership(2.0, std::vector<double>{1.0}, 0.2, 0.5));
  CHECK(randomized_membership(0.5, std::vector<double>{1.0}, 0.2, 0.5));
}

TEST_CASE("randomized rule with u = 1 nests inside the deterministic rule") {
  Rng rng(11);
  for (int rep = 0; rep < 500; ++rep) {
    const int r = static_cast<int>(rng.below(15));
    std::vector<double> refs(r);
    for (double& s : refs) s = rng.normal();
    const double v = rng.normal();
    const double alpha = 0.05 + 0.9 * rng.u01();
    if (randomized_membership(v, refs, 1.0, alpha)) {
      CHECK(v <= conformal_quantile(1.0 - alpha, refs, true));
    }
  }
}

TEST_CASE("randomized score threshold inverts the membership rule exactly") {
  Rng rng(13);
  for (int rep = 0; rep < 800; ++rep) {
    const int r = static_cast<int>(rng.below(12));
    std::vector<double> refs(r);
    for (double& s : refs) s = std::round(rng.normal() * 4.0) / 4.0;  // force ties
    const double u = rng.u01();
    const double alpha = 0.05 + 0.9 * rng.u01();
    const ScoreThreshold thr = randomized_score_threshold(refs, u, alpha);
    for (int probe = 0; probe < 25; ++probe) {
      double v = std::round(rng.normal() * 4.0) / 4.0;
      const bool direct = randomized_membership(v, refs, u, alpha);
      bool via_threshold;
      switch (thr.kind) {
        case ScoreThreshold::Kind::Empty: via_threshold = false; break;
        case ScoreThreshold::Kind::Full: via_threshold = true; break;
        case ScoreThreshold::Kind::Value:
          via_threshold = thr.strict ? v < thr.value : v <= thr.value;
          break;
      }
      INFO("v=" << v << " u=" << u << " alpha=" << alpha << " r=" << r);
      CHECK(direct == via_threshold);
    }
  }
}

TEST_CASE("scp set inverts residual families to one interval") {
  Unit u;
  u.id = "t";
  u.point_pred = 0.0;
  ScoreFamily fam{ScoreKind::AbsResidual};
  const auto set = scp_set(u, {1.0, 2.0, 3.0}, fam, 0.25);
  REQUIRE(set.intervals.segments() == 1);
  CHECK(set.intervals.parts()[0].lo == -3.0);
  CHECK(set.intervals.parts()[0].hi == 3.0);

  // quantile index hits the augmented +inf: the whole line comes back
  const auto full = scp_set(u, {1.0, 2.0, 3.0}, fam, 0.05);
  CHECK(full.covers(1e9));
}

TEST_CASE("scp set on the binary family keeps the confident label") {
  Unit u;
  u.id = "t";
  u.point_pred = 0.9;
  ScoreFamily fam{ScoreKind::Binary};
  const auto set = scp_set(u, {0.05, 0.1, 0.2}, fam, 0.5);
  CHECK(set.labels == std::vector<int>{1});
}

TEST_CASE("scp set demands the family's fields") {
  Unit u;
  u.id = "t";
  ScoreFamily fam{ScoreKind::AbsResidual};
  CHECK_THROWS_AS(scp_set(u, {1.0}, fam, 0.5), data_error);
}

TEST_CASE("scp inversion is exact against direct score probes") {
  Rng rng(17);
  Unit u;
  u.id = "t";
  u.point_pred = 0.7;
  u.sigma_hat = 1.3;
  u.quantile_lo = -0.4;
  u.quantile_hi = 1.1;
  for (ScoreKind kind : {ScoreKind::AbsResidual, ScoreKind::ScaledResidual, ScoreKind::Cqr}) {
    ScoreFamily fam{kind};
    for (int probe = 0; probe < 1000; ++probe) {
      const double threshold = rng.normal();
      const double y = 3.0 * rng.normal();
      const bool in_set = fam.sublevel(u, threshold).contains(y);
      CHECK(in_set == (fam.value(u, y) <= threshold));
    }
  }
}

TEST_CASE("marginal coverage of scp lies in the split-conformal band") {
  Rng rng(29);
  const int n = 40;
  const double alpha = 0.2;
  int covered = 0;
  const int trials = 4000;
  for (int t = 0; t < trials; ++t) {
    Rng tr = rng.fork(t);
    std::vector<double> calib(n);
    Unit u;
    u.id = "t";
    u.point_pred = 0.0;
    for (double& s : calib) s = std::fabs(tr.normal());
    const double y = tr.normal();
    if (scp_set(u, calib, ScoreFamily{ScoreKind::AbsResidual}, alpha).covers(y)) ++covered;
  }
  const double cov = static_cast<double>(covered) / trials;
  const double se = std::sqrt(0.8 * 0.2 / trials);
  CHECK(cov >= 1.0 - alpha - 3.0 * se);
  CHECK(cov <= 1.0 - alpha + 1.0 / (n + 1) + 3.0 * se);
}
