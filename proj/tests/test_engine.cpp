#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "jomi/engine.hpp"
#include "jomi/harness.hpp"
#include "jomi/rng.hpp"
#include "jomi/rules.hpp"

using namespace jomi;

namespace {

Dataset random_covariate_dataset(Rng& rng, int n, int m) {
  Dataset d;
  for (int i = 0; i < n; ++i) {
    Unit u;
    u.id = "c" + std::to_string(i);
    u.sel_score = rng.normal();
    u.point_pred = rng.normal();
    u.outcome = *u.point_pred + rng.normal();
    u.cost = 0.5 + rng.u01();
    d.calib.push_back(u);
  }
  for (int j = 0; j < m; ++j) {
    Unit u;
    u.id = "t" + std::to_string(j);
    u.sel_score = rng.normal();
    u.point_pred = rng.normal();
    u.outcome = *u.point_pred + rng.normal();
    u.cost = 0.5 + rng.u01();
    d.test.push_back(u);
  }
  return d;
}

}  // namespace

TEST_CASE("materialized swap views equal direct construction, twice is identity") {
  Rng rng(71);
  const Dataset d = random_covariate_dataset(rng, 6, 4);
  for (int i = 0; i < d.n(); ++i)
    for (int j = 0; j < d.m(); ++j) {
      SwapView view(d, i, j, 1.5);
      const Dataset m1 = materialize(view);
      // direct construction
      CHECK(m1.calib[i].id == d.test[j].id);
      CHECK(m1.calib[i].outcome == 1.5);
      CHECK(m1.test[j].id == d.calib[i].id);
      CHECK_FALSE(m1.test[j].outcome.has_value());
      for (int k = 0; k < d.n(); ++k)
        if (k != i) CHECK(m1.calib[k].id == d.calib[k].id);
      // swapping back restores every slot
      SwapView back(m1, i, j, *d.calib[i].outcome);
      const Dataset m2 = materialize(back);
      for (int k = 0; k < d.n(); ++k) {
        CHECK(m2.calib[k].id == d.calib[k].id);
        CHECK(m2.calib[k].sel_score == d.calib[k].sel_score);
      }
      for (int l = 0; l < d.m(); ++l) CHECK(m2.test[l].id == d.test[l].id);
    }
}

TEST_CASE("generic reference sets: always-selected and never-selected rules") {
  Rng rng(73);
  const Dataset d = random_covariate_dataset(rng, 8, 3);
  const LambdaRule select_all("all", [](const DataView& v) {
    std::vector<int> s(v.m());
    std::iota(s.begin(), s.end(), 0);
    return s;
  });
  const LambdaRule select_none("none", [](const DataView&) { return std::vector<int>{}; });
  const auto full = reference_set_generic(0, std::nullopt, select_all, Taxonomy::all(), d);
  CHECK(static_cast<int>(full.size()) == d.n());
  CHECK(reference_set_generic(0, std::nullopt, select_none, Taxonomy::all(), d).empty());
}

TEST_CASE("generic reference set equals the top-K closed form on the worked instance") {
  Dataset d;
  const double calib_scores[3] = {0.05, 0.2, 0.7};
  const double test_scores[3] = {0.9, 0.5, 0.1};
  for (int i = 0; i < 3; ++i) {
    Unit u;
    u.id = "c" + std::to_string(i);
    u.sel_score = calib_scores[i];
    u.outcome = 0.0;
    d.calib.push_back(u);
  }
  for (int j = 0; j < 3; ++j) {
    Unit u;
    u.id = "t" + std::to_string(j);
    u.sel_score = test_scores[j];
    d.test.push_back(u);
  }
  const TopKRule rule(2);
  const auto generic = reference_set_generic(0, std::nullopt, rule, Taxonomy::all(), d);
  CHECK(generic == std::vector<int>{1, 2});
  CHECK(generic == rule.reference(d));
}

TEST_CASE("reference sets are invariant to calibration permutations") {
  Rng rng(79);
  for (int rep = 0; rep < 50; ++rep) {
    Dataset d = random_covariate_dataset(rng, 10, 4);
    const CalibQuantileRule rule(0.5);
    const int j = static_cast<int>(rng.below(4));
    const auto base = reference_set_generic(j, std::nullopt, rule, Taxonomy::all(), d);

    std::vector<int> perm(d.n());
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = d.n() - 1; i > 0; --i)
      std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
    Dataset shuffled;
    shuffled.test = d.test;
    for (int i : perm) shuffled.calib.push_back(d.calib[i]);

    auto mapped = reference_set_generic(j, std::nullopt, rule, Taxonomy::all(), shuffled);
    std::vector<int> unmapped;
    for (int i : mapped) unmapped.push_back(perm[i]);
    std::sort(unmapped.begin(), unmapped.end());
    CHECK(unmapped == base);
  }
}

TEST_CASE("closed forms equal the generic engine on random instances") {
  Rng rng(83);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 5 + static_cast<int>(rng.below(15));
    const int m = 2 + static_cast<int>(rng.below(5));
    Dataset d = random_covariate_dataset(rng, n, m);
    const double q = 0.2 + 0.6 * rng.u01();
    const int k = 1 + static_cast<int>(rng.below(m));

    const TopKRule topk(k);
    const JointQuantileRule jq(q);
    const CalibQuantileRule cq(q);
    for (const SelectionRule* rule :
         std::initializer_list<const SelectionRule*>{&topk, &jq, &cq}) {
      const auto sel = rule->select(IdentityView(d));
      const auto fast = rule->covariate_reference(d, Taxonomy::all());
      REQUIRE(fast.has_value());
      for (int j : sel.selected) {
        CHECK(*fast == reference_set_generic(j, std::nullopt, *rule, Taxonomy::all(), d));
        CHECK(*fast == oracle_reference_set(j, std::nullopt, *rule, Taxonomy::all(), d));
      }
    }
  }
}

TEST_CASE("knapsack reference sets run through the generic engine") {
  Rng rng(89);
  for (int rep = 0; rep < 40; ++rep) {
    Dataset d = random_covariate_dataset(rng, 8, 4);
    const KnapsackRule rule(2.0, KnapsackBackend::ThresholdGreedy);
    const auto sel = rule.select(IdentityView(d));
    for (int j : sel.selected) {
      const auto generic = reference_set_generic(j, std::nullopt, rule, Taxonomy::all(), d);
      CHECK(generic == oracle_reference_set(j, std::nullopt, rule, Taxonomy::all(), d));
    }
  }
}

TEST_CASE("finite-alphabet sets test both labels against a covariate reference") {
  Rng rng(97);
  Dataset d;
  for (int i = 0; i < 10; ++i) {
    Unit u;
    u.id = "c" + std::to_string(i);
    const double p = rng.u01();
    u.point_pred = p;
    u.sel_score = p;
    u.outcome = rng.u01() < p ? 1.0 : 0.0;
    d.calib.push_back(u);
  }
  for (int j = 0; j < 3; ++j) {
    Unit u;
    u.id = "t" + std::to_string(j);
    const double p = rng.u01();
    u.point_pred = p;
    u.sel_score = p;
    d.test.push_back(u);
  }
  const TopKRule rule(2);
  const ScoreFamily fam{ScoreKind::Binary};
  const auto sel = rule.select(IdentityView(d));
  for (int j : sel.selected) {
    // covariate rule: the per-label reference sets coincide
    const auto r0 = reference_set_generic(j, 0.0, rule, Taxonomy::all(), d);
    const auto r1 = reference_set_generic(j, 1.0, rule, Taxonomy::all(), d);
    CHECK(r0 == r1);
    // +inf threshold keeps both labels when alpha is tiny
    const auto full = jomi_set_finite(j, rule, Taxonomy::all(), fam, 1e-6, d);
    CHECK(full.labels == std::vector<int>{0, 1});
  }
}

TEST_CASE("piecewise assembly with no breakpoints reduces to plain inversion") {
  Unit u;
  u.id = "t";
  u.point_pred = 0.0;
  const auto set =
      jomi_set_piecewise(u, {}, {{1.0, 2.0, 3.0}}, ScoreFamily{ScoreKind::AbsResidual}, 0.25);
  REQUIRE(set.intervals.segments() == 1);
  CHECK(set.intervals.parts()[0].lo == -3.0);
  CHECK(set.intervals.parts()[0].hi == 3.0);
}

TEST_CASE("piecewise assembly intersects pieces and keeps half-open edges") {
  Unit u;
  u.id = "t";
  u.point_pred = 0.0;
  const ScoreFamily fam{ScoreKind::AbsResidual};
  // (-inf, 1]: radius 0.5; (1, inf): radius 2
  const auto set = jomi_set_piecewise(u, {1.0}, {{0.25, 0.5}, {1.5, 2.0}}, fam, 0.34);
  REQUIRE(set.intervals.segments() == 2);
  CHECK(set.covers(-0.5));
  CHECK(set.covers(0.5));
  CHECK_FALSE(set.covers(0.9));
  CHECK_FALSE(set.covers(1.0));
  CHECK(set.covers(1.1));
  CHECK(set.covers(2.0));
  CHECK_FALSE(set.covers(2.1));

  CHECK_THROWS(jomi_set_piecewise(u, {2.0, 1.0}, {{}, {}, {}}, fam, 0.5));
  CHECK_THROWS(jomi_set_piecewise(u, {1.0, 1.0}, {{}, {}, {}}, fam, 0.5));
}

TEST_CASE("piecewise grid oracle: membership equals direct per-y evaluation") {
  Rng rng(101);
  const ScoreFamily fam{ScoreKind::AbsResidual};
  for (int rep = 0; rep < 120; ++rep) {
    Unit u;
    u.id = "t";
    u.point_pred = rng.normal();
    const double c = rng.normal();
    std::vector<std::vector<double>> pools(2);
    for (auto& pool : pools) {
      const int r = static_cast<int>(rng.below(8));
      for (int k = 0; k < r; ++k) pool.push_back(std::fabs(rng.normal()));
    }
    const double alpha = 0.1 + 0.8 * rng.u01();
    const auto set = jomi_set_piecewise(u, {c}, pools, fam, alpha);
    for (int g = 0; g <= 10000; ++g) {
      const double y = -6.0 + 12.0 * g / 10000.0;
      const auto& pool = y <= c ? pools[0] : pools[1];
      const bool direct =
          fam.value(u, y) <= conformal_quantile(1.0 - alpha, pool, true);
      if (direct != set.covers(y)) {
        INFO("y=" << y << " c=" << c << " alpha=" << alpha);
        REQUIRE(direct == set.covers(y));
      }
    }
  }
}

TEST_CASE("randomized piecewise sets agree with the membership rule on a grid") {
  Rng rng(103);
  const ScoreFamily fam{ScoreKind::AbsResidual};
  for (int rep = 0; rep < 120; ++rep) {
    Unit u;
    u.id = "t";
    u.point_pred = rng.normal();
    const double c = rng.normal();
    std::vector<std::vector<double>> pools(2);
    for (auto& pool : pools) {
      const int r = static_cast<int>(rng.below(8));
      for (int k = 0; k < r; ++k) pool.push_back(std::fabs(rng.normal()));
    }
    const double alpha = 0.1 + 0.8 * rng.u01();
    const double uu = rng.u01();
    const auto set = jomi_set_piecewise_randomized(u, {c}, pools, fam, alpha, uu);
    for (int g = 0; g <= 2000; ++g) {
      const double y = -6.0 + 12.0 * g / 2000.0;
      const auto& pool = y <= c ? pools[0] : pools[1];
      const bool direct = randomized_membership(fam.value(u, y), pool, uu, alpha);
      if (direct != set.covers(y)) {
        INFO("y=" << y << " c=" << c << " alpha=" << alpha << " u=" << uu);
        REQUIRE(direct == set.covers(y));
      }
    }
    // u = 1 with distinct scores nests inside the deterministic set
    const auto strict = jomi_set_piecewise_randomized(u, {c}, pools, fam, alpha, 1.0);
    const auto det = jomi_set_piecewise(u, {c}, pools, fam, alpha);
    CHECK(strict.intervals.subset_of(det.intervals));
  }
}

TEST_CASE("empty reference pools yield the full piece, never an error") {
  Unit u;
  u.id = "t";
  u.point_pred = 5.0;
  const auto set =
      jomi_set_piecewise(u, {0.0}, {{}, {1.0}}, ScoreFamily{ScoreKind::AbsResidual}, 0.5);
  // below 0: +inf threshold keeps everything; above 0: radius 1 around 5
  CHECK(set.covers(-100.0));
  CHECK(set.covers(0.0));
  CHECK_FALSE(set.covers(0.5));
  CHECK(set.covers(4.0));
  CHECK(set.covers(6.0));
  CHECK_FALSE(set.covers(6.5));
}

TEST_CASE("rule failures on swaps carry the swap context") {
  Dataset d;
  Unit c;
  c.id = "c0";
  c.outcome = 0.0;
  d.calib.push_back(c);
  Unit t;
  t.id = "t0";
  d.test.push_back(t);
  const TopKRule rule(1);  // sel_score missing everywhere
  try {
    reference_set_generic(0, std::nullopt, rule, Taxonomy::all(), d);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("i=0") != std::string::npos);
    CHECK(msg.find("j=0") != std::string::npos);
  }
}

TEST_CASE("predicate and explicit taxonomies flow through the generic engine") {
  Rng rng(211);
  for (int rep = 0; rep < 40; ++rep) {
    Dataset d = random_covariate_dataset(rng, 10, 4);
    const CalibQuantileRule rule(0.4 + 0.4 * rng.u01());
    const auto sel = rule.select(IdentityView(d));
    const Taxonomy pred = Taxonomy::predicate([](const std::vector<int>& s) {
      return s.size() % 2 == 1;  // odd selection sizes only
    });
    const Taxonomy expl = Taxonomy::explicit_sets({sel.selected});
    for (int j : sel.selected) {
      for (const Taxonomy* tax : {&pred, &expl}) {
        CHECK(reference_set_generic(j, std::nullopt, rule, *tax, d) ==
              oracle_reference_set(j, std::nullopt, rule, *tax, d));
      }
    }
  }
}
