#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "jomi/quantile.hpp"
#include "jomi/selection.hpp"
#include "jomi/taxonomy.hpp"

namespace jomi {

// ---------------------------------------------------------------------------
// Covariate-dependent selection: top-K, joint-quantile, calibration-quantile
// and budget-constrained rules, with the exact reference sets that let the
// swap loop collapse to a single threshold comparison.
// ---------------------------------------------------------------------------

// Threshold at the (m-K)-th smallest test score; -inf when K = m so that all
// units pass the strict comparison. Test scores must be distinct.
inline SelectionResult topk_select(const std::vector<double>& test_scores,
                                   const std::vector<double>& /*calib_scores*/, int K) {
  const int m = static_cast<int>(test_scores.size());
  if (K < 1 || K > m) throw std::invalid_argument("top-K: K must lie in [1, m]");
  std::vector<double> sorted = test_scores;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("top-K undefined under ties");
  const double threshold = (K == m) ? -kInf : sorted[m - K - 1];
  SelectionResult r;
  r.threshold = threshold;
  for (int j = 0; j < m; ++j)
    if (test_scores[j] > threshold) r.selected.push_back(j);
  return r;
}

inline std::vector<int> topk_reference(const std::vector<double>& calib_scores,
                                       double threshold) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(calib_scores.size()); ++i)
    if (calib_scores[i] > threshold) out.push_back(i);
  return out;
}

namespace detail {

// Smallest pooled score t with count(t) >= need, where count is supplied as
// a predicate over candidate thresholds; +inf when nothing qualifies.
inline double scan_pooled_threshold(std::vector<double> pooled,
                                    const std::vector<double>& counted, double need) {
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> counted_sorted = counted;
  std::sort(counted_sorted.begin(), counted_sorted.end());
  for (double t : pooled) {
    const auto le = std::upper_bound(counted_sorted.begin(), counted_sorted.end(), t) -
                    counted_sorted.begin();
    if (static_cast<double>(le) >= need - kCountEps) return t;
  }
  return kInf;
}

}  // namespace detail

struct ThresholdedSelection {
  SelectionResult selection;
  std::vector<int> reference;
};

// Joint-quantile rule: threshold where the pooled (calibration + test) count
// of scores <= t first reaches q (n + m); selection and reference are both
// strictly above it.
inline ThresholdedSelection jq_select_and_reference(const std::vector<double>& calib_scores,
                                                    const std::vector<double>& test_scores,
                                                    double q) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("joint-quantile: q must lie in (0,1)");
  std::vector<double> pooled = calib_scores;
  pooled.insert(pooled.end(), test_scores.begin(), test_scores.end());
  const double need = q * static_cast<double>(pooled.size());
  const double t = detail::scan_pooled_threshold(pooled, pooled, need);
  ThresholdedSelection out;
  out.selection.threshold = t;
  for (int j = 0; j < static_cast<int>(test_scores.size()); ++j)
    if (test_scores[j] > t) out.selection.selected.push_back(j);
  out.reference = topk_reference(calib_scores, t);
  return out;
}

// Calibration-quantile rule: same scan, but only calibration scores enter
// the count while candidate thresholds still range over the pooled values.
inline ThresholdedSelection cq_select_and_reference(const std::vector<double>& calib_scores,
                                                    const std::vector<double>& test_scores,
                                                    double q) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("calib-quantile: q must lie in (0,1)");
  std::vector<double> pooled = calib_scores;
  pooled.insert(pooled.end(), test_scores.begin(), test_scores.end());
  const double need = q * static_cast<double>(calib_scores.size());
  const double t = detail::scan_pooled_threshold(pooled, calib_scores, need);
  ThresholdedSelection out;
  out.selection.threshold = t;
  for (int j = 0; j < static_cast<int>(test_scores.size()); ++j)
    if (test_scores[j] > t) out.selection.selected.push_back(j);
  out.reference = topk_reference(calib_scores, t);
  return out;
}

// ---------------------------------------------------------------------------
// Budget-constrained selection.
// ---------------------------------------------------------------------------

enum class KnapsackBackend {
  ThresholdGreedy,  // select all units with score >= the deepest feasible level
  ExactDp           // 0/1 knapsack on integerized costs, maximizes total score
};

inline SelectionResult knapsack_select(const std::vector<double>& scores,
                                       const std::vector<double>& costs, double budget,
                                       KnapsackBackend backend) {
  const int m = static_cast<int>(scores.size());
  if (static_cast<int>(costs.size()) != m)
    throw std::invalid_argument("knapsack: scores/costs size mismatch");
  if (!(budget > 0.0)) throw std::invalid_argument("knapsack: budget must be positive");
  for (double c : costs)
    if (c < 0.0) throw std::invalid_argument("knapsack: costs must be nonnegative");

  SelectionResult r;
  if (backend == KnapsackBackend::ThresholdGreedy) {
    r.backend = "threshold_greedy";
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return scores[a] > scores[b]; });
    // Walk whole groups of tied scores so the selection stays of the form
    // {score >= level}; keep the deepest level whose total cost fits.
    double running = 0.0;
    std::size_t feasible_end = 0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      std::size_t group_end = pos;
      double group_cost = 0.0;
      while (group_end < order.size() && scores[order[group_end]] == scores[order[pos]]) {
        group_cost += costs[order[group_end]];
        ++group_end;
      }
      if (running + group_cost > budget + 1e-12) break;
      running += group_cost;
      feasible_end = group_end;
      pos = group_end;
    }
    for (std::size_t k = 0; k < feasible_end; ++k) r.selected.push_back(order[k]);
    std::sort(r.selected.begin(), r.selected.end());
    return r;
  }

  r.backend = "exact_dp";
  // Integerize costs: use the smallest decimal scale that represents every
  // cost exactly, falling back to a fixed milli-unit grid.
  std::int64_t scale = 1;
  for (; scale <= 1000; scale *= 10) {
    bool ok = true;
    for (double c : costs)
      if (std::fabs(c * static_cast<double>(scale) -
                    std::llround(c * static_cast<double>(scale))) > 1e-6) {
        ok = false;
        break;
      }
    if (ok) break;
  }
  if (scale > 1000) scale = 1000;
  const auto cap = static_cast<std::int64_t>(
      std::floor(budget * static_cast<double>(scale) + 1e-9));
  if (m > 64 || cap + 1 > (1 << 20))
    throw std::invalid_argument("knapsack: exact DP limited to m <= 64 and ~1e6 cost states");

  std::vector<std::int64_t> w(m);
  for (int j = 0; j < m; ++j)
    w[j] = std::llround(costs[j] * static_cast<double>(scale));

  const std::size_t states = static_cast<std::size_t>(cap) + 1;
  std::vector<double> best(states, 0.0);
  std::vector<std::vector<char>> keep(m, std::vector<char>(states, 0));
  for (int j = 0; j < m; ++j) {
    if (w[j] > cap) continue;
    for (std::int64_t s = cap; s >= w[j]; --s) {
      const double with = best[s - w[j]] + scores[j];
      if (with > best[s] + 1e-12) {
        best[s] = with;
        keep[j][s] = 1;
      }
    }
  }
  std::int64_t s = cap;
  for (int j = m - 1; j >= 0; --j) {
    if (keep[j][s]) {
      r.selected.push_back(j);
      s -= w[j];
    }
  }
  std::sort(r.selected.begin(), r.selected.end());
  return r;
}

// ---------------------------------------------------------------------------
// Rule objects over datasets.
// ---------------------------------------------------------------------------

enum class ScoreSource { SelScore, PointPred };

inline double covariate_score(const Unit& u, ScoreSource src, bool negate) {
  const std::optional<double>& field = src == ScoreSource::SelScore ? u.sel_score : u.point_pred;
  if (!field) throw data_error("unit '" + u.id + "' lacks the configured selection score field");
  return negate ? -*field : *field;
}

inline std::vector<double> view_calib_scores(const DataView& v, ScoreSource src, bool negate) {
  std::vector<double> out(v.n());
  for (int i = 0; i < v.n(); ++i) out[i] = covariate_score(v.calib(i), src, negate);
  return out;
}

inline std::vector<double> view_test_scores(const DataView& v, ScoreSource src, bool negate) {
  std::vector<double> out(v.m());
  for (int j = 0; j < v.m(); ++j) out[j] = covariate_score(v.test(j), src, negate);
  return out;
}

class TopKRule final : public SelectionRule {
 public:
  TopKRule(int k, bool lowest = false, ScoreSource src = ScoreSource::SelScore)
      : k_(k), lowest_(lowest), src_(src) {}

  SelectionResult select(const DataView& view) const override {
    return topk_select(view_test_scores(view, src_, lowest_),
                       view_calib_scores(view, src_, lowest_), k_);
  }
  RefStructure ref_structure() const override { return RefStructure::Covariate; }
  std::string name() const override { return lowest_ ? "topk_lowest" : "topk"; }

  std::vector<int> reference(const Dataset& data) const {
    IdentityView v(data);
    const auto sel = select(v);
    return topk_reference(view_calib_scores(v, src_, lowest_), *sel.threshold);
  }

  std::optional<std::vector<int>> covariate_reference(const Dataset& data,
                                                      const Taxonomy&) const override {
    return reference(data);
  }

  int k() const { return k_; }

 private:
  int k_;
  bool lowest_;
  ScoreSource src_;
};

class JointQuantileRule final : public SelectionRule {
 public:
  explicit JointQuantileRule(double q, ScoreSource src = ScoreSource::SelScore)
      : q_(q), src_(src) {}

  SelectionResult select(const DataView& view) const override {
    return jq_select_and_reference(view_calib_scores(view, src_, false),
                                   view_test_scores(view, src_, false), q_)
        .selection;
  }
  RefStructure ref_structure() const override { return RefStructure::Covariate; }
  std::string name() const override { return "joint_quantile"; }

  std::vector<int> reference(const Dataset& data) const {
    IdentityView v(data);
    return jq_select_and_reference(view_calib_scores(v, src_, false),
                                   view_test_scores(v, src_, false), q_)
        .reference;
  }

  std::optional<std::vector<int>> covariate_reference(const Dataset& data,
                                                      const Taxonomy&) const override {
    return reference(data);
  }

 private:
  double q_;
  ScoreSource src_;
};

class CalibQuantileRule final : public SelectionRule {
 public:
  explicit CalibQuantileRule(double q, ScoreSource src = ScoreSource::SelScore)
      : q_(q), src_(src) {}

  SelectionResult select(const DataView& view) const override {
    return cq_select_and_reference(view_calib_scores(view, src_, false),
                                   view_test_scores(view, src_, false), q_)
        .selection;
  }
  RefStructure ref_structure() const override { return RefStructure::Covariate; }
  std::string name() const override { return "calib_quantile"; }

  std::vector<int> reference(const Dataset& data) const {
    IdentityView v(data);
    return cq_select_and_reference(view_calib_scores(v, src_, false),
                                   view_test_scores(v, src_, false), q_)
        .reference;
  }

  std::optional<std::vector<int>> covariate_reference(const Dataset& data,
                                                      const Taxonomy&) const override {
    return reference(data);
  }

 private:
  double q_;
  ScoreSource src_;
};

class KnapsackRule final : public SelectionRule {
 public:
  KnapsackRule(double budget, KnapsackBackend backend,
               ScoreSource src = ScoreSource::SelScore)
      : budget_(budget), backend_(backend), src_(src) {}

  SelectionResult select(const DataView& view) const override {
    std::vector<double> scores = view_test_scores(view, src_, false);
    std::vector<double> costs(view.m());
    for (int j = 0; j < view.m(); ++j) {
      const Unit& u = view.test(j);
      if (!u.cost) throw data_error("unit '" + u.id + "' lacks a cost");
      costs[j] = *u.cost;
    }
    return knapsack_select(scores, costs, budget_, backend_);
  }
  RefStructure ref_structure() const override { return RefStructure::Covariate; }
  std::string name() const override {
    return backend_ == KnapsackBackend::ThresholdGreedy ? "knapsack_greedy" : "knapsack_dp";
  }

 private:
  double budget_;
  KnapsackBackend backend_;
  ScoreSource src_;
};

}  // namespace jomi
