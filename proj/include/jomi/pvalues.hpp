#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "jomi/engine.hpp"
#include "jomi/quantile.hpp"
#include "jomi/selection.hpp"
#include "jomi/taxonomy.hpp"

namespace jomi {

// ---------------------------------------------------------------------------
// Conformal p-values and the two p-value-driven selection rules (fixed
// threshold and BH threshold), each with its exact two-branch reference sets.
// ---------------------------------------------------------------------------

// Selection score S(x, y), nonincreasing in y. The clipped variant drops a
// unit's score below every attainable value as soon as y exceeds the unit's
// own threshold, which makes the p-value dominance bound an equality.
enum class SelScoreKind { MuhatMinusC, Clipped };

inline double selection_score(const Unit& u, double y, SelScoreKind kind, double clip) {
  if (!u.point_pred) throw data_error("unit '" + u.id + "' lacks point_pred for selection score");
  if (!u.threshold_c) throw data_error("unit '" + u.id + "' lacks threshold_c");
  switch (kind) {
    case SelScoreKind::MuhatMinusC:
      return *u.point_pred - y;
    case SelScoreKind::Clipped:
      return *u.point_pred - clip * (y > *u.threshold_c ? 1.0 : 0.0);
  }
  return 0.0;
}

struct PValueInputs {
  std::vector<double> shat_calib;    // S(X_i, c_i)
  std::vector<double> shat_test;     // S(X_{n+j}, c_{n+j})
  std::vector<char> null_calib;      // Y_i <= c_i
  std::vector<double> c_test;        // per-test-unit thresholds
  std::vector<double> s_truth_calib; // S(X_i, Y_i), used by dominance checks

  int n() const { return static_cast<int>(shat_calib.size()); }
  int m() const { return static_cast<int>(shat_test.size()); }

  std::vector<double> pooled() const {
    std::vector<double> t = shat_calib;
    t.insert(t.end(), shat_test.begin(), shat_test.end());
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
  }
};

template <class ViewLike>
inline PValueInputs make_pvalue_inputs(const ViewLike& view, SelScoreKind kind,
                                       double clip = 0.0) {
  PValueInputs in;
  in.shat_calib.resize(view.n());
  in.null_calib.resize(view.n());
  in.s_truth_calib.resize(view.n());
  for (int i = 0; i < view.n(); ++i) {
    const Unit& u = view.calib(i);
    if (!u.threshold_c) throw data_error("unit '" + u.id + "' lacks threshold_c");
    if (!u.outcome) throw data_error("calibration unit '" + u.id + "' lacks outcome");
    in.shat_calib[i] = selection_score(u, *u.threshold_c, kind, clip);
    in.null_calib[i] = *u.outcome <= *u.threshold_c ? 1 : 0;
    in.s_truth_calib[i] = selection_score(u, *u.outcome, kind, clip);
  }
  in.shat_test.resize(view.m());
  in.c_test.resize(view.m());
  for (int j = 0; j < view.m(); ++j) {
    const Unit& u = view.test(j);
    if (!u.threshold_c) throw data_error("unit '" + u.id + "' lacks threshold_c");
    in.shat_test[j] = selection_score(u, *u.threshold_c, kind, clip);
    in.c_test[j] = *u.threshold_c;
  }
  return in;
}

// p_j = (1 + #{i : S^_i >= S^_{n+j}, Y_i <= c_i}) / (n + 1)
inline double conf_pvalue(int j, const PValueInputs& in) {
  int count = 0;
  for (int i = 0; i < in.n(); ++i)
    if (in.null_calib[i] && in.shat_calib[i] >= in.shat_test[j]) ++count;
  return static_cast<double>(1 + count) / static_cast<double>(in.n() + 1);
}

// Smoothed variant: ties get weight u, strict exceedances full weight.
inline double conf_pvalue_randomized(int j, const PValueInputs& in, double u) {
  int strict = 0, equal = 0;
  for (int i = 0; i < in.n(); ++i) {
    if (!in.null_calib[i]) continue;
    if (in.shat_calib[i] > in.shat_test[j]) ++strict;
    else if (in.shat_calib[i] == in.shat_test[j]) ++equal;
  }
  return (u * (1.0 + static_cast<double>(equal)) + static_cast<double>(strict)) /
         static_cast<double>(in.n() + 1);
}

// Comparison p-value against the plain score ranks (no null filtering).
inline double dominating_pvalue(int j, const PValueInputs& in) {
  int count = 0;
  for (int i = 0; i < in.n(); ++i)
    if (in.s_truth_calib[i] >= in.shat_test[j]) ++count;
  return static_cast<double>(1 + count) / static_cast<double>(in.n() + 1);
}

namespace detail {

inline int count_null_geq(const std::vector<double>& sorted_null_shat, double t) {
  return static_cast<int>(sorted_null_shat.end() -
                          std::lower_bound(sorted_null_shat.begin(), sorted_null_shat.end(), t));
}

inline std::vector<double> sorted_null_shat(const PValueInputs& in) {
  std::vector<double> s;
  for (int i = 0; i < in.n(); ++i)
    if (in.null_calib[i]) s.push_back(in.shat_calib[i]);
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace detail

// --------------------------- fixed threshold -------------------------------

// Both the direct p-value comparison and the equivalent threshold form are
// computed; a disagreement signals an implementation bug, not bad data.
inline SelectionResult fixed_select(const PValueInputs& in, double q) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("fixed selection: q must lie in (0,1)");
  SelectionResult r;
  for (int j = 0; j < in.m(); ++j)
    if (conf_pvalue(j, in) <= q + kCountEps) r.selected.push_back(j);

  const double cap = q * static_cast<double>(in.n() + 1) + kCountEps;
  const auto nulls = detail::sorted_null_shat(in);
  double threshold = kInf;
  for (double t : in.pooled()) {
    if (1.0 + detail::count_null_geq(nulls, t) <= cap) {
      threshold = t;
      break;
    }
  }
  r.threshold = threshold;
  std::vector<int> via_threshold;
  for (int j = 0; j < in.m(); ++j)
    if (in.shat_test[j] >= threshold) via_threshold.push_back(j);
  if (via_threshold != r.selected)
    throw std::logic_error("fixed-threshold selection forms disagree");
  return r;
}

// 2x2 table of swap thresholds indexed by (k, l): k = 1 when the hypothesized
// test outcome counts as null, l = 1 when the swapped-out calibration unit
// was non-null. +inf when no pooled value satisfies the count condition.
struct ThresholdTable {
  double t[2][2] = {{kInf, kInf}, {kInf, kInf}};
};

inline ThresholdTable fixed_thresholds(int j, const PValueInputs& in, double q) {
  ThresholdTable table;
  const double cap = q * static_cast<double>(in.n() + 1) + kCountEps;
  const auto nulls = detail::sorted_null_shat(in);
  const auto pooled = in.pooled();
  for (int k = 0; k <= 1; ++k)
    for (int l = 0; l <= 1; ++l)
      for (double t : pooled) {
        const double lhs = l + detail::count_null_geq(nulls, t) +
                           k * (in.shat_test[j] >= t ? 1 : 0);
        if (lhs <= cap) {
          table.t[k][l] = t;
          break;
        }
      }
  return table;
}

namespace detail {

// Swapped selection set {l : S^(i<->j)_{n+l} >= t}; position j carries the
// candidate calibration unit's score.
inline std::vector<int> swapped_threshold_selection(const PValueInputs& in, int j,
                                                    double shat_i, double t) {
  std::vector<int> out;
  for (int l = 0; l < in.m(); ++l) {
    const double s = (l == j) ? shat_i : in.shat_test[l];
    if (s >= t) out.push_back(l);
  }
  return out;
}

inline std::pair<std::vector<int>, std::vector<int>> branch_reference_sets(
    int j, const PValueInputs& in, const ThresholdTable& table, const Taxonomy& taxonomy) {
  std::vector<double> others;  // test scores excluding j, for size-only taxonomies
  if (taxonomy.size_only()) {
    for (int l = 0; l < in.m(); ++l)
      if (l != j) others.push_back(in.shat_test[l]);
    std::sort(others.begin(), others.end());
  }
  std::pair<std::vector<int>, std::vector<int>> out;
  for (int k = 0; k <= 1; ++k) {
    std::vector<int>& refs = k == 0 ? out.first : out.second;
    for (int i = 0; i < in.n(); ++i) {
      const double t = in.null_calib[i] ? table.t[k][0] : table.t[k][1];
      if (!(in.shat_calib[i] >= t)) continue;
      bool admissible;
      if (taxonomy.size_only()) {
        const auto geq = static_cast<int>(
            others.end() - std::lower_bound(others.begin(), others.end(), t));
        admissible = taxonomy.contains_size(geq + 1);  // i itself clears t
      } else {
        admissible =
            taxonomy.contains(swapped_threshold_selection(in, j, in.shat_calib[i], t));
      }
      if (admissible) refs.push_back(i);
    }
  }
  return out;
}

}  // namespace detail

// Reference sets for a selected unit j: .first applies on {y > c_{n+j}},
// .second on {y <= c_{n+j}}.
inline std::pair<std::vector<int>, std::vector<int>> fixed_reference_sets(
    int j, const PValueInputs& in, double q, const Taxonomy& taxonomy) {
  return detail::branch_reference_sets(j, in, fixed_thresholds(j, in, q), taxonomy);
}

// ------------------------------ BH threshold -------------------------------

inline SelectionResult bh_select(const PValueInputs& in, double q) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("BH selection: q must lie in (0,1)");
  const int m = in.m();
  std::vector<double> p(m);
  for (int j = 0; j < m; ++j) p[j] = conf_pvalue(j, in);
  std::vector<double> sorted_p = p;
  std::sort(sorted_p.begin(), sorted_p.end());
  int kstar = 0;
  for (int k = m; k >= 1; --k) {
    if (sorted_p[k - 1] <= static_cast<double>(k) * q / static_cast<double>(m) + kCountEps) {
      kstar = k;
      break;
    }
  }
  SelectionResult r;
  if (kstar > 0) {
    const double cut = static_cast<double>(kstar) * q / static_cast<double>(m);
    for (int j = 0; j < m; ++j)
      if (p[j] <= cut + kCountEps) r.selected.push_back(j);
  }

  // Equivalent stopping-time form over the pooled score values.
  const auto nulls = detail::sorted_null_shat(in);
  std::vector<double> test_sorted = in.shat_test;
  std::sort(test_sorted.begin(), test_sorted.end());
  double threshold = kInf;
  for (double t : in.pooled()) {
    const double num = 1.0 + detail::count_null_geq(nulls, t);
    const auto test_geq = static_cast<double>(
        test_sorted.end() - std::lower_bound(test_sorted.begin(), test_sorted.end(), t));
    const double denom = std::max(test_geq, 1.0);
    if (num * static_cast<double>(m) <=
        q * static_cast<double>(in.n() + 1) * denom + kCountEps) {
      threshold = t;
      break;
    }
  }
  r.threshold = threshold;
  std::vector<int> via_threshold;
  for (int j = 0; j < m; ++j)
    if (in.shat_test[j] >= threshold) via_threshold.push_back(j);
  if (via_threshold != r.selected)
    throw std::logic_error("BH selection forms disagree");
  return r;
}

inline ThresholdTable bh_thresholds(int j, const PValueInputs& in, double q) {
  ThresholdTable table;
  const auto nulls = detail::sorted_null_shat(in);
  const auto pooled = in.pooled();
  const int m = in.m();
  std::vector<double> others;
  for (int l = 0; l < m; ++l)
    if (l != j) others.push_back(in.shat_test[l]);
  std::sort(others.begin(), others.end());
  for (int k = 0; k <= 1; ++k)
    for (int l = 0; l <= 1; ++l)
      for (double t : pooled) {
        const double num = l + detail::count_null_geq(nulls, t) +
                           k * (in.shat_test[j] >= t ? 1 : 0);
        const auto others_geq = static_cast<double>(
            others.end() - std::lower_bound(others.begin(), others.end(), t));
        const double denom = 1.0 + others_geq;
        if (num * static_cast<double>(m) <=
            q * static_cast<double>(in.n() + 1) * denom + kCountEps) {
          table.t[k][l] = t;
          break;
        }
      }
  return table;
}

inline std::pair<std::vector<int>, std::vector<int>> bh_reference_sets(
    int j, const PValueInputs& in, double q, const Taxonomy& taxonomy) {
  return detail::branch_reference_sets(j, in, bh_thresholds(j, in, q), taxonomy);
}

// -------------------------- prediction assembly ----------------------------

// Two-branch set: scores below/above the unit's own threshold c are
// calibrated against the matching reference pool.
inline PredictionSet pvalue_jomi_set(int j, const Dataset& data,
                                     const std::vector<int>& refs_above_c,
                                     const std::vector<int>& refs_below_c,
                                     const ScoreFamily& family, double alpha,
                                     std::optional<double> u = std::nullopt) {
  const Unit& unit = data.test[j];
  if (!unit.threshold_c) throw data_error("unit '" + unit.id + "' lacks threshold_c");
  const double c = *unit.threshold_c;
  const auto v_above = scores_at(data.calib, refs_above_c, family);
  const auto v_below = scores_at(data.calib, refs_below_c, family);
  if (family.finite_alphabet()) {
    std::vector<int> kept;
    for (int label : family.labels()) {
      const auto& pool = (static_cast<double>(label) <= c) ? v_below : v_above;
      const double v = family.value(unit, label);
      const bool member = u ? randomized_membership(v, pool, *u, alpha)
                            : v <= conformal_quantile(1.0 - alpha, pool, true);
      if (member) kept.push_back(label);
    }
    return PredictionSet::from_labels(std::move(kept));
  }
  if (u)
    return jomi_set_piecewise_randomized(unit, {c}, {v_below, v_above}, family, alpha, *u);
  return jomi_set_piecewise(unit, {c}, {v_below, v_above}, family, alpha);
}

// ------------------------------ rule objects -------------------------------

class FixedPValueRule final : public SelectionRule {
 public:
  FixedPValueRule(double q, SelScoreKind kind = SelScoreKind::MuhatMinusC, double clip = 0.0)
      : q_(q), kind_(kind), clip_(clip) {}

  SelectionResult select(const DataView& view) const override {
    return fixed_select(make_pvalue_inputs(view, kind_, clip_), q_);
  }
  RefStructure ref_structure() const override { return RefStructure::TwoBranch; }
  std::string name() const override { return "fixed_pvalue"; }

  std::pair<std::vector<int>, std::vector<int>> reference_pair(int j, const Dataset& data,
                                                               const Taxonomy& tax) const {
    IdentityView v(data);
    return fixed_reference_sets(j, make_pvalue_inputs(v, kind_, clip_), q_, tax);
  }

  std::optional<std::pair<std::vector<int>, std::vector<int>>> branch_references(
      int j, const Dataset& data, const Taxonomy& tax) const override {
    return reference_pair(j, data, tax);
  }

  double q() const { return q_; }
  SelScoreKind score_kind() const { return kind_; }
  double clip() const { return clip_; }

 private:
  double q_;
  SelScoreKind kind_;
  double clip_;
};

class BHPValueRule final : public SelectionRule {
 public:
  BHPValueRule(double q, SelScoreKind kind = SelScoreKind::MuhatMinusC, double clip = 0.0)
      : q_(q), kind_(kind), clip_(clip) {}

  SelectionResult select(const DataView& view) const override {
    return bh_select(make_pvalue_inputs(view, kind_, clip_), q_);
  }
  RefStructure ref_structure() const override { return RefStructure::TwoBranch; }
  std::string name() const override { return "bh_pvalue"; }

  std::pair<std::vector<int>, std::vector<int>> reference_pair(int j, const Dataset& data,
                                                               const Taxonomy& tax) const {
    IdentityView v(data);
    return bh_reference_sets(j, make_pvalue_inputs(v, kind_, clip_), q_, tax);
  }

  std::optional<std::pair<std::vector<int>, std::vector<int>>> branch_references(
      int j, const Dataset& data, const Taxonomy& tax) const override {
    return reference_pair(j, data, tax);
  }

  double q() const { return q_; }
  SelScoreKind score_kind() const { return kind_; }
  double clip() const { return clip_; }

 private:
  double q_;
  SelScoreKind kind_;
  double clip_;
};

}  // namespace jomi
