#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "jomi/quantile.hpp"
#include "jomi/selection.hpp"
#include "jomi/taxonomy.hpp"
#include "jomi/view.hpp"

namespace jomi {

// ---------------------------------------------------------------------------
// Generic engine: reference sets by the swap construction, and assembly of
// deterministic / randomized prediction sets from per-piece reference pools.
// ---------------------------------------------------------------------------

// Calibration indices i whose swap with test unit j (carrying outcome y when
// the rule needs one) keeps j selected and keeps the swapped selection inside
// the taxonomy. Costs n evaluations of the rule.
inline std::vector<int> reference_set_generic(int j, std::optional<double> hypothesized_y,
                                              const SelectionRule& rule,
                                              const Taxonomy& taxonomy,
                                              const Dataset& data) {
  std::vector<int> out;
  for (int i = 0; i < data.n(); ++i) {
    SwapView view(data, i, j, hypothesized_y);
    SelectionResult sel;
    try {
      sel = rule.select(view);
    } catch (const std::exception& e) {
      throw std::runtime_error("selection rule '" + rule.name() + "' failed on swap (i=" +
                               std::to_string(i) + ", j=" + std::to_string(j) +
                               "): " + e.what());
    }
    if (sel.contains(j) && taxonomy.contains(sel.selected)) out.push_back(i);
  }
  return out;
}

inline std::vector<double> scores_at(const std::vector<Unit>& calib,
                                     const std::vector<int>& indices,
                                     const ScoreFamily& family) {
  std::vector<double> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(family.value_at_truth(calib[i]));
  return out;
}

// Finite-alphabet path: each hypothesized label gets its own reference set.
// Passing `u` switches membership to the randomized rank test with that
// single uniform draw shared across labels.
inline PredictionSet jomi_set_finite(int j, const SelectionRule& rule, const Taxonomy& taxonomy,
                                     const ScoreFamily& family, double alpha,
                                     const Dataset& data,
                                     std::optional<double> u = std::nullopt) {
  const Unit& unit = data.test[j];
  family.validate_unit(unit);
  std::vector<int> kept;
  for (int label : family.labels()) {
    const auto refs = reference_set_generic(j, label, rule, taxonomy, data);
    const auto ref_scores = scores_at(data.calib, refs, family);
    const double v = family.value(unit, label);
    bool member;
    if (u) {
      member = randomized_membership(v, ref_scores, *u, alpha);
    } else {
      member = v <= conformal_quantile(1.0 - alpha, ref_scores, true);
    }
    if (member) kept.push_back(label);
  }
  return PredictionSet::from_labels(std::move(kept));
}

namespace detail {

inline void check_partition(const std::vector<double>& breakpoints) {
  for (std::size_t k = 1; k < breakpoints.size(); ++k)
    if (!(breakpoints[k - 1] < breakpoints[k]))
      throw std::invalid_argument("invalid partition");
}

// Piece k of a partition by `breakpoints`: inclusive below, strict above,
// i.e. (-inf, b0], (b0, b1], ..., (b_last, +inf).
inline Interval piece_interval(const std::vector<double>& breakpoints, std::size_t k) {
  const double lo = k == 0 ? -kInf : breakpoints[k - 1];
  const double hi = k == breakpoints.size() ? kInf : breakpoints[k];
  return Interval{lo, hi, true, k == breakpoints.size()};
}

}  // namespace detail

// Assembles a deterministic prediction set whose reference pool is constant
// on each piece of the outcome axis. Adjacent pieces whose kept regions meet
// at a breakpoint merge into one maximal segment.
inline PredictionSet jomi_set_piecewise(const Unit& unit,
                                        const std::vector<double>& breakpoints,
                                        const std::vector<std::vector<double>>& piece_ref_scores,
                                        const ScoreFamily& family, double alpha) {
  detail::check_partition(breakpoints);
  if (piece_ref_scores.size() != breakpoints.size() + 1)
    throw std::invalid_argument("invalid partition");
  family.validate_unit(unit);
  IntervalSet result;
  for (std::size_t k = 0; k < piece_ref_scores.size(); ++k) {
    const double qhat = conformal_quantile(1.0 - alpha, piece_ref_scores[k], true);
    const IntervalSet kept = family.sublevel(unit, qhat);
    result = result.unite(kept.intersect(IntervalSet(detail::piece_interval(breakpoints, k))));
  }
  return PredictionSet::from_intervals(std::move(result));
}

// Randomized counterpart: the rank test is inverted exactly to a score
// threshold (possibly strict) per piece, then mapped back through the score
// family. One uniform draw u serves every piece and every y.
inline PredictionSet jomi_set_piecewise_randomized(
    const Unit& unit, const std::vector<double>& breakpoints,
    const std::vector<std::vector<double>>& piece_ref_scores, const ScoreFamily& family,
    double alpha, double u) {
  detail::check_partition(breakpoints);
  if (piece_ref_scores.size() != breakpoints.size() + 1)
    throw std::invalid_argument("invalid partition");
  family.validate_unit(unit);
  IntervalSet result;
  for (std::size_t k = 0; k < piece_ref_scores.size(); ++k) {
    const IntervalSet piece(detail::piece_interval(breakpoints, k));
    const ScoreThreshold thr =
        randomized_score_threshold(piece_ref_scores[k], u, alpha);
    IntervalSet kept;
    switch (thr.kind) {
      case ScoreThreshold::Kind::Empty:
        continue;
      case ScoreThreshold::Kind::Full:
        kept = IntervalSet::all();
        break;
      case ScoreThreshold::Kind::Value:
        kept = family.sublevel(unit, thr.value, thr.strict);
        break;
    }
    result = result.unite(kept.intersect(piece));
  }
  return PredictionSet::from_intervals(std::move(result));
}

// Single-pool convenience used by covariate rules (no breakpoints).
inline PredictionSet jomi_set_single(const Unit& unit, const std::vector<double>& ref_scores,
                                     const ScoreFamily& family, double alpha,
                                     std::optional<double> u = std::nullopt) {
  if (family.finite_alphabet()) {
    std::vector<int> kept;
    const double qhat =
        u ? 0.0 : conformal_quantile(1.0 - alpha, ref_scores, true);
    for (int label : family.labels()) {
      const double v = family.value(unit, label);
      const bool member = u ? randomized_membership(v, ref_scores, *u, alpha) : v <= qhat;
      if (member) kept.push_back(label);
    }
    return PredictionSet::from_labels(std::move(kept));
  }
  if (u)
    return jomi_set_piecewise_randomized(unit, {}, {ref_scores}, family, alpha, *u);
  return jomi_set_piecewise(unit, {}, {ref_scores}, family, alpha);
}

}  // namespace jomi
