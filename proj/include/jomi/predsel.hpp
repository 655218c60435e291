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
// Selection driven by properties of a preliminary (first-stage) conformal
// prediction set, and the conservative two-quantile recalibrated set.
// ---------------------------------------------------------------------------

// Order statistics anchoring the first-stage set: eta is the K-th smallest
// first-stage calibration score with K = ceil((1-beta)(n+1)); its neighbours
// fall back to -inf/+inf at the edges.
struct PrelimCalibration {
  double eta = 0.0;
  double eta_minus = -kInf;
  double eta_plus = kInf;
  int k = 0;
  std::vector<double> first_stage_scores;  // sorted
};

inline PrelimCalibration prelim_calibrate(std::vector<double> first_stage_scores, double beta) {
  const int n = static_cast<int>(first_stage_scores.size());
  auto k = static_cast<int>(
      std::ceil((1.0 - beta) * static_cast<double>(n + 1) - kCountEps));
  if (k < 1) k = 1;
  if (k > n) throw data_error("beta too small for calibration size");
  std::sort(first_stage_scores.begin(), first_stage_scores.end());
  PrelimCalibration cal;
  cal.k = k;
  cal.eta = first_stage_scores[k - 1];
  cal.eta_minus = k >= 2 ? first_stage_scores[k - 2] : -kInf;
  cal.eta_plus = k + 1 <= n ? first_stage_scores[k] : kInf;
  cal.first_stage_scores = std::move(first_stage_scores);
  return cal;
}

// A selection criterion evaluated on (unit covariates, eta). The unit enters
// only through the fields of the first-stage score family, so the criterion
// can be re-evaluated at shifted eta values during swaps.
struct PrelimRule {
  enum class Kind { LengthLe, UpperLe, LowerGe, Singleton };
  Kind kind = Kind::LengthLe;
  double param = 0.0;
  ScoreFamily first_stage;

  bool eval(const Unit& u, double eta) const {
    switch (kind) {
      case Kind::LengthLe: {
        if (first_stage.finite_alphabet())
          throw data_error("length-based selection needs an interval score family");
        const IntervalSet set = first_stage.sublevel(u, eta);
        return set.length() <= param;
      }
      case Kind::UpperLe: {
        const IntervalSet set = first_stage.sublevel(u, eta);
        const double upper = set.empty() ? -kInf : set.parts().back().hi;
        return upper <= param;
      }
      case Kind::LowerGe: {
        const IntervalSet set = first_stage.sublevel(u, eta);
        const double lower = set.empty() ? kInf : set.parts().front().lo;
        return lower >= param;
      }
      case Kind::Singleton: {
        const double s1 = first_stage.value(u, 1.0);
        const double s0 = first_stage.value(u, 0.0);
        return (s1 <= eta && eta < s0) || (s0 <= eta && eta < s1);
      }
    }
    return false;
  }
};

inline SelectionResult ps_select(const std::vector<Unit>& test, const PrelimRule& rule,
                                 const PrelimCalibration& cal) {
  SelectionResult r;
  for (int j = 0; j < static_cast<int>(test.size()); ++j)
    if (rule.eval(test[j], cal.eta)) r.selected.push_back(j);
  return r;
}

struct PsQuantiles {
  double q1 = kInf;  // calibrates scores strictly below the eta band
  double q2 = kInf;  // calibrates scores strictly above the eta band
  int boundary_ties = 0;
};

namespace detail {

// Selection set after swapping calibration unit i into test slot j, with the
// criterion evaluated at a shifted eta value.
inline std::vector<int> ps_swapped_selection(const Dataset& data, const PrelimRule& rule,
                                             int j, int i, double eta_value,
                                             const std::vector<char>& base_bits) {
  std::vector<int> out;
  for (int l = 0; l < data.m(); ++l) {
    const bool in_set =
        (l == j) ? rule.eval(data.calib[i], eta_value) : static_cast<bool>(base_bits[l]);
    if (in_set) out.push_back(l);
  }
  return out;
}

}  // namespace detail

// The two conservative quantiles. Each pools calibration scores whose unit
// would still be selected after the swap, under the worst-case eta shift for
// its side of the band, and checks the swapped selection against the
// taxonomy. Both pools are +inf-augmented.
inline PsQuantiles ps_quantiles(int j, const PrelimRule& rule, const PrelimCalibration& cal,
                                const ScoreFamily& second_stage, const Taxonomy& taxonomy,
                                double alpha, const Dataset& data) {
  const int n = data.n();
  std::vector<double> first_scores(n), second_scores(n);
  for (int i = 0; i < n; ++i) {
    first_scores[i] = rule.first_stage.value_at_truth(data.calib[i]);
    second_scores[i] = second_stage.value_at_truth(data.calib[i]);
  }

  const double etas[3] = {cal.eta_minus, cal.eta, cal.eta_plus};
  std::vector<char> base_bits[3];
  for (int e = 0; e < 3; ++e) {
    base_bits[e].resize(data.m());
    for (int l = 0; l < data.m(); ++l)
      base_bits[e][l] = rule.eval(data.test[l], etas[e]) ? 1 : 0;
  }
  auto passes = [&](int i, int e) {
    if (!rule.eval(data.calib[i], etas[e])) return false;
    return taxonomy.contains(
        detail::ps_swapped_selection(data, rule, j, i, etas[e], base_bits[e]));
  };

  PsQuantiles out;
  std::vector<double> pool1, pool2;
  for (int i = 0; i < n; ++i) {
    const double s = first_scores[i];
    if (s <= cal.eta_minus ? passes(i, 1) : passes(i, 0)) pool1.push_back(second_scores[i]);
    if (s <= cal.eta ? passes(i, 2) : passes(i, 1)) pool2.push_back(second_scores[i]);
    if (s == cal.eta || s == cal.eta_minus || s == cal.eta_plus) ++out.boundary_ties;
  }
  out.q1 = conformal_quantile(1.0 - alpha, pool1, true);
  out.q2 = conformal_quantile(1.0 - alpha, pool2, true);
  return out;
}

// Conservative recalibrated set: the closed eta band plus the two filtered
// sublevel pieces strictly outside it, merged into maximal segments.
inline PredictionSet ps_set(int j, const PsQuantiles& q, const PrelimCalibration& cal,
                            const ScoreFamily& first_stage, const ScoreFamily& second_stage,
                            const Dataset& data) {
  const Unit& unit = data.test[j];
  first_stage.validate_unit(unit);
  second_stage.validate_unit(unit);
  const IntervalSet upto_eta_plus = first_stage.sublevel(unit, cal.eta_plus);
  const IntervalSet below_eta_minus = first_stage.sublevel(unit, cal.eta_minus, /*strict=*/true);
  const IntervalSet band = upto_eta_plus.subtract(below_eta_minus);
  const IntervalSet low =
      second_stage.sublevel(unit, q.q1).intersect(below_eta_minus);
  const IntervalSet high =
      second_stage.sublevel(unit, q.q2).intersect(upto_eta_plus.complement());
  return PredictionSet::from_intervals(band.unite(low).unite(high));
}

// The same selection expressed as a full rule over (calibration, test) data,
// for the generic swap engine and brute-force oracles.
class PrelimSetRule final : public SelectionRule {
 public:
  PrelimSetRule(PrelimRule rule, double beta) : rule_(std::move(rule)), beta_(beta) {}

  SelectionResult select(const DataView& view) const override {
    std::vector<double> s(view.n());
    for (int i = 0; i < view.n(); ++i)
      s[i] = rule_.first_stage.value_at_truth(view.calib(i));
    const PrelimCalibration cal = prelim_calibrate(std::move(s), beta_);
    SelectionResult r;
    for (int l = 0; l < view.m(); ++l)
      if (rule_.eval(view.test(l), cal.eta)) r.selected.push_back(l);
    r.threshold = cal.eta;
    return r;
  }
  RefStructure ref_structure() const override { return RefStructure::General; }
  std::string name() const override { return "prelim_set"; }

  const PrelimRule& rule() const { return rule_; }
  double beta() const { return beta_; }

 private:
  PrelimRule rule_;
  double beta_;
};

}  // namespace jomi
