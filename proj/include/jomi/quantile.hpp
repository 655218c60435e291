#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "jomi/intervals.hpp"
#include "jomi/scores.hpp"
#include "jomi/unit.hpp"

namespace jomi {

// Tolerance used wherever a real-valued count threshold like level*N is
// compared against an integer count, so that exactly-representable products
// are not pushed over a ceiling by rounding noise.
inline constexpr double kCountEps = 1e-9;

// Empirical quantile convention used throughout: the ceil(level * N)-th
// smallest element of the (optionally +inf-augmented) score multiset.
// Returns +inf when the index lands on the augmented element.
inline double conformal_quantile(double level, std::span<const double> scores,
                                 bool augment_with_infinity) {
  const std::size_t base = scores.size();
  const std::size_t total = base + (augment_with_infinity ? 1 : 0);
  if (total == 0) throw std::invalid_argument("empty score pool");
  auto k = static_cast<std::size_t>(
      std::ceil(level * static_cast<double>(total) - kCountEps));
  if (k < 1) k = 1;
  if (k > total) k = total;
  if (k > base) return kInf;
  std::vector<double> sorted(scores.begin(), scores.end());
  std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end());
  return sorted[k - 1];
}

inline double conformal_quantile(double level, const std::vector<double>& scores,
                                 bool augment_with_infinity) {
  return conformal_quantile(level, std::span<const double>(scores), augment_with_infinity);
}

// Randomized rank test: with a single uniform draw u per test unit, y is kept
// when (#{V_i < v} + u (1 + #{V_i = v})) / (1 + |R|) <= 1 - alpha. With u = 1
// and no ties this is strictly inside the deterministic quantile rule; its
// acceptance probability at an exchangeable v is exactly 1 - alpha.
inline bool randomized_membership(double v, std::span<const double> ref_scores,
                                  double u, double alpha) {
  std::size_t below = 0, equal = 0;
  for (double s : ref_scores) {
    if (s < v) ++below;
    else if (s == v) ++equal;
  }
  const double stat = static_cast<double>(below) + u * (1.0 + static_cast<double>(equal));
  return stat <= (1.0 - alpha) * (1.0 + static_cast<double>(ref_scores.size())) + kCountEps;
}

inline bool randomized_membership(double v, const std::vector<double>& ref,
                                  double u, double alpha) {
  return randomized_membership(v, std::span<const double>(ref), u, alpha);
}

// Score-space inversion of the randomized rule: the kept region
// {v : #{V_i < v} + u (1 + #{V_i = v}) <= (1-alpha)(1+|R|)} is a lower set in
// v whose supremum sits at a reference score, either inclusively or not.
struct ScoreThreshold {
  enum class Kind { Empty, Full, Value } kind = Kind::Full;
  double value = kInf;
  bool strict = false;  // kept region is {v < value} rather than {v <= value}

  static ScoreThreshold empty() { return {Kind::Empty, -kInf, false}; }
  static ScoreThreshold full() { return {Kind::Full, kInf, false}; }
  static ScoreThreshold at(double v, bool strict) { return {Kind::Value, v, strict}; }
};

inline ScoreThreshold randomized_score_threshold(std::vector<double> refs, double u,
                                                 double alpha) {
  const double cap =
      (1.0 - alpha) * (1.0 + static_cast<double>(refs.size())) + kCountEps;
  std::sort(refs.begin(), refs.end());
  const std::size_t r = refs.size();
  if (static_cast<double>(r) + u <= cap) return ScoreThreshold::full();

  // Walk distinct reference values from the top; for each, check membership
  // at the value itself and in the open gap just below it.
  std::size_t hi = r;
  while (hi > 0) {
    std::size_t lo = hi;
    while (lo > 0 && refs[lo - 1] == refs[hi - 1]) --lo;
    const double below = static_cast<double>(lo);
    const double ties = static_cast<double>(hi - lo);
    if (below + u * (1.0 + ties) <= cap)
      return ScoreThreshold::at(refs[hi - 1], /*strict=*/false);
    if (below + u <= cap)
      return ScoreThreshold::at(refs[hi - 1], /*strict=*/true);
    hi = lo;
  }
  return ScoreThreshold::empty();
}

// Plain split conformal prediction set at level alpha.
inline PredictionSet scp_set(const Unit& unit, const std::vector<double>& calib_scores,
                             const ScoreFamily& family, double alpha) {
  family.validate_unit(unit);
  const double threshold = conformal_quantile(1.0 - alpha, calib_scores, true);
  if (family.finite_alphabet()) {
    std::vector<int> kept;
    for (int label : family.labels())
      if (family.value(unit, label) <= threshold) kept.push_back(label);
    return PredictionSet::from_labels(std::move(kept));
  }
  return PredictionSet::from_intervals(family.sublevel(unit, threshold));
}

}  // namespace jomi
