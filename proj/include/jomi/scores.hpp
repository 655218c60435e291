#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "jomi/intervals.hpp"
#include "jomi/unit.hpp"

namespace jomi {

// Nonconformity score families. The residual families admit exact inversion
// of {y : V(x,y) <= t} as one closed interval; the classification families
// enumerate a finite label alphabet instead.
enum class ScoreKind {
  AbsResidual,     // |y - mu|
  ScaledResidual,  // |y - mu| / sigma
  Cqr,             // max(q_lo - y, y - q_hi)
  Binary,          // y (1 - mu) + (1 - y) mu, labels {0,1}
  Aps              // cumulative sorted-probability mass through label y
};

struct ScoreFamily {
  ScoreKind kind = ScoreKind::AbsResidual;
  int n_labels = 2;  // alphabet size for Aps

  bool finite_alphabet() const {
    return kind == ScoreKind::Binary || kind == ScoreKind::Aps;
  }

  std::vector<int> labels() const {
    const int k = kind == ScoreKind::Binary ? 2 : n_labels;
    std::vector<int> out(k);
    std::iota(out.begin(), out.end(), 0);
    return out;
  }

  void validate_unit(const Unit& u) const {
    switch (kind) {
      case ScoreKind::AbsResidual:
        if (!u.point_pred) throw data_error("score family mismatch: unit '" + u.id + "' lacks point_pred");
        break;
      case ScoreKind::ScaledResidual:
        if (!u.point_pred || !u.sigma_hat)
          throw data_error("score family mismatch: unit '" + u.id + "' lacks point_pred/sigma_hat");
        if (*u.sigma_hat <= 0.0) throw data_error("unit '" + u.id + "': sigma_hat must be positive");
        break;
      case ScoreKind::Cqr:
        if (!u.quantile_lo || !u.quantile_hi)
          throw data_error("score family mismatch: unit '" + u.id + "' lacks quantile_lo/quantile_hi");
        break;
      case ScoreKind::Binary:
        if (!u.point_pred) throw data_error("score family mismatch: unit '" + u.id + "' lacks point_pred");
        break;
      case ScoreKind::Aps:
        if (static_cast<int>(u.class_probs.size()) != n_labels)
          throw data_error("score family mismatch: unit '" + u.id + "' lacks class_probs of size " +
                           std::to_string(n_labels));
        validate_class_probs(u);
        break;
    }
  }

  // V(x, y) for a hypothesized outcome y.
  double value(const Unit& u, double y) const {
    switch (kind) {
      case ScoreKind::AbsResidual:
        return std::fabs(y - *u.point_pred);
      case ScoreKind::ScaledResidual:
        return std::fabs(y - *u.point_pred) / *u.sigma_hat;
      case ScoreKind::Cqr:
        return std::max(*u.quantile_lo - y, y - *u.quantile_hi);
      case ScoreKind::Binary: {
        const double mu = *u.point_pred;
        return y * (1.0 - mu) + (1.0 - y) * mu;
      }
      case ScoreKind::Aps:
        return aps_value(u, static_cast<int>(std::lround(y)));
    }
    return 0.0;
  }

  double value_at_truth(const Unit& u) const {
    if (!u.outcome) throw data_error("unit '" + u.id + "' has no outcome to score");
    return value(u, *u.outcome);
  }

  // Exact inversion {y : V(x,y) <= t} (or the strict variant) as an interval
  // set. Only defined for the residual families.
  IntervalSet sublevel(const Unit& u, double t, bool strict = false) const {
    if (std::isinf(t) && t > 0) return IntervalSet::all();
    double lo, hi;
    switch (kind) {
      case ScoreKind::AbsResidual:
        lo = *u.point_pred - t;
        hi = *u.point_pred + t;
        break;
      case ScoreKind::ScaledResidual:
        lo = *u.point_pred - t * *u.sigma_hat;
        hi = *u.point_pred + t * *u.sigma_hat;
        break;
      case ScoreKind::Cqr:
        lo = *u.quantile_lo - t;
        hi = *u.quantile_hi + t;
        break;
      default:
        throw data_error("sublevel inversion undefined for finite-alphabet score families");
    }
    return IntervalSet(Interval{lo, hi, strict, strict});
  }

 private:
  // Deterministic variant: probabilities sorted in decreasing order (label
  // index breaks ties), accumulated through the hypothesized label.
  double aps_value(const Unit& u, int label) const {
    const auto& p = u.class_probs;
    std::vector<int> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return p[a] > p[b]; });
    double cum = 0.0;
    for (int idx : order) {
      cum += p[idx];
      if (idx == label) return cum;
    }
    throw data_error("unit '" + u.id + "': label out of range for APS score");
  }
};

inline std::vector<double> calibration_scores(const std::vector<Unit>& calib,
                                              const ScoreFamily& family) {
  std::vector<double> out;
  out.reserve(calib.size());
  for (const Unit& u : calib) out.push_back(family.value_at_truth(u));
  return out;
}

}  // namespace jomi
