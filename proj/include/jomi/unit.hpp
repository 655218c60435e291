#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace jomi {

// One calibration or test record. Only model outputs are stored; raw
// features never enter the pipeline. All fields except `id` are optional
// because different score families and selection rules demand different
// subsets; presence is validated once at load time against the configured
// families (see validate_for_family / validate_for_rule).
struct Unit {
  std::string id;
  std::optional<double> outcome;      // Y, real or a 0/1 class label
  std::optional<double> point_pred;   // fitted regression value
  std::optional<double> sigma_hat;    // fitted conditional scale
  std::optional<double> quantile_lo;  // fitted lower conditional quantile
  std::optional<double> quantile_hi;  // fitted upper conditional quantile
  std::vector<double> class_probs;    // class probabilities; empty = absent
  std::optional<double> threshold_c;  // per-unit selection threshold
  std::optional<double> cost;         // per-unit cost for budgeted selection
  std::optional<double> sel_score;    // precomputed covariate selection score
};

struct Dataset {
  std::vector<Unit> calib;
  std::vector<Unit> test;

  int n() const { return static_cast<int>(calib.size()); }
  int m() const { return static_cast<int>(test.size()); }
};

class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void validate_class_probs(const Unit& u) {
  if (u.class_probs.empty()) return;
  double sum = 0.0;
  for (double p : u.class_probs) {
    if (p < 0.0) throw data_error("unit '" + u.id + "': negative class probability");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw data_error("unit '" + u.id + "': class probabilities sum to " +
                     std::to_string(sum) + ", expected 1");
}

// Confidence levels: alpha for the selective set, beta for an optional
// first-stage (preliminary) set.
struct ConfidenceLevel {
  double alpha = 0.1;
  std::optional<double> beta;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw data_error("alpha must lie in (0,1)");
    if (beta && !(*beta > 0.0 && *beta < 1.0)) throw data_error("beta must lie in (0,1)");
  }
};

}  // namespace jomi
