#pragma once

#include <cmath>
#include <string>

#include "jomi/rng.hpp"
#include "jomi/unit.hpp"

namespace jomi {

// Synthetic data generating processes. Calibration and test units are drawn
// i.i.d. from the same law, so the exchangeability needed by every coverage
// guarantee holds by construction. Fitted-model outputs (point prediction,
// scale, conditional quantiles) are fixed known functions of the latent
// covariate, standing in for a pretrained model.
enum class DgpKind { HomoscedasticReg, HeteroscedasticReg, LogisticBinary };

enum class CostKind { None, DppCost, DtiCost };

struct DgpParams {
  DgpKind kind = DgpKind::HeteroscedasticReg;
  int dimension = 1;
  double noise_scale = 1.0;
  CostKind cost = CostKind::None;
  double cost_mu_bar = 3.0;  // normalizer for the DTI-style cost formula
};

namespace detail {

// 80% central-interval z value, used for the synthetic conditional quantiles.
inline constexpr double kZ80 = 1.2815515655446004;

inline double draw_cost(double mu, const DgpParams& p, Rng& rng, int* floored) {
  switch (p.cost) {
    case CostKind::None:
      return 0.0;
    case CostKind::DppCost:
      return std::exp(3.0 * mu) + 2.0 * std::fabs(std::sin(mu)) + rng.exponential();
    case CostKind::DtiCost: {
      const double raw = std::exp(3.0 * mu / p.cost_mu_bar) + std::fabs(std::sin(mu)) +
                         rng.exponential() - 1.0 + rng.u01();
      if (raw < 0.0) {
        if (floored) ++(*floored);
        return 0.0;
      }
      return raw;
    }
  }
  return 0.0;
}

inline Unit draw_unit(const DgpParams& p, Rng& rng, int* floored) {
  Unit u;
  double x = 0.0;
  for (int d = 0; d < p.dimension; ++d) x += rng.normal();
  x /= std::sqrt(static_cast<double>(p.dimension));

  if (p.kind == DgpKind::LogisticBinary) {
    const double prob = 1.0 / (1.0 + std::exp(-2.0 * x));
    u.outcome = rng.u01() < prob ? 1.0 : 0.0;
    u.point_pred = prob;
    u.class_probs = {1.0 - prob, prob};
    u.sel_score = prob;
    u.threshold_c = 0.5;
    if (p.cost != CostKind::None) u.cost = draw_cost(prob, p, rng, floored);
    return u;
  }

  const double scale =
      p.kind == DgpKind::HomoscedasticReg ? p.noise_scale : (1.0 + std::fabs(x)) * p.noise_scale;
  u.outcome = x + scale * rng.normal();
  u.point_pred = x;
  u.sigma_hat = scale;
  u.quantile_lo = x - kZ80 * scale;
  u.quantile_hi = x + kZ80 * scale;
  u.sel_score = x;
  u.threshold_c = rng.normal();
  if (p.cost != CostKind::None) u.cost = draw_cost(x, p, rng, floored);
  return u;
}

}  // namespace detail

// Draws n calibration and m test units from one exchangeable stream.
// `cost_floor_count`, when given, accumulates how often the DTI cost formula
// had to be clamped at zero.
inline Dataset generate_dataset(const DgpParams& params, int n, int m, Rng rng,
                                int* cost_floor_count = nullptr) {
  Dataset data;
  data.calib.reserve(n);
  data.test.reserve(m);
  for (int i = 0; i < n; ++i) {
    Unit u = detail::draw_unit(params, rng, cost_floor_count);
    u.id = "c" + std::to_string(i);
    data.calib.push_back(std::move(u));
  }
  for (int j = 0; j < m; ++j) {
    Unit u = detail::draw_unit(params, rng, cost_floor_count);
    u.id = "t" + std::to_string(j);
    data.test.push_back(std::move(u));
  }
  return data;
}

}  // namespace jomi
