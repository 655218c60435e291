#pragma once

#include <atomic>
#include <cmath>
#include <exception>
#include <memory>
#include <mutex>
#include <string>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <thread>
#include <vector>

#include "jomi/dgp.hpp"
#include "jomi/engine.hpp"
#include "jomi/io.hpp"
#include "jomi/predsel.hpp"
#include "jomi/pvalues.hpp"
#include "jomi/rules.hpp"

namespace jomi {

// ---------------------------------------------------------------------------
// Monte Carlo experiment runner, evaluation estimators and brute-force
// oracles. Trials are independent, reproducible from (master seed, trial
// index, role) and safe to execute on any number of threads.
// ---------------------------------------------------------------------------

enum class Method { Vanilla, Jomi, JomiRand, Ps };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::Vanilla: return "vanilla";
    case Method::Jomi: return "jomi";
    case Method::JomiRand: return "jomi_rand";
    case Method::Ps: return "ps";
  }
  return "?";
}

// Conditioning family for the run: the trivial taxonomy, or one set-size
// taxonomy per realized selection size (which tiles the power set).
enum class TaxonomyMode { All, FixedRealized };

struct UnitRecord {
  int j = 0;
  bool covered = false;
  double set_size = 0.0;
  int segments = 0;
  int ref_size = -1;  // |reference| at the true outcome; -1 when not applicable
  double outcome = 0.0;
  std::string set_text;  // serialized prediction set; covered is recomputable
  std::optional<double> pvalue;
};

struct TrialRecord {
  int trial = 0;
  int selected_count = 0;
  std::vector<UnitRecord> units;
};

namespace rng_role {
inline constexpr std::uint64_t kData = 0x01;
inline constexpr std::uint64_t kUniform = 0x02;
}  // namespace rng_role

struct ExperimentConfig {
  DgpParams dgp;
  int n = 200;
  int m = 100;
  int trials = 100;
  double alpha = 0.1;
  Method method = Method::Jomi;
  ScoreFamily family;
  TaxonomyMode taxonomy = TaxonomyMode::All;
  std::uint64_t master_seed = 1;
  int threads = 1;
  // Preliminary-set stage, required when method == Ps or the rule is a
  // PrelimSetRule.
  std::optional<double> beta;

  void validate(const SelectionRule& rule) const {
    if (n < 1 || m < 1) throw data_error("n and m must be positive");
    if (trials < 0) throw data_error("trial count must be nonnegative");
    if (!(alpha > 0.0 && alpha < 1.0)) throw data_error("alpha must lie in (0,1)");
    if (method == Method::Ps && dynamic_cast<const PrelimSetRule*>(&rule) == nullptr)
      throw data_error("method 'ps' requires a preliminary-set selection rule");
    if (auto* topk = dynamic_cast<const TopKRule*>(&rule); topk && topk->k() > m)
      throw data_error("top-K: K exceeds the number of test units");
  }
};

// Prediction for one selected unit, bundled with the reference bookkeeping
// the estimators need.
struct JomiPrediction {
  PredictionSet set;
  int ref_size_at_truth = -1;
  std::optional<double> pvalue;
};

namespace detail {

inline int ref_size_for_truth(const Unit& unit, const std::vector<int>& above,
                              const std::vector<int>& below) {
  if (!unit.outcome || !unit.threshold_c) return -1;
  return *unit.outcome > *unit.threshold_c ? static_cast<int>(above.size())
                                           : static_cast<int>(below.size());
}

}  // namespace detail

// Builds the prediction set for one selected test unit, following the rule's
// reference structure: a shared covariate reference, the two-branch
// thresholds, or the generic per-label swap loop.
inline JomiPrediction jomi_predict(int j, const SelectionRule& rule, const Taxonomy& taxonomy,
                                   const ScoreFamily& family, double alpha, const Dataset& data,
                                   std::optional<double> u,
                                   const std::vector<int>* shared_covariate_refs = nullptr) {
  JomiPrediction out;
  switch (rule.ref_structure()) {
    case RefStructure::Covariate: {
      std::vector<int> refs;
      if (shared_covariate_refs) {
        refs = *shared_covariate_refs;
      } else if (auto fast = rule.covariate_reference(data, taxonomy)) {
        refs = std::move(*fast);
      } else {
        refs = reference_set_generic(j, std::nullopt, rule, taxonomy, data);
      }
      out.ref_size_at_truth = static_cast<int>(refs.size());
      out.set = jomi_set_single(data.test[j], scores_at(data.calib, refs, family), family,
                                alpha, u);
      return out;
    }
    case RefStructure::TwoBranch: {
      auto pair = rule.branch_references(j, data, taxonomy);
      if (!pair) throw data_error("rule '" + rule.name() + "' lacks branch references");
      out.ref_size_at_truth = detail::ref_size_for_truth(data.test[j], pair->first, pair->second);
      out.set = pvalue_jomi_set(j, data, pair->first, pair->second, family, alpha, u);
      return out;
    }
    case RefStructure::General: {
      if (!family.finite_alphabet())
        throw data_error("generic selection rules need a finite label alphabet; "
                         "use the conservative preliminary-set path for intervals");
      out.set = jomi_set_finite(j, rule, taxonomy, family, alpha, data, u);
      const auto refs = reference_set_generic(
          j, data.test[j].outcome, rule, taxonomy, data);
      out.ref_size_at_truth = static_cast<int>(refs.size());
      return out;
    }
  }
  throw std::logic_error("unreachable");
}

inline TrialRecord run_single_trial(int trial, const ExperimentConfig& cfg,
                                    const SelectionRule& rule) {
  Rng trial_rng = Rng(cfg.master_seed).fork(trial);
  const Dataset data =
      generate_dataset(cfg.dgp, cfg.n, cfg.m, trial_rng.fork(rng_role::kData));

  TrialRecord rec;
  rec.trial = trial;

  IdentityView view(data);
  const SelectionResult sel = rule.select(view);
  rec.selected_count = static_cast<int>(sel.selected.size());
  const Taxonomy taxonomy = cfg.taxonomy == TaxonomyMode::All
                                ? Taxonomy::all()
                                : Taxonomy::fixed_size(rec.selected_count);
  if (!taxonomy.contains(sel.selected)) return rec;

  // Shared per-trial work.
  std::vector<double> vanilla_scores;
  std::optional<std::vector<int>> shared_refs;
  if (cfg.method == Method::Vanilla) {
    vanilla_scores = calibration_scores(data.calib, cfg.family);
  } else if (cfg.method != Method::Ps && rule.ref_structure() == RefStructure::Covariate) {
    if (auto fast = rule.covariate_reference(data, taxonomy)) shared_refs = std::move(*fast);
  }

  std::optional<PrelimCalibration> prelim_cal;
  const PrelimSetRule* prelim_rule = dynamic_cast<const PrelimSetRule*>(&rule);
  if (cfg.method == Method::Ps) {
    std::vector<double> s(data.n());
    for (int i = 0; i < data.n(); ++i)
      s[i] = prelim_rule->rule().first_stage.value_at_truth(data.calib[i]);
    prelim_cal = prelim_calibrate(std::move(s), prelim_rule->beta());
  }

  Rng u_rng = trial_rng.fork(rng_role::kUniform);
  for (int j : sel.selected) {
    UnitRecord ur;
    ur.j = j;
    const Unit& unit = data.test[j];
    PredictionSet set;
    switch (cfg.method) {
      case Method::Vanilla: {
        set = scp_set(unit, vanilla_scores, cfg.family, cfg.alpha);
        ur.ref_size = data.n();
        break;
      }
      case Method::Jomi:
      case Method::JomiRand: {
        std::optional<double> u;
        if (cfg.method == Method::JomiRand) u = u_rng.fork(j).u01();
        auto pred = jomi_predict(j, rule, taxonomy, cfg.family, cfg.alpha, data, u,
                                 shared_refs ? &*shared_refs : nullptr);
        set = std::move(pred.set);
        ur.ref_size = pred.ref_size_at_truth;
        break;
      }
      case Method::Ps: {
        const auto q = ps_quantiles(j, prelim_rule->rule(), *prelim_cal, cfg.family,
                                    taxonomy, cfg.alpha, data);
        set = ps_set(j, q, *prelim_cal, prelim_rule->rule().first_stage, cfg.family, data);
        break;
      }
    }
    if (!unit.outcome) throw data_error("test unit '" + unit.id + "' lacks an outcome to score");
    ur.covered = set.covers(*unit.outcome);
    ur.set_size = set.size_measure();
    ur.segments = static_cast<int>(set.segments());
    ur.outcome = *unit.outcome;
    ur.set_text = serialize_prediction_set(set);
    rec.units.push_back(std::move(ur));
  }
  return rec;
}

inline std::vector<TrialRecord> run_trials(const ExperimentConfig& cfg,
                                           const SelectionRule& rule) {
  cfg.validate(rule);
  std::vector<TrialRecord> records(cfg.trials);
  if (cfg.trials == 0) return records;
  const int workers = std::max(1, std::min(cfg.threads, cfg.trials));
  std::exception_ptr first_error = nullptr;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  std::mutex error_mutex;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (int t = w; t < cfg.trials; t += workers) {
        if (failed.load(std::memory_order_relaxed)) return;
        try {
          records[t] = run_single_trial(t, cfg, rule);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          failed.store(true, std::memory_order_relaxed);
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
  return records;
}

// ------------------------------- estimators --------------------------------

// Ratio of empirical joint frequencies: sum over trials and selected units of
// miss indicators over the total number of selection events. Pooling per test
// index and summing over indices gives the same ratio, so one estimator
// serves both readings.
inline std::optional<double> miscov_estimate(const std::vector<TrialRecord>& records) {
  long long selected = 0, missed = 0;
  for (const auto& rec : records)
    for (const auto& u : rec.units) {
      ++selected;
      if (!u.covered) ++missed;
    }
  if (selected == 0) return std::nullopt;
  return static_cast<double>(missed) / static_cast<double>(selected);
}

// Expected fraction of selected units missed, empty selections counting zero.
inline double fcr_estimate(const std::vector<TrialRecord>& records) {
  if (records.empty()) return 0.0;
  double total = 0.0;
  for (const auto& rec : records) {
    int missed = 0;
    for (const auto& u : rec.units)
      if (!u.covered) ++missed;
    total += static_cast<double>(missed) /
             std::max<double>(1.0, static_cast<double>(rec.units.size()));
  }
  return total / static_cast<double>(records.size());
}

struct CoverageSummary {
  long long events = 0;
  double coverage = 0.0;
  double se = 0.0;              // binomial standard error from realized events
  double mean_inv_ref = 0.0;    // mean of 1 / (1 + |reference|)
  double mean_set_size = 0.0;
  double mean_segments = 0.0;
  double mean_ref_size = 0.0;
  double mean_selected = 0.0;
};

inline CoverageSummary summarize_coverage(const std::vector<TrialRecord>& records) {
  CoverageSummary s;
  long long covered = 0;
  double inv_ref = 0.0, sizes = 0.0, segs = 0.0, refs = 0.0, sel = 0.0;
  for (const auto& rec : records) {
    sel += rec.selected_count;
    for (const auto& u : rec.units) {
      ++s.events;
      if (u.covered) ++covered;
      if (u.ref_size >= 0) inv_ref += 1.0 / (1.0 + static_cast<double>(u.ref_size));
      sizes += u.set_size;
      segs += u.segments;
      refs += std::max(0, u.ref_size);
    }
  }
  if (s.events > 0) {
    const auto e = static_cast<double>(s.events);
    s.coverage = static_cast<double>(covered) / e;
    s.se = std::sqrt(std::max(s.coverage * (1.0 - s.coverage), 1e-12) / e);
    s.mean_inv_ref = inv_ref / e;
    s.mean_set_size = sizes / e;
    s.mean_segments = segs / e;
    s.mean_ref_size = refs / e;
  }
  if (!records.empty()) s.mean_selected = sel / static_cast<double>(records.size());
  return s;
}

// ------------------------------- oracles -----------------------------------

// Literal swap construction: copies the data for every candidate i, reruns
// the rule from scratch and applies the two membership conditions directly.
inline std::vector<int> oracle_reference_set(int j, std::optional<double> hypothesized_y,
                                             const SelectionRule& rule,
                                             const Taxonomy& taxonomy, const Dataset& data) {
  std::vector<int> out;
  for (int i = 0; i < data.n(); ++i) {
    Dataset swapped = data;
    swapped.calib[i] = data.test[j];
    swapped.calib[i].outcome = hypothesized_y;
    swapped.test[j] = data.calib[i];
    swapped.test[j].outcome.reset();
    const SelectionResult sel = rule.select(IdentityView(swapped));
    if (sel.contains(j) && taxonomy.contains(sel.selected)) out.push_back(i);
  }
  return out;
}

// Re-runs the rule under random shuffles of the calibration sequence; a
// changed selection set falsifies the permutation-invariance contract.
inline bool permutation_invariance_check(const SelectionRule& rule, const Dataset& data,
                                         int n_perms, Rng rng) {
  const SelectionResult base = rule.select(IdentityView(data));
  std::vector<int> order(data.n());
  std::iota(order.begin(), order.end(), 0);
  for (int p = 0; p < n_perms; ++p) {
    for (int i = data.n() - 1; i > 0; --i)
      std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i + 1))]);
    Dataset shuffled;
    shuffled.test = data.test;
    shuffled.calib.reserve(data.n());
    for (int i : order) shuffled.calib.push_back(data.calib[i]);
    if (rule.select(IdentityView(shuffled)).selected != base.selected) return false;
  }
  return true;
}

// ---------------------- weak-coverage counterexample -----------------------

// Randomized two-unit selection where every unit enjoys weak
// selection-conditional coverage exactly 1 - alpha, yet the false coverage
// rate equals 2 alpha / (1 + alpha).
struct WeakFcrResult {
  double weak_coverage = 0.0;
  double fcr = 0.0;
  long long trials = 0;
};

inline WeakFcrResult weak_fcr_counterexample(double alpha, long long trials,
                                             std::uint64_t seed) {
  Rng rng(seed);
  long long sel_events = 0, covered_events = 0;
  double fcr_total = 0.0;
  const double p_single = alpha / (1.0 + alpha);
  for (long long t = 0; t < trials; ++t) {
    const double d = rng.u01();
    if (d < p_single) {
      // only unit 1 selected, empty set
      sel_events += 1;
      fcr_total += 1.0;
    } else if (d < 2.0 * p_single) {
      // only unit 2 selected, empty set
      sel_events += 1;
      fcr_total += 1.0;
    } else {
      // both selected, full-line sets
      sel_events += 2;
      covered_events += 2;
    }
  }
  WeakFcrResult r;
  r.trials = trials;
  r.weak_coverage = sel_events > 0
                        ? static_cast<double>(covered_events) / static_cast<double>(sel_events)
                        : 0.0;
  r.fcr = trials > 0 ? fcr_total / static_cast<double>(trials) : 0.0;
  return r;
}

}  // namespace jomi
