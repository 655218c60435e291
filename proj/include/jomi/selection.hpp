#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "jomi/taxonomy.hpp"
#include "jomi/view.hpp"

namespace jomi {

// Outcome of running a selection rule: the selected test indices (sorted)
// plus optional diagnostics exposed by threshold-style rules.
struct SelectionResult {
  std::vector<int> selected;
  std::optional<double> threshold;
  std::optional<std::string> backend;

  bool contains(int j) const {
    return std::binary_search(selected.begin(), selected.end(), j);
  }
};

// How the reference set of a rule depends on the hypothesized outcome. This
// drives which fast path the prediction-set assembler may take; every rule
// also works through the generic swap loop.
enum class RefStructure {
  Covariate,  // reference set is outcome-free and shared across y
  TwoBranch,  // constant on y <= c and on y > c for a per-unit breakpoint c
  General     // arbitrary dependence; finite alphabets only
};

// A permutation-invariant map from (calibration sequence, test sequence) to
// a subset of test indices. Invariance to calibration order is a contract on
// implementations; the harness spot-checks it.
class SelectionRule {
 public:
  virtual ~SelectionRule() = default;
  virtual SelectionResult select(const DataView& view) const = 0;
  virtual RefStructure ref_structure() const { return RefStructure::General; }
  virtual std::string name() const = 0;

  // Closed-form reference set shared by every selected unit, when the rule
  // admits one (valid whenever the realized selection lies in the taxonomy).
  virtual std::optional<std::vector<int>> covariate_reference(const Dataset&,
                                                              const Taxonomy&) const {
    return std::nullopt;
  }

  // Closed-form two-branch references for unit j: .first on {y > c_j},
  // .second on {y <= c_j}.
  virtual std::optional<std::pair<std::vector<int>, std::vector<int>>> branch_references(
      int /*j*/, const Dataset&, const Taxonomy&) const {
    return std::nullopt;
  }
};

// Wraps an arbitrary callable; handy for constructed counterexamples in
// tests (including rules that deliberately break permutation invariance).
class LambdaRule final : public SelectionRule {
 public:
  using Fn = std::function<std::vector<int>(const DataView&)>;
  LambdaRule(std::string name, Fn fn, RefStructure rs = RefStructure::General)
      : name_(std::move(name)), fn_(std::move(fn)), rs_(rs) {}

  SelectionResult select(const DataView& view) const override {
    SelectionResult r;
    r.selected = fn_(view);
    std::sort(r.selected.begin(), r.selected.end());
    return r;
  }
  RefStructure ref_structure() const override { return rs_; }
  std::string name() const override { return name_; }

 private:
  std::string name_;
  Fn fn_;
  RefStructure rs_;
};

}  // namespace jomi
