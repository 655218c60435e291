#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "jomi/unit.hpp"

namespace jomi {

// Read-only window onto a (calibration, test) pair. Selection rules consume
// this interface so that swapped data can be presented without copying.
class DataView {
 public:
  virtual ~DataView() = default;
  virtual int n() const = 0;
  virtual int m() const = 0;
  virtual const Unit& calib(int i) const = 0;
  virtual const Unit& test(int j) const = 0;
};

class IdentityView final : public DataView {
 public:
  explicit IdentityView(const Dataset& data) : data_(data) {}
  int n() const override { return data_.n(); }
  int m() const override { return data_.m(); }
  const Unit& calib(int i) const override { return data_.calib[i]; }
  const Unit& test(int j) const override { return data_.test[j]; }

 private:
  const Dataset& data_;
};

// Logical swap of calibration unit i with test unit j: position i of the
// calibration sequence reads as test unit j carrying a hypothesized outcome,
// position j of the test sequence reads as calibration unit i with its
// outcome hidden. Everything else passes through untouched.
class SwapView final : public DataView {
 public:
  SwapView(const Dataset& data, int i, int j, std::optional<double> hypothesized_y)
      : data_(data), i_(i), j_(j) {
    calib_sub_ = data_.test[j];
    calib_sub_.outcome = hypothesized_y;
    test_sub_ = data_.calib[i];
    test_sub_.outcome.reset();
  }

  int n() const override { return data_.n(); }
  int m() const override { return data_.m(); }
  const Unit& calib(int k) const override { return k == i_ ? calib_sub_ : data_.calib[k]; }
  const Unit& test(int l) const override { return l == j_ ? test_sub_ : data_.test[l]; }

 private:
  const Dataset& data_;
  int i_, j_;
  Unit calib_sub_;
  Unit test_sub_;
};

// Copies a view back out element by element; used by the brute-force oracle
// and by tests that check the virtual views against direct construction.
inline Dataset materialize(const DataView& view) {
  Dataset out;
  out.calib.reserve(view.n());
  out.test.reserve(view.m());
  for (int i = 0; i < view.n(); ++i) out.calib.push_back(view.calib(i));
  for (int j = 0; j < view.m(); ++j) out.test.push_back(view.test(j));
  return out;
}

}  // namespace jomi
