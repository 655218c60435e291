#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace jomi {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// A nonempty real interval with independently open/closed endpoints.
// Infinite endpoints are always treated as open.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_open = false;
  bool hi_open = false;

  bool contains(double y) const {
    if (y < lo || y > hi) return false;
    if (y == lo && lo_open) return false;
    if (y == hi && hi_open) return false;
    return true;
  }
  bool empty() const {
    if (lo > hi) return true;
    if (lo == hi) return lo_open || hi_open || std::isinf(lo);
    return false;
  }
  double length() const { return hi - lo; }
};

inline Interval closed(double lo, double hi) { return {lo, hi, false, false}; }
inline Interval open(double lo, double hi) { return {lo, hi, true, true}; }
inline Interval whole_line() { return {-kInf, kInf, true, true}; }

// A finite union of disjoint intervals kept sorted and maximal: two pieces
// are fused exactly when their set union is itself an interval (overlap, or
// abutting endpoints at least one of which is closed). Supports the boolean
// algebra needed to assemble piecewise prediction sets.
class IntervalSet {
 public:
  IntervalSet() = default;
  explicit IntervalSet(Interval iv) {
    if (!normalized_push_ok(iv)) return;
    parts_.push_back(iv);
  }
  static IntervalSet empty_set() { return IntervalSet(); }
  static IntervalSet all() { return IntervalSet(whole_line()); }

  const std::vector<Interval>& parts() const { return parts_; }
  bool empty() const { return parts_.empty(); }
  std::size_t segments() const { return parts_.size(); }

  bool contains(double y) const {
    for (const auto& p : parts_) {
      if (p.contains(y)) return true;
      if (y < p.lo) break;
    }
    return false;
  }

  double length() const {
    double total = 0.0;
    for (const auto& p : parts_) total += p.length();
    return total;
  }

  IntervalSet unite(const IntervalSet& other) const {
    std::vector<Interval> merged = parts_;
    merged.insert(merged.end(), other.parts_.begin(), other.parts_.end());
    return normalize(std::move(merged));
  }

  IntervalSet complement() const {
    std::vector<Interval> out;
    double cur_lo = -kInf;
    bool cur_lo_open = true;
    for (const auto& p : parts_) {
      Interval gap{cur_lo, p.lo, cur_lo_open, !p.lo_open};
      if (!gap.empty()) out.push_back(gap);
      cur_lo = p.hi;
      cur_lo_open = !p.hi_open;
    }
    Interval tail{cur_lo, kInf, cur_lo_open, true};
    if (!tail.empty()) out.push_back(tail);
    return normalize(std::move(out));
  }

  IntervalSet intersect(const IntervalSet& other) const {
    return complement().unite(other.complement()).complement();
  }

  IntervalSet subtract(const IntervalSet& other) const {
    return intersect(other.complement());
  }

  // True when every point of this set lies in `other`.
  bool subset_of(const IntervalSet& other) const {
    return subtract(other).empty();
  }

  static IntervalSet normalize(std::vector<Interval> raw) {
    std::vector<Interval> kept;
    for (const auto& iv : raw)
      if (!iv.empty()) kept.push_back(iv);
    std::sort(kept.begin(), kept.end(), [](const Interval& a, const Interval& b) {
      if (a.lo != b.lo) return a.lo < b.lo;
      return !a.lo_open && b.lo_open;
    });
    IntervalSet result;
    for (const auto& iv : kept) {
      if (!result.parts_.empty()) {
        Interval& back = result.parts_.back();
        const bool overlaps = iv.lo < back.hi;
        const bool touches = iv.lo == back.hi && (!back.hi_open || !iv.lo_open);
        if (overlaps || touches) {
          if (iv.hi > back.hi) {
            back.hi = iv.hi;
            back.hi_open = iv.hi_open;
          } else if (iv.hi == back.hi) {
            back.hi_open = back.hi_open && iv.hi_open;
          }
          continue;
        }
      }
      result.parts_.push_back(iv);
    }
    return result;
  }

 private:
  static bool normalized_push_ok(const Interval& iv) { return !iv.empty(); }
  std::vector<Interval> parts_;
};

// Prediction set over either a finite label alphabet or the real line.
struct PredictionSet {
  enum class Variant { Labels, Intervals };
  Variant variant = Variant::Intervals;
  std::vector<int> labels;  // sorted, unique
  IntervalSet intervals;

  static PredictionSet from_labels(std::vector<int> ls) {
    std::sort(ls.begin(), ls.end());
    ls.erase(std::unique(ls.begin(), ls.end()), ls.end());
    PredictionSet s;
    s.variant = Variant::Labels;
    s.labels = std::move(ls);
    return s;
  }
  static PredictionSet from_intervals(IntervalSet is) {
    PredictionSet s;
    s.variant = Variant::Intervals;
    s.intervals = std::move(is);
    return s;
  }

  bool covers(double y) const {
    if (variant == Variant::Labels)
      return std::binary_search(labels.begin(), labels.end(), static_cast<int>(std::lround(y)));
    return intervals.contains(y);
  }

  // Cardinality for label sets, Lebesgue measure for interval unions.
  double size_measure() const {
    if (variant == Variant::Labels) return static_cast<double>(labels.size());
    return intervals.length();
  }

  std::size_t segments() const {
    if (variant == Variant::Labels) return labels.size();
    return intervals.segments();
  }

  bool empty() const {
    return variant == Variant::Labels ? labels.empty() : intervals.empty();
  }
};

}  // namespace jomi
