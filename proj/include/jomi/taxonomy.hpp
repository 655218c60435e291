#pragma once

#include <algorithm>
#include <functional>
#include <vector>

namespace jomi {

// The collection of admissible selection sets that defines the granularity
// of the conditioning event. Membership must be deterministic and pure.
class Taxonomy {
 public:
  enum class Kind { All, FixedSize, Explicit, Predicate };

  static Taxonomy all() { return Taxonomy(Kind::All); }
  static Taxonomy fixed_size(int r) {
    Taxonomy t(Kind::FixedSize);
    t.size_ = r;
    return t;
  }
  static Taxonomy explicit_sets(std::vector<std::vector<int>> sets) {
    Taxonomy t(Kind::Explicit);
    for (auto& s : sets) std::sort(s.begin(), s.end());
    t.sets_ = std::move(sets);
    return t;
  }
  static Taxonomy predicate(std::function<bool(const std::vector<int>&)> fn) {
    Taxonomy t(Kind::Predicate);
    t.fn_ = std::move(fn);
    return t;
  }

  Kind kind() const { return kind_; }

  // `candidate` must be sorted.
  bool contains(const std::vector<int>& candidate) const {
    switch (kind_) {
      case Kind::All:
        return true;
      case Kind::FixedSize:
        return static_cast<int>(candidate.size()) == size_;
      case Kind::Explicit:
        return std::find(sets_.begin(), sets_.end(), candidate) != sets_.end();
      case Kind::Predicate:
        return fn_(candidate);
    }
    return false;
  }

  // Cheap path used by fast reference-set constructions that only know the
  // swapped selection's cardinality. Valid only for All / FixedSize.
  bool size_only() const { return kind_ == Kind::All || kind_ == Kind::FixedSize; }
  bool contains_size(int sz) const {
    return kind_ == Kind::All || (kind_ == Kind::FixedSize && sz == size_);
  }

 private:
  explicit Taxonomy(Kind k) : kind_(k) {}
  Kind kind_;
  int size_ = 0;
  std::vector<std::vector<int>> sets_;
  std::function<bool(const std::vector<int>&)> fn_;
};

}  // namespace jomi
