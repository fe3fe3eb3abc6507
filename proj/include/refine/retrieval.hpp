#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "refine/dataset.hpp"

namespace refine {

// Per-feature weights for the L1 distance. Entries are finite and >= 0.
class WeightVector {
 public:
  WeightVector() = default;
  // Throws ValidationError on a negative or non-finite entry.
  explicit WeightVector(std::vector<double> w);

  static WeightVector uniform(std::size_t dim) { return WeightVector(std::vector<double>(dim, 1.0)); }

  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t j) const { return w_[j]; }
  std::span<const double> values() const noexcept { return w_; }

  bool operator==(const WeightVector&) const = default;

 private:
  std::vector<double> w_;
};

struct RankedEntry {
  ItemIndex index = 0;
  std::string id;
  double distance = 0.0;
  // Set when the entry was placed by group fill rather than by ranking.
  bool from_group = false;

  bool operator==(const RankedEntry&) const = default;
};

// Ascending distance, ties by ascending id. Group-filled entries, when present,
// lead the list and are not ordered by distance.
struct RankedList {
  std::vector<RankedEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }
  std::vector<std::string> ids() const;
  std::vector<ItemIndex> indices() const;

  bool operator==(const RankedList&) const = default;
};

// Row-index exclusion set sized to a dataset.
class ExclusionMask {
 public:
  ExclusionMask() = default;
  explicit ExclusionMask(std::size_t n) : bits_(n, false) {}

  void insert(ItemIndex i) {
    if (!bits_[i]) {
      bits_[i] = true;
      ++count_;
    }
  }
  bool contains(ItemIndex i) const { return i < bits_.size() && bits_[i]; }
  std::size_t count() const noexcept { return count_; }
  std::size_t capacity() const noexcept { return bits_.size(); }

 private:
  std::vector<bool> bits_;
  std::size_t count_ = 0;
};

// sum_j w_j * |a_j - b_j|. Throws ShapeError on length mismatch.
double weighted_l1(std::span<const double> a, std::span<const double> b, const WeightVector& w);

// The `limit` non-excluded items closest to query under weighted L1, by
// exhaustive scan. Throws ShapeError when query or weights do not match db.dim().
RankedList rank(std::span<const double> query, const Dataset& db, const WeightVector& weights,
                const ExclusionMask& exclude, std::size_t limit);

// Same as above with exclusions given as ids; unknown ids are ignored.
RankedList rank(std::span<const double> query, const Dataset& db, const WeightVector& weights,
                std::span<const std::string> exclude_ids, std::size_t limit);

}  // namespace refine
