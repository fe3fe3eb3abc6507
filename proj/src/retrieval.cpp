#include "refine/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "refine/errors.hpp"

namespace refine {

WeightVector::WeightVector(std::vector<double> w) : w_(std::move(w)) {
  for (std::size_t j = 0; j < w_.size(); ++j) {
    if (!std::isfinite(w_[j]) || w_[j] < 0.0) {
      throw ValidationError("weight " + std::to_string(j) + " must be finite and non-negative");
    }
  }
}

std::vector<std::string> RankedList::ids() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.id);
  return out;
}

std::vector<ItemIndex> RankedList::indices() const {
  std::vector<ItemIndex> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.index);
  return out;
}

double weighted_l1(std::span<const double> a, std::span<const double> b, const WeightVector& w) {
  if (a.size() != b.size() || a.size() != w.size()) {
    throw ShapeError("weighted_l1: lengths " + std::to_string(a.size()) + ", " + std::to_string(b.size()) +
                     ", " + std::to_string(w.size()) + " differ");
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) sum += w[j] * std::abs(a[j] - b[j]);
  return sum;
}

RankedList rank(std::span<const double> query, const Dataset& db, const WeightVector& weights,
                const ExclusionMask& exclude, std::size_t limit) {
  if (query.size() != db.dim() || weights.size() != db.dim()) {
    throw ShapeError("rank: query has " + std::to_string(query.size()) + " dims, weights " +
                     std::to_string(weights.size()) + ", database " + std::to_string(db.dim()));
  }
  struct Candidate {
    double distance;
    std::uint32_t id_rank;
    ItemIndex index;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(db.size());
  for (ItemIndex i = 0; i < db.size(); ++i) {
    if (exclude.contains(i)) continue;
    candidates.push_back({weighted_l1(query, db.vector(i), weights), db.id_rank(i), i});
  }
  const std::size_t n = std::min(limit, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n), candidates.end(),
                    [](const Candidate& a, const Candidate& b) {
                      return std::tie(a.distance, a.id_rank) < std::tie(b.distance, b.id_rank);
                    });
  RankedList out;
  out.entries.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    out.entries.push_back({candidates[k].index, db.id(candidates[k].index), candidates[k].distance, false});
  }
  return out;
}

RankedList rank(std::span<const double> query, const Dataset& db, const WeightVector& weights,
                std::span<const std::string> exclude_ids, std::size_t limit) {
  ExclusionMask mask(db.size());
  for (const auto& id : exclude_ids) {
    if (auto i = db.find(id)) mask.insert(*i);
  }
  return rank(query, db, weights, mask, limit);
}

}  // namespace refine
