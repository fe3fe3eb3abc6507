#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "refine/dataset.hpp"
#include "refine/group_store.hpp"
#include "refine/retrieval.hpp"

namespace refine {

enum class WeightMode {
  kSigmaRatio,    // w_j = sigma_j / sigma_rel_j
  kDiscriminant,  // w_j = delta_j * sigma_j / sigma_rel_j
};

const char* to_string(WeightMode mode);
// Accepts "sigma_ratio" / "discriminant" (case-insensitive). Throws ParameterError.
WeightMode parse_weight_mode(std::string_view text);

struct SessionConfig {
  std::size_t scope = 20;
  std::size_t max_iterations = 6;
  // Floor applied to sigma_rel_j in the weight denominator.
  double delta = 1e-6;
  WeightMode weight_mode = WeightMode::kDiscriminant;
  bool grouping_enabled = false;
  std::uint64_t rng_seed = 0;

  // Throws ParameterError when scope, max_iterations or delta is out of range.
  void validate() const;
};

struct DominantRange {
  double low = 0.0;
  double high = 0.0;
};

struct DiscriminantRatio {
  DominantRange range;
  // 1 - (non-relevant values inside range) / |N|, in [0, 1].
  double ratio = 1.0;
};

// Dominant range of one feature over the relevant values (closed interval) and
// the share of non-relevant values falling outside it. Empty non-relevant
// input gives ratio 1. Throws ParameterError on empty relevant input.
DiscriminantRatio discriminant_ratio(std::span<const double> relevant_values,
                                     std::span<const double> nonrelevant_values);

// Per-feature statistics behind the weights. sigma is the population standard
// deviation over R and N together, sigma_rel over R alone.
struct FeatureStats {
  std::vector<double> sigma;
  std::vector<double> sigma_rel;
  std::vector<DominantRange> dominant;
  std::vector<double> delta_ratio;
};

FeatureStats feature_stats(std::span<const ItemIndex> relevant, std::span<const ItemIndex> nonrelevant,
                           const Dataset& db);

// Re-weighting from the cumulative relevant / non-relevant rows. Requires a
// non-empty relevant set (ParameterError otherwise).
WeightVector compute_weights(std::span<const ItemIndex> relevant, std::span<const ItemIndex> nonrelevant,
                             const Dataset& db, const SessionConfig& config);
WeightVector compute_weights(std::span<const std::string> relevant_ids,
                             std::span<const std::string> nonrelevant_ids, const Dataset& db,
                             const SessionConfig& config);

// A query is either a database item or an external vector. An id that names a
// database item keeps that item out of its own results.
struct Query {
  std::optional<std::string> id;
  std::vector<double> vector;
};

enum class SessionStatus { kAwaitingFeedback, kComplete };
const char* to_string(SessionStatus status);

// One relevance-feedback session. Plain data; advanced by submit_feedback.
// The Dataset the session was started on must outlive it and be passed back
// unchanged.
struct SessionState {
  std::string session_id;
  SessionConfig config;
  Query query;
  std::optional<ItemIndex> query_index;

  // Index of the batch currently shown.
  std::size_t iteration = 0;
  std::vector<RankedList> batches;
  // Cumulative relevant / non-relevant rows, in the order they were marked.
  std::vector<ItemIndex> relevant;
  std::vector<ItemIndex> nonrelevant;
  // Cumulative relevant count after each feedback round.
  std::vector<std::size_t> relevant_after;
  // Every row shown so far plus the query row.
  ExclusionMask shown;
  WeightVector weights;
  SessionStatus status = SessionStatus::kAwaitingFeedback;
  // Group roots matched at any point in the session.
  std::set<std::string> matched_roots;
  std::vector<FeedbackEvent> events;
  std::vector<std::string> warnings;

  const RankedList& current_batch() const { return batches.back(); }
  bool complete() const noexcept { return status == SessionStatus::kComplete; }
  std::vector<std::string> relevant_ids(const Dataset& db) const;
};

// Iteration-0 retrieval with uniform weights. Throws SessionError on an empty
// or feature-less database, ValidationError on an unknown query id and
// ShapeError on a query of the wrong dimension.
SessionState start_session(const Query& query, const Dataset& db, const SessionConfig& config,
                           std::string session_id = {});
SessionState start_session(std::string_view query_id, const Dataset& db, const SessionConfig& config,
                           std::string session_id = {});

// Applies one round of marks to the current batch and, unless the session
// completes, retrieves the next batch of scope - |R| unseen items. With
// grouping enabled and a store given, members of groups matching R lead the
// next batch. Throws StateError after completion and FeedbackError when a
// relevant id is not in the current batch; the state is unchanged on throw.
void submit_feedback(SessionState& state, const Dataset& db, std::span<const std::string> relevant_ids,
                     const GroupStore* groups = nullptr, std::int64_t timestamp = 0);

}  // namespace refine
