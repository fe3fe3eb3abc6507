#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "refine/dataset.hpp"
#include "refine/group_store.hpp"
#include "refine/metrics.hpp"
#include "refine/session.hpp"

namespace refine {

struct SyntheticSpec {
  std::size_t labels = 10;
  std::size_t per_label = 100;
  std::size_t dim = 32;
  // Minimum pairwise distance between label centroids.
  double separation = 20.0;
  // Per-coordinate standard deviation around the centroid.
  double noise = 1.0;
  std::uint64_t seed = 0;
};

// Gaussian clusters, one per label. Ids are "<label>_<k>" zero-padded so id
// order groups items by label.
Dataset generate_synthetic(const SyntheticSpec& spec);

// Ids in batch whose label equals query_label. Throws ValidationError on an
// id the dataset does not hold.
std::vector<std::string> oracle_feedback(std::span<const std::string> batch, std::string_view query_label,
                                         const Dataset& db);

struct LabeledQuery {
  Query query;
  std::string label;
};

// Builds queries (id + vector + label) for the given ids of source.
std::vector<LabeledQuery> make_queries(const Dataset& source, std::span<const std::string> ids);

// Runs a session to completion with oracle feedback and checks the session
// laws (disjoint batches, batch sizes, monotone accuracy, termination).
// Throws InvariantViolation when one fails.
SessionState run_oracle_session(const LabeledQuery& query, const Dataset& db, const SessionConfig& config,
                                const GroupStore* groups = nullptr, std::string session_id = {});

// Iteration-0 precision at `scope` of every db item used as a query against
// the rest of db.
std::vector<double> rf0_precisions(const Dataset& db, std::size_t scope);

struct EvaluationSummary {
  std::size_t queries = 0;
  // Mean cumulative accuracy at iterations 0 .. max_iterations-1; a finished
  // session holds its final value.
  std::vector<double> mean_accuracy_by_iteration;
  double mean_final_accuracy = 0.0;
  double mean_rf_iteration_number = 0.0;
  double mean_rf0_precision = 0.0;
  std::vector<std::size_t> rf_iteration_numbers;
  std::vector<double> final_accuracies;
};

// Runs every query as an oracle session. Queries run in parallel; results
// are independent of thread count.
EvaluationSummary evaluate_queries(std::span<const LabeledQuery> queries, const Dataset& db,
                                   const SessionConfig& config, const GroupStore* groups = nullptr);

struct CheckpointResult {
  std::size_t validation_processed = 0;
  std::size_t group_count = 0;
  std::size_t grouped_items = 0;
  EvaluationSummary evaluation;
};

struct FractionResult {
  double fraction = 0.0;
  std::size_t sampled = 0;
  std::size_t similar_pairs = 0;
  std::size_t dissimilar_pairs = 0;
  std::size_t unique_pairs = 0;
  std::optional<double> in_sample_precision;
  std::optional<double> out_of_sample_precision;
  double overall_precision = 0.0;
  // "original" or the swap file path.
  std::string features;
};

struct ExperimentReport {
  std::string protocol;
  SessionConfig config;
  nlohmann::ordered_json parameters = nlohmann::ordered_json::object();
  std::optional<EvaluationSummary> baseline;
  std::vector<CheckpointResult> checkpoints;
  std::optional<double> baseline_precision;
  std::vector<FractionResult> fractions;
  std::vector<std::string> warnings;
  double wall_clock_seconds = 0.0;
};

// Wall-clock is left out unless include_timing is set, so reports of the
// same run compare byte-for-byte.
nlohmann::ordered_json to_json(const ExperimentReport& report, bool include_timing = false);
nlohmann::ordered_json to_json(const SessionConfig& config);
nlohmann::ordered_json to_json(const EvaluationSummary& summary);

// Checkpoint table: validation_processed, group_count, mean accuracy, mean
// RF iteration number.
void write_checkpoints_csv(std::ostream& out, const ExperimentReport& report);
// Sample (%), Overall, In Sample, Out of Sample (percent, "-" when absent).
void write_fractions_csv(std::ostream& out, const ExperimentReport& report);

// Oracle sessions without grouping for every query.
ExperimentReport run_baseline(const Dataset& db, std::span<const LabeledQuery> queries, SessionConfig config);

struct GroupingArtifacts {
  GroupStore store;
  std::vector<FeedbackEvent> events;
};

// Streams the split's validation queries through group-aware sessions against
// its retrieval database, folding each finished session into a GroupStore.
// At `checkpoints` equal intervals the store is frozen and the test queries
// are evaluated with grouping. The same test queries without grouping are
// reported as the baseline.
ExperimentReport run_grouping_experiment(const Dataset& dataset, const DatasetSplit& split,
                                         std::size_t checkpoints, SessionConfig config,
                                         GroupingArtifacts* artifacts = nullptr);

// Validation counts after which the grouping experiment evaluates.
std::vector<std::size_t> checkpoint_positions(std::size_t validation_count, std::size_t checkpoints);

struct SamplingOptions {
  std::vector<double> fractions{0.0, 0.05, 0.10, 0.30, 0.50, 0.70, 0.90, 1.0};
  // Optional replacement feature file per fraction (same order); empty path
  // or a shorter list means "use the original features".
  std::vector<std::filesystem::path> encoder_swaps;
  std::uint64_t seed = 0;
  // When set, pairs for fraction i are written to <dir>/pairs_<percent>.csv.
  std::optional<std::filesystem::path> pairs_dir;
};

// For each fraction x, samples round(x * |db|) query items, logs oracle
// feedback on their iteration-0 results and exports pairs, then measures
// iteration-0 precision with that fraction's features over the sampled
// items, the rest, and all items.
ExperimentReport run_sampling_protocol(const Dataset& db, const SamplingOptions& options, SessionConfig config);

}  // namespace refine
