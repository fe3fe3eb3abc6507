#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "refine/session.hpp"

namespace refine {

// relevant_retrieved / retrieved. Throws MetricError when retrieved is 0 or
// relevant_retrieved exceeds it.
double precision(std::size_t relevant_retrieved, std::size_t retrieved);

// cumulative_relevant / scope. Throws MetricError when scope is 0 or
// cumulative_relevant exceeds it.
double retrieval_accuracy(std::size_t cumulative_relevant, std::size_t scope);

// Per-iteration view of one session. Entry t describes the batch shown at
// iteration t and the cumulative state after its feedback.
struct SessionMetrics {
  std::size_t scope = 0;
  std::size_t max_iterations = 0;
  std::vector<std::size_t> batch_size;
  std::vector<std::size_t> batch_relevant;
  std::vector<std::size_t> cumulative_relevant;
  std::vector<double> precision;
  std::vector<double> retrieval_accuracy;
  std::size_t rf_iteration_number = 0;

  double final_accuracy() const { return retrieval_accuracy.empty() ? 0.0 : retrieval_accuracy.back(); }
  // Accuracy at iteration t, holding the last value after the session ended.
  double accuracy_at(std::size_t t) const;
};

// First iteration whose accuracy reaches 1, else max_iterations.
std::size_t rf_iteration_number(std::span<const double> retrieval_accuracy, std::size_t max_iterations);

// Requires a COMPLETE session (StateError otherwise).
SessionMetrics session_metrics(const SessionState& state);

// Same fields for a session that may still be running; rf_iteration_number
// is only final once the session is complete.
SessionMetrics progress_metrics(const SessionState& state);

nlohmann::ordered_json to_json(const SessionMetrics& metrics);

double mean(std::span<const double> values);

}  // namespace refine
