#include "refine/metrics.hpp"

#include <numeric>

#include "refine/errors.hpp"

namespace refine {

double precision(std::size_t relevant_retrieved, std::size_t retrieved) {
  if (retrieved == 0) throw MetricError("precision is undefined when nothing was retrieved");
  if (relevant_retrieved > retrieved) throw MetricError("more relevant items than retrieved items");
  return static_cast<double>(relevant_retrieved) / static_cast<double>(retrieved);
}

double retrieval_accuracy(std::size_t cumulative_relevant, std::size_t scope) {
  if (scope == 0) throw MetricError("scope must be >= 1");
  if (cumulative_relevant > scope) throw MetricError("cumulative relevant count exceeds scope");
  return static_cast<double>(cumulative_relevant) / static_cast<double>(scope);
}

double SessionMetrics::accuracy_at(std::size_t t) const {
  if (retrieval_accuracy.empty()) return 0.0;
  return retrieval_accuracy[std::min(t, retrieval_accuracy.size() - 1)];
}

std::size_t rf_iteration_number(std::span<const double> accuracy, std::size_t max_iterations) {
  for (std::size_t t = 0; t < accuracy.size() && t < max_iterations; ++t) {
    if (accuracy[t] >= 1.0) return t;
  }
  return max_iterations;
}

SessionMetrics session_metrics(const SessionState& state) {
  if (!state.complete()) throw StateError("metrics require a completed session");
  return progress_metrics(state);
}

SessionMetrics progress_metrics(const SessionState& state) {
  SessionMetrics m;
  m.scope = state.config.scope;
  m.max_iterations = state.config.max_iterations;
  std::size_t before = 0;
  for (std::size_t t = 0; t < state.relevant_after.size(); ++t) {
    const std::size_t cumulative = state.relevant_after[t];
    const std::size_t shown = state.batches[t].size();
    m.batch_size.push_back(shown);
    m.batch_relevant.push_back(cumulative - before);
    m.cumulative_relevant.push_back(cumulative);
    m.precision.push_back(shown ? precision(cumulative - before, shown) : 0.0);
    m.retrieval_accuracy.push_back(retrieval_accuracy(cumulative, m.scope));
    before = cumulative;
  }
  m.rf_iteration_number = rf_iteration_number(m.retrieval_accuracy, m.max_iterations);
  return m;
}

nlohmann::ordered_json to_json(const SessionMetrics& m) {
  nlohmann::ordered_json j;
  j["scope"] = m.scope;
  j["max_iterations"] = m.max_iterations;
  j["batch_size"] = m.batch_size;
  j["batch_relevant"] = m.batch_relevant;
  j["cumulative_relevant"] = m.cumulative_relevant;
  j["precision"] = m.precision;
  j["retrieval_accuracy"] = m.retrieval_accuracy;
  j["rf_iteration_number"] = m.rf_iteration_number;
  return j;
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

}  // namespace refine
