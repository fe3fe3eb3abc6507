#include "refine/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <thread>
#include <unordered_set>

#include "refine/errors.hpp"
#include "refine/feedback_export.hpp"
#include "refine/random.hpp"
#include "refine/retrieval.hpp"

namespace refine {

namespace {

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = n;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::string padded(std::size_t value, std::size_t width) {
  std::string s = std::to_string(value);
  if (s.size() < width) s.insert(0, width - s.size(), '0');
  return s;
}

std::string fixed4(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 4);
  return std::string(buf, end);
}

void check(bool ok, const std::string& session, const std::string& what) {
  if (!ok) throw InvariantViolation("session " + session + ": " + what);
}

void verify_session_laws(const SessionState& s, const Dataset& db) {
  const std::string& sid = s.session_id;
  const SessionConfig& cfg = s.config;
  check(s.complete(), sid, "did not complete");
  check(s.batches.size() <= cfg.max_iterations, sid, "more batches than max_iterations");

  std::unordered_set<ItemIndex> seen;
  std::size_t available = db.size() - (s.query_index ? 1 : 0);
  std::size_t relevant_before = 0;
  for (std::size_t t = 0; t < s.batches.size(); ++t) {
    const auto& batch = s.batches[t];
    const std::size_t expected = std::min(cfg.scope - relevant_before, available);
    check(batch.size() == expected, sid,
          "batch " + std::to_string(t) + " has " + std::to_string(batch.size()) + " items, expected " +
              std::to_string(expected));
    for (const auto& e : batch.entries) {
      check(!s.query_index || e.index != *s.query_index, sid, "query returned as its own result");
      check(seen.insert(e.index).second, sid, "item " + e.id + " shown twice");
    }
    available -= batch.size();
    if (t < s.relevant_after.size()) {
      check(s.relevant_after[t] >= relevant_before, sid, "cumulative relevant count decreased");
      relevant_before = s.relevant_after[t];
    }
  }
  check(s.relevant_after.size() == s.batches.size() || s.batches.back().empty(), sid,
        "feedback rounds do not match batches");

  std::unordered_set<ItemIndex> relevant(s.relevant.begin(), s.relevant.end());
  for (ItemIndex i : s.nonrelevant) check(!relevant.count(i), sid, "item marked both relevant and not");

  const bool full = s.relevant.size() >= cfg.scope;
  const bool capped = s.relevant_after.size() >= cfg.max_iterations;
  const bool exhausted = available == 0;
  check(full || capped || exhausted, sid, "completed without a termination condition");
}

EvaluationSummary summarize(const std::vector<SessionMetrics>& metrics, std::size_t max_iterations) {
  EvaluationSummary out;
  out.queries = metrics.size();
  out.mean_accuracy_by_iteration.assign(max_iterations, 0.0);
  std::vector<double> rf0;
  std::vector<double> iterations;
  for (const auto& m : metrics) {
    for (std::size_t t = 0; t < max_iterations; ++t) out.mean_accuracy_by_iteration[t] += m.accuracy_at(t);
    out.rf_iteration_numbers.push_back(m.rf_iteration_number);
    out.final_accuracies.push_back(m.final_accuracy());
    iterations.push_back(static_cast<double>(m.rf_iteration_number));
    rf0.push_back(m.precision.empty() ? 0.0 : m.precision.front());
  }
  if (!metrics.empty()) {
    for (auto& v : out.mean_accuracy_by_iteration) v /= static_cast<double>(metrics.size());
  }
  out.mean_final_accuracy = mean(out.final_accuracies);
  out.mean_rf_iteration_number = mean(iterations);
  out.mean_rf0_precision = mean(rf0);
  return out;
}

// Iteration-0 precision at scope with every row of db as the query.
std::vector<double> query_precisions(const Dataset& db, std::size_t scope) {
  std::vector<double> out(db.size(), 0.0);
  const auto weights = WeightVector::uniform(db.dim());
  parallel_for(db.size(), [&](std::size_t q) {
    ExclusionMask exclude(db.size());
    exclude.insert(q);
    const auto batch = rank(db.vector(q), db, weights, exclude, scope);
    if (batch.empty()) return;
    std::size_t hits = 0;
    for (const auto& e : batch.entries) hits += db.label(e.index) == db.label(q);
    out[q] = precision(hits, batch.size());
  });
  return out;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.labels < 1 || spec.per_label < 1 || spec.dim < 1) {
    throw ParameterError("synthetic dataset counts must be >= 1");
  }
  if (!(spec.separation > 0.0) || !(spec.noise >= 0.0)) {
    throw ParameterError("separation must be > 0 and noise >= 0");
  }
  Rng rng(spec.seed);

  // Rejection-sample centroids; widen the spread if placement keeps failing.
  std::vector<std::vector<double>> centroids;
  double spread = spec.separation;
  std::size_t failures = 0;
  while (centroids.size() < spec.labels) {
    std::vector<double> c(spec.dim);
    for (auto& x : c) x = spread * rng.normal();
    const bool far_enough = std::all_of(centroids.begin(), centroids.end(), [&](const auto& other) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < spec.dim; ++j) d2 += (c[j] - other[j]) * (c[j] - other[j]);
      return d2 >= spec.separation * spec.separation;
    });
    if (far_enough) {
      centroids.push_back(std::move(c));
    } else if (++failures % 1000 == 0) {
      spread *= 1.5;
    }
  }

  const std::size_t label_width = std::to_string(spec.labels - 1).size();
  const std::size_t item_width = std::to_string(spec.per_label - 1).size();
  std::vector<ItemRecord> items;
  std::vector<double> values;
  items.reserve(spec.labels * spec.per_label);
  values.reserve(spec.labels * spec.per_label * spec.dim);
  for (std::size_t l = 0; l < spec.labels; ++l) {
    const std::string label = "c" + padded(l, label_width);
    for (std::size_t k = 0; k < spec.per_label; ++k) {
      items.push_back({label + "_" + padded(k, item_width), label, std::nullopt});
      for (std::size_t j = 0; j < spec.dim; ++j) values.push_back(centroids[l][j] + spec.noise * rng.normal());
    }
  }
  const std::size_t rows = items.size();
  return Dataset::from_items(std::move(items)).with_features(FeatureMatrix(rows, spec.dim, std::move(values)));
}

std::vector<std::string> oracle_feedback(std::span<const std::string> batch, std::string_view query_label,
                                         const Dataset& db) {
  std::vector<std::string> out;
  for (const auto& id : batch) {
    if (db.label(db.index_of(id)) == query_label) out.push_back(id);
  }
  return out;
}

std::vector<LabeledQuery> make_queries(const Dataset& source, std::span<const std::string> ids) {
  std::vector<LabeledQuery> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const ItemIndex i = source.index_of(id);
    LabeledQuery q;
    q.query.id = id;
    auto v = source.vector(i);
    q.query.vector.assign(v.begin(), v.end());
    q.label = source.label(i);
    out.push_back(std::move(q));
  }
  return out;
}

SessionState run_oracle_session(const LabeledQuery& query, const Dataset& db, const SessionConfig& config,
                                const GroupStore* groups, std::string session_id) {
  SessionState state = start_session(query.query, db, config, std::move(session_id));
  std::int64_t clock = 0;
  while (!state.complete()) {
    const auto shown = state.current_batch().ids();
    const auto relevant = oracle_feedback(shown, query.label, db);
    submit_feedback(state, db, relevant, groups, clock++);
  }
  verify_session_laws(state, db);
  return state;
}

std::vector<double> rf0_precisions(const Dataset& db, std::size_t scope) { return query_precisions(db, scope); }

EvaluationSummary evaluate_queries(std::span<const LabeledQuery> queries, const Dataset& db,
                                   const SessionConfig& config, const GroupStore* groups) {
  std::vector<SessionMetrics> metrics(queries.size());
  parallel_for(queries.size(), [&](std::size_t q) {
    SessionConfig cfg = config;
    cfg.rng_seed = derive_seed(config.rng_seed, q);
    const auto state = run_oracle_session(queries[q], db, cfg, groups, "eval-" + std::to_string(q));
    metrics[q] = session_metrics(state);
  });
  return summarize(metrics, config.max_iterations);
}

nlohmann::ordered_json to_json(const SessionConfig& config) {
  nlohmann::ordered_json j;
  j["scope"] = config.scope;
  j["max_iterations"] = config.max_iterations;
  j["delta"] = config.delta;
  j["weight_mode"] = to_string(config.weight_mode);
  j["grouping_enabled"] = config.grouping_enabled;
  j["rng_seed"] = config.rng_seed;
  return j;
}

nlohmann::ordered_json to_json(const EvaluationSummary& s) {
  nlohmann::ordered_json j;
  j["queries"] = s.queries;
  j["mean_accuracy_by_iteration"] = s.mean_accuracy_by_iteration;
  j["mean_final_accuracy"] = s.mean_final_accuracy;
  j["mean_rf_iteration_number"] = s.mean_rf_iteration_number;
  j["mean_rf0_precision"] = s.mean_rf0_precision;
  j["rf_iteration_numbers"] = s.rf_iteration_numbers;
  j["final_accuracies"] = s.final_accuracies;
  return j;
}

nlohmann::ordered_json to_json(const ExperimentReport& report, bool include_timing) {
  nlohmann::ordered_json j;
  j["protocol"] = report.protocol;
  j["config"] = to_json(report.config);
  j["parameters"] = report.parameters;
  if (report.baseline) j["baseline"] = to_json(*report.baseline);
  if (!report.checkpoints.empty()) {
    auto& arr = j["checkpoints"] = nlohmann::ordered_json::array();
    for (const auto& c : report.checkpoints) {
      nlohmann::ordered_json e;
      e["validation_processed"] = c.validation_processed;
      e["group_count"] = c.group_count;
      e["grouped_items"] = c.grouped_items;
      e["evaluation"] = to_json(c.evaluation);
      arr.push_back(std::move(e));
    }
  }
  if (report.baseline_precision) j["baseline_precision"] = *report.baseline_precision;
  if (!report.fractions.empty()) {
    auto& arr = j["fractions"] = nlohmann::ordered_json::array();
    for (const auto& f : report.fractions) {
      nlohmann::ordered_json e;
      e["fraction"] = f.fraction;
      e["sampled"] = f.sampled;
      e["similar_pairs"] = f.similar_pairs;
      e["dissimilar_pairs"] = f.dissimilar_pairs;
      e["unique_pairs"] = f.unique_pairs;
      e["overall_precision"] = f.overall_precision;
      e["in_sample_precision"] = f.in_sample_precision ? nlohmann::ordered_json(*f.in_sample_precision) : nullptr;
      e["out_of_sample_precision"] =
          f.out_of_sample_precision ? nlohmann::ordered_json(*f.out_of_sample_precision) : nullptr;
      e["features"] = f.features;
      arr.push_back(std::move(e));
    }
  }
  j["warnings"] = report.warnings;
  if (include_timing) j["wall_clock_seconds"] = report.wall_clock_seconds;
  return j;
}

void write_checkpoints_csv(std::ostream& out, const ExperimentReport& report) {
  out << "validation_processed,group_count,mean_accuracy,mean_rf_iteration_number\n";
  if (report.baseline) {
    out << "baseline,0," << fixed4(report.baseline->mean_final_accuracy) << ','
        << fixed4(report.baseline->mean_rf_iteration_number) << '\n';
  }
  for (const auto& c : report.checkpoints) {
    out << c.validation_processed << ',' << c.group_count << ',' << fixed4(c.evaluation.mean_final_accuracy)
        << ',' << fixed4(c.evaluation.mean_rf_iteration_number) << '\n';
  }
}

void write_fractions_csv(std::ostream& out, const ExperimentReport& report) {
  out << "Sample (%),Overall Precision (%),In Sample Precision (%),Out of Sample Precision (%)\n";
  auto cell = [](const std::optional<double>& v) { return v ? fixed4(100.0 * *v) : std::string("-"); };
  for (const auto& f : report.fractions) {
    out << fixed4(100.0 * f.fraction) << ',' << fixed4(100.0 * f.overall_precision) << ','
        << cell(f.in_sample_precision) << ',' << cell(f.out_of_sample_precision) << '\n';
  }
}

ExperimentReport run_baseline(const Dataset& db, std::span<const LabeledQuery> queries, SessionConfig config) {
  const auto started = std::chrono::steady_clock::now();
  config.grouping_enabled = false;
  config.validate();
  ExperimentReport report;
  report.protocol = "baseline";
  report.config = config;
  report.parameters["database_size"] = db.size();
  report.parameters["queries"] = queries.size();
  report.baseline = evaluate_queries(queries, db, config);
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

std::vector<std::size_t> checkpoint_positions(std::size_t validation_count, std::size_t checkpoints) {
  if (checkpoints < 1) throw ParameterError("checkpoints must be >= 1");
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i <= checkpoints; ++i) {
    const std::size_t pos = (i * validation_count + checkpoints - 1) / checkpoints;
    if (out.empty() || pos > out.back()) out.push_back(pos);
  }
  if (out.empty()) out.push_back(0);
  return out;
}

ExperimentReport run_grouping_experiment(const Dataset& dataset, const DatasetSplit& split,
                                         std::size_t checkpoints, SessionConfig config,
                                         GroupingArtifacts* artifacts) {
  const auto started = std::chrono::steady_clock::now();
  config.validate();
  const auto positions = checkpoint_positions(split.validation.size(), checkpoints);

  const auto db_rows = indices_of(dataset, split.retrieval_db);
  const Dataset db = dataset.subset(db_rows);
  const auto test = make_queries(dataset, split.test);
  const auto validation = make_queries(dataset, split.validation);

  ExperimentReport report;
  report.protocol = "grouping";
  report.parameters["retrieval_db"] = db.size();
  report.parameters["test_queries"] = test.size();
  report.parameters["validation_queries"] = validation.size();
  report.parameters["checkpoints"] = checkpoints;

  SessionConfig plain = config;
  plain.grouping_enabled = false;
  report.baseline = evaluate_queries(test, db, plain);

  config.grouping_enabled = true;
  report.config = config;
  GroupStore store;
  std::vector<FeedbackEvent> events;
  std::size_t processed = 0;
  for (std::size_t pos : positions) {
    for (; processed < pos; ++processed) {
      SessionConfig cfg = config;
      cfg.rng_seed = derive_seed(config.rng_seed, 1'000'000 + processed);
      auto state = run_oracle_session(validation[processed], db, cfg, &store, "val-" + std::to_string(processed));
      record_session(store, state.relevant_ids(db), state.matched_roots);
      for (auto& e : state.events) {
        e.timestamp = static_cast<std::int64_t>(events.size());
        events.push_back(std::move(e));
      }
    }
    CheckpointResult c;
    c.validation_processed = processed;
    c.group_count = store.group_count();
    c.grouped_items = store.member_count();
    c.evaluation = evaluate_queries(test, db, config, &store);
    report.checkpoints.push_back(std::move(c));
  }
  if (artifacts) {
    artifacts->store = std::move(store);
    artifacts->events = std::move(events);
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

ExperimentReport run_sampling_protocol(const Dataset& db, const SamplingOptions& options, SessionConfig config) {
  const auto started = std::chrono::steady_clock::now();
  config.grouping_enabled = false;
  config.validate();
  if (!db.has_features()) throw SessionError("database has no feature vectors");

  ExperimentReport report;
  report.protocol = "sampling";
  report.config = config;
  report.parameters["database_size"] = db.size();
  report.parameters["seed"] = options.seed;

  const auto original = query_precisions(db, config.scope);
  report.baseline_precision = mean(original);

  std::vector<ItemIndex> order(db.size());
  for (ItemIndex i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(options.seed);
  rng.shuffle(std::span(order));

  const auto uniform = WeightVector::uniform(db.dim());
  for (std::size_t f = 0; f < options.fractions.size(); ++f) {
    const double x = options.fractions[f];
    if (!(x >= 0.0 && x <= 1.0)) throw ParameterError("sampling fraction must be in [0, 1]");
    FractionResult row;
    row.fraction = x;
    row.sampled = static_cast<std::size_t>(std::llround(x * static_cast<double>(db.size())));
    std::vector<bool> in_sample(db.size(), false);
    for (std::size_t k = 0; k < row.sampled; ++k) in_sample[order[k]] = true;

    std::vector<FeedbackEvent> events;
    for (std::size_t k = 0; k < row.sampled; ++k) {
      const ItemIndex q = order[k];
      ExclusionMask exclude(db.size());
      exclude.insert(q);
      FeedbackEvent e;
      e.session_id = "sample-" + std::to_string(k);
      e.query_id = db.id(q);
      e.shown = rank(db.vector(q), db, uniform, exclude, config.scope).ids();
      e.relevant = oracle_feedback(e.shown, db.label(q), db);
      e.timestamp = static_cast<std::int64_t>(k);
      events.push_back(std::move(e));
    }
    const PairExport pairs = export_pairs(events);
    for (const auto& c : pairs.per_event) {
      row.similar_pairs += c.similar;
      row.dissimilar_pairs += c.dissimilar;
    }
    row.unique_pairs = pairs.pairs.size();
    if (options.pairs_dir && !events.empty()) {
      std::filesystem::create_directories(*options.pairs_dir);
      std::ofstream out(*options.pairs_dir / ("pairs_" + fixed4(100.0 * x) + ".csv"));
      if (!out) throw Error("cannot write pairs for fraction " + fixed4(x));
      write_pairs_csv(out, pairs, &db);
    }

    std::vector<double> precisions = original;
    row.features = "original";
    if (f < options.encoder_swaps.size() && !options.encoder_swaps[f].empty()) {
      const auto& path = options.encoder_swaps[f];
      if (std::filesystem::exists(path)) {
        precisions = query_precisions(load_features(path, db), config.scope);
        row.features = path.string();
      } else {
        report.warnings.push_back("swap file " + path.string() + " for fraction " + fixed4(x) +
                                  " not found; using original features");
      }
    }

    std::vector<double> inside;
    std::vector<double> outside;
    for (ItemIndex i = 0; i < db.size(); ++i) (in_sample[i] ? inside : outside).push_back(precisions[i]);
    if (!inside.empty()) row.in_sample_precision = mean(inside);
    if (!outside.empty()) row.out_of_sample_precision = mean(outside);
    row.overall_precision = mean(precisions);
    report.fractions.push_back(std::move(row));
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace refine
