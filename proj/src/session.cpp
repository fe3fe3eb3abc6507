#include "refine/session.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_set>

#include "refine/errors.hpp"
#include "refine/random.hpp"

namespace refine {

namespace {

double population_std(const Dataset& db, std::span<const ItemIndex> a, std::span<const ItemIndex> b,
                      std::size_t j) {
  const double n = static_cast<double>(a.size() + b.size());
  double sum = 0.0;
  for (ItemIndex i : a) sum += db.vector(i)[j];
  for (ItemIndex i : b) sum += db.vector(i)[j];
  const double mean = sum / n;
  double ss = 0.0;
  for (ItemIndex i : a) ss += (db.vector(i)[j] - mean) * (db.vector(i)[j] - mean);
  for (ItemIndex i : b) ss += (db.vector(i)[j] - mean) * (db.vector(i)[j] - mean);
  return std::sqrt(ss / n);
}

void require_features(const Dataset& db) {
  if (db.empty()) throw SessionError("cannot start a session on an empty database");
  if (!db.has_features()) throw SessionError("database has no feature vectors");
}

}  // namespace

const char* to_string(WeightMode mode) {
  return mode == WeightMode::kSigmaRatio ? "sigma_ratio" : "discriminant";
}

WeightMode parse_weight_mode(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "sigma_ratio") return WeightMode::kSigmaRatio;
  if (lower == "discriminant") return WeightMode::kDiscriminant;
  throw ParameterError("unknown weight mode '" + std::string(text) + "'");
}

void SessionConfig::validate() const {
  if (scope < 1) throw ParameterError("scope must be >= 1");
  if (max_iterations < 1) throw ParameterError("max_iterations must be >= 1");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ParameterError("delta must be a positive finite number");
}

const char* to_string(SessionStatus status) {
  return status == SessionStatus::kComplete ? "COMPLETE" : "AWAITING_FEEDBACK";
}

DiscriminantRatio discriminant_ratio(std::span<const double> relevant_values,
                                     std::span<const double> nonrelevant_values) {
  if (relevant_values.empty()) throw ParameterError("discriminant_ratio needs at least one relevant value");
  const auto [lo, hi] = std::minmax_element(relevant_values.begin(), relevant_values.end());
  DiscriminantRatio out;
  out.range = {*lo, *hi};
  if (nonrelevant_values.empty()) return out;
  const auto inside = std::count_if(nonrelevant_values.begin(), nonrelevant_values.end(),
                                    [&](double v) { return v >= out.range.low && v <= out.range.high; });
  out.ratio = 1.0 - static_cast<double>(inside) / static_cast<double>(nonrelevant_values.size());
  return out;
}

FeatureStats feature_stats(std::span<const ItemIndex> relevant, std::span<const ItemIndex> nonrelevant,
                           const Dataset& db) {
  if (relevant.empty()) throw ParameterError("feature statistics need at least one relevant item");
  const std::size_t d = db.dim();
  FeatureStats stats;
  stats.sigma.resize(d);
  stats.sigma_rel.resize(d);
  stats.dominant.resize(d);
  stats.delta_ratio.resize(d);
  std::vector<double> rel(relevant.size());
  std::vector<double> non(nonrelevant.size());
  for (std::size_t j = 0; j < d; ++j) {
    stats.sigma[j] = population_std(db, relevant, nonrelevant, j);
    stats.sigma_rel[j] = population_std(db, relevant, {}, j);
    for (std::size_t k = 0; k < relevant.size(); ++k) rel[k] = db.vector(relevant[k])[j];
    for (std::size_t k = 0; k < nonrelevant.size(); ++k) non[k] = db.vector(nonrelevant[k])[j];
    const auto dr = discriminant_ratio(rel, non);
    stats.dominant[j] = dr.range;
    stats.delta_ratio[j] = dr.ratio;
  }
  return stats;
}

WeightVector compute_weights(std::span<const ItemIndex> relevant, std::span<const ItemIndex> nonrelevant,
                             const Dataset& db, const SessionConfig& config) {
  const FeatureStats stats = feature_stats(relevant, nonrelevant, db);
  std::vector<double> w(db.dim());
  for (std::size_t j = 0; j < w.size(); ++j) {
    w[j] = stats.sigma[j] / std::max(stats.sigma_rel[j], config.delta);
    if (config.weight_mode == WeightMode::kDiscriminant) w[j] *= stats.delta_ratio[j];
  }
  return WeightVector(std::move(w));
}

WeightVector compute_weights(std::span<const std::string> relevant_ids,
                             std::span<const std::string> nonrelevant_ids, const Dataset& db,
                             const SessionConfig& config) {
  const auto r = indices_of(db, relevant_ids);
  const auto n = indices_of(db, nonrelevant_ids);
  return compute_weights(r, n, db, config);
}

std::vector<std::string> SessionState::relevant_ids(const Dataset& db) const {
  std::vector<std::string> out;
  out.reserve(relevant.size());
  for (ItemIndex i : relevant) out.push_back(db.id(i));
  return out;
}

SessionState start_session(const Query& query, const Dataset& db, const SessionConfig& config,
                           std::string session_id) {
  config.validate();
  require_features(db);

  SessionState state;
  state.session_id = std::move(session_id);
  state.config = config;
  state.query = query;
  if (state.query.vector.empty() && query.id) {
    auto v = db.vector(db.index_of(*query.id));
    state.query.vector.assign(v.begin(), v.end());
  }
  if (state.query.vector.size() != db.dim()) {
    throw ShapeError("query has " + std::to_string(state.query.vector.size()) + " dims, database has " +
                     std::to_string(db.dim()));
  }
  state.shown = ExclusionMask(db.size());
  if (query.id) {
    state.query_index = db.find(*query.id);
    if (state.query_index) state.shown.insert(*state.query_index);
  }
  state.weights = WeightVector::uniform(db.dim());

  RankedList batch = rank(state.query.vector, db, state.weights, state.shown, config.scope);
  if (batch.size() < config.scope) {
    state.warnings.push_back("only " + std::to_string(batch.size()) + " candidates available for scope " +
                             std::to_string(config.scope));
  }
  for (const auto& e : batch.entries) state.shown.insert(e.index);
  if (batch.empty()) state.status = SessionStatus::kComplete;
  state.batches.push_back(std::move(batch));
  return state;
}

SessionState start_session(std::string_view query_id, const Dataset& db, const SessionConfig& config,
                           std::string session_id) {
  require_features(db);
  Query q;
  q.id = std::string(query_id);
  auto v = db.vector(db.index_of(query_id));
  q.vector.assign(v.begin(), v.end());
  return start_session(q, db, config, std::move(session_id));
}

void submit_feedback(SessionState& state, const Dataset& db, std::span<const std::string> relevant_ids,
                     const GroupStore* groups, std::int64_t timestamp) {
  if (state.complete()) throw StateError("session " + state.session_id + " is already complete");
  const RankedList& batch = state.current_batch();

  std::unordered_set<std::string> marked;
  for (const auto& id : relevant_ids) {
    const bool in_batch = std::any_of(batch.entries.begin(), batch.entries.end(),
                                      [&](const RankedEntry& e) { return e.id == id; });
    if (!in_batch) throw FeedbackError("id '" + id + "' is not in the current batch");
    marked.insert(id);
  }

  FeedbackEvent event;
  event.session_id = state.session_id;
  event.query_id = state.query.id.value_or("");
  event.iteration = state.iteration;
  event.timestamp = timestamp;
  for (const auto& e : batch.entries) {
    event.shown.push_back(e.id);
    if (marked.count(e.id)) {
      state.relevant.push_back(e.index);
      event.relevant.push_back(e.id);
    } else {
      state.nonrelevant.push_back(e.index);
    }
  }
  state.events.push_back(std::move(event));
  state.relevant_after.push_back(state.relevant.size());

  const SessionConfig& cfg = state.config;
  if (state.relevant.size() >= cfg.scope || state.iteration + 1 >= cfg.max_iterations) {
    state.status = SessionStatus::kComplete;
    return;
  }

  if (!state.relevant.empty()) {
    state.weights = compute_weights(state.relevant, state.nonrelevant, db, cfg);
  }

  const std::size_t needed = cfg.scope - state.relevant.size();
  RankedList next;
  if (cfg.grouping_enabled && groups != nullptr && !groups->empty()) {
    const auto roots = match_groups(*groups, state.relevant_ids(db));
    state.matched_roots.insert(roots.begin(), roots.end());
    if (!roots.empty()) {
      const auto excluded = [&](const std::string& id) {
        auto i = db.find(id);
        return !i || state.shown.contains(*i);
      };
      const auto fill = group_fill(*groups, roots, needed, excluded,
                                   derive_seed(cfg.rng_seed, state.iteration + 1));
      for (const auto& id : fill) {
        const ItemIndex i = db.index_of(id);
        next.entries.push_back({i, id, weighted_l1(state.query.vector, db.vector(i), state.weights), true});
        state.shown.insert(i);
      }
    }
  }
  RankedList ranked = rank(state.query.vector, db, state.weights, state.shown, needed - next.size());
  for (auto& e : ranked.entries) {
    state.shown.insert(e.index);
    next.entries.push_back(std::move(e));
  }

  if (next.empty()) {
    state.warnings.push_back("candidates exhausted after iteration " + std::to_string(state.iteration));
    state.status = SessionStatus::kComplete;
    return;
  }
  if (next.size() < needed) {
    state.warnings.push_back("iteration " + std::to_string(state.iteration + 1) + ": only " +
                             std::to_string(next.size()) + " candidates left for " + std::to_string(needed) +
                             " slots");
  }
  ++state.iteration;
  state.batches.push_back(std::move(next));
}

}  // namespace refine
