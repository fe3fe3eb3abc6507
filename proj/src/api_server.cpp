#include "refine/api_server.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include <httplib.h>

#include "refine/errors.hpp"
#include "refine/feedback_export.hpp"
#include "refine/metrics.hpp"
#include "refine/pca.hpp"
#include "refine/simulation.hpp"

namespace refine {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::size_t kRecentSessions = 50;

ApiResponse error(int status, const std::string& message, ordered_json extra = ordered_json::object()) {
  ApiResponse r;
  r.status = status;
  r.body = ordered_json::object();
  r.body["error"] = message;
  for (auto& [k, v] : extra.items()) r.body[k] = v;
  return r;
}

ApiResponse ok(ordered_json body, int status = 200) {
  ApiResponse r;
  r.status = status;
  r.body = std::move(body);
  return r;
}

}  // namespace

Service::Service(Dataset db, SessionConfig defaults, std::optional<std::filesystem::path> groups_path,
                 std::optional<std::filesystem::path> events_path)
    : db_(std::move(db)),
      defaults_(defaults),
      groups_path_(std::move(groups_path)),
      events_path_(std::move(events_path)) {
  defaults_.validate();
  if (!db_.has_features()) throw SessionError("server needs a dataset with features");
  if (groups_path_ && std::filesystem::exists(*groups_path_)) groups_ = GroupStore::load(*groups_path_);
  if (events_path_ && std::filesystem::exists(*events_path_)) {
    events_ = load_events(*events_path_);
    for (const auto& e : events_) event_clock_ = std::max(event_clock_, e.timestamp + 1);
  }
  if (db_.size() >= 3 && db_.dim() >= 2) {
    const FeatureMatrix projected = transform(fit_pca(db_.features(), 2), db_.features());
    layout_.reserve(db_.size());
    for (std::size_t i = 0; i < db_.size(); ++i) layout_.push_back({projected(i, 0), projected(i, 1)});
  }
}

std::shared_ptr<Service::Entry> Service::lookup(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

GroupStore Service::group_snapshot() const {
  std::shared_lock lock(groups_mutex_);
  return groups_;
}

ApiResponse Service::health() const {
  ordered_json body;
  body["status"] = "ok";
  body["items"] = db_.size();
  body["dim"] = db_.dim();
  {
    std::shared_lock lock(groups_mutex_);
    body["groups"] = groups_.group_count();
  }
  return ok(std::move(body));
}

ApiResponse Service::list_items(std::size_t offset, std::size_t limit) const {
  ordered_json items = ordered_json::array();
  const std::size_t end = std::min(db_.size(), offset + limit);
  for (std::size_t i = std::min(offset, db_.size()); i < end; ++i) {
    ordered_json item;
    item["id"] = db_.id(i);
    item["thumbnail"] = db_.item(i).thumbnail ? ordered_json("/thumbnails/" + *db_.item(i).thumbnail) : nullptr;
    if (!layout_.empty()) item["layout"] = {layout_[i][0], layout_[i][1]};
    items.push_back(std::move(item));
  }
  ordered_json body;
  body["total"] = db_.size();
  body["offset"] = offset;
  body["items"] = std::move(items);
  return ok(std::move(body));
}

ordered_json Service::batch_json(const SessionState& state) const {
  ordered_json items = ordered_json::array();
  for (const auto& e : state.current_batch().entries) {
    ordered_json item;
    item["id"] = e.id;
    item["distance"] = e.distance;
    const auto& thumb = db_.item(e.index).thumbnail;
    item["thumbnail"] = thumb ? ordered_json("/thumbnails/" + *thumb) : nullptr;
    if (!layout_.empty()) item["layout"] = {layout_[e.index][0], layout_[e.index][1]};
    item["from_group"] = e.from_group;
    items.push_back(std::move(item));
  }
  ordered_json body;
  body["session_id"] = state.session_id;
  body["iteration"] = state.iteration;
  body["status"] = to_string(state.status);
  body["relevant_so_far"] = state.relevant.size();
  body["items"] = std::move(items);
  body["warnings"] = state.warnings;
  return body;
}

ordered_json Service::handle_json(const std::string& id, const Entry& entry) const {
  ordered_json h;
  h["id"] = id;
  h["created_at"] = entry.created_at;
  h["config"] = to_json(entry.state.config);
  if (entry.state.query.id) h["query_id"] = *entry.state.query.id;
  return h;
}

ApiResponse Service::create_session(const json& body) {
  if (!body.is_object()) return error(400, "request body must be a JSON object");
  SessionConfig cfg = defaults_;
  Query query;
  try {
    if (body.contains("query_id")) {
      query.id = body.at("query_id").get<std::string>();
      if (!db_.find(*query.id)) return error(404, "unknown item id: " + *query.id, {{"id", *query.id}});
    } else if (body.contains("query_vector")) {
      query.vector = body.at("query_vector").get<std::vector<double>>();
    } else {
      return error(400, "one of query_id or query_vector is required");
    }
    cfg.scope = body.value("scope", cfg.scope);
    cfg.max_iterations = body.value("max_iterations", cfg.max_iterations);
    cfg.delta = body.value("delta", cfg.delta);
    cfg.grouping_enabled = body.value("grouping", cfg.grouping_enabled);
    cfg.rng_seed = body.value("seed", cfg.rng_seed);
    if (body.contains("weight_mode")) cfg.weight_mode = parse_weight_mode(body.at("weight_mode").get<std::string>());
  } catch (const json::exception& e) {
    return error(400, std::string("bad request: ") + e.what());
  } catch (const ParameterError& e) {
    return error(400, e.what());
  }

  const std::size_t seq = next_session_++;
  const std::string id = "s" + std::to_string(seq);
  auto entry = std::make_shared<Entry>();
  try {
    entry->state = start_session(query, db_, cfg, id);
  } catch (const ParameterError& e) {
    return error(400, e.what());
  } catch (const ShapeError& e) {
    return error(400, e.what());
  }
  entry->created_at = seq;
  if (entry->state.complete()) on_complete(entry->state);

  ordered_json out;
  out["session"] = handle_json(id, *entry);
  out["batch"] = batch_json(entry->state);
  {
    std::unique_lock lock(sessions_mutex_);
    sessions_.emplace(id, std::move(entry));
  }
  return ok(std::move(out), 201);
}

ApiResponse Service::get_session(const std::string& id) const {
  auto entry = lookup(id);
  if (!entry) return error(404, "unknown session: " + id);
  std::lock_guard lock(entry->mutex);
  auto h = handle_json(id, *entry);
  h["status"] = to_string(entry->state.status);
  h["iteration"] = entry->state.iteration;
  return ok(std::move(h));
}

ApiResponse Service::get_batch(const std::string& id) const {
  auto entry = lookup(id);
  if (!entry) return error(404, "unknown session: " + id);
  std::lock_guard lock(entry->mutex);
  return ok(batch_json(entry->state));
}

ApiResponse Service::submit_feedback(const std::string& id, const json& body) {
  auto entry = lookup(id);
  if (!entry) return error(404, "unknown session: " + id);
  std::vector<std::string> relevant;
  try {
    relevant = body.at("relevant_ids").get<std::vector<std::string>>();
  } catch (const json::exception&) {
    return error(400, "relevant_ids must be an array of item ids");
  }

  std::lock_guard lock(entry->mutex);
  SessionState& state = entry->state;
  if (state.complete()) return error(409, "session " + id + " is already complete");
  std::unordered_set<std::string> batch_ids;
  for (const auto& e : state.current_batch().entries) batch_ids.insert(e.id);
  for (const auto& r : relevant) {
    if (!batch_ids.count(r)) return error(422, "id '" + r + "' is not in the current batch", {{"id", r}});
  }

  const std::size_t events_before = state.events.size();
  {
    std::shared_lock groups_lock(groups_mutex_);
    std::int64_t stamp;
    {
      std::lock_guard events_lock(events_mutex_);
      stamp = event_clock_++;
    }
    refine::submit_feedback(state, db_, relevant, &groups_, stamp);
  }
  {
    std::lock_guard events_lock(events_mutex_);
    for (std::size_t k = events_before; k < state.events.size(); ++k) {
      events_.push_back(state.events[k]);
      if (events_path_) append_event(*events_path_, state.events[k]);
    }
  }

  ordered_json out;
  out["status"] = to_string(state.status);
  if (state.complete()) {
    on_complete(state);
    out["metrics"] = to_json(session_metrics(state));
  } else {
    out["batch"] = batch_json(state);
  }
  return ok(std::move(out));
}

void Service::on_complete(const SessionState& state) {
  {
    std::unique_lock lock(groups_mutex_);
    record_session(groups_, state.relevant_ids(db_), state.matched_roots);
    if (groups_path_) groups_.save(*groups_path_);
  }
  const auto metrics = session_metrics(state);
  ordered_json summary;
  summary["session_id"] = state.session_id;
  summary["final_accuracy"] = metrics.final_accuracy();
  summary["rf_iteration_number"] = metrics.rf_iteration_number;
  std::lock_guard lock(events_mutex_);
  recent_.push_back(std::move(summary));
  while (recent_.size() > kRecentSessions) recent_.pop_front();
}

ApiResponse Service::get_metrics(const std::string& id) const {
  auto entry = lookup(id);
  if (!entry) return error(404, "unknown session: " + id);
  std::lock_guard lock(entry->mutex);
  auto body = to_json(progress_metrics(entry->state));
  body["status"] = to_string(entry->state.status);
  if (!entry->state.complete()) body["rf_iteration_number"] = nullptr;
  return ok(std::move(body));
}

ApiResponse Service::groups() const {
  ordered_json body;
  {
    std::shared_lock lock(groups_mutex_);
    body["group_count"] = groups_.group_count();
    body["grouped_items"] = groups_.member_count();
    body["generation"] = groups_.generation();
    ordered_json histogram = ordered_json::object();
    for (const auto& [size, count] : groups_.size_histogram()) histogram[std::to_string(size)] = count;
    body["size_histogram"] = std::move(histogram);
    ordered_json list = ordered_json::array();
    for (const auto& root : groups_.roots()) list.push_back({{"root", root}, {"size", groups_.group_size(root)}});
    body["groups"] = std::move(list);
  }
  std::lock_guard lock(events_mutex_);
  ordered_json recent = ordered_json::array();
  for (const auto& r : recent_) recent.push_back(r);
  body["recent_sessions"] = std::move(recent);
  return ok(std::move(body));
}

ApiResponse Service::export_pairs(const json&) const {
  std::vector<FeedbackEvent> events;
  {
    std::lock_guard lock(events_mutex_);
    events = events_;
  }
  std::ostringstream csv;
  write_pairs_csv(csv, refine::export_pairs(events), &db_);
  ApiResponse r;
  r.text = csv.str();
  r.content_type = "text/csv";
  return r;
}

ApiResponse Service::export_classes(const json& body) const {
  std::size_t min_size = 10;
  double val_fraction = 0.2;
  std::uint64_t seed = defaults_.rng_seed;
  try {
    if (body.is_object()) {
      min_size = body.value("min_size", min_size);
      val_fraction = body.value("val_fraction", val_fraction);
      seed = body.value("seed", seed);
    }
  } catch (const json::exception& e) {
    return error(400, std::string("bad request: ") + e.what());
  }
  try {
    std::shared_lock lock(groups_mutex_);
    return ok(to_json(export_class_dataset(groups_, min_size, val_fraction, seed)));
  } catch (const ExportError& e) {
    return error(422, e.what());
  } catch (const ParameterError& e) {
    return error(400, e.what());
  }
}

struct HttpServer::Impl {
  httplib::Server server;
};

namespace {

void send(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  if (!r.text.empty() || r.content_type != "application/json") {
    res.set_content(r.text, r.content_type);
  } else {
    res.set_content(r.body.dump(), "application/json");
  }
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  return json::parse(req.body);
}

}  // namespace

HttpServer::HttpServer(Service& service, std::optional<std::filesystem::path> thumbnails_root,
                       std::optional<std::filesystem::path> static_root)
    : impl_(std::make_unique<Impl>()) {
  auto& svr = impl_->server;
  Service* s = &service;

  svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    ApiResponse r;
    try {
      std::rethrow_exception(ep);
    } catch (const json::exception& e) {
      r = error(400, std::string("malformed JSON: ") + e.what());
    } catch (const std::exception& e) {
      r = error(500, e.what());
    }
    send(res, r);
  });

  svr.Get("/health", [s](const httplib::Request&, httplib::Response& res) { send(res, s->health()); });
  svr.Get("/items", [s](const httplib::Request& req, httplib::Response& res) {
    const std::size_t offset = req.has_param("offset") ? std::stoul(req.get_param_value("offset")) : 0;
    const std::size_t limit = req.has_param("limit") ? std::stoul(req.get_param_value("limit")) : 100;
    send(res, s->list_items(offset, limit));
  });
  svr.Post("/sessions", [s](const httplib::Request& req, httplib::Response& res) {
    send(res, s->create_session(parse_body(req)));
  });
  svr.Get(R"(/sessions/([^/]+))", [s](const httplib::Request& req, httplib::Response& res) {
    send(res, s->get_session(req.matches[1]));
  });
  svr.Get(R"(/sessions/([^/]+)/batch)", [s](const httplib::Request& req, httplib::Response& res) {
    send(res, s->get_batch(req.matches[1]));
  });
  svr.Post(R"(/sessions/([^/]+)/feedback)", [s](const httplib::Request& req, httplib::Response& res) {
    send(res, s->submit_feedback(req.matches[1], parse_body(req)));
  });
  svr.Get(R"(/sessions/([^/]+)/metrics)", [s](const httplib::Request& req, httplib::Response& res) {
    send(res, s->get_metrics(req.matches[1]));
  });
  svr.Get("/groups", [s](const httplib::Request&, httplib::Response& res) { send(res, s->groups()); });
  svr.Post("/export/pairs", [s](const httplib::Request& req, httplib::Response& res) {
    send(res, s->export_pairs(parse_body(req)));
  });
  svr.Post("/export/classes", [s](const httplib::Request& req, httplib::Response& res) {
    send(res, s->export_classes(parse_body(req)));
  });

  if (thumbnails_root && !svr.set_mount_point("/thumbnails", thumbnails_root->string())) {
    throw Error("thumbnail root does not exist: " + thumbnails_root->string());
  }
  if (static_root && !svr.set_mount_point("/", static_root->string())) {
    throw Error("static root does not exist: " + static_root->string());
  }
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

void serve(const ServerOptions& options) {
  Dataset db = load_features(options.features, load_manifest(options.manifest));
  Service service(std::move(db), options.defaults, options.groups_path, options.events_path);
  HttpServer http(service, options.thumbnails_root, options.static_root);
  const int port = http.bind(options.host, options.port);
  std::fprintf(stderr, "refine: serving %zu items on http://%s:%d\n", service.dataset().size(),
               options.host.c_str(), port);
  http.listen();
}

}  // namespace refine
