#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "refine/dataset.hpp"
#include "refine/group_store.hpp"
#include "refine/session.hpp"

namespace refine {

struct ServerOptions {
  std::filesystem::path manifest;
  std::filesystem::path features;
  // GroupStore file; loaded at start when present, rewritten on every
  // completed session.
  std::optional<std::filesystem::path> groups_path;
  // Feedback events are appended here as they arrive.
  std::optional<std::filesystem::path> events_path;
  std::optional<std::filesystem::path> thumbnails_root;
  std::optional<std::filesystem::path> static_root;
  SessionConfig defaults;
  std::string host = "127.0.0.1";
  int port = 8080;
};

struct ApiResponse {
  int status = 200;
  nlohmann::ordered_json body;
  // When non-empty, sent instead of body with this content type.
  std::string text;
  std::string content_type = "application/json";
};

// Request handling independent of the HTTP transport. Safe for concurrent
// calls: each session is mutated under its own lock and the group store is
// single-writer / multi-reader.
class Service {
 public:
  Service(Dataset db, SessionConfig defaults, std::optional<std::filesystem::path> groups_path = {},
          std::optional<std::filesystem::path> events_path = {});

  ApiResponse health() const;
  ApiResponse list_items(std::size_t offset, std::size_t limit) const;
  ApiResponse create_session(const nlohmann::json& body);
  ApiResponse get_session(const std::string& id) const;
  ApiResponse get_batch(const std::string& id) const;
  ApiResponse submit_feedback(const std::string& id, const nlohmann::json& body);
  ApiResponse get_metrics(const std::string& id) const;
  ApiResponse groups() const;
  ApiResponse export_pairs(const nlohmann::json& body) const;
  ApiResponse export_classes(const nlohmann::json& body) const;

  const Dataset& dataset() const noexcept { return db_; }
  GroupStore group_snapshot() const;

 private:
  struct Entry {
    mutable std::mutex mutex;
    SessionState state;
    std::size_t created_at = 0;
  };

  std::shared_ptr<Entry> lookup(const std::string& id) const;
  nlohmann::ordered_json batch_json(const SessionState& state) const;
  nlohmann::ordered_json handle_json(const std::string& id, const Entry& entry) const;
  void on_complete(const SessionState& state);

  Dataset db_;
  SessionConfig defaults_;
  std::optional<std::filesystem::path> groups_path_;
  std::optional<std::filesystem::path> events_path_;
  // 2-D projection of every item for placeholder tiles; empty when the data
  // cannot support it.
  std::vector<std::array<double, 2>> layout_;

  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::atomic<std::size_t> next_session_{1};

  mutable std::shared_mutex groups_mutex_;
  GroupStore groups_;

  mutable std::mutex events_mutex_;
  std::vector<FeedbackEvent> events_;
  std::deque<nlohmann::ordered_json> recent_;
  std::int64_t event_clock_ = 0;
};

// HTTP front end for a Service.
class HttpServer {
 public:
  HttpServer(Service& service, std::optional<std::filesystem::path> thumbnails_root = {},
             std::optional<std::filesystem::path> static_root = {});
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds; port 0 picks a free port. Returns the bound port. Throws Error on
  // bind failure.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Loads the dataset and group store, then serves until stopped. Throws on
// load or bind failure.
void serve(const ServerOptions& options);

}  // namespace refine
