#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace refine {

// Partition of item ids into learned groups, kept as a union-find forest
// (union by size, path compression on writes). A group is named by the id of
// its root member.
class GroupStore {
 public:
  bool empty() const noexcept { return groups_.empty(); }
  bool contains(std::string_view id) const;

  // Root of the group holding id, or nullopt when id is ungrouped.
  std::optional<std::string> root_of(std::string_view id) const;

  std::size_t group_count() const noexcept { return groups_.size(); }
  std::size_t member_count() const noexcept { return ids_.size(); }
  std::uint64_t generation() const noexcept { return generation_; }

  // Sorted roots.
  std::vector<std::string> roots() const;
  // Sorted members of the group rooted at root; empty if root is not a root.
  std::vector<std::string> members(std::string_view root) const;
  std::size_t group_size(std::string_view root) const;
  // size -> number of groups of that size.
  std::map<std::size_t, std::size_t> size_histogram() const;

  // Puts every id in one group with the given existing roots. Ids already
  // grouped elsewhere pull their groups in too. Returns the resulting root.
  std::string unite(std::span<const std::string> ids, std::span<const std::string> roots);

  void bump_generation() noexcept { ++generation_; }

  // Membership as JSON lines: a header {"format","version","generation"} and
  // one {"id","root"} object per member, sorted by root then id.
  void write(std::ostream& out) const;
  static GroupStore parse(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static GroupStore load(const std::filesystem::path& path);

  bool operator==(const GroupStore& other) const;

 private:
  using Node = std::uint32_t;

  Node node_for(const std::string& id);
  std::optional<Node> lookup(std::string_view id) const;
  Node find(Node n) const;
  Node find_compress(Node n);
  Node link(Node a, Node b);

  std::vector<std::string> ids_;
  std::unordered_map<std::string, Node> node_of_;
  std::vector<Node> parent_;
  std::vector<std::uint32_t> size_;
  // root -> members
  std::unordered_map<Node, std::vector<Node>> groups_;
  std::uint64_t generation_ = 0;
};

// One round of relevance marks. relevant is a subset of shown.
struct FeedbackEvent {
  std::string session_id;
  std::string query_id;
  std::size_t iteration = 0;
  std::vector<std::string> shown;
  std::vector<std::string> relevant;
  std::int64_t timestamp = 0;

  bool operator==(const FeedbackEvent&) const = default;
};

void write_event(std::ostream& out, const FeedbackEvent& event);
std::vector<FeedbackEvent> parse_events(std::istream& in);
std::vector<FeedbackEvent> load_events(const std::filesystem::path& path);
void append_event(const std::filesystem::path& path, const FeedbackEvent& event);

// Roots of every group holding at least one of relevant_ids.
std::set<std::string> match_groups(const GroupStore& store, std::span<const std::string> relevant_ids);

// Up to `needed` distinct members of the union of the given groups, drawn
// without replacement after dropping ids for which `excluded` is true. When
// fewer are available all of them are returned. Deterministic per seed.
std::vector<std::string> group_fill(const GroupStore& store, const std::set<std::string>& roots,
                                    std::size_t needed,
                                    const std::function<bool(const std::string&)>& excluded,
                                    std::uint64_t seed);
std::vector<std::string> group_fill(const GroupStore& store, const std::set<std::string>& roots,
                                    std::size_t needed, const std::unordered_set<std::string>& exclude,
                                    std::uint64_t seed);

enum class RecordOutcome { kNoOp, kCreated, kExtended, kMerged };

// Folds a finished session's relevant set into the store: a new group when
// nothing matched, a union with the single matched group, or a merge of all
// matched groups plus the relevant ids. Stale roots are resolved to their
// current root, and relevant ids that are already grouped count as matches.
RecordOutcome record_session(GroupStore& store, std::span<const std::string> final_relevant,
                             const std::set<std::string>& matched_roots);

const char* to_string(RecordOutcome outcome);

}  // namespace refine
