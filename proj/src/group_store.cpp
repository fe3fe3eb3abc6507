#include "refine/group_store.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "refine/errors.hpp"
#include "refine/random.hpp"

namespace refine {

using nlohmann::json;

bool GroupStore::contains(std::string_view id) const { return lookup(id).has_value(); }

std::optional<GroupStore::Node> GroupStore::lookup(std::string_view id) const {
  auto it = node_of_.find(std::string(id));
  if (it == node_of_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> GroupStore::root_of(std::string_view id) const {
  auto n = lookup(id);
  if (!n) return std::nullopt;
  return ids_[find(*n)];
}

GroupStore::Node GroupStore::node_for(const std::string& id) {
  if (auto it = node_of_.find(id); it != node_of_.end()) return it->second;
  const auto n = static_cast<Node>(ids_.size());
  ids_.push_back(id);
  node_of_.emplace(id, n);
  parent_.push_back(n);
  size_.push_back(1);
  groups_[n] = {n};
  return n;
}

GroupStore::Node GroupStore::find(Node n) const {
  while (parent_[n] != n) n = parent_[n];
  return n;
}

GroupStore::Node GroupStore::find_compress(Node n) {
  Node root = find(n);
  while (parent_[n] != root) {
    Node next = parent_[n];
    parent_[n] = root;
    n = next;
  }
  return root;
}

// Union by size; on equal sizes the lexicographically smaller root id wins.
GroupStore::Node GroupStore::link(Node a, Node b) {
  a = find_compress(a);
  b = find_compress(b);
  if (a == b) return a;
  if (size_[a] < size_[b] || (size_[a] == size_[b] && ids_[b] < ids_[a])) std::swap(a, b);
  parent_[b] = a;
  size_[a] += size_[b];
  auto& into = groups_[a];
  auto& from = groups_[b];
  into.insert(into.end(), from.begin(), from.end());
  groups_.erase(b);
  return a;
}

std::vector<std::string> GroupStore::roots() const {
  std::vector<std::string> out;
  out.reserve(groups_.size());
  for (const auto& [root, _] : groups_) out.push_back(ids_[root]);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> GroupStore::members(std::string_view root) const {
  std::vector<std::string> out;
  auto n = lookup(root);
  if (!n) return out;
  auto it = groups_.find(*n);
  if (it == groups_.end()) return out;
  out.reserve(it->second.size());
  for (Node m : it->second) out.push_back(ids_[m]);
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t GroupStore::group_size(std::string_view root) const {
  auto n = lookup(root);
  if (!n || parent_[*n] != *n) return 0;
  return size_[*n];
}

std::map<std::size_t, std::size_t> GroupStore::size_histogram() const {
  std::map<std::size_t, std::size_t> out;
  for (const auto& [root, _] : groups_) ++out[size_[root]];
  return out;
}

std::string GroupStore::unite(std::span<const std::string> ids, std::span<const std::string> roots) {
  std::optional<Node> acc;
  auto absorb = [&](Node n) { acc = acc ? link(*acc, n) : find_compress(n); };
  for (const auto& r : roots) {
    if (auto n = lookup(r)) absorb(*n);
  }
  for (const auto& id : ids) absorb(node_for(id));
  if (!acc) throw ValidationError("unite: nothing to group");
  return ids_[*acc];
}

void GroupStore::write(std::ostream& out) const {
  json header = {{"format", "refine-groups"}, {"version", 1}, {"generation", generation_}};
  out << header.dump() << '\n';
  std::vector<std::pair<std::string, std::string>> rows;
  rows.reserve(ids_.size());
  for (Node n = 0; n < ids_.size(); ++n) rows.emplace_back(ids_[find(n)], ids_[n]);
  std::sort(rows.begin(), rows.end());
  for (const auto& [root, id] : rows) {
    nlohmann::ordered_json line;
    line["id"] = id;
    line["root"] = root;
    out << line.dump() << '\n';
  }
}

GroupStore GroupStore::parse(std::istream& in) {
  GroupStore store;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::unordered_set<std::string> listed;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
      if (!header_seen) {
        if (obj.value("format", "") != "refine-groups") throw FormatError("group store: missing header", line_no);
        store.generation_ = obj.at("generation").get<std::uint64_t>();
        header_seen = true;
        continue;
      }
      const auto id = obj.at("id").get<std::string>();
      const auto root = obj.at("root").get<std::string>();
      if (!listed.insert(id).second) throw FormatError("group store: id '" + id + "' listed twice", line_no);
      const Node r = store.node_for(root);
      const Node n = store.node_for(id);
      if (store.parent_[r] != r) throw FormatError("group store: root '" + root + "' is itself a member", line_no);
      if (n != r) {
        if (store.parent_[n] != n || store.size_[n] != 1) {
          throw FormatError("group store: id '" + id + "' is already a root", line_no);
        }
        store.parent_[n] = r;
        store.size_[r] += 1;
        store.groups_[r].push_back(n);
        store.groups_.erase(n);
      }
    } catch (const json::exception& e) {
      throw FormatError(std::string("group store: ") + e.what(), line_no);
    }
  }
  return store;
}

void GroupStore::save(const std::filesystem::path& path) const {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write file: " + tmp);
    write(out);
  }
  std::filesystem::rename(tmp, path);
}

GroupStore GroupStore::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path.string());
  return parse(in);
}

bool GroupStore::operator==(const GroupStore& other) const {
  if (generation_ != other.generation_ || ids_.size() != other.ids_.size()) return false;
  for (const auto& id : ids_) {
    if (root_of(id) != other.root_of(id)) return false;
  }
  return true;
}

void write_event(std::ostream& out, const FeedbackEvent& event) {
  nlohmann::ordered_json obj;
  obj["session_id"] = event.session_id;
  obj["query_id"] = event.query_id;
  obj["iteration"] = event.iteration;
  obj["shown"] = event.shown;
  obj["relevant"] = event.relevant;
  obj["timestamp"] = event.timestamp;
  out << obj.dump() << '\n';
}

std::vector<FeedbackEvent> parse_events(std::istream& in) {
  std::vector<FeedbackEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    FeedbackEvent e;
    try {
      const json obj = json::parse(line);
      e.session_id = obj.value("session_id", "");
      e.query_id = obj.value("query_id", "");
      e.iteration = obj.value("iteration", std::size_t{0});
      e.shown = obj.at("shown").get<std::vector<std::string>>();
      e.relevant = obj.at("relevant").get<std::vector<std::string>>();
      e.timestamp = obj.value("timestamp", std::int64_t{0});
    } catch (const json::exception& ex) {
      throw FormatError(std::string("event log: ") + ex.what(), line_no);
    }
    std::unordered_set<std::string> shown(e.shown.begin(), e.shown.end());
    for (const auto& r : e.relevant) {
      if (!shown.count(r)) throw ValidationError("event log: relevant id '" + r + "' was not shown");
    }
    events.push_back(std::move(e));
  }
  return events;
}

std::vector<FeedbackEvent> load_events(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path.string());
  return parse_events(in);
}

void append_event(const std::filesystem::path& path, const FeedbackEvent& event) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot write file: " + path.string());
  write_event(out, event);
}

std::set<std::string> match_groups(const GroupStore& store, std::span<const std::string> relevant_ids) {
  std::set<std::string> roots;
  for (const auto& id : relevant_ids) {
    if (auto r = store.root_of(id)) roots.insert(*r);
  }
  return roots;
}

std::vector<std::string> group_fill(const GroupStore& store, const std::set<std::string>& roots,
                                    std::size_t needed,
                                    const std::function<bool(const std::string&)>& excluded,
                                    std::uint64_t seed) {
  if (needed == 0) return {};
  std::vector<std::string> pool;
  std::set<std::string> seen_roots;
  for (const auto& r : roots) {
    auto current = store.root_of(r);
    if (!current || !seen_roots.insert(*current).second) continue;
    for (auto& m : store.members(*current)) {
      if (!excluded || !excluded(m)) pool.push_back(std::move(m));
    }
  }
  std::sort(pool.begin(), pool.end());
  Rng rng(seed);
  const std::size_t take = std::min(needed, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(take);
  return pool;
}

std::vector<std::string> group_fill(const GroupStore& store, const std::set<std::string>& roots,
                                    std::size_t needed, const std::unordered_set<std::string>& exclude,
                                    std::uint64_t seed) {
  return group_fill(
      store, roots, needed, [&](const std::string& id) { return exclude.count(id) > 0; }, seed);
}

RecordOutcome record_session(GroupStore& store, std::span<const std::string> final_relevant,
                             const std::set<std::string>& matched_roots) {
  if (final_relevant.empty()) return RecordOutcome::kNoOp;
  std::set<std::string> roots;
  for (const auto& r : matched_roots) {
    if (auto current = store.root_of(r)) roots.insert(*current);
  }
  for (const auto& r : match_groups(store, final_relevant)) roots.insert(r);

  const std::vector<std::string> root_list(roots.begin(), roots.end());
  store.unite(final_relevant, root_list);
  store.bump_generation();
  if (roots.empty()) return RecordOutcome::kCreated;
  return roots.size() == 1 ? RecordOutcome::kExtended : RecordOutcome::kMerged;
}

const char* to_string(RecordOutcome outcome) {
  switch (outcome) {
    case RecordOutcome::kNoOp: return "noop";
    case RecordOutcome::kCreated: return "created";
    case RecordOutcome::kExtended: return "extended";
    case RecordOutcome::kMerged: return "merged";
  }
  return "unknown";
}

}  // namespace refine
