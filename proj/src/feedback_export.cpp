#include "refine/feedback_export.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <unordered_set>

#include "refine/errors.hpp"
#include "refine/random.hpp"

namespace refine {

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> unique_in_order(const std::vector<std::string>& ids) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (seen.insert(id).second) out.push_back(id);
  }
  return out;
}

}  // namespace

PairExport export_pairs(std::span<const FeedbackEvent> events) {
  std::vector<std::size_t> order(events.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return events[a].timestamp < events[b].timestamp; });

  PairExport out;
  out.per_event.resize(events.size());
  std::map<std::pair<std::string, std::string>, PairRecord> pooled;

  auto emit = [&](const std::string& x, const std::string& y, int label, std::size_t source) {
    auto key = x < y ? std::pair{x, y} : std::pair{y, x};
    auto [it, inserted] = pooled.try_emplace(key);
    PairRecord& rec = it->second;
    if (inserted) {
      rec.id_a = key.first;
      rec.id_b = key.second;
    } else if (rec.label != label) {
      if (!rec.flagged) ++out.conflicts;
      rec.flagged = true;
    }
    rec.label = label;
    rec.source_event = source;
  };

  for (std::size_t e : order) {
    const auto shown = unique_in_order(events[e].shown);
    const auto relevant = unique_in_order(events[e].relevant);
    const std::unordered_set<std::string> relevant_set(relevant.begin(), relevant.end());
    std::vector<std::string> nonrelevant;
    for (const auto& id : shown) {
      if (!relevant_set.count(id)) nonrelevant.push_back(id);
    }
    PairCounts& counts = out.per_event[e];
    for (std::size_t i = 0; i < relevant.size(); ++i) {
      for (std::size_t j = i + 1; j < relevant.size(); ++j) {
        emit(relevant[i], relevant[j], 1, e);
        ++counts.similar;
      }
    }
    for (const auto& r : relevant) {
      for (const auto& n : nonrelevant) {
        emit(r, n, 0, e);
        ++counts.dissimilar;
      }
    }
  }

  out.pairs.reserve(pooled.size());
  for (auto& [_, rec] : pooled) out.pairs.push_back(std::move(rec));
  return out;
}

void write_pairs_csv(std::ostream& out, const PairExport& pairs, const Dataset* dataset) {
  const bool thumbs = dataset != nullptr &&
                      std::any_of(dataset->items().begin(), dataset->items().end(),
                                  [](const ItemRecord& r) { return r.thumbnail.has_value(); });
  auto thumbnail = [&](const std::string& id) -> std::string {
    auto i = dataset->find(id);
    if (!i) return {};
    return dataset->item(*i).thumbnail.value_or("");
  };
  out << "id_a,id_b,label,flagged";
  if (thumbs) out << ",thumbnail_a,thumbnail_b";
  out << '\n';
  for (const auto& p : pairs.pairs) {
    out << csv_field(p.id_a) << ',' << csv_field(p.id_b) << ',' << p.label << ',' << (p.flagged ? 1 : 0);
    if (thumbs) out << ',' << csv_field(thumbnail(p.id_a)) << ',' << csv_field(thumbnail(p.id_b));
    out << '\n';
  }
}

ClassDatasetManifest export_class_dataset(const GroupStore& store, std::size_t min_size, double val_fraction,
                                          std::uint64_t seed) {
  if (store.empty()) throw ExportError("group store is empty");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ParameterError("val_fraction must be in [0, 1)");

  ClassDatasetManifest manifest;
  manifest.min_size = min_size;
  manifest.val_fraction = val_fraction;
  manifest.seed = seed;

  Rng rng(seed);
  for (const auto& root : store.roots()) {
    auto members = store.members(root);
    if (members.size() < min_size) {
      manifest.pruned_groups.push_back(root);
      continue;
    }
    // The epsilon keeps e.g. 0.29 * 100 from flooring to 28.
    const auto n_val =
        static_cast<std::size_t>(std::floor(static_cast<double>(members.size()) * val_fraction + 1e-9));
    rng.shuffle(std::span(members));
    ClassGroup group;
    group.root = root;
    group.validation.assign(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_val));
    group.train.assign(members.begin() + static_cast<std::ptrdiff_t>(n_val), members.end());
    std::sort(group.validation.begin(), group.validation.end());
    std::sort(group.train.begin(), group.train.end());
    manifest.groups.push_back(std::move(group));
  }
  if (manifest.groups.empty()) {
    throw ExportError("all " + std::to_string(manifest.pruned_groups.size()) + " groups are smaller than " +
                      std::to_string(min_size));
  }
  return manifest;
}

nlohmann::ordered_json to_json(const ClassDatasetManifest& manifest) {
  nlohmann::ordered_json j;
  j["min_size"] = manifest.min_size;
  j["val_fraction"] = manifest.val_fraction;
  j["seed"] = manifest.seed;
  j["groups"] = nlohmann::ordered_json::array();
  for (const auto& g : manifest.groups) {
    nlohmann::ordered_json entry;
    entry["root"] = g.root;
    entry["size"] = g.train.size() + g.validation.size();
    entry["train"] = g.train;
    entry["validation"] = g.validation;
    j["groups"].push_back(std::move(entry));
  }
  j["pruned_groups"] = manifest.pruned_groups;
  return j;
}

}  // namespace refine
