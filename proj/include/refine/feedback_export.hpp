#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "refine/dataset.hpp"
#include "refine/group_store.hpp"

namespace refine {

// An unordered item pair with a similarity label; id_a < id_b.
struct PairRecord {
  std::string id_a;
  std::string id_b;
  int label = 0;  // 1 similar, 0 dissimilar
  // Set when events disagreed on the label; the latest event wins.
  bool flagged = false;
  // Position in the input event list of the event that set the label.
  std::size_t source_event = 0;

  bool operator==(const PairRecord&) const = default;
};

struct PairCounts {
  std::size_t similar = 0;
  std::size_t dissimilar = 0;
};

struct PairExport {
  // Canonical and deduplicated, sorted by (id_a, id_b).
  std::vector<PairRecord> pairs;
  // Pre-deduplication counts, one entry per input event.
  std::vector<PairCounts> per_event;
  std::size_t conflicts = 0;
};

// C(r1,2) similar pairs among each event's relevant ids and r1*r2 dissimilar
// pairs between its relevant and non-relevant ids, pooled over events.
// Events are applied in timestamp order (stable), so later events win label
// conflicts.
PairExport export_pairs(std::span<const FeedbackEvent> events);

// Header "id_a,id_b,label,flagged". When a dataset with thumbnails is given,
// thumbnail_a and thumbnail_b columns are appended.
void write_pairs_csv(std::ostream& out, const PairExport& pairs, const Dataset* dataset = nullptr);

struct ClassGroup {
  std::string root;
  std::vector<std::string> train;
  std::vector<std::string> validation;
};

struct ClassDatasetManifest {
  std::size_t min_size = 10;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  std::vector<ClassGroup> groups;
  std::vector<std::string> pruned_groups;
};

// Drops groups smaller than min_size, then moves floor(size * val_fraction)
// randomly chosen members of each remaining group to validation. Throws
// ExportError on an empty store or when every group is pruned.
ClassDatasetManifest export_class_dataset(const GroupStore& store, std::size_t min_size = 10,
                                          double val_fraction = 0.2, std::uint64_t seed = 0);

nlohmann::ordered_json to_json(const ClassDatasetManifest& manifest);

}  // namespace refine
