#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "refine/errors.hpp"
#include "refine/feedback_export.hpp"
#include "refine/random.hpp"

using namespace refine;

namespace {

FeedbackEvent event_of(std::size_t r1, std::size_t r2, const std::string& prefix = "e", std::int64_t ts = 0) {
  FeedbackEvent e;
  e.session_id = "s";
  e.timestamp = ts;
  for (std::size_t i = 0; i < r1; ++i) {
    e.shown.push_back(prefix + "r" + std::to_string(i));
    e.relevant.push_back(prefix + "r" + std::to_string(i));
  }
  for (std::size_t i = 0; i < r2; ++i) e.shown.push_back(prefix + "n" + std::to_string(i));
  return e;
}

// All unordered pairs of an event enumerated directly from shown x shown.
std::pair<std::size_t, std::size_t> brute_counts(const FeedbackEvent& e) {
  const std::set<std::string> rel(e.relevant.begin(), e.relevant.end());
  std::size_t similar = 0;
  std::size_t dissimilar = 0;
  for (std::size_t i = 0; i < e.shown.size(); ++i) {
    for (std::size_t j = i + 1; j < e.shown.size(); ++j) {
      const bool a = rel.count(e.shown[i]) > 0;
      const bool b = rel.count(e.shown[j]) > 0;
      if (a && b) ++similar;
      if (a != b) ++dissimilar;
    }
  }
  return {similar, dissimilar};
}

ClassGroup find_group(const ClassDatasetManifest& m, const std::string& root) {
  for (const auto& g : m.groups)
    if (g.root == root) return g;
  return {};
}

}  // namespace

TEST_CASE("pair counts for small events") {
  const std::vector<FeedbackEvent> three_two{event_of(3, 2)};
  PairExport out = export_pairs(three_two);
  CHECK(out.pairs.size() == 9);
  CHECK(out.per_event[0].similar == 3);
  CHECK(out.per_event[0].dissimilar == 6);

  const std::vector<FeedbackEvent> none{event_of(0, 5)};
  out = export_pairs(none);
  CHECK(out.pairs.empty());

  const std::vector<FeedbackEvent> all{event_of(20, 0)};
  out = export_pairs(all);
  CHECK(out.per_event[0].similar == 190);
  CHECK(out.per_event[0].dissimilar == 0);
}

TEST_CASE("pairs are canonical, never self-pairs, and order independent") {
  Rng rng(3);
  FeedbackEvent e = event_of(6, 5);
  const PairExport base = export_pairs(std::vector<FeedbackEvent>{e});
  for (const auto& p : base.pairs) {
    CHECK(p.id_a < p.id_b);
    CHECK(p.label >= 0);
    CHECK(p.label <= 1);
  }
  for (int k = 0; k < 10; ++k) {
    rng.shuffle(std::span(e.shown));
    rng.shuffle(std::span(e.relevant));
    CHECK(export_pairs(std::vector<FeedbackEvent>{e}).pairs == base.pairs);
  }
}

TEST_CASE("per-event counts match enumeration over random events") {
  Rng rng(4);
  std::vector<FeedbackEvent> events;
  for (int k = 0; k < 40; ++k) {
    FeedbackEvent e;
    const std::size_t n = rng.uniform_index(15);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string id = "x" + std::to_string(rng.uniform_index(30));
      if (std::find(e.shown.begin(), e.shown.end(), id) != e.shown.end()) continue;
      e.shown.push_back(id);
      if (rng.uniform() < 0.5) e.relevant.push_back(id);
    }
    e.timestamp = static_cast<std::int64_t>(k);
    events.push_back(e);
  }
  const PairExport out = export_pairs(events);
  for (std::size_t k = 0; k < events.size(); ++k) {
    const auto [s, d] = brute_counts(events[k]);
    CHECK(out.per_event[k].similar == s);
    CHECK(out.per_event[k].dissimilar == d);
    const std::size_t r1 = events[k].relevant.size();
    const std::size_t r2 = events[k].shown.size() - r1;
    CHECK(s == oracle::choose2(r1));
    CHECK(d == r1 * r2);
  }
  std::set<std::pair<std::string, std::string>> keys;
  for (const auto& p : out.pairs) CHECK(keys.insert({p.id_a, p.id_b}).second);
}

TEST_CASE("conflicting labels keep the latest and are flagged") {
  FeedbackEvent early;
  early.shown = {"a", "b"};
  early.relevant = {"a", "b"};
  early.timestamp = 1;
  FeedbackEvent late;
  late.shown = {"a", "b"};
  late.relevant = {"a"};
  late.timestamp = 5;
  // Input order reversed on purpose; timestamps decide.
  const std::vector<FeedbackEvent> events{late, early};
  const PairExport out = export_pairs(events);
  REQUIRE(out.pairs.size() == 1);
  CHECK(out.pairs[0].label == 0);
  CHECK(out.pairs[0].flagged);
  CHECK(out.pairs[0].source_event == 0);
  CHECK(out.conflicts == 1);

  // Agreement across events is not a conflict.
  const std::vector<FeedbackEvent> same{early, early};
  CHECK_FALSE(export_pairs(same).pairs[0].flagged);
}

TEST_CASE("pairs csv layout") {
  const std::vector<FeedbackEvent> events{event_of(2, 1, "")};
  const PairExport out = export_pairs(events);
  std::ostringstream plain;
  write_pairs_csv(plain, out);
  CHECK(plain.str() == "id_a,id_b,label,flagged\nn0,r0,0,0\nn0,r1,0,0\nr0,r1,1,0\n");

  const Dataset ds = Dataset::from_items({{"r0", "x", "t/r0.png"}, {"r1", "x", {}}, {"n0", "y", "t/n,0.png"}});
  std::ostringstream thumbs;
  write_pairs_csv(thumbs, out, &ds);
  CHECK(thumbs.str() ==
        "id_a,id_b,label,flagged,thumbnail_a,thumbnail_b\n"
        "n0,r0,0,0,\"t/n,0.png\",t/r0.png\n"
        "n0,r1,0,0,\"t/n,0.png\",\n"
        "r0,r1,1,0,t/r0.png,\n");
}

TEST_CASE("class export prunes small groups and floors the validation share") {
  GroupStore store;
  for (int g = 0; g < 5; ++g) {
    std::vector<std::string> ids;
    const int size = 6 + 3 * g;  // 6, 9, 12, 15, 18
    for (int i = 0; i < size; ++i) ids.push_back("g" + std::to_string(g) + "_" + std::to_string(10 + i));
    record_session(store, ids, {});
  }
  const ClassDatasetManifest m = export_class_dataset(store, 10, 0.2, 4);
  CHECK(m.groups.size() == 3);
  CHECK(m.pruned_groups.size() == 2);
  for (const auto& g : m.groups) {
    const std::size_t size = g.train.size() + g.validation.size();
    CHECK(g.validation.size() == size / 5);
    std::vector<std::string> all = g.train;
    all.insert(all.end(), g.validation.begin(), g.validation.end());
    std::sort(all.begin(), all.end());
    CHECK(all == store.members(g.root));
  }
  CHECK(to_json(m) == to_json(export_class_dataset(store, 10, 0.2, 4)));
  CHECK_FALSE(to_json(m) == to_json(export_class_dataset(store, 10, 0.2, 5)));
}

TEST_CASE("group of ten gives two validation items") {
  GroupStore store;
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("t" + std::to_string(i));
  record_session(store, ids, {});
  const auto m = export_class_dataset(store);
  const ClassGroup g = find_group(m, store.roots()[0]);
  CHECK(g.validation.size() == 2);
  CHECK(g.train.size() == 8);
}

TEST_CASE("class export errors") {
  GroupStore empty;
  CHECK_THROWS_AS(export_class_dataset(empty), ExportError);
  GroupStore tiny;
  const std::vector<std::string> ids{"a", "b"};
  record_session(tiny, ids, {});
  CHECK_THROWS_AS(export_class_dataset(tiny), ExportError);
  CHECK_THROWS_AS(export_class_dataset(tiny, 1, 1.5), ParameterError);
}
