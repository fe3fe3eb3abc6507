#include "refine/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "refine/errors.hpp"
#include "refine/random.hpp"

namespace refine {

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path.string());
  return out;
}

bool blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

void append_double(std::string& out, double value) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, end);
}

}  // namespace

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw ShapeError("feature matrix expects " + std::to_string(rows_ * cols_) + " values, got " +
                     std::to_string(values_.size()));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw ValidationError("non-finite feature value at row " + std::to_string(i / cols_));
    }
  }
}

Dataset Dataset::from_items(std::vector<ItemRecord> items) {
  Dataset ds;
  ds.items_ = std::move(items);
  for (const auto& item : ds.items_) {
    if (item.id.empty()) throw ValidationError("empty item id");
    if (item.label.empty()) throw ValidationError("empty label for item " + item.id);
  }
  ds.build_indices();
  return ds;
}

void Dataset::build_indices() {
  by_id_.clear();
  by_id_.reserve(items_.size());
  for (ItemIndex i = 0; i < items_.size(); ++i) {
    if (!by_id_.emplace(items_[i].id, i).second) {
      throw ValidationError("duplicate item id: " + items_[i].id);
    }
  }
  std::vector<ItemIndex> order(items_.size());
  std::iota(order.begin(), order.end(), ItemIndex{0});
  std::sort(order.begin(), order.end(),
            [&](ItemIndex a, ItemIndex b) { return items_[a].id < items_[b].id; });
  id_rank_.assign(items_.size(), 0);
  for (std::size_t r = 0; r < order.size(); ++r) id_rank_[order[r]] = static_cast<std::uint32_t>(r);
}

Dataset Dataset::with_features(FeatureMatrix features) const {
  if (features.rows() != items_.size()) {
    throw ShapeError("feature matrix has " + std::to_string(features.rows()) + " rows but dataset has " +
                     std::to_string(items_.size()) + " items");
  }
  if (!items_.empty() && features.cols() == 0) throw ShapeError("feature dimension must be >= 1");
  Dataset ds = *this;
  ds.features_ = std::move(features);
  return ds;
}

Dataset Dataset::subset(std::span<const ItemIndex> rows) const {
  std::vector<ItemRecord> items;
  items.reserve(rows.size());
  std::vector<double> values;
  const bool with_vectors = has_features();
  if (with_vectors) values.reserve(rows.size() * dim());
  for (ItemIndex r : rows) {
    items.push_back(items_.at(r));
    if (with_vectors) {
      auto v = vector(r);
      values.insert(values.end(), v.begin(), v.end());
    }
  }
  Dataset ds = from_items(std::move(items));
  if (with_vectors) ds.features_ = FeatureMatrix(rows.size(), dim(), std::move(values));
  return ds;
}

std::optional<ItemIndex> Dataset::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

ItemIndex Dataset::index_of(std::string_view id) const {
  if (auto i = find(id)) return *i;
  throw ValidationError("unknown item id: " + std::string(id));
}

std::vector<std::string> Dataset::labels() const {
  std::vector<std::string> out;
  for (const auto& item : items_) out.push_back(item.label);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Dataset parse_manifest(std::istream& in) {
  std::vector<ItemRecord> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(std::string("manifest: invalid JSON: ") + e.what(), line_no);
    }
    if (!obj.is_object()) throw FormatError("manifest: expected a JSON object", line_no);
    ItemRecord rec;
    try {
      rec.id = obj.at("id").get<std::string>();
      rec.label = obj.at("label").get<std::string>();
      if (auto t = obj.find("thumbnail"); t != obj.end() && !t->is_null()) {
        rec.thumbnail = t->get<std::string>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("manifest: ") + e.what(), line_no);
    }
    items.push_back(std::move(rec));
  }
  return Dataset::from_items(std::move(items));
}

Dataset load_manifest(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_manifest(in);
}

void write_manifest(std::ostream& out, const Dataset& dataset) {
  for (const auto& item : dataset.items()) {
    nlohmann::ordered_json obj;
    obj["id"] = item.id;
    obj["label"] = item.label;
    if (item.thumbnail) obj["thumbnail"] = *item.thumbnail;
    out << obj.dump() << '\n';
  }
}

void save_manifest(const std::filesystem::path& path, const Dataset& dataset) {
  auto out = open_output(path);
  write_manifest(out, dataset);
}

FeatureMatrix parse_fvec_block(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!blank(line)) break;
  }
  std::istringstream header(line);
  std::string magic;
  long long rows = -1;
  long long cols = -1;
  header >> magic >> rows >> cols;
  if (magic != "FVEC1" || !header || rows < 0 || cols < 0) {
    throw FormatError("feature file: expected header 'FVEC1 <rows> <cols>'", line_no);
  }
  const auto n_rows = static_cast<std::size_t>(rows);
  const auto n_cols = static_cast<std::size_t>(cols);
  std::vector<double> values;
  values.reserve(n_rows * n_cols);
  for (std::size_t r = 0; r < n_rows; ++r) {
    if (!std::getline(in, line)) {
      throw ShapeError("feature file: header declares " + std::to_string(n_rows) + " rows, found " +
                       std::to_string(r));
    }
    ++line_no;
    const char* p = line.data();
    const char* end = p + line.size();
    std::size_t count = 0;
    while (true) {
      while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
      if (p == end) break;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) throw FormatError("feature file: bad number", line_no);
      if (!std::isfinite(v)) {
        throw ValidationError("non-finite feature value at row " + std::to_string(r));
      }
      values.push_back(v);
      ++count;
      p = next;
    }
    if (count != n_cols) {
      throw ShapeError("feature file: row " + std::to_string(r) + " has " + std::to_string(count) +
                       " values, expected " + std::to_string(n_cols));
    }
  }
  return FeatureMatrix(n_rows, n_cols, std::move(values));
}

FeatureMatrix parse_fvec(std::istream& in) {
  FeatureMatrix matrix = parse_fvec_block(in);
  std::string line;
  while (std::getline(in, line)) {
    if (!blank(line)) throw ShapeError("feature file: more rows than the header declares");
  }
  return matrix;
}

FeatureMatrix read_fvec(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_fvec(in);
}

void write_fvec(std::ostream& out, const FeatureMatrix& matrix) {
  std::string buf = "FVEC1 " + std::to_string(matrix.rows()) + " " + std::to_string(matrix.cols()) + "\n";
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    auto row = matrix.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) buf.push_back(' ');
      append_double(buf, row[c]);
    }
    buf.push_back('\n');
  }
  out << buf;
}

void save_fvec(const std::filesystem::path& path, const FeatureMatrix& matrix) {
  auto out = open_output(path);
  write_fvec(out, matrix);
}

Dataset load_features(const std::filesystem::path& path, const Dataset& dataset) {
  return dataset.with_features(read_fvec(path));
}

DatasetSplit split_dataset(const Dataset& dataset, const SplitOptions& options) {
  if (options.rf0_precision && options.rf0_precision->size() != dataset.size()) {
    throw ShapeError("rf0_precision must have one entry per item");
  }
  Rng rng(options.seed);

  std::map<std::string, std::vector<ItemIndex>> by_label;
  for (ItemIndex i = 0; i < dataset.size(); ++i) by_label[dataset.label(i)].push_back(i);

  std::vector<bool> taken(dataset.size(), false);
  DatasetSplit split;
  for (auto& [label, members] : by_label) {
    if (members.size() < options.test_per_label + 1) {
      throw SplitError("label '" + label + "' has " + std::to_string(members.size()) +
                       " items, needs at least " + std::to_string(options.test_per_label + 1));
    }
    rng.shuffle(std::span(members));
    if (options.rf0_precision) {
      const auto& precision = *options.rf0_precision;
      std::stable_sort(members.begin(), members.end(),
                       [&](ItemIndex a, ItemIndex b) { return precision[a] < precision[b]; });
    }
    for (std::size_t k = 0; k < options.test_per_label; ++k) {
      split.test.push_back(dataset.id(members[k]));
      taken[members[k]] = true;
    }
  }

  std::vector<ItemIndex> pool;
  for (ItemIndex i = 0; i < dataset.size(); ++i) {
    if (!taken[i]) pool.push_back(i);
  }
  if (pool.size() < options.validation) {
    throw SplitError("only " + std::to_string(pool.size()) + " items remain for " +
                     std::to_string(options.validation) + " validation queries");
  }
  rng.shuffle(std::span(pool));
  for (std::size_t k = 0; k < options.validation; ++k) {
    split.validation.push_back(dataset.id(pool[k]));
    taken[pool[k]] = true;
  }
  for (ItemIndex i = 0; i < dataset.size(); ++i) {
    if (!taken[i]) split.retrieval_db.push_back(dataset.id(i));
  }
  return split;
}

DatasetSplit split_dataset(const Dataset& dataset, std::uint64_t seed, std::size_t n_test_per_label,
                           std::size_t n_validation) {
  SplitOptions options;
  options.seed = seed;
  options.test_per_label = n_test_per_label;
  options.validation = n_validation;
  return split_dataset(dataset, options);
}

std::vector<ItemIndex> indices_of(const Dataset& dataset, std::span<const std::string> ids) {
  std::vector<ItemIndex> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(dataset.index_of(id));
  return out;
}

}  // namespace refine
