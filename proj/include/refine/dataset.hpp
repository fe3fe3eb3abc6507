#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace refine {

// Row position of an item inside a Dataset.
using ItemIndex = std::size_t;

struct ItemRecord {
  std::string id;
  std::string label;
  std::optional<std::string> thumbnail;

  bool operator==(const ItemRecord&) const = default;
};

// Dense row-major matrix of finite doubles, one row per item.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols);
  // Throws ShapeError if values.size() != rows*cols and ValidationError on a
  // non-finite entry.
  FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }

  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }

  std::span<const double> values() const noexcept { return values_; }

  bool operator==(const FeatureMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Items plus (optionally) their feature vectors. Immutable once built; the
// with_* and subset members return new datasets.
class Dataset {
 public:
  Dataset() = default;

  // Validates id uniqueness and non-empty labels.
  static Dataset from_items(std::vector<ItemRecord> items);

  // Throws ShapeError when features.rows() != size().
  Dataset with_features(FeatureMatrix features) const;

  // New dataset holding the given rows, in the given order.
  Dataset subset(std::span<const ItemIndex> rows) const;

  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  std::size_t dim() const noexcept { return features_.cols(); }
  bool has_features() const noexcept { return !items_.empty() && features_.rows() == items_.size(); }

  const std::vector<ItemRecord>& items() const noexcept { return items_; }
  const ItemRecord& item(ItemIndex i) const { return items_[i]; }
  const std::string& id(ItemIndex i) const { return items_[i].id; }
  const std::string& label(ItemIndex i) const { return items_[i].label; }
  std::span<const double> vector(ItemIndex i) const { return features_.row(i); }
  const FeatureMatrix& features() const noexcept { return features_; }

  std::optional<ItemIndex> find(std::string_view id) const;
  // Throws ValidationError naming the id when absent.
  ItemIndex index_of(std::string_view id) const;

  // Position of item i in ascending-id order; comparing ranks equals
  // comparing ids.
  std::uint32_t id_rank(ItemIndex i) const { return id_rank_[i]; }

  // Distinct labels, sorted.
  std::vector<std::string> labels() const;

 private:
  void build_indices();

  std::vector<ItemRecord> items_;
  FeatureMatrix features_;
  std::unordered_map<std::string, ItemIndex> by_id_;
  std::vector<std::uint32_t> id_rank_;
};

struct DatasetSplit {
  std::vector<std::string> test;
  std::vector<std::string> validation;
  std::vector<std::string> retrieval_db;

  bool operator==(const DatasetSplit&) const = default;
};

struct SplitOptions {
  std::uint64_t seed = 0;
  std::size_t test_per_label = 1;
  std::size_t validation = 0;
  // Optional per-item RF0 precision. When set, each label's test items are the
  // ones with the lowest precision (seeded shuffle breaks ties) instead of a
  // uniform draw.
  std::optional<std::vector<double>> rf0_precision;
};

// Manifest: one JSON object per line, keys id, label, thumbnail (optional).
Dataset parse_manifest(std::istream& in);
Dataset load_manifest(const std::filesystem::path& path);
void write_manifest(std::ostream& out, const Dataset& dataset);
void save_manifest(const std::filesystem::path& path, const Dataset& dataset);

// Feature file: "FVEC1 <rows> <cols>" header, then one line of
// space-separated decimals per row. Writing uses shortest round-trip form.
FeatureMatrix parse_fvec(std::istream& in);
// Reads exactly one block and leaves the stream positioned after it.
FeatureMatrix parse_fvec_block(std::istream& in);
FeatureMatrix read_fvec(const std::filesystem::path& path);
void write_fvec(std::ostream& out, const FeatureMatrix& matrix);
void save_fvec(const std::filesystem::path& path, const FeatureMatrix& matrix);

// Reads the feature file and attaches it to dataset.
Dataset load_features(const std::filesystem::path& path, const Dataset& dataset);

DatasetSplit split_dataset(const Dataset& dataset, const SplitOptions& options);
DatasetSplit split_dataset(const Dataset& dataset, std::uint64_t seed,
                           std::size_t n_test_per_label, std::size_t n_validation);

// Maps ids to row indices; throws ValidationError on an unknown id.
std::vector<ItemIndex> indices_of(const Dataset& dataset, std::span<const std::string> ids);

}  // namespace refine
