#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include "refine/dataset.hpp"
#include "refine/random.hpp"

namespace refine::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("refine_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string pad_id(std::size_t i, std::size_t width = 4) {
  std::string s = std::to_string(i);
  return "i" + std::string(width > s.size() ? width - s.size() : 0, '0') + s;
}

// n items with ids i0000.., labels "L<k>" round-robin over `labels`, features
// uniform in [0, 1) or, with `grid`, small integers so ties are common.
inline Dataset random_dataset(Rng& rng, std::size_t n, std::size_t dim, std::size_t labels = 3,
                              bool grid = false) {
  std::vector<ItemRecord> items;
  for (std::size_t i = 0; i < n; ++i) items.push_back({pad_id(i), "L" + std::to_string(i % labels), {}});
  std::vector<double> values(n * dim);
  for (auto& v : values) v = grid ? static_cast<double>(rng.uniform_index(4)) : rng.uniform();
  return Dataset::from_items(std::move(items)).with_features(FeatureMatrix(n, dim, std::move(values)));
}

inline std::vector<std::string> ids_of(const Dataset& db) {
  std::vector<std::string> out;
  for (const auto& item : db.items()) out.push_back(item.id);
  return out;
}

}  // namespace refine::testing
