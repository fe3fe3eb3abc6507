#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "refine/dataset.hpp"

namespace refine {

// Principal axes of a feature matrix. components is k x d with orthonormal
// rows; explained_variance is non-increasing.
struct PcaModel {
  std::vector<double> mean;
  FeatureMatrix components;
  std::vector<double> explained_variance;

  std::size_t input_dim() const noexcept { return mean.size(); }
  std::size_t output_dim() const noexcept { return components.rows(); }
};

inline constexpr std::size_t kDefaultPcaComponents = 100;

// Fits the top-k eigenvectors of the sample covariance (n-1 denominator) of
// the mean-centred rows. Each component's largest-magnitude entry is made
// positive, the first one on ties.
PcaModel fit_pca(const FeatureMatrix& matrix, std::size_t k);

// Clamps k to [1, min(rows-1, cols)] before fitting.
PcaModel fit_pca_clamped(const FeatureMatrix& matrix, std::size_t k = kDefaultPcaComponents);

// Row-wise components * (row - mean).
FeatureMatrix transform(const PcaModel& model, const FeatureMatrix& vectors);

// Row-wise mean + components^T * row; maps k-dim rows back to d dims.
FeatureMatrix reconstruct(const PcaModel& model, const FeatureMatrix& reduced);

// Three consecutive FVEC1 blocks: components (k x d), mean (1 x d),
// explained variance (1 x k).
void write_pca(std::ostream& out, const PcaModel& model);
PcaModel parse_pca(std::istream& in);
void save_pca(const std::filesystem::path& path, const PcaModel& model);
PcaModel load_pca(const std::filesystem::path& path);

}  // namespace refine
