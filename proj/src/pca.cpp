#include "refine/pca.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/Dense>

#include "refine/errors.hpp"

namespace refine {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_eigen(const FeatureMatrix& m) {
  return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

}  // namespace

PcaModel fit_pca(const FeatureMatrix& matrix, std::size_t k) {
  const std::size_t n = matrix.rows();
  const std::size_t d = matrix.cols();
  if (n < 2) throw ParameterError("PCA needs at least 2 rows");
  if (k < 1 || k > std::min(n - 1, d)) {
    throw ParameterError("PCA component count " + std::to_string(k) + " outside [1, " +
                         std::to_string(std::min(n - 1, d)) + "]");
  }

  const auto data = as_eigen(matrix);
  const Eigen::RowVectorXd mean = data.colwise().mean();
  const Eigen::MatrixXd centered = data.rowwise() - mean;
  const Eigen::MatrixXd covariance = (centered.transpose() * centered) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(covariance);
  if (solver.info() != Eigen::Success) throw Error("PCA eigendecomposition did not converge");

  // Eigen returns ascending eigenvalues.
  const Eigen::VectorXd& values = solver.eigenvalues();
  const Eigen::MatrixXd& vectors = solver.eigenvectors();

  PcaModel model;
  model.mean.assign(mean.data(), mean.data() + d);
  model.components = FeatureMatrix(k, d);
  model.explained_variance.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    const Eigen::Index src = static_cast<Eigen::Index>(d - 1 - c);
    Eigen::VectorXd axis = vectors.col(src);
    Eigen::Index pivot = 0;
    for (Eigen::Index j = 1; j < axis.size(); ++j) {
      if (std::abs(axis[j]) > std::abs(axis[pivot])) pivot = j;
    }
    if (axis[pivot] < 0) axis = -axis;
    for (std::size_t j = 0; j < d; ++j) model.components(c, j) = axis[static_cast<Eigen::Index>(j)];
    // Round-off can leave tiny negative eigenvalues on rank-deficient input.
    model.explained_variance[c] = std::max(0.0, values[src]);
  }
  return model;
}

PcaModel fit_pca_clamped(const FeatureMatrix& matrix, std::size_t k) {
  if (matrix.rows() < 2) throw ParameterError("PCA needs at least 2 rows");
  const std::size_t upper = std::min(matrix.rows() - 1, matrix.cols());
  return fit_pca(matrix, std::clamp<std::size_t>(k, 1, upper));
}

FeatureMatrix transform(const PcaModel& model, const FeatureMatrix& vectors) {
  if (vectors.cols() != model.input_dim()) {
    throw ShapeError("PCA transform expects " + std::to_string(model.input_dim()) + " columns, got " +
                     std::to_string(vectors.cols()));
  }
  const auto data = as_eigen(vectors);
  const auto components = as_eigen(model.components);
  const Eigen::Map<const Eigen::RowVectorXd> mean(model.mean.data(),
                                                  static_cast<Eigen::Index>(model.mean.size()));
  const RowMatrix projected = (data.rowwise() - mean) * components.transpose();
  return FeatureMatrix(vectors.rows(), model.output_dim(),
                       std::vector<double>(projected.data(), projected.data() + projected.size()));
}

FeatureMatrix reconstruct(const PcaModel& model, const FeatureMatrix& reduced) {
  if (reduced.cols() != model.output_dim()) {
    throw ShapeError("PCA reconstruct expects " + std::to_string(model.output_dim()) + " columns, got " +
                     std::to_string(reduced.cols()));
  }
  const auto data = as_eigen(reduced);
  const auto components = as_eigen(model.components);
  const Eigen::Map<const Eigen::RowVectorXd> mean(model.mean.data(),
                                                  static_cast<Eigen::Index>(model.mean.size()));
  const RowMatrix restored = (data * components).rowwise() + mean;
  return FeatureMatrix(reduced.rows(), model.input_dim(),
                       std::vector<double>(restored.data(), restored.data() + restored.size()));
}

void write_pca(std::ostream& out, const PcaModel& model) {
  write_fvec(out, model.components);
  write_fvec(out, FeatureMatrix(1, model.mean.size(), model.mean));
  write_fvec(out, FeatureMatrix(1, model.explained_variance.size(), model.explained_variance));
}

PcaModel parse_pca(std::istream& in) {
  PcaModel model;
  model.components = parse_fvec_block(in);
  const FeatureMatrix mean = parse_fvec_block(in);
  const FeatureMatrix variance = parse_fvec_block(in);
  if (mean.rows() != 1 || mean.cols() != model.components.cols() || variance.rows() != 1 ||
      variance.cols() != model.components.rows()) {
    throw ShapeError("PCA model blocks have inconsistent shapes");
  }
  model.mean.assign(mean.values().begin(), mean.values().end());
  model.explained_variance.assign(variance.values().begin(), variance.values().end());
  return model;
}

void save_pca(const std::filesystem::path& path, const PcaModel& model) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path.string());
  write_pca(out, model);
}

PcaModel load_pca(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path.string());
  return parse_pca(in);
}

}  // namespace refine
