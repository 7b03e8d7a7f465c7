#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dssm/dataset.hpp"
#include "dssm/dssm.hpp"

namespace dssm::eval {

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> v);

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  std::vector<double> column(std::size_t c) const;
};

// ---- prediction metrics ------------------------------------------------------

// Mean squared error over all entries.
double prediction_mse(const Matrix& pred, const Matrix& truth);

struct BallErrorCurve {
  // Pixel distance per step; nullopt where either detection failed.
  std::vector<std::optional<double>> distance;
  double mean_detected = 0.0;  // NaN when no step was detected
  double failure_rate = 0.0;
};

// Frames are row-major steps x resolution^2 buffers. Predicted frames are
// binarised at 0.5 by the detector.
BallErrorCurve ball_position_error(std::span<const double> pred_frames, std::span<const double> truth_frames,
                                   std::size_t resolution);

struct DriftAxis {
  std::size_t axis = 1;  // 0: column, 1: row
  int sign = 1;          // direction a ball under this gravity moves in pixel coordinates
};

// Dominant component of a box-coordinate gravity vector (y up), vertical on ties.
DriftAxis gravity_drift_axis(std::span<const double> gravity);

// Mean of (a - b) along `axis` over the first `window` steps, skipping steps
// where either frame shows no ball. nullopt when no step is left.
std::optional<double> relative_ball_drift(std::span<const double> a_frames, std::span<const double> b_frames,
                                          std::size_t resolution, std::size_t axis, std::size_t window);

// ---- random forest ---------------------------------------------------------------

struct ForestConfig {
  std::size_t n_trees = 100;
  std::size_t max_depth = 8;
  std::size_t min_leaf = 5;
  // Features tried per split (0: all).
  std::size_t feature_subsample = 0;
  bool bootstrap = true;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct TreeNode {
  // -1 for leaves.
  int feature = -1;
  double threshold = 0.0;
  // Mean target of the node's training subset.
  double value = 0.0;
  int left = -1;
  int right = -1;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const;
  // Split features in depth-first pre-order.
  std::vector<int> split_features() const;
};

struct RegressionForest {
  std::vector<RegressionTree> trees;
  std::size_t n_features = 0;
  std::vector<double> importances;
  // True when no tree found a split; importances are then uniform.
  bool degenerate = false;

  double predict(std::span<const double> x) const;
  std::vector<double> predict(const Matrix& x) const;
};

RegressionForest fit_forest(const Matrix& features, std::span<const double> targets, const ForestConfig& config);

// ---- dependency matrix / disentanglement -------------------------------------

struct DependencyMatrix {
  // dim(D) x n_factors, each column summing to 1.
  Matrix values;
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
};

DependencyMatrix dependency_matrix(const Matrix& embeddings, const Matrix& factors, const ForestConfig& config,
                                   std::vector<RegressionForest>* forests = nullptr);

struct DisentanglementScore {
  double overall = 0.0;
  std::vector<double> per_factor;
};

// score_k = 1 - H(column_k) / log(rows), averaged over columns.
DisentanglementScore disentanglement_score(const Matrix& matrix);

std::vector<double> infer_parameters(const std::vector<RegressionForest>& forests, std::span<const double> embedding);

void write_matrix_csv(const std::string& path, const DependencyMatrix& m);

// ---- embeddings -----------------------------------------------------------------

struct EmbeddingTable {
  std::vector<std::size_t> ids;
  std::vector<data::Split> splits;
  Matrix embeddings;  // n x domain_dim, posterior means
  Matrix factors;     // n x K
};

EmbeddingTable export_embeddings(DSSMModel& model, const data::SequenceDataset& ds, std::size_t batch_size = 100);
void write_embeddings_csv(const std::string& path, const EmbeddingTable& table);

enum class SeparationStatus { kOk, kCapped, kUndefined };

struct Separation {
  // Mean inter-centroid distance / mean distance of points to their centroid.
  double ratio = 0.0;
  SeparationStatus status = SeparationStatus::kOk;
};

// Value reported for separated groups with zero spread.
inline constexpr double kSeparationCap = 1e12;

Separation cluster_separation(const Matrix& points, std::span<const std::size_t> groups);

}  // namespace dssm::eval
