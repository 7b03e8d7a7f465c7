#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dssm/bouncing_ball.hpp"
#include "dssm/eval.hpp"

namespace dssm::eval {

double prediction_mse(const Matrix& pred, const Matrix& truth) {
  if (pred.rows != truth.rows || pred.cols != truth.cols) {
    throw std::invalid_argument("prediction_mse: shapes " + std::to_string(pred.rows) + "x" +
                                std::to_string(pred.cols) + " and " + std::to_string(truth.rows) + "x" +
                                std::to_string(truth.cols) + " differ");
  }
  if (pred.values.empty()) throw std::invalid_argument("prediction_mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const double d = pred.values[i] - truth.values[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.values.size());
}

BallErrorCurve ball_position_error(std::span<const double> pred_frames, std::span<const double> truth_frames,
                                   std::size_t resolution) {
  const std::size_t frame = resolution * resolution;
  if (frame == 0 || pred_frames.size() % frame != 0 || truth_frames.size() != pred_frames.size()) {
    throw std::invalid_argument("ball_position_error: frame buffers must hold equal counts of whole frames");
  }
  const std::size_t steps = pred_frames.size() / frame;
  BallErrorCurve out;
  double sum = 0.0;
  std::size_t detected = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    const auto p = data::detect_ball_position(pred_frames.subspan(t * frame, frame), resolution, 0.5);
    const auto q = data::detect_ball_position(truth_frames.subspan(t * frame, frame), resolution, 0.5);
    if (!p || !q) {
      out.distance.emplace_back();
      continue;
    }
    const double d = std::hypot((*p)[0] - (*q)[0], (*p)[1] - (*q)[1]);
    out.distance.emplace_back(d);
    sum += d;
    ++detected;
  }
  out.mean_detected = detected > 0 ? sum / static_cast<double>(detected) : std::numeric_limits<double>::quiet_NaN();
  out.failure_rate = steps > 0 ? static_cast<double>(steps - detected) / static_cast<double>(steps) : 0.0;
  return out;
}

DriftAxis gravity_drift_axis(std::span<const double> gravity) {
  if (gravity.size() != 2) throw std::invalid_argument("gravity_drift_axis: expected a 2-vector");
  DriftAxis d;
  if (std::abs(gravity[0]) > std::abs(gravity[1]) + 1e-12 * std::abs(gravity[1])) {
    d.axis = 0;
    d.sign = gravity[0] > 0.0 ? 1 : -1;
  } else {
    // Rows grow downwards.
    d.axis = 1;
    d.sign = gravity[1] > 0.0 ? -1 : 1;
  }
  return d;
}

std::optional<double> relative_ball_drift(std::span<const double> a_frames, std::span<const double> b_frames,
                                          std::size_t resolution, std::size_t axis, std::size_t window) {
  const std::size_t frame = resolution * resolution;
  if (frame == 0 || a_frames.size() % frame != 0 || b_frames.size() != a_frames.size() || axis > 1) {
    throw std::invalid_argument("relative_ball_drift: bad frame buffers or axis");
  }
  const std::size_t steps = std::min(window, a_frames.size() / frame);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    const auto p = data::detect_ball_position(a_frames.subspan(t * frame, frame), resolution, 0.5);
    const auto q = data::detect_ball_position(b_frames.subspan(t * frame, frame), resolution, 0.5);
    if (!p || !q) continue;
    sum += (*p)[axis] - (*q)[axis];
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

void write_matrix_csv(const std::string& path, const DependencyMatrix& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(10);
  out << "embedding";
  for (const auto& c : m.col_labels) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < m.values.rows; ++r) {
    out << m.row_labels[r];
    for (std::size_t k = 0; k < m.values.cols; ++k) out << ',' << m.values(r, k);
    out << '\n';
  }
}

EmbeddingTable export_embeddings(DSSMModel& model, const data::SequenceDataset& ds, std::size_t batch_size) {
  ds.validate();
  if (batch_size == 0) throw std::invalid_argument("export_embeddings: batch_size must be positive");
  const std::size_t dim = model.config().domain_dim;
  EmbeddingTable t;
  t.embeddings = Matrix(ds.n, dim);
  t.factors = Matrix(ds.n, ds.n_factors);
  for (std::size_t start = 0; start < ds.n; start += batch_size) {
    const std::size_t end = std::min(ds.n, start + batch_size);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto x = data::make_batch(ds, idx, 0, ds.steps);
    const Tensor mu = domain_mean(model, x);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      for (std::size_t j = 0; j < dim; ++j) t.embeddings(start + b, j) = mu.at(j, b);
    }
  }
  for (std::size_t i = 0; i < ds.n; ++i) {
    t.ids.push_back(i);
    t.splits.push_back(ds.splits[i]);
    const auto f = ds.factor_row(i);
    for (std::size_t k = 0; k < ds.n_factors; ++k) t.factors(i, k) = f[k];
  }
  return t;
}

void write_embeddings_csv(const std::string& path, const EmbeddingTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(10);
  out << "id,split";
  for (std::size_t j = 0; j < table.embeddings.cols; ++j) out << ",D" << j + 1;
  for (std::size_t k = 0; k < table.factors.cols; ++k) out << ",factor" << k + 1;
  out << '\n';
  static const char* kNames[] = {"train", "val", "test"};
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    out << table.ids[i] << ',' << kNames[static_cast<int>(table.splits[i])];
    for (std::size_t j = 0; j < table.embeddings.cols; ++j) out << ',' << table.embeddings(i, j);
    for (std::size_t k = 0; k < table.factors.cols; ++k) out << ',' << table.factors(i, k);
    out << '\n';
  }
}

Separation cluster_separation(const Matrix& points, std::span<const std::size_t> groups) {
  if (groups.size() != points.rows) throw std::invalid_argument("cluster_separation: one group label per point");
  std::size_t n_groups = 0;
  for (auto g : groups) n_groups = std::max(n_groups, g + 1);
  std::vector<std::size_t> counts(n_groups, 0);
  for (auto g : groups) ++counts[g];
  std::vector<std::size_t> present;
  for (std::size_t g = 0; g < n_groups; ++g) {
    if (counts[g] == 1) throw std::invalid_argument("cluster_separation: group " + std::to_string(g) + " has one point");
    if (counts[g] > 1) present.push_back(g);
  }
  if (present.size() < 2) throw std::invalid_argument("cluster_separation: need at least two groups");

  const std::size_t d = points.cols;
  Matrix centroid(n_groups, d);
  for (std::size_t i = 0; i < points.rows; ++i) {
    for (std::size_t j = 0; j < d; ++j) centroid(groups[i], j) += points(i, j);
  }
  for (auto g : present) {
    for (std::size_t j = 0; j < d; ++j) centroid(g, j) /= static_cast<double>(counts[g]);
  }
  auto dist = [d](std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return std::sqrt(s);
  };
  double inter = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < present.size(); ++a) {
    for (std::size_t b = a + 1; b < present.size(); ++b) {
      inter += dist(centroid.row(present[a]), centroid.row(present[b]));
      ++pairs;
    }
  }
  inter /= static_cast<double>(pairs);
  double intra = 0.0;
  for (std::size_t i = 0; i < points.rows; ++i) intra += dist(points.row(i), centroid.row(groups[i]));
  intra /= static_cast<double>(points.rows);

  if (intra == 0.0) {
    if (inter == 0.0) return {std::numeric_limits<double>::quiet_NaN(), SeparationStatus::kUndefined};
    return {kSeparationCap, SeparationStatus::kCapped};
  }
  return {inter / intra, SeparationStatus::kOk};
}

}  // namespace dssm::eval
