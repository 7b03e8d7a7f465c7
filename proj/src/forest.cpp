#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "dssm/eval.hpp"
#include "dssm/rng.hpp"

namespace dssm::eval {

namespace {

struct Builder {
  const Matrix& x;
  std::span<const double> y;
  const ForestConfig& config;
  Rng& rng;
  RegressionTree tree;
  std::vector<double> importance;

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
    std::size_t n_left = 0;
  };

  static double mean_of(std::span<const double> y, const std::vector<std::size_t>& idx) {
    double s = 0.0;
    for (auto i : idx) s += y[i];
    return s / static_cast<double>(idx.size());
  }

  Split best_split(std::vector<std::size_t>& idx, double sse_parent) {
    const std::size_t n = idx.size();
    std::vector<std::size_t> feats(x.cols);
    std::iota(feats.begin(), feats.end(), 0);
    if (config.feature_subsample > 0 && config.feature_subsample < x.cols) {
      std::shuffle(feats.begin(), feats.end(), rng);
      feats.resize(config.feature_subsample);
      std::sort(feats.begin(), feats.end());
    }
    Split best;
    std::vector<std::size_t> order(idx);
    for (std::size_t f : feats) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x(a, f) < x(b, f); });
      double total = 0.0;
      double total_sq = 0.0;
      for (auto i : order) {
        total += y[i];
        total_sq += y[i] * y[i];
      }
      double left = 0.0;
      double left_sq = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const double v = y[order[k]];
        left += v;
        left_sq += v * v;
        const std::size_t nl = k + 1;
        const std::size_t nr = n - nl;
        if (nl < config.min_leaf || nr < config.min_leaf) continue;
        const double a = x(order[k], f);
        const double b = x(order[k + 1], f);
        if (!(a < b)) continue;
        const double right = total - left;
        const double right_sq = total_sq - left_sq;
        const double sse = (left_sq - left * left / static_cast<double>(nl)) +
                           (right_sq - right * right / static_cast<double>(nr));
        const double gain = sse_parent - sse;
        if (gain > best.gain + 1e-12 * std::max(1.0, sse_parent)) {
          best = {static_cast<int>(f), 0.5 * (a + b), gain, nl};
        }
      }
    }
    return best;
  }

  int grow(std::vector<std::size_t> idx, std::size_t depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    const double mu = mean_of(y, idx);
    tree.nodes[id].value = mu;
    double sse = 0.0;
    for (auto i : idx) sse += (y[i] - mu) * (y[i] - mu);
    if (depth >= config.max_depth || idx.size() < 2 * config.min_leaf || sse <= 0.0) return id;
    const Split s = best_split(idx, sse);
    if (s.feature < 0) return id;
    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (auto i : idx) (x(i, static_cast<std::size_t>(s.feature)) <= s.threshold ? left : right).push_back(i);
    importance[static_cast<std::size_t>(s.feature)] += s.gain;
    tree.nodes[id].feature = s.feature;
    tree.nodes[id].threshold = s.threshold;
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    tree.nodes[id].left = l;
    tree.nodes[id].right = r;
    return id;
  }
};

}  // namespace

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
  if (values.size() != r * c) throw std::invalid_argument("Matrix: value count does not match shape");
}

std::vector<double> Matrix::column(std::size_t c) const {
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = (*this)(r, c);
  return out;
}

double RegressionTree::predict(std::span<const double> x) const {
  std::size_t k = 0;
  while (nodes[k].feature >= 0) {
    k = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[k].feature)] <= nodes[k].threshold ? nodes[k].left
                                                                                                      : nodes[k].right);
  }
  return nodes[k].value;
}

std::vector<int> RegressionTree::split_features() const {
  std::vector<int> out;
  for (const auto& n : nodes) {
    if (n.feature >= 0) out.push_back(n.feature);
  }
  return out;
}

double RegressionForest::predict(std::span<const double> x) const {
  if (x.size() != n_features) {
    throw std::invalid_argument("forest expects " + std::to_string(n_features) + " features, got " +
                                std::to_string(x.size()));
  }
  double s = 0.0;
  for (const auto& t : trees) s += t.predict(x);
  return s / static_cast<double>(trees.size());
}

std::vector<double> RegressionForest::predict(const Matrix& x) const {
  std::vector<double> out(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) out[r] = predict(x.row(r));
  return out;
}

RegressionForest fit_forest(const Matrix& features, std::span<const double> targets, const ForestConfig& config) {
  const std::size_t n = features.rows;
  if (targets.size() != n) throw std::invalid_argument("fit_forest: feature and target counts differ");
  if (features.cols == 0) throw std::invalid_argument("fit_forest: no features");
  if (config.n_trees == 0 || config.min_leaf == 0) throw std::invalid_argument("fit_forest: n_trees and min_leaf must be positive");
  if (n < 2 * config.min_leaf) {
    throw std::invalid_argument("fit_forest: need at least 2 * min_leaf = " + std::to_string(2 * config.min_leaf) +
                                " samples, got " + std::to_string(n));
  }
  RegressionForest forest;
  forest.n_features = features.cols;
  forest.trees.resize(config.n_trees);
  std::vector<std::vector<double>> imp(config.n_trees);

  auto build = [&](std::size_t t) {
    Rng rng = derive_rng(config.seed, t);
    std::vector<std::size_t> idx(n);
    if (config.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (auto& i : idx) i = pick(rng);
    } else {
      std::iota(idx.begin(), idx.end(), 0);
    }
    Builder b{features, targets, config, rng, {}, std::vector<double>(features.cols, 0.0)};
    b.grow(std::move(idx), 0);
    forest.trees[t] = std::move(b.tree);
    imp[t] = std::move(b.importance);
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(config.threads, config.n_trees));
  if (threads == 1) {
    for (std::size_t t = 0; t < config.n_trees; ++t) build(t);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < config.n_trees; t += threads) build(t);
      });
    }
  }

  forest.importances.assign(features.cols, 0.0);
  for (const auto& v : imp) {
    for (std::size_t f = 0; f < v.size(); ++f) forest.importances[f] += v[f];
  }
  const double total = std::accumulate(forest.importances.begin(), forest.importances.end(), 0.0);
  if (total > 0.0) {
    for (double& v : forest.importances) v /= total;
  } else {
    forest.degenerate = true;
    std::fill(forest.importances.begin(), forest.importances.end(), 1.0 / static_cast<double>(features.cols));
  }
  return forest;
}

DependencyMatrix dependency_matrix(const Matrix& embeddings, const Matrix& factors, const ForestConfig& config,
                                   std::vector<RegressionForest>* forests) {
  if (embeddings.rows != factors.rows) throw std::invalid_argument("dependency_matrix: row counts differ");
  if (factors.cols == 0) throw std::invalid_argument("dependency_matrix: no factors");
  DependencyMatrix m;
  m.values = Matrix(embeddings.cols, factors.cols);
  for (std::size_t r = 0; r < embeddings.cols; ++r) m.row_labels.push_back("D" + std::to_string(r + 1));
  for (std::size_t k = 0; k < factors.cols; ++k) m.col_labels.push_back("factor" + std::to_string(k + 1));
  if (forests != nullptr) forests->clear();
  for (std::size_t k = 0; k < factors.cols; ++k) {
    ForestConfig fc = config;
    fc.seed = config.seed + k;
    const auto target = factors.column(k);
    RegressionForest f = fit_forest(embeddings, target, fc);
    for (std::size_t r = 0; r < embeddings.cols; ++r) m.values(r, k) = f.importances[r];
    if (forests != nullptr) forests->push_back(std::move(f));
  }
  return m;
}

DisentanglementScore disentanglement_score(const Matrix& matrix) {
  if (matrix.rows == 0 || matrix.cols == 0) throw std::invalid_argument("disentanglement_score: empty matrix");
  DisentanglementScore s;
  const double log_rows = std::log(static_cast<double>(matrix.rows));
  for (std::size_t k = 0; k < matrix.cols; ++k) {
    double total = 0.0;
    for (std::size_t r = 0; r < matrix.rows; ++r) {
      if (matrix(r, k) < 0.0) throw std::invalid_argument("disentanglement_score: negative entry");
      total += matrix(r, k);
    }
    double h = 0.0;
    if (total > 0.0) {
      for (std::size_t r = 0; r < matrix.rows; ++r) {
        const double p = matrix(r, k) / total;
        if (p > 0.0) h -= p * std::log(p);
      }
    }
    // A single embedding dimension is trivially disentangled.
    const double score = matrix.rows == 1 ? 1.0 : 1.0 - h / log_rows;
    s.per_factor.push_back(score);
    s.overall += score;
  }
  s.overall /= static_cast<double>(matrix.cols);
  return s;
}

std::vector<double> infer_parameters(const std::vector<RegressionForest>& forests, std::span<const double> embedding) {
  std::vector<double> out;
  out.reserve(forests.size());
  for (const auto& f : forests) out.push_back(f.predict(embedding));
  return out;
}

}  // namespace dssm::eval
