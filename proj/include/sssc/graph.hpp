#pragma once

// k-nearest-neighbor graph with nonnegative sum-to-one reconstruction weights,
// plus label propagation over that graph.

#include "sssc/common.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <queue>
#include <vector>

namespace sssc {

struct GraphOptions {
  Index k = 5;
  double qp_tolerance = 1e-10;
  unsigned threads = 1;

  void validate() const {
    if (k < 1) throw UsageError("graph: k must be at least 1");
    if (!(qp_tolerance > 0.0)) throw UsageError("graph: qp_tolerance must be positive");
  }
};

struct NeighborGraph {
  Index n = 0;
  std::vector<std::vector<Index>> neighbors;  // N_i, ordered by distance
  std::vector<Vector> weights;                // aligned with neighbors[i]

  // Row i of (I - A) applied to columns of y: y_i - sum_j A_ij y_j.
  Matrix residual(const Eigen::Ref<const Matrix>& y) const {
    Matrix out = y;
    for (Index i = 0; i < n; ++i)
      for (std::size_t t = 0; t < neighbors[i].size(); ++t)
        out.col(i) -= weights[i][static_cast<Index>(t)] * y.col(neighbors[i][t]);
    return out;
  }

  Matrix dense() const {
    Matrix a = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i)
      for (std::size_t t = 0; t < neighbors[i].size(); ++t)
        a(i, neighbors[i][t]) += weights[i][static_cast<Index>(t)];
    return a;
  }
};

/// Indices of the k nearest points to `query` among the columns of `points`,
/// skipping `exclude`. Ties break by ascending index.
inline std::vector<Index> nearest_columns(const Eigen::Ref<const Matrix>& points,
                                          const Eigen::Ref<const Vector>& query, Index k,
                                          Index exclude = -1) {
  std::vector<std::pair<double, Index>> dist;
  dist.reserve(static_cast<std::size_t>(points.cols()));
  for (Index j = 0; j < points.cols(); ++j) {
    if (j == exclude) continue;
    dist.emplace_back((points.col(j) - query).squaredNorm(), j);
  }
  const auto take = static_cast<std::size_t>(std::min<Index>(k, static_cast<Index>(dist.size())));
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
  std::vector<Index> out(take);
  for (std::size_t t = 0; t < take; ++t) out[t] = dist[t].second;
  return out;
}

inline std::vector<std::vector<Index>> knn(const Eigen::Ref<const Matrix>& samples,
                                           const GraphOptions& options) {
  options.validate();
  const Index n = samples.cols();
  if (n <= options.k)
    throw UsageError("knn: need more than k=" + std::to_string(options.k) + " samples, got " +
                     std::to_string(n));
  if (!samples.allFinite()) throw DataError("knn: non-finite features");
  std::vector<std::vector<Index>> lists(static_cast<std::size_t>(n));
  parallel_for(n, options.threads,
               [&](Index i) { lists[i] = nearest_columns(samples, samples.col(i), options.k, i); });
  return lists;
}

/// Minimizes ||center - sum_j w_j neighbor_j||^2 over the probability simplex
/// with a primal active-set method on the local Gram matrix.
inline Vector lle_weights(const Eigen::Ref<const Vector>& center,
                          const Eigen::Ref<const Matrix>& neighbors, double qp_tolerance = 1e-10) {
  const Index k = neighbors.cols();
  if (k < 1) throw UsageError("lle_weights: need at least one neighbor");
  if (neighbors.rows() != center.size()) throw UsageError("lle_weights: dimension mismatch");
  if (!center.allFinite() || !neighbors.allFinite()) throw DataError("lle_weights: non-finite input");
  if (k == 1) return Vector::Ones(1);
  if ((neighbors.colwise() - neighbors.col(0)).isZero(0.0)) return Vector::Constant(k, 1.0 / static_cast<double>(k));

  Matrix diff = neighbors.colwise() - center;
  Matrix gram = diff.transpose() * diff;
  gram.diagonal().array() += 1e-8;

  // Minimizer of w'Gw with sum(w) = 1 restricted to `support`.
  auto solve_support = [&](const std::vector<char>& support) {
    std::vector<Index> idx;
    for (Index j = 0; j < k; ++j)
      if (support[j]) idx.push_back(j);
    const Index a = static_cast<Index>(idx.size());
    Matrix g(a, a);
    for (Index r = 0; r < a; ++r)
      for (Index c = 0; c < a; ++c) g(r, c) = gram(idx[r], idx[c]);
    Vector v = g.llt().solve(Vector::Ones(a));
    Vector w = Vector::Zero(k);
    const double total = v.sum();
    for (Index r = 0; r < a; ++r) w[idx[r]] = v[r] / total;
    return w;
  };

  std::vector<char> support(k, 1);
  Vector w = Vector::Constant(k, 1.0 / static_cast<double>(k));
  for (int iter = 0; iter < 10 * static_cast<int>(k) + 20; ++iter) {
    Vector target = solve_support(support);
    bool feasible = true;
    for (Index j = 0; j < k; ++j)
      if (support[j] && target[j] < 0.0) feasible = false;

    if (feasible) {
      w = target;
      // Multipliers of the inactive bounds: 2(Gw)_j - mu with mu = 2 w'Gw.
      Vector gw = gram * w;
      const double mu = w.dot(gw);
      Index add = -1;
      double most = -qp_tolerance * std::max(1.0, mu);
      for (Index j = 0; j < k; ++j) {
        if (support[j]) continue;
        double nu = gw[j] - mu;
        if (nu < most) {
          most = nu;
          add = j;
        }
      }
      if (add < 0) break;
      support[add] = 1;
      continue;
    }

    // Step toward target until the first weight hits zero.
    double step = 1.0;
    Index blocking = -1;
    for (Index j = 0; j < k; ++j) {
      if (!support[j] || target[j] >= 0.0) continue;
      double t = w[j] / (w[j] - target[j]);
      if (t < step) {
        step = t;
        blocking = j;
      }
    }
    w += step * (target - w);
    if (blocking >= 0) {
      w[blocking] = 0.0;
      support[blocking] = 0;
    }
    for (Index j = 0; j < k; ++j)
      if (support[j] && w[j] <= 0.0) {
        w[j] = 0.0;
        support[j] = 0;
      }
  }

  w = w.cwiseMax(0.0);
  w /= w.sum();
  return w;
}

inline NeighborGraph build_graph(const Eigen::Ref<const Matrix>& samples, const GraphOptions& options) {
  NeighborGraph graph;
  graph.n = samples.cols();
  graph.neighbors = knn(samples, options);
  graph.weights.resize(static_cast<std::size_t>(graph.n));
  parallel_for(graph.n, options.threads, [&](Index i) {
    const auto& nb = graph.neighbors[i];
    Matrix pts(samples.rows(), static_cast<Index>(nb.size()));
    for (std::size_t t = 0; t < nb.size(); ++t) pts.col(static_cast<Index>(t)) = samples.col(nb[t]);
    graph.weights[i] = lle_weights(samples.col(i), pts, options.qp_tolerance);
  });
  return graph;
}

/// Writes "i j weight" lines, rows ascending and neighbors ascending within a row.
inline void write_edge_list(std::ostream& os, const NeighborGraph& graph) {
  os << std::setprecision(17);
  for (Index i = 0; i < graph.n; ++i) {
    std::vector<std::size_t> order(graph.neighbors[i].size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return graph.neighbors[i][a] < graph.neighbors[i][b]; });
    for (std::size_t t : order)
      os << i << ' ' << graph.neighbors[i][t] << ' ' << graph.weights[i][static_cast<Index>(t)] << '\n';
  }
}

/// Propagates the known one-hot labels (columns 0..l-1) over the graph with
/// Jacobi sweeps y_i <- sum_j A_ij y_j, keeping labeled columns clamped.
/// Unlabeled nodes that cannot reach a labeled node stay at the uniform prior.
inline Matrix label_propagation_init(const NeighborGraph& graph, const Eigen::Ref<const Matrix>& known,
                                     int max_sweeps = 200, double tol = 1e-6) {
  const Index n = graph.n;
  const Index c = known.rows();
  const Index l = known.cols();
  if (l > n) throw UsageError("label_propagation_init: more labeled columns than graph nodes");
  if (c < 1) throw UsageError("label_propagation_init: need at least one class");
  if (max_sweeps < 1 || !(tol > 0.0)) throw UsageError("label_propagation_init: bad iteration settings");

  // Reverse reachability from labeled nodes along j -> i whenever j in N_i.
  std::vector<std::vector<Index>> dependents(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    for (std::size_t t = 0; t < graph.neighbors[i].size(); ++t)
      if (graph.weights[i][static_cast<Index>(t)] > 0.0) dependents[graph.neighbors[i][t]].push_back(i);
  std::vector<char> reached(static_cast<std::size_t>(n), 0);
  std::queue<Index> frontier;
  for (Index i = 0; i < l; ++i) {
    reached[i] = 1;
    frontier.push(i);
  }
  while (!frontier.empty()) {
    Index j = frontier.front();
    frontier.pop();
    for (Index i : dependents[j])
      if (!reached[i]) {
        reached[i] = 1;
        frontier.push(i);
      }
  }

  Matrix y = Matrix::Zero(c, n);
  y.leftCols(l) = known;
  for (Index i = l; i < n; ++i)
    if (!reached[i]) y.col(i).setConstant(1.0 / static_cast<double>(c));

  Matrix next = y;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double change = 0.0;
    for (Index i = l; i < n; ++i) {
      if (!reached[i]) continue;
      Vector v = Vector::Zero(c);
      for (std::size_t t = 0; t < graph.neighbors[i].size(); ++t)
        v += graph.weights[i][static_cast<Index>(t)] * y.col(graph.neighbors[i][t]);
      change = std::max(change, (v - y.col(i)).cwiseAbs().maxCoeff());
      next.col(i) = v;
    }
    std::swap(y, next);
    if (change < tol) break;
  }
  return y;
}

}  // namespace sssc
