#pragma once

// Semi-supervised sparse coding: joint learning of codebook B, sparse codes S,
// linear classifier W and soft labels Y by alternating exact block updates.

#include "sssc/common.hpp"
#include "sssc/graph.hpp"
#include "sssc/sparse_solver.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace sssc {

struct Hyperparams {
  std::optional<double> alpha;  // unset: 0.15 * mean sample norm
  double beta = 1.0;
  double gamma = 1.0;
  Index m = 8;
  double radius_b = 1.0;
  double radius_w = 1.0;
  Index k = 5;
  int T = 30;
  int T_init = 15;
  double early_stop = 1e-6;  // relative objective change; 0 disables
  int inference_iterations = 10;

  void validate() const {
    if (alpha && (!(*alpha >= 0.0) || !std::isfinite(*alpha)))
      throw UsageError("hyperparams: alpha must be finite and nonnegative");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw UsageError("hyperparams: beta must be positive");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw UsageError("hyperparams: gamma must be nonnegative");
    if (m < 1) throw UsageError("hyperparams: m must be at least 1");
    if (!(radius_b > 0.0) || !(radius_w > 0.0)) throw UsageError("hyperparams: radii must be positive");
    if (k < 1) throw UsageError("hyperparams: k must be at least 1");
    if (T < 1 || T_init < 0) throw UsageError("hyperparams: iteration counts out of range");
    if (!(early_stop >= 0.0)) throw UsageError("hyperparams: early_stop must be nonnegative");
    if (inference_iterations < 1) throw UsageError("hyperparams: inference_iterations must be positive");
  }

  double combined_radius() const { return radius_b + beta * radius_w; }

  double resolve_alpha(const Eigen::Ref<const Matrix>& features) const {
    if (alpha) return *alpha;
    if (features.cols() == 0) return 0.0;
    return 0.15 * features.colwise().norm().mean();
  }
};

inline Matrix one_hot(const std::vector<Index>& classes, Index class_count) {
  Matrix y = Matrix::Zero(class_count, static_cast<Index>(classes.size()));
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] < 0 || classes[i] >= class_count)
      throw UsageError("one_hot: class index " + std::to_string(classes[i]) + " out of range");
    y(classes[i], static_cast<Index>(i)) = 1.0;
  }
  return y;
}

// Known one-hot labels for the first l samples and the variable c x n label matrix.
struct LabelState {
  Matrix known;     // c x l
  Matrix variable;  // c x n, columns [0, l) equal `known`

  Index labeled() const { return known.cols(); }
  Index classes() const { return known.rows(); }

  static void validate_known(const Eigen::Ref<const Matrix>& known) {
    for (Index i = 0; i < known.cols(); ++i) {
      int ones = 0;
      for (Index r = 0; r < known.rows(); ++r) {
        if (known(r, i) == 1.0)
          ++ones;
        else if (known(r, i) != 0.0)
          throw DataError("labels: known column " + std::to_string(i) + " is not binary");
      }
      if (ones != 1) throw DataError("labels: known column " + std::to_string(i) + " is not one-hot");
    }
  }
};

struct ExtendedProblem {
  Matrix targets;  // [X ; sqrt(beta) Y]
  Index feature_dim = 0;
  double beta = 1.0;
  double combined_radius = 2.0;
};

inline ExtendedProblem assemble_extended(const Eigen::Ref<const Matrix>& features,
                                         const Eigen::Ref<const Matrix>& labels, double beta,
                                         double combined_radius) {
  if (features.cols() != labels.cols()) throw UsageError("assemble_extended: sample counts differ");
  if (!(beta > 0.0)) throw UsageError("assemble_extended: beta must be positive");
  ExtendedProblem p;
  p.feature_dim = features.rows();
  p.beta = beta;
  p.combined_radius = combined_radius;
  p.targets.resize(features.rows() + labels.rows(), features.cols());
  p.targets.topRows(features.rows()) = features;
  p.targets.bottomRows(labels.rows()) = std::sqrt(beta) * labels;
  return p;
}

inline ExtendedProblem assemble_extended(const Eigen::Ref<const Matrix>& features,
                                         const Eigen::Ref<const Matrix>& labels, const Hyperparams& hp) {
  return assemble_extended(features, labels, hp.beta, hp.combined_radius());
}

// Inverse of assemble_extended: returns (X, Y).
inline std::pair<Matrix, Matrix> split_extended(const ExtendedProblem& p) {
  const Index c = p.targets.rows() - p.feature_dim;
  return {p.targets.topRows(p.feature_dim), p.targets.bottomRows(c) / std::sqrt(p.beta)};
}

inline Dictionary stack_extended(const Eigen::Ref<const Matrix>& codebook,
                                 const Eigen::Ref<const Matrix>& classifier, double beta,
                                 double combined_radius) {
  Dictionary ext;
  ext.radius = combined_radius;
  ext.columns.resize(codebook.rows() + classifier.rows(), codebook.cols());
  ext.columns.topRows(codebook.rows()) = codebook;
  ext.columns.bottomRows(classifier.rows()) = std::sqrt(beta) * classifier;
  return ext;
}

struct CodebookClassifier {
  Matrix codebook;    // d x m
  Matrix classifier;  // c x m
  Dictionary extended;
};

inline CodebookClassifier split_dictionary(const Dictionary& extended, Index feature_dim, double beta) {
  CodebookClassifier out;
  out.extended = extended;
  out.codebook = extended.columns.topRows(feature_dim);
  out.classifier = extended.columns.bottomRows(extended.dim() - feature_dim) / std::sqrt(beta);
  return out;
}

/// Joint (B, W) update: one norm-constrained fit of the extended dictionary
/// under the merged bound ||b_k||^2 + beta ||w_k||^2 <= radius_b + beta radius_w.
inline CodebookClassifier update_dictionary_classifier(const ExtendedProblem& problem,
                                                       const Eigen::Ref<const Matrix>& codes,
                                                       const SolverOptions& options,
                                                       DualDiagnostics* diagnostics = nullptr) {
  if (!(problem.beta > 0.0)) throw UsageError("update_dictionary_classifier: beta must be positive");
  Dictionary ext = lagrange_dual_dictionary(problem.targets, codes, problem.combined_radius, options, diagnostics);
  return split_dictionary(ext, problem.feature_dim, problem.beta);
}

/// Closed-form minimizer over the unlabeled label columns Y_u of
///   beta ||Y - W S||^2 + gamma ||Y (I - A)'||^2   with Y_l clamped to `known`.
inline Matrix update_labels(const Eigen::Ref<const Matrix>& classifier,
                            const Eigen::Ref<const Matrix>& codes_unlabeled,
                            const Eigen::Ref<const Matrix>& known, const NeighborGraph& graph,
                            double beta, double gamma) {
  if (!(beta > 0.0) || !(gamma >= 0.0)) throw UsageError("update_labels: need beta > 0 and gamma >= 0");
  const Index l = known.cols();
  const Index u = codes_unlabeled.cols();
  const Index c = classifier.rows();
  if (graph.n != l + u) throw UsageError("update_labels: graph does not cover all samples");
  if (known.rows() != c && l > 0) throw UsageError("update_labels: class count mismatch");
  if (u == 0) return Matrix(c, 0);

  Matrix rhs = beta * classifier * codes_unlabeled;  // c x u
  if (gamma == 0.0) return rhs / beta;

  const Matrix q = (Matrix::Identity(graph.n, graph.n) - graph.dense()).transpose();
  const auto q_l = q.topRows(l);
  const auto q_u = q.bottomRows(u);
  if (l > 0) rhs.noalias() -= gamma * known * (q_l * q_u.transpose());
  Matrix system = gamma * (q_u * q_u.transpose());
  system.diagonal().array() += beta;
  Eigen::LLT<Matrix> llt(system);
  if (llt.info() != Eigen::Success) throw NumericalError("update_labels: label system is not positive definite");
  return llt.solve(rhs.transpose()).transpose();
}

struct ObjectiveTerms {
  double reconstruction = 0.0;
  double sparsity = 0.0;   // alpha * sum |s|
  double label_fit = 0.0;  // beta * ||Y - W S||^2
  double manifold = 0.0;   // gamma * ||Y (I - A)'||^2

  double total() const { return reconstruction + sparsity + label_fit + manifold; }
};

inline ObjectiveTerms sssc_objective_terms(const Eigen::Ref<const Matrix>& features,
                                           const Eigen::Ref<const Matrix>& codebook,
                                           const Eigen::Ref<const Matrix>& classifier,
                                           const Eigen::Ref<const Matrix>& codes,
                                           const Eigen::Ref<const Matrix>& labels, const NeighborGraph& graph,
                                           double alpha, double beta, double gamma) {
  if (features.cols() != codes.cols() || labels.cols() != codes.cols() || graph.n != codes.cols() ||
      codebook.cols() != codes.rows() || classifier.cols() != codes.rows() ||
      codebook.rows() != features.rows() || classifier.rows() != labels.rows())
    throw UsageError("sssc_objective: dimension mismatch");
  ObjectiveTerms t;
  t.reconstruction = (features - codebook * codes).squaredNorm();
  t.sparsity = alpha * codes.cwiseAbs().sum();
  t.label_fit = beta * (labels - classifier * codes).squaredNorm();
  t.manifold = gamma == 0.0 ? 0.0 : gamma * graph.residual(labels).squaredNorm();
  return t;
}

inline double sssc_objective(const Eigen::Ref<const Matrix>& features, const Eigen::Ref<const Matrix>& codebook,
                             const Eigen::Ref<const Matrix>& classifier, const Eigen::Ref<const Matrix>& codes,
                             const Eigen::Ref<const Matrix>& labels, const NeighborGraph& graph, double alpha,
                             double beta, double gamma) {
  return sssc_objective_terms(features, codebook, classifier, codes, labels, graph, alpha, beta, gamma).total();
}

struct InitResult {
  Dictionary dictionary;
  Matrix codes;
  std::vector<double> objective_trace;  // plain sparse-coding objective after every block
};

/// Picks `count` distinct columns: the first uniformly, each further one with
/// probability proportional to its squared sine to the closest pick, so that
/// codewords start out pointing in different directions.
inline std::vector<Index> seed_columns(const Eigen::Ref<const Matrix>& features, Index count,
                                       std::mt19937_64& rng) {
  const Index n = features.cols();
  Vector norms = features.colwise().norm().transpose();
  Vector spread = Vector::Ones(n);
  std::vector<Index> picked;
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  while (static_cast<Index>(picked.size()) < count) {
    std::vector<double> weight(static_cast<std::size_t>(n), 0.0);
    double total = 0.0;
    for (Index j = 0; j < n; ++j)
      if (!used[j]) total += weight[j] = spread[j];
    if (total <= 0.0)
      for (Index j = 0; j < n; ++j) weight[j] = used[j] ? 0.0 : 1.0;
    const Index j = std::discrete_distribution<Index>(weight.begin(), weight.end())(rng);
    picked.push_back(j);
    used[j] = 1;
    for (Index r = 0; r < n; ++r) {
      double cos2 = 1.0;
      if (norms[j] > 0.0 && norms[r] > 0.0) {
        const double cosine = features.col(r).dot(features.col(j)) / (norms[r] * norms[j]);
        cos2 = cosine * cosine;
      }
      spread[r] = std::min(spread[r], std::max(0.0, 1.0 - cos2));
    }
  }
  return picked;
}

/// Plain sparse coding used to seed training. Codewords start as training
/// columns chosen by seed_columns and scaled onto the norm bound.
inline InitResult unsupervised_init(const Eigen::Ref<const Matrix>& features, const Hyperparams& hp,
                                    std::uint64_t seed, const SolverOptions& base = {}) {
  hp.validate();
  const Index d = features.rows();
  const Index n = features.cols();
  if (d < 1 || n < 1) throw UsageError("unsupervised_init: empty feature matrix");
  if (!features.allFinite()) throw DataError("unsupervised_init: non-finite features");

  SolverOptions opt = base;
  opt.alpha = hp.resolve_alpha(features);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::vector<Index> order = seed_columns(features, std::min(hp.m, n), rng);

  InitResult out;
  out.dictionary.radius = hp.radius_b;
  out.dictionary.columns.resize(d, hp.m);
  const double scale = features.colwise().norm().maxCoeff();
  for (Index k = 0; k < hp.m; ++k) {
    Vector col = features.col(order[static_cast<std::size_t>(k % static_cast<Index>(order.size()))]);
    if (k >= n || col.norm() == 0.0) {
      // Reused or zero columns get a random perturbation so codewords stay distinct.
      Vector noise(d);
      for (Index r = 0; r < d; ++r) noise[r] = gauss(rng);
      col += 0.1 * std::max(scale, 1.0) * noise;
    }
    double norm = col.norm();
    out.dictionary.columns.col(k) = norm > 0.0 ? Vector(col * std::sqrt(hp.radius_b) / norm) : Vector::Zero(d);
  }

  out.codes = batch_encode(out.dictionary, features, opt);
  out.objective_trace.push_back(sc_objective(features, out.dictionary, out.codes, opt.alpha));
  for (int it = 0; it < hp.T_init; ++it) {
    Dictionary next = lagrange_dual_dictionary(features, out.codes, hp.radius_b, opt);
    reinitialize_dead_codewords(next, features, out.codes);
    if (sc_objective(features, next, out.codes, opt.alpha) <= out.objective_trace.back())
      out.dictionary = std::move(next);
    out.objective_trace.push_back(sc_objective(features, out.dictionary, out.codes, opt.alpha));
    out.codes = batch_encode(out.dictionary, features, opt, &out.codes);
    out.objective_trace.push_back(sc_objective(features, out.dictionary, out.codes, opt.alpha));
  }
  return out;
}

struct Model {
  Dictionary codebook;  // radius = radius_b; only the merged bound is enforced
  Matrix classifier;    // c x m
  Matrix train_labels;  // c x n, final Y
  Matrix train_features;
  Index labeled = 0;
  GraphOptions graph_options;
  Hyperparams hyperparams;  // alpha always resolved
  std::vector<double> objective_trace;
  std::vector<std::string> class_names;

  Index dim() const { return codebook.dim(); }
  Index atoms() const { return codebook.size(); }
  Index classes() const { return classifier.rows(); }
};

enum class TrainBlock { DictionaryClassifier, Codes, Labels };

struct TrainEvent {
  int iteration;
  TrainBlock block;
  double objective;
  const Matrix& labels;
  const Matrix& codes;
};

using TrainObserver = std::function<void(const TrainEvent&)>;

/// Runs the alternating optimization. `known` holds the one-hot labels of
/// the first known.cols() samples of `features`.
inline Model train(const Eigen::Ref<const Matrix>& features, const Eigen::Ref<const Matrix>& known,
                   const Hyperparams& hp, std::uint64_t seed, const TrainObserver& observe = {},
                   const SolverOptions& base = {}) {
  hp.validate();
  const Index d = features.rows();
  const Index n = features.cols();
  const Index l = known.cols();
  const Index c = known.rows();
  if (d < 1 || n < 1) throw UsageError("train: empty feature matrix");
  if (l < 1) throw UsageError("train: at least one labeled sample is required");
  if (l > n) throw UsageError("train: more labels than samples");
  if (c < 1) throw UsageError("train: need at least one class");
  if (!features.allFinite()) throw DataError("train: non-finite features");
  LabelState::validate_known(known);
  for (Index r = 0; r < c; ++r)
    if (known.row(r).sum() == 0.0) warn("train: class " + std::to_string(r) + " has no labeled samples");

  Model model;
  model.hyperparams = hp;
  model.hyperparams.alpha = hp.resolve_alpha(features);
  model.graph_options.k = hp.k;
  model.graph_options.threads = base.threads;
  model.train_features = features;
  model.labeled = l;
  const double alpha = *model.hyperparams.alpha;
  const double beta = hp.beta;
  const double gamma = hp.gamma;

  SolverOptions opt = base;
  opt.alpha = alpha;

  const NeighborGraph graph = build_graph(features, model.graph_options);
  InitResult init = unsupervised_init(features, model.hyperparams, seed, opt);
  Matrix codes = std::move(init.codes);
  Matrix labels = label_propagation_init(graph, known);

  Dictionary extended;
  bool have_extended = false;
  CodebookClassifier bw;
  auto objective = [&] {
    return sssc_objective(features, bw.codebook, bw.classifier, codes, labels, graph, alpha, beta, gamma);
  };
  auto emit = [&](int t, TrainBlock block, double value) {
    if (observe) observe(TrainEvent{t, block, value, labels, codes});
  };

  for (int t = 1; t <= hp.T; ++t) {
    ExtendedProblem problem = assemble_extended(features, labels, hp);

    Dictionary candidate = lagrange_dual_dictionary(problem.targets, codes, problem.combined_radius, opt);
    reinitialize_dead_codewords(candidate, problem.targets, codes);
    if (!have_extended || (problem.targets - candidate.columns * codes).squaredNorm() <=
                              (problem.targets - extended.columns * codes).squaredNorm()) {
      extended = std::move(candidate);
      have_extended = true;
    }
    bw = split_dictionary(extended, d, beta);
    emit(t, TrainBlock::DictionaryClassifier, objective());

    codes = batch_encode(extended, problem.targets, opt, &codes);
    emit(t, TrainBlock::Codes, objective());

    if (l < n) labels.rightCols(n - l) = update_labels(bw.classifier, codes.rightCols(n - l), known, graph, beta, gamma);
    const double value = objective();
    emit(t, TrainBlock::Labels, value);

    const bool stop = !model.objective_trace.empty() &&
                      std::abs(model.objective_trace.back() - value) <=
                          hp.early_stop * std::abs(model.objective_trace.back());
    model.objective_trace.push_back(value);
    if (stop) break;
  }

  model.codebook.columns = bw.codebook;
  model.codebook.radius = hp.radius_b;
  model.classifier = bw.classifier;
  model.train_labels = labels;
  return model;
}

}  // namespace sssc
