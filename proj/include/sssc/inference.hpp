#pragma once

// Coding and classifying unseen samples against a trained model.

#include "sssc/graph.hpp"
#include "sssc/sparse_solver.hpp"
#include "sssc/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

namespace sssc {

struct TestResult {
  Vector sparse_code;
  Vector label_vector;
  Index predicted_class = 0;  // 0-based
  bool converged = false;
  int iterations_used = 0;
  std::vector<double> step_objectives;  // after the initial point and every sub-step
};

struct NeighborWeights {
  std::vector<Index> indices;
  Vector weights;
};

struct InferenceOptions {
  int iterations = 10;
  double relative_tolerance = 1e-6;
  SolverOptions solver;
};

/// Lowest index wins ties.
inline Index argmax_lowest(const Eigen::Ref<const Vector>& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline void check_test_point(const Eigen::Ref<const Vector>& x, const Model& model) {
  if (x.size() != model.dim())
    throw DataError("expected " + std::to_string(model.dim()) + " features, got " + std::to_string(x.size()));
  if (!x.allFinite()) throw DataError("test point has non-finite features");
}

inline NeighborWeights test_reconstruction_weights(const Eigen::Ref<const Vector>& x, const Model& model) {
  check_test_point(x, model);
  const Index k = std::min(model.graph_options.k, model.train_features.cols());
  NeighborWeights out;
  out.indices = nearest_columns(model.train_features, x, k);
  Matrix pts(x.size(), static_cast<Index>(out.indices.size()));
  for (std::size_t t = 0; t < out.indices.size(); ++t)
    pts.col(static_cast<Index>(t)) = model.train_features.col(out.indices[t]);
  out.weights = lle_weights(x, pts, model.graph_options.qp_tolerance);
  return out;
}

inline Vector neighbor_label_average(const NeighborWeights& nw, const Model& model) {
  Vector avg = Vector::Zero(model.classes());
  for (std::size_t t = 0; t < nw.indices.size(); ++t)
    avg += nw.weights[static_cast<Index>(t)] * model.train_labels.col(nw.indices[t]);
  return avg;
}

inline Dictionary extended_dictionary(const Model& model) {
  const auto& hp = model.hyperparams;
  return stack_extended(model.codebook.columns, model.classifier, hp.beta, hp.combined_radius());
}

// ||x - Bs||^2 + alpha |s|_1 + beta ||y - Ws||^2 + gamma ||y - ybar||^2
inline double test_objective(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& s,
                             const Eigen::Ref<const Vector>& y, const Eigen::Ref<const Vector>& neighbor_average,
                             const Model& model) {
  const auto& hp = model.hyperparams;
  return (x - model.codebook.columns * s).squaredNorm() + hp.alpha.value_or(0.0) * s.lpNorm<1>() +
         hp.beta * (y - model.classifier * s).squaredNorm() + hp.gamma * (y - neighbor_average).squaredNorm();
}

/// Sparse code of x with the label estimate y held fixed: feature-sign search
/// against [B ; sqrt(beta) W] with target [x ; sqrt(beta) y].
inline SparseCode solve_test_code(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
                                  const Model& model, const SolverOptions& options = {},
                                  const Vector* warm_start = nullptr) {
  check_test_point(x, model);
  const double beta = model.hyperparams.beta;
  Vector target(x.size() + y.size());
  target << x, std::sqrt(beta) * y;
  SolverOptions opt = options;
  opt.alpha = model.hyperparams.alpha.value_or(0.0);
  return feature_sign_search(extended_dictionary(model), target, opt, warm_start);
}

/// y = (beta W s + gamma ybar) / (beta + gamma)
inline Vector solve_test_label(const Eigen::Ref<const Vector>& predicted, const Eigen::Ref<const Vector>& neighbor_average,
                               double beta, double gamma) {
  if (!(beta > 0.0) || !(gamma >= 0.0)) throw UsageError("solve_test_label: need beta > 0 and gamma >= 0");
  return (beta * predicted + gamma * neighbor_average) / (beta + gamma);
}

inline TestResult encode_classify(const Eigen::Ref<const Vector>& x, const Model& model,
                                  const InferenceOptions& options = {}) {
  check_test_point(x, model);
  if (options.iterations < 1) throw UsageError("encode_classify: iterations must be positive");
  const auto& hp = model.hyperparams;
  const NeighborWeights nw = test_reconstruction_weights(x, model);
  const Vector ybar = neighbor_label_average(nw, model);

  TestResult out;
  out.label_vector = ybar;
  out.sparse_code = Vector::Zero(model.atoms());
  double f = test_objective(x, out.sparse_code, out.label_vector, ybar, model);
  out.step_objectives.push_back(f);

  for (int round = 1; round <= options.iterations; ++round) {
    SparseCode code = solve_test_code(x, out.label_vector, model, options.solver, &out.sparse_code);
    out.sparse_code = std::move(code.coefficients);
    out.step_objectives.push_back(test_objective(x, out.sparse_code, out.label_vector, ybar, model));

    out.label_vector = solve_test_label(model.classifier * out.sparse_code, ybar, hp.beta, hp.gamma);
    const double next = test_objective(x, out.sparse_code, out.label_vector, ybar, model);
    out.step_objectives.push_back(next);
    out.iterations_used = round;

    const bool settled = std::abs(f - next) <= options.relative_tolerance * std::max(std::abs(f), 1e-300);
    f = next;
    if (settled) {
      out.converged = true;
      break;
    }
  }
  out.predicted_class = argmax_lowest(out.label_vector);
  return out;
}

inline InferenceOptions inference_options_for(const Model& model, unsigned threads = 1) {
  InferenceOptions opt;
  opt.iterations = model.hyperparams.inference_iterations;
  opt.solver.threads = threads;
  return opt;
}

/// Classifies every column independently; identical to per-point calls.
inline std::vector<TestResult> classify_batch(const Eigen::Ref<const Matrix>& points, const Model& model,
                                              const InferenceOptions& options, unsigned threads = 1) {
  if (points.cols() > 0 && points.rows() != model.dim())
    throw DataError("expected " + std::to_string(model.dim()) + " features, got " + std::to_string(points.rows()));
  std::vector<TestResult> out(static_cast<std::size_t>(points.cols()));
  InferenceOptions single = options;
  single.solver.threads = 1;
  parallel_for(points.cols(), threads, [&](Index i) { out[i] = encode_classify(points.col(i), model, single); });
  return out;
}

/// CSV: "id,predicted_class,score_1,...,score_c"; predicted_class is the class name.
inline void write_predictions_csv(std::ostream& os, const std::vector<std::string>& ids,
                                  const std::vector<TestResult>& results,
                                  const std::vector<std::string>& class_names, Index classes) {
  if (ids.size() != results.size()) throw UsageError("write_predictions_csv: ids and results differ in length");
  os << "id,predicted_class";
  for (Index c = 1; c <= classes; ++c) os << ",score_" << c;
  os << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    os << ids[i] << ',';
    if (static_cast<std::size_t>(r.predicted_class) < class_names.size())
      os << class_names[static_cast<std::size_t>(r.predicted_class)];
    else
      os << (r.predicted_class + 1);
    for (Index c = 0; c < r.label_vector.size(); ++c) os << ',' << r.label_vector[c];
    os << '\n';
  }
}

}  // namespace sssc
