#pragma once

// Command implementations behind the `sssc` executable. Each command throws
// the library error types; exit_code_for() maps them to process statuses.

#include "sssc/evaluation.hpp"
#include "sssc/graph.hpp"
#include "sssc/inference.hpp"
#include "sssc/io.hpp"
#include "sssc/trainer.hpp"

#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

namespace sssc::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kNumerical = 4 };

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return kUsage;
  if (dynamic_cast<const DataError*>(&e)) return kData;
  if (dynamic_cast<const NumericalError*>(&e)) return kNumerical;
  return kFailure;
}

struct RunConfig {
  std::optional<std::string> features, labels, model, out, grid, predictions;
  std::optional<double> alpha, beta, gamma, radius_b, radius_w, label_fraction;
  std::optional<Index> m, k, folds;
  std::optional<int> iters, init_iters, inference_iters;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> positive_class;

  // Fields set here win; unset ones fall back to `other`.
  void fill_from(const RunConfig& other) {
    auto take = [](auto& mine, const auto& theirs) {
      if (!mine && theirs) mine = theirs;
    };
    take(features, other.features), take(labels, other.labels), take(model, other.model);
    take(out, other.out), take(grid, other.grid), take(predictions, other.predictions);
    take(alpha, other.alpha), take(beta, other.beta), take(gamma, other.gamma);
    take(radius_b, other.radius_b), take(radius_w, other.radius_w), take(label_fraction, other.label_fraction);
    take(m, other.m), take(k, other.k), take(folds, other.folds);
    take(iters, other.iters), take(init_iters, other.init_iters), take(inference_iters, other.inference_iters);
    take(seed, other.seed), take(threads, other.threads), take(positive_class, other.positive_class);
  }

  Hyperparams hyperparams() const {
    Hyperparams hp;
    if (alpha) hp.alpha = *alpha;
    if (beta) hp.beta = *beta;
    if (gamma) hp.gamma = *gamma;
    if (radius_b) hp.radius_b = *radius_b;
    if (radius_w) hp.radius_w = *radius_w;
    if (m) hp.m = *m;
    if (k) hp.k = *k;
    if (iters) hp.T = *iters;
    if (init_iters) hp.T_init = *init_iters;
    if (inference_iters) hp.inference_iterations = *inference_iters;
    hp.validate();
    return hp;
  }
};

inline RunConfig config_from_json(const json& j) {
  static const std::set<std::string> known{
      "format_version", "features", "labels", "model", "out", "grid", "predictions", "alpha", "beta", "gamma",
      "radius_b", "radius_w", "label_fraction", "m", "k", "folds", "iters", "init_iters", "inference_iters", "seed",
      "threads", "positive_class"};
  if (!j.is_object()) throw UsageError("config: expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw UsageError("config: unknown key '" + key + "'");
  RunConfig c;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key) && !j[key].is_null()) field = j[key].get<typename std::decay_t<decltype(field)>::value_type>();
    };
    get("features", c.features), get("labels", c.labels), get("model", c.model), get("out", c.out);
    get("grid", c.grid), get("predictions", c.predictions);
    get("alpha", c.alpha), get("beta", c.beta), get("gamma", c.gamma), get("radius_b", c.radius_b);
    get("radius_w", c.radius_w), get("label_fraction", c.label_fraction);
    get("m", c.m), get("k", c.k), get("folds", c.folds);
    get("iters", c.iters), get("init_iters", c.init_iters), get("inference_iters", c.inference_iters);
    get("seed", c.seed), get("threads", c.threads), get("positive_class", c.positive_class);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return c;
}

inline const std::string& require(const std::optional<std::string>& v, const char* flag) {
  if (!v) throw UsageError(std::string("missing required option --") + flag);
  return *v;
}

/// Loads the dataset, puts labeled samples first, trains and writes the model.
inline Model command_train(const RunConfig& cfg, std::ostream& log = std::cout) {
  const Hyperparams hp = cfg.hyperparams();
  const std::string& out = require(cfg.model, "model");
  Dataset ds = load_dataset(require(cfg.features, "features"), require(cfg.labels, "labels"));
  if (ds.labeled_count() == 0) throw UsageError("train: the labels file marks no sample as labeled");

  std::vector<Index> order, known_classes;
  for (Index i = 0; i < ds.size(); ++i)
    if (ds.labels[static_cast<std::size_t>(i)]) {
      order.push_back(i);
      known_classes.push_back(*ds.labels[static_cast<std::size_t>(i)]);
    }
  for (Index i = 0; i < ds.size(); ++i)
    if (!ds.labels[static_cast<std::size_t>(i)]) order.push_back(i);
  Matrix x(ds.features.rows(), ds.size());
  for (std::size_t t = 0; t < order.size(); ++t) x.col(static_cast<Index>(t)) = ds.features.col(order[t]);

  SolverOptions base;
  base.threads = cfg.threads.value_or(0);
  const auto classes = static_cast<Index>(ds.class_names.size());
  Model model = train(x, one_hot(known_classes, classes), hp, cfg.seed.value_or(0), {}, base);
  model.class_names = ds.class_names;
  save_model(out, model);

  log << "trained on " << ds.size() << " samples (" << known_classes.size() << " labeled, " << classes
      << " classes), " << model.objective_trace.size() << " iterations\n";
  if (!model.objective_trace.empty())
    log << "objective " << std::setprecision(10) << model.objective_trace.front() << " -> "
        << model.objective_trace.back() << '\n';
  log << "model written to " << out << '\n';
  return model;
}

/// Classifies every row of the features file; writes the predictions CSV to
/// --out (atomically) or to `sink` when no output path is given.
inline void command_predict(const RunConfig& cfg, std::ostream& sink = std::cout) {
  const Model model = load_model(require(cfg.model, "model"));
  const Dataset ds = load_dataset(require(cfg.features, "features"));
  if (ds.size() > 0 && ds.features.rows() != model.dim())
    throw DataError("predict: model expects d=" + std::to_string(model.dim()) + " features, file has d=" +
                    std::to_string(ds.features.rows()));
  const unsigned threads = cfg.threads.value_or(0);
  std::vector<TestResult> results;
  if (ds.size() > 0) results = classify_batch(ds.features, model, inference_options_for(model), threads);
  std::ostringstream os;
  write_predictions_csv(os, ds.ids, results, model.class_names, model.classes());
  if (cfg.out)
    write_file_atomic(*cfg.out, os.str());
  else
    sink << os.str();
}

/// Cross-validated evaluation of the labeled samples. Writes <out>.json and
/// <out>.txt; optionally a predictions CSV covering every held-out sample.
inline ExperimentReport command_evaluate(const RunConfig& cfg, std::ostream& log = std::cout,
                                         bool with_timestamp = true) {
  const std::string& out = require(cfg.out, "out");
  ExperimentConfig ec;
  ec.base = cfg.hyperparams();
  ec.folds = cfg.folds.value_or(10);
  ec.label_fraction = cfg.label_fraction.value_or(0.2);
  ec.seed = cfg.seed.value_or(0);
  ec.threads = cfg.threads.value_or(0);
  ec.keep_predictions = cfg.predictions.has_value();
  if (cfg.grid) ec.grid = grid_from_json(read_json_file(*cfg.grid));
  ec.validate();

  const Dataset ds = load_dataset(require(cfg.features, "features"), require(cfg.labels, "labels"));
  std::vector<Index> keep, truths;
  for (Index i = 0; i < ds.size(); ++i)
    if (ds.labels[static_cast<std::size_t>(i)]) {
      keep.push_back(i);
      truths.push_back(*ds.labels[static_cast<std::size_t>(i)]);
    }
  if (static_cast<Index>(keep.size()) < ds.size())
    warn("evaluate: " + std::to_string(ds.size() - static_cast<Index>(keep.size())) +
         " samples without labels are ignored");
  if (cfg.positive_class) {
    auto it = std::find(ds.class_names.begin(), ds.class_names.end(), *cfg.positive_class);
    if (it == ds.class_names.end()) throw UsageError("evaluate: unknown positive class '" + *cfg.positive_class + "'");
    ec.positive_class = it - ds.class_names.begin();
  }
  Matrix x(ds.features.rows(), static_cast<Index>(keep.size()));
  for (std::size_t t = 0; t < keep.size(); ++t) x.col(static_cast<Index>(t)) = ds.features.col(keep[t]);

  ExperimentReport report = run_experiment(x, truths, ec, ds.class_names);

  if (cfg.predictions) {
    std::vector<std::string> ids;
    std::vector<TestResult> results;
    for (const auto& f : report.folds)
      for (std::size_t t = 0; t < f.test_indices.size(); ++t) {
        ids.push_back(ds.ids[static_cast<std::size_t>(keep[static_cast<std::size_t>(f.test_indices[t])])]);
        results.push_back(f.results[t]);
      }
    std::ostringstream os;
    write_predictions_csv(os, ids, results, ds.class_names, static_cast<Index>(ds.class_names.size()));
    write_file_atomic(*cfg.predictions, os.str());
  }
  const std::string text = report_to_text(report);
  write_file_atomic(out + ".json", report_to_json(report, with_timestamp).dump(2) + "\n");
  write_file_atomic(out + ".txt", text);
  log << text;
  return report;
}

/// Writes the training-set neighbor graph as an "i j weight" edge list.
inline void command_graph(const RunConfig& cfg, std::ostream& sink = std::cout) {
  const Dataset ds = load_dataset(require(cfg.features, "features"));
  GraphOptions opt;
  opt.k = cfg.k.value_or(5);
  opt.threads = cfg.threads.value_or(0);
  std::ostringstream os;
  write_edge_list(os, build_graph(ds.features, opt));
  if (cfg.out)
    write_file_atomic(*cfg.out, os.str());
  else
    sink << os.str();
}

}  // namespace sssc::cli
