#pragma once

// Metrics, stratified cross-validation with partial label masking, and
// hyperparameter grid selection.

#include "sssc/inference.hpp"
#include "sssc/io.hpp"
#include "sssc/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace sssc {

struct ConfusionCounts {
  Index tp = 0, tn = 0, fp = 0, fn = 0;

  Index total() const { return tp + tn + fp + fn; }
};

// std::nullopt marks an undefined metric (zero denominator).
struct BinaryMetrics {
  std::optional<double> sensitivity, specificity, accuracy, f1;
};

inline std::optional<double> safe_ratio(double num, double den) {
  if (den == 0.0) return std::nullopt;
  return num / den;
}

inline BinaryMetrics binary_metrics(const ConfusionCounts& c) {
  if (c.tp < 0 || c.tn < 0 || c.fp < 0 || c.fn < 0) throw UsageError("binary_metrics: negative count");
  const auto tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn), fp = static_cast<double>(c.fp),
             fn = static_cast<double>(c.fn);
  BinaryMetrics m;
  m.sensitivity = safe_ratio(tp, tp + fn);
  m.specificity = safe_ratio(tn, fp + tn);
  m.accuracy = safe_ratio(tp + tn, tp + tn + fp + fn);
  m.f1 = safe_ratio(2.0 * tp, 2.0 * tp + fp + fn);
  return m;
}

inline ConfusionCounts confusion(const std::vector<Index>& predictions, const std::vector<Index>& truths,
                                 Index positive) {
  if (predictions.size() != truths.size()) throw UsageError("confusion: length mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const bool p = predictions[i] == positive, t = truths[i] == positive;
    if (p && t) ++c.tp;
    else if (!p && !t) ++c.tn;
    else if (p) ++c.fp;
    else ++c.fn;
  }
  return c;
}

inline double multiclass_accuracy(const std::vector<Index>& predictions, const std::vector<Index>& truths) {
  if (predictions.empty() || predictions.size() != truths.size())
    throw UsageError("multiclass_accuracy: need equal, nonempty inputs");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) hits += predictions[i] == truths[i];
  return static_cast<double>(hits) / static_cast<double>(truths.size());
}

/// Fold id per sample. Each class is shuffled and dealt round-robin with the
/// dealing position carried across classes, so per-class and total fold sizes
/// both differ by at most one.
inline std::vector<Index> stratified_kfold(const std::vector<Index>& labels, Index folds, std::uint64_t seed) {
  if (folds < 2) throw UsageError("stratified_kfold: need at least 2 folds");
  const auto n = static_cast<Index>(labels.size());
  if (n < folds) throw UsageError("stratified_kfold: fewer samples than folds");
  Index classes = 0;
  for (Index y : labels) {
    if (y < 0) throw UsageError("stratified_kfold: negative class index");
    classes = std::max(classes, y + 1);
  }
  std::vector<std::vector<Index>> members(static_cast<std::size_t>(classes));
  for (Index i = 0; i < n; ++i) members[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])].push_back(i);

  std::mt19937_64 rng(seed);
  std::vector<Index> fold(static_cast<std::size_t>(n), 0);
  Index cursor = 0;
  for (Index c = 0; c < classes; ++c) {
    auto& idx = members[static_cast<std::size_t>(c)];
    if (!idx.empty() && static_cast<Index>(idx.size()) < folds)
      warn("stratified_kfold: class " + std::to_string(c) + " has fewer samples than folds");
    std::shuffle(idx.begin(), idx.end(), rng);
    for (Index i : idx) fold[static_cast<std::size_t>(i)] = cursor++ % folds;
  }
  return fold;
}

struct LabelMask {
  std::vector<Index> order;  // positions into the input, labeled first
  Index labeled = 0;
};

/// Keeps round(fraction * n) labels, allocated to classes proportionally
/// (largest remainder) with at least one per present class when possible.
inline LabelMask mask_labels(const std::vector<Index>& labels, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) throw UsageError("mask_labels: fraction must lie in (0, 1]");
  const auto n = static_cast<Index>(labels.size());
  const auto target = static_cast<Index>(std::llround(fraction * static_cast<double>(n)));
  if (target < 1) throw UsageError("mask_labels: fraction leaves no labeled samples");

  Index classes = 0;
  for (Index y : labels) classes = std::max(classes, y + 1);
  std::vector<std::vector<Index>> members(static_cast<std::size_t>(classes));
  for (Index i = 0; i < n; ++i) members[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])].push_back(i);

  std::vector<Index> quota(static_cast<std::size_t>(classes), 0);
  std::vector<std::pair<double, Index>> remainder;
  Index assigned = 0;
  for (Index c = 0; c < classes; ++c) {
    const double exact = fraction * static_cast<double>(members[static_cast<std::size_t>(c)].size());
    quota[static_cast<std::size_t>(c)] = static_cast<Index>(std::floor(exact + 1e-9));
    assigned += quota[static_cast<std::size_t>(c)];
    remainder.emplace_back(-(exact - std::floor(exact + 1e-9)), c);
  }
  std::stable_sort(remainder.begin(), remainder.end());
  for (std::size_t r = 0; assigned < target && r < remainder.size(); ++r) {
    const Index c = remainder[r].second;
    if (quota[static_cast<std::size_t>(c)] < static_cast<Index>(members[static_cast<std::size_t>(c)].size())) {
      ++quota[static_cast<std::size_t>(c)];
      ++assigned;
    }
  }
  // Guarantee coverage by moving a label from the best-stocked class.
  for (Index c = 0; c < classes; ++c) {
    if (quota[static_cast<std::size_t>(c)] > 0 || members[static_cast<std::size_t>(c)].empty()) continue;
    auto donor = std::max_element(quota.begin(), quota.end()) - quota.begin();
    if (quota[static_cast<std::size_t>(donor)] <= 1) break;
    --quota[static_cast<std::size_t>(donor)];
    ++quota[static_cast<std::size_t>(c)];
  }

  std::mt19937_64 rng(seed);
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  for (Index c = 0; c < classes; ++c) {
    auto idx = members[static_cast<std::size_t>(c)];
    std::shuffle(idx.begin(), idx.end(), rng);
    for (Index t = 0; t < quota[static_cast<std::size_t>(c)]; ++t) chosen[static_cast<std::size_t>(idx[static_cast<std::size_t>(t)])] = 1;
  }
  LabelMask mask;
  for (Index i = 0; i < n; ++i)
    if (chosen[static_cast<std::size_t>(i)]) mask.order.push_back(i);
  mask.labeled = static_cast<Index>(mask.order.size());
  for (Index i = 0; i < n; ++i)
    if (!chosen[static_cast<std::size_t>(i)]) mask.order.push_back(i);
  return mask;
}

/// Nearest-centroid classifier fitted on labeled samples only.
inline std::vector<Index> nearest_centroid_predict(const Eigen::Ref<const Matrix>& train,
                                                   const std::vector<Index>& train_labels, Index classes,
                                                   const Eigen::Ref<const Matrix>& test) {
  Matrix centroids = Matrix::Zero(train.rows(), classes);
  std::vector<Index> counts(static_cast<std::size_t>(classes), 0);
  for (std::size_t i = 0; i < train_labels.size(); ++i) {
    centroids.col(train_labels[i]) += train.col(static_cast<Index>(i));
    ++counts[static_cast<std::size_t>(train_labels[i])];
  }
  std::vector<Index> out(static_cast<std::size_t>(test.cols()), 0);
  for (Index i = 0; i < test.cols(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < classes; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) continue;
      double dist = (centroids.col(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]) - test.col(i)).squaredNorm();
      if (dist < best) {
        best = dist;
        out[static_cast<std::size_t>(i)] = c;
      }
    }
  }
  return out;
}

struct HyperparamGrid {
  std::vector<double> alpha, beta, gamma;
  std::vector<Index> m, k;

  bool empty() const { return alpha.empty() && beta.empty() && gamma.empty() && m.empty() && k.empty(); }

  // Cartesian product over the supplied axes; unset axes keep `base`.
  std::vector<Hyperparams> expand(const Hyperparams& base) const {
    std::vector<Hyperparams> out{base};
    auto axis = [&out](const auto& values, auto setter) {
      if (values.empty()) return;
      std::vector<Hyperparams> next;
      for (const auto& hp : out)
        for (const auto& v : values) {
          Hyperparams h = hp;
          setter(h, v);
          next.push_back(h);
        }
      out = std::move(next);
    };
    axis(alpha, [](Hyperparams& h, double v) { h.alpha = v; });
    axis(beta, [](Hyperparams& h, double v) { h.beta = v; });
    axis(gamma, [](Hyperparams& h, double v) { h.gamma = v; });
    axis(m, [](Hyperparams& h, Index v) { h.m = v; });
    axis(k, [](Hyperparams& h, Index v) { h.k = v; });
    return out;
  }
};

inline HyperparamGrid grid_from_json(const json& j) {
  static const std::set<std::string> known{"alpha", "beta", "gamma", "m", "k"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw DataError("grid: unknown key '" + key + "'");
  HyperparamGrid g;
  try {
    if (j.contains("alpha")) g.alpha = j["alpha"].get<std::vector<double>>();
    if (j.contains("beta")) g.beta = j["beta"].get<std::vector<double>>();
    if (j.contains("gamma")) g.gamma = j["gamma"].get<std::vector<double>>();
    if (j.contains("m")) g.m = j["m"].get<std::vector<Index>>();
    if (j.contains("k")) g.k = j["k"].get<std::vector<Index>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("grid: ") + e.what());
  }
  return g;
}

inline json grid_to_json(const HyperparamGrid& g) {
  return json{{"alpha", g.alpha}, {"beta", g.beta}, {"gamma", g.gamma}, {"m", g.m}, {"k", g.k}};
}

struct ExperimentConfig {
  Index folds = 10;
  double label_fraction = 0.2;
  std::uint64_t seed = 0;
  Hyperparams base;
  HyperparamGrid grid;
  std::optional<Index> positive_class;  // binary problems: defaults to class 1
  unsigned threads = 1;
  bool keep_predictions = false;

  void validate() const {
    if (folds < 2) throw UsageError("experiment: folds must be at least 2");
    if (!(label_fraction > 0.0) || label_fraction > 1.0) throw UsageError("experiment: label_fraction must lie in (0, 1]");
    base.validate();
  }
};

struct FoldReport {
  Index fold = 0;
  std::vector<Index> train_indices;    // dataset positions, labeled first
  Index labeled = 0;
  std::vector<Index> test_indices;
  Hyperparams selected;
  std::optional<double> transductive_accuracy;  // unlabeled training samples
  double accuracy = 0.0;                        // test fold
  double baseline_accuracy = 0.0;               // nearest centroid on labeled samples
  std::optional<ConfusionCounts> counts;
  std::optional<BinaryMetrics> metrics;
  std::vector<Index> predictions;      // aligned with test_indices
  std::vector<TestResult> results;     // filled when keep_predictions
  int grid_points = 1;
};

struct Summary {
  double mean = 0.0, stddev = 0.0;
  Index count = 0, skipped = 0;
};

inline Summary summarize(const std::vector<std::optional<double>>& values) {
  Summary s;
  std::vector<double> v;
  for (const auto& x : values) {
    if (x) v.push_back(*x);
    else ++s.skipped;
  }
  s.count = static_cast<Index>(v.size());
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double acc = 0.0;
    for (double x : v) acc += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(acc / static_cast<double>(v.size() - 1));
  }
  return s;
}

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<std::string> class_names;
  Index samples = 0;
  Index classes = 0;
  std::vector<FoldReport> folds;
  Summary accuracy, baseline_accuracy, sensitivity, specificity, binary_accuracy, f1;
};

namespace detail {

struct TrainedFold {
  Model model;
  double transductive = 0.0;
};

inline TrainedFold train_fold(const Matrix& features, const std::vector<Index>& truths, Index labeled, Index classes,
                              const Hyperparams& hp, std::uint64_t seed, unsigned threads) {
  std::vector<Index> known_classes(truths.begin(), truths.begin() + labeled);
  SolverOptions base;
  base.threads = threads;
  TrainedFold out;
  out.model = train(features, one_hot(known_classes, classes), hp, seed, {}, base);
  const Index n = features.cols();
  if (labeled < n) {
    std::vector<Index> pred, truth;
    for (Index i = labeled; i < n; ++i) {
      pred.push_back(argmax_lowest(out.model.train_labels.col(i)));
      truth.push_back(truths[static_cast<std::size_t>(i)]);
    }
    out.transductive = multiclass_accuracy(pred, truth);
  } else {
    out.transductive = 1.0;
  }
  return out;
}

}  // namespace detail

/// Cross-validation over stratified folds. Within each training fold only a
/// label_fraction share keeps its labels; when a grid is given the setting with
/// the best transductive accuracy on the masked training samples is evaluated.
inline ExperimentReport run_experiment(const Eigen::Ref<const Matrix>& features, const std::vector<Index>& labels,
                                       const ExperimentConfig& config,
                                       const std::vector<std::string>& class_names = {}) {
  config.validate();
  const Index n = features.cols();
  if (static_cast<Index>(labels.size()) != n) throw UsageError("run_experiment: labels and features differ in length");
  ExperimentReport report;
  report.config = config;
  report.samples = n;
  for (Index y : labels) report.classes = std::max(report.classes, y + 1);
  if (report.classes < 2) throw UsageError("run_experiment: need at least 2 classes");
  report.class_names = class_names;
  const Index classes = report.classes;
  const Index positive = config.positive_class.value_or(1);

  const std::vector<Index> fold_of = stratified_kfold(labels, config.folds, config.seed);
  const std::vector<Hyperparams> candidates = config.grid.expand(config.base);

  for (Index f = 0; f < config.folds; ++f) {
    FoldReport fr;
    fr.fold = f;
    std::vector<Index> train_pool, train_truth;
    for (Index i = 0; i < n; ++i) {
      if (fold_of[static_cast<std::size_t>(i)] == f)
        fr.test_indices.push_back(i);
      else
        train_pool.push_back(i);
    }
    for (Index i : train_pool) train_truth.push_back(labels[static_cast<std::size_t>(i)]);
    const std::uint64_t fold_seed = config.seed * 1000003ULL + static_cast<std::uint64_t>(f);
    const LabelMask mask = mask_labels(train_truth, config.label_fraction, fold_seed);
    fr.labeled = mask.labeled;

    Matrix train_x(features.rows(), static_cast<Index>(mask.order.size()));
    std::vector<Index> ordered_truth;
    for (std::size_t t = 0; t < mask.order.size(); ++t) {
      const Index pos = train_pool[static_cast<std::size_t>(mask.order[t])];
      fr.train_indices.push_back(pos);
      train_x.col(static_cast<Index>(t)) = features.col(pos);
      ordered_truth.push_back(labels[static_cast<std::size_t>(pos)]);
    }
    Matrix test_x(features.rows(), static_cast<Index>(fr.test_indices.size()));
    std::vector<Index> test_truth;
    for (std::size_t t = 0; t < fr.test_indices.size(); ++t) {
      test_x.col(static_cast<Index>(t)) = features.col(fr.test_indices[t]);
      test_truth.push_back(labels[static_cast<std::size_t>(fr.test_indices[t])]);
    }

    std::optional<detail::TrainedFold> best;
    for (const auto& hp : candidates) {
      try {
        auto trained = detail::train_fold(train_x, ordered_truth, mask.labeled, classes, hp, fold_seed, config.threads);
        if (!best || trained.transductive > best->transductive) best = std::move(trained);
      } catch (const UsageError& e) {
        throw UsageError("fold " + std::to_string(f) + ": " + e.what());
      } catch (const DataError& e) {
        throw DataError("fold " + std::to_string(f) + ": " + e.what());
      } catch (const NumericalError& e) {
        throw NumericalError("fold " + std::to_string(f) + ": " + e.what());
      }
    }
    fr.grid_points = static_cast<int>(candidates.size());
    fr.selected = best->model.hyperparams;
    if (mask.labeled < train_x.cols()) fr.transductive_accuracy = best->transductive;

    InferenceOptions iopt = inference_options_for(best->model);
    std::vector<TestResult> results = classify_batch(test_x, best->model, iopt, config.threads);
    for (const auto& r : results) fr.predictions.push_back(r.predicted_class);
    if (config.keep_predictions) fr.results = std::move(results);
    fr.accuracy = multiclass_accuracy(fr.predictions, test_truth);

    std::vector<Index> labeled_truth(ordered_truth.begin(), ordered_truth.begin() + mask.labeled);
    fr.baseline_accuracy = multiclass_accuracy(
        nearest_centroid_predict(train_x.leftCols(mask.labeled), labeled_truth, classes, test_x), test_truth);

    if (classes == 2) {
      fr.counts = confusion(fr.predictions, test_truth, positive);
      fr.metrics = binary_metrics(*fr.counts);
    }
    report.folds.push_back(std::move(fr));
  }

  std::vector<std::optional<double>> acc, base, sen, spc, bacc, f1;
  for (const auto& fr : report.folds) {
    acc.emplace_back(fr.accuracy);
    base.emplace_back(fr.baseline_accuracy);
    if (fr.metrics) {
      sen.push_back(fr.metrics->sensitivity);
      spc.push_back(fr.metrics->specificity);
      bacc.push_back(fr.metrics->accuracy);
      f1.push_back(fr.metrics->f1);
    }
  }
  report.accuracy = summarize(acc);
  report.baseline_accuracy = summarize(base);
  report.sensitivity = summarize(sen);
  report.specificity = summarize(spc);
  report.binary_accuracy = summarize(bacc);
  report.f1 = summarize(f1);
  return report;
}

inline json optional_to_json(const std::optional<double>& v) { return v ? json(*v) : json("undefined"); }

inline json summary_to_json(const Summary& s) {
  return json{{"mean", s.mean}, {"stddev", s.stddev}, {"count", s.count}, {"skipped_undefined", s.skipped}};
}

inline json report_to_json(const ExperimentReport& r, bool with_timestamp = true) {
  json j;
  j["format_version"] = kFormatVersion;
  if (with_timestamp) j["generated_at"] = utc_timestamp();
  j["config"] = {{"folds", r.config.folds},
                 {"label_fraction", r.config.label_fraction},
                 {"seed", r.config.seed},
                 {"base_hyperparams", hyperparams_to_json(r.config.base)},
                 {"grid", grid_to_json(r.config.grid)}};
  if (r.classes == 2) j["config"]["positive_class"] = r.config.positive_class.value_or(1);
  j["samples"] = r.samples;
  j["classes"] = r.classes;
  j["class_names"] = r.class_names;
  json folds = json::array();
  for (const auto& f : r.folds) {
    json jf{{"fold", f.fold},
            {"train_size", f.train_indices.size()},
            {"labeled", f.labeled},
            {"test_size", f.test_indices.size()},
            {"test_indices", f.test_indices},
            {"grid_points", f.grid_points},
            {"selected_hyperparams", hyperparams_to_json(f.selected)},
            {"accuracy", f.accuracy},
            {"baseline_accuracy", f.baseline_accuracy},
            {"predictions", f.predictions}};
    jf["transductive_accuracy"] = optional_to_json(f.transductive_accuracy);
    if (f.counts) {
      jf["confusion"] = {{"tp", f.counts->tp}, {"tn", f.counts->tn}, {"fp", f.counts->fp}, {"fn", f.counts->fn}};
      jf["sensitivity"] = optional_to_json(f.metrics->sensitivity);
      jf["specificity"] = optional_to_json(f.metrics->specificity);
      jf["binary_accuracy"] = optional_to_json(f.metrics->accuracy);
      jf["f1"] = optional_to_json(f.metrics->f1);
    }
    folds.push_back(std::move(jf));
  }
  j["folds"] = std::move(folds);
  j["aggregate"] = {{"accuracy", summary_to_json(r.accuracy)}, {"baseline_accuracy", summary_to_json(r.baseline_accuracy)}};
  if (r.classes == 2) {
    j["aggregate"]["sensitivity"] = summary_to_json(r.sensitivity);
    j["aggregate"]["specificity"] = summary_to_json(r.specificity);
    j["aggregate"]["binary_accuracy"] = summary_to_json(r.binary_accuracy);
    j["aggregate"]["f1"] = summary_to_json(r.f1);
  }
  return j;
}

inline std::string report_to_text(const ExperimentReport& r) {
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("undefined");
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << *v;
    return os.str();
  };
  std::ostringstream os;
  os << "samples " << r.samples << ", classes " << r.classes << ", folds " << r.config.folds << ", label fraction "
     << r.config.label_fraction << ", seed " << r.config.seed << "\n\n";
  os << std::left << std::setw(6) << "fold" << std::setw(8) << "train" << std::setw(9) << "labeled" << std::setw(7)
     << "test" << std::setw(11) << "accuracy" << std::setw(11) << "baseline" << std::setw(13) << "transductive";
  if (r.classes == 2) os << std::setw(11) << "Sen" << std::setw(11) << "Spc" << std::setw(11) << "F1";
  os << '\n';
  for (const auto& f : r.folds) {
    os << std::setw(6) << f.fold << std::setw(8) << f.train_indices.size() << std::setw(9) << f.labeled << std::setw(7)
       << f.test_indices.size() << std::setw(11) << fmt(f.accuracy) << std::setw(11) << fmt(f.baseline_accuracy)
       << std::setw(13) << fmt(f.transductive_accuracy);
    if (f.metrics)
      os << std::setw(11) << fmt(f.metrics->sensitivity) << std::setw(11) << fmt(f.metrics->specificity)
         << std::setw(11) << fmt(f.metrics->f1);
    os << '\n';
  }
  auto line = [&](const char* name, const Summary& s) {
    os << std::setw(18) << name << fmt(s.mean) << " +/- " << fmt(s.stddev);
    if (s.skipped) os << "  (" << s.skipped << " undefined skipped)";
    os << '\n';
  };
  os << '\n';
  line("accuracy", r.accuracy);
  line("baseline", r.baseline_accuracy);
  if (r.classes == 2) {
    line("sensitivity", r.sensitivity);
    line("specificity", r.specificity);
    line("f1", r.f1);
  }
  return os.str();
}

}  // namespace sssc
