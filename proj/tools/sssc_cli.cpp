#include "sssc/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

void add_common(CLI::App* cmd, sssc::cli::RunConfig& cfg, std::string& config_path) {
  cmd->add_option("--config", config_path, "JSON run configuration; explicit flags take precedence");
  cmd->add_option("--threads", cfg.threads, "worker threads (0 = machine parallelism)");
}

void add_hyperparams(CLI::App* cmd, sssc::cli::RunConfig& cfg) {
  cmd->add_option("--alpha", cfg.alpha, "L1 sparsity weight (default 0.15 * mean sample norm)");
  cmd->add_option("--beta", cfg.beta, "label-fit weight");
  cmd->add_option("--gamma", cfg.gamma, "manifold weight");
  cmd->add_option("--m", cfg.m, "number of codewords");
  cmd->add_option("--k", cfg.k, "neighbors per sample");
  cmd->add_option("--iters", cfg.iters, "outer training iterations");
  cmd->add_option("--init-iters", cfg.init_iters, "plain sparse-coding alternations used for initialization");
  cmd->add_option("--inference-iters", cfg.inference_iters, "code/label alternations per test sample");
  cmd->add_option("--radius-b", cfg.radius_b, "squared-norm bound for codewords");
  cmd->add_option("--radius-w", cfg.radius_w, "squared-norm bound for classifier columns");
  cmd->add_option("--seed", cfg.seed, "random seed");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace sssc::cli;
  CLI::App app{"Semi-supervised sparse coding: train, predict, evaluate"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;

  auto* train = app.add_subcommand("train", "learn codebook, classifier and labels from a partially labeled set");
  train->add_option("--features", cfg.features, "features CSV (id,f1,...,fd)");
  train->add_option("--labels", cfg.labels, "labels CSV (id,label); missing or empty labels are unlabeled");
  train->add_option("--model", cfg.model, "output model JSON");
  add_hyperparams(train, cfg);
  add_common(train, cfg, config_path);

  auto* predict = app.add_subcommand("predict", "classify samples with a trained model");
  predict->add_option("--model", cfg.model, "model JSON");
  predict->add_option("--features", cfg.features, "features CSV");
  predict->add_option("--out", cfg.out, "predictions CSV (default: stdout)");
  add_common(predict, cfg, config_path);

  auto* evaluate = app.add_subcommand("evaluate", "stratified k-fold evaluation with partial labeling");
  evaluate->add_option("--features", cfg.features, "features CSV");
  evaluate->add_option("--labels", cfg.labels, "labels CSV");
  evaluate->add_option("--out", cfg.out, "report path prefix; writes <out>.json and <out>.txt");
  evaluate->add_option("--folds", cfg.folds, "number of folds (default 10)");
  evaluate->add_option("--label-fraction", cfg.label_fraction, "share of training samples keeping labels (default 0.2)");
  evaluate->add_option("--grid", cfg.grid, "JSON hyperparameter grid");
  evaluate->add_option("--predictions", cfg.predictions, "also dump held-out predictions CSV");
  evaluate->add_option("--positive-class", cfg.positive_class, "positive class name for binary metrics");
  add_hyperparams(evaluate, cfg);
  add_common(evaluate, cfg, config_path);

  auto* graph = app.add_subcommand("graph", "export the neighbor graph as an edge list");
  graph->add_option("--features", cfg.features, "features CSV");
  graph->add_option("--k", cfg.k, "neighbors per sample");
  graph->add_option("--out", cfg.out, "edge list path (default: stdout)");
  add_common(graph, cfg, config_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (!config_path.empty()) cfg.fill_from(config_from_json(sssc::read_json_file(config_path)));
    if (train->parsed()) {
      command_train(cfg);
    } else if (predict->parsed()) {
      command_predict(cfg);
    } else if (evaluate->parsed()) {
      command_evaluate(cfg);
    } else if (graph->parsed()) {
      command_graph(cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kOk;
}
