#include "fixtures.hpp"

#include "sssc/cli.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>

using namespace sssc;
namespace fs = std::filesystem;

namespace {

class Workspace : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("sssc_" + std::to_string(::getpid()) + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write(const std::string& name, const std::string& content) const {
    std::ofstream(path(name)) << content;
    return path(name);
  }

  static std::string slurp(const std::string& p) {
    std::ifstream is(p);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  }

  // Runs the sssc executable; returns its exit status.
  int run(const std::string& args) const {
    const std::string cmd = std::string(SSSC_CLI_PATH) + " " + args + " > " + path("stdout.txt") + " 2> " +
                            path("stderr.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  // Blobs written as CSV; every `stride`-th sample keeps its label.
  void write_blobs(Index n, Index stride, std::uint64_t seed) const {
    fixtures::Blobs b = fixtures::two_blobs(n, 6.0, seed);
    std::ostringstream f, l;
    f << std::setprecision(17) << "id,f1,f2\n";
    l << "id,label\n";
    for (Index i = 0; i < n; ++i) {
      f << "s" << i << ',' << b.features(0, i) << ',' << b.features(1, i) << '\n';
      l << "s" << i << ',' << (i % stride == 0 ? (b.labels[i] == 0 ? "left" : "right") : "") << '\n';
    }
    write("x.csv", f.str());
    write("y.csv", l.str());
  }

  fs::path dir_;
};

using Io = Workspace;
using Cli = Workspace;

}  // namespace

TEST_F(Io, LoadsFeaturesAndPartialLabels) {
  write("f.csv", "id,a,b\np,1,2\nq,3,4.5\nr,-1,0\n");
  write("l.csv", "id,label\nq,zebra\np,ant\nr,\n");
  Dataset ds = load_dataset(path("f.csv"), path("l.csv"));
  EXPECT_EQ(ds.size(), 3);
  EXPECT_EQ(ds.features.rows(), 2);
  EXPECT_EQ(ds.features(1, 1), 4.5);
  EXPECT_EQ(ds.labeled_count(), 2);
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"ant", "zebra"}));
  EXPECT_EQ(ds.labels[0], 0);
  EXPECT_EQ(ds.labels[1], 1);
  EXPECT_FALSE(ds.labels[2].has_value());

  Dataset unlabeled = load_dataset(path("f.csv"));
  EXPECT_EQ(unlabeled.labeled_count(), 0);
}

TEST_F(Io, ParseErrorsNameTheLine) {
  write("dup.csv", "id,a\np,1\nq,2\np,3\n");
  try {
    load_dataset(path("dup.csv"));
    FAIL() << "expected an error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":4:"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("'p'"), std::string::npos) << e.what();
  }
  write("ragged.csv", "id,a,b\np,1,2\nq,3\n");
  EXPECT_THROW(load_dataset(path("ragged.csv")), DataError);
  write("nan.csv", "id,a\np,abc\n");
  EXPECT_THROW(load_dataset(path("nan.csv")), DataError);
  write("ok.csv", "id,a\np,1\n");
  write("stranger.csv", "id,label\nz,x\n");
  EXPECT_THROW(load_dataset(path("ok.csv"), path("stranger.csv")), DataError);
  EXPECT_THROW(load_dataset(path("missing.csv")), DataError);
}

TEST_F(Io, ModelRoundTripIsBitExact) {
  fixtures::Blobs b = fixtures::two_blobs(30, 5.0, 3);
  Hyperparams hp;
  hp.m = 4;
  hp.T = 3;
  std::vector<Index> head(b.labels.begin(), b.labels.begin() + 8);
  Model model = train(b.features, one_hot(head, 2), hp, 1);
  model.class_names = {"a", "b"};
  save_model(path("m.json"), model);
  Model back = load_model(path("m.json"));
  EXPECT_EQ(back.codebook.columns, model.codebook.columns);
  EXPECT_EQ(back.codebook.radius, model.codebook.radius);
  EXPECT_EQ(back.classifier, model.classifier);
  EXPECT_EQ(back.train_labels, model.train_labels);
  EXPECT_EQ(back.train_features, model.train_features);
  EXPECT_EQ(back.objective_trace, model.objective_trace);
  EXPECT_EQ(back.hyperparams.alpha, model.hyperparams.alpha);
  EXPECT_EQ(back.class_names, model.class_names);
  EXPECT_EQ(back.labeled, model.labeled);
  EXPECT_EQ(model_to_json(back, false).dump(), model_to_json(model, false).dump());

  json j = model_to_json(model, false);
  j["format_version"] = 99;
  EXPECT_THROW(model_from_json(j), DataError);
  j = model_to_json(model, false);
  j["classifier"]["cols"] = 3;
  EXPECT_THROW(model_from_json(j), DataError);
}

TEST_F(Io, ConfigRejectsUnknownKeys) {
  EXPECT_THROW(cli::config_from_json(json{{"alpah", 0.1}}), UsageError);
  cli::RunConfig c = cli::config_from_json(json{{"alpha", 0.1}, {"m", 3}, {"seed", 7}});
  EXPECT_EQ(c.alpha, 0.1);
  EXPECT_EQ(c.m, 3);
  cli::RunConfig flags;
  flags.m = 5;
  flags.fill_from(c);
  EXPECT_EQ(flags.m, 5);
  EXPECT_EQ(flags.seed, 7u);
}

TEST_F(Io, AtomicWriteLeavesNoTemporaries) {
  write_file_atomic(path("out.txt"), "hello\n");
  EXPECT_EQ(slurp(path("out.txt")), "hello\n");
  int files = 0;
  for (const auto& entry : fs::directory_iterator(dir_)) files += entry.is_regular_file();
  EXPECT_EQ(files, 1);
}

TEST_F(Cli, TrainPredictRoundTrip) {
  write_blobs(60, 5, 5);
  ASSERT_EQ(run("train --features " + path("x.csv") + " --labels " + path("y.csv") + " --model " + path("m.json") +
                " --m 6 --seed 3"),
            0)
      << slurp(path("stderr.txt"));
  Model model = load_model(path("m.json"));
  EXPECT_EQ(model.class_names, (std::vector<std::string>{"left", "right"}));

  ASSERT_EQ(run("predict --model " + path("m.json") + " --features " + path("x.csv") + " --out " + path("p.csv")), 0)
      << slurp(path("stderr.txt"));
  std::istringstream lines(slurp(path("p.csv")));
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "id,predicted_class,score_1,score_2");
  fixtures::Blobs b = fixtures::two_blobs(60, 6.0, 5);
  int rows = 0, agree = 0;
  while (std::getline(lines, line)) {
    const std::string cls = line.substr(line.find(',') + 1, line.find(',', line.find(',') + 1) - line.find(',') - 1);
    agree += cls == (b.labels[rows] == 0 ? "left" : "right");
    ++rows;
  }
  EXPECT_EQ(rows, 60);
  EXPECT_GE(agree, 54);
}

TEST_F(Cli, SameSeedSameModel) {
  write_blobs(40, 3, 6);
  const std::string common = "train --features " + path("x.csv") + " --labels " + path("y.csv") + " --m 5 --seed 9";
  ASSERT_EQ(run(common + " --model " + path("a.json")), 0);
  ASSERT_EQ(run(common + " --model " + path("b.json") + " --threads 3"), 0);
  json a = read_json_file(path("a.json")), b = read_json_file(path("b.json"));
  EXPECT_TRUE(a.contains("created_at"));
  a.erase("created_at");
  b.erase("created_at");
  EXPECT_EQ(a.dump(), b.dump());
}

TEST_F(Cli, ZeroLabeledIsUsageError) {
  write("x.csv", "id,f\na,1\nb,2\nc,3\n");
  write("y.csv", "id,label\na,\n");
  EXPECT_EQ(run("train --features " + path("x.csv") + " --labels " + path("y.csv") + " --model " + path("m.json")), 2);
  EXPECT_FALSE(fs::exists(path("m.json")));
  EXPECT_NE(slurp(path("stderr.txt")).find("labeled"), std::string::npos);
}

TEST_F(Cli, PredictEdgeCases) {
  write_blobs(30, 3, 7);
  ASSERT_EQ(run("train --features " + path("x.csv") + " --labels " + path("y.csv") + " --model " + path("m.json") +
                " --m 4 --iters 3"),
            0);
  write("wide.csv", "id,a,b,c\nz,1,2,3\n");
  EXPECT_EQ(run("predict --model " + path("m.json") + " --features " + path("wide.csv") + " --out " + path("p.csv")), 3);
  EXPECT_FALSE(fs::exists(path("p.csv")));
  EXPECT_NE(slurp(path("stderr.txt")).find("d=2"), std::string::npos);
  EXPECT_NE(slurp(path("stderr.txt")).find("d=3"), std::string::npos);

  write("empty.csv", "id,a,b\n");
  ASSERT_EQ(run("predict --model " + path("m.json") + " --features " + path("empty.csv")), 0);
  EXPECT_EQ(slurp(path("stdout.txt")), "id,predicted_class,score_1,score_2\n");
}

TEST_F(Cli, EvaluateReports) {
  write_blobs(40, 1, 8);
  const std::string common = "evaluate --features " + path("x.csv") + " --labels " + path("y.csv") +
                             " --folds 2 --m 4 --iters 3 --init-iters 3 --seed 2";
  ASSERT_EQ(run(common + " --out " + path("r1") + " --predictions " + path("pred.csv")), 0) << slurp(path("stderr.txt"));
  ASSERT_EQ(run(common + " --out " + path("r2") + " --threads 2"), 0);
  json a = read_json_file(path("r1.json")), b = read_json_file(path("r2.json"));
  EXPECT_EQ(a["folds"].size(), 2u);
  a.erase("generated_at");
  b.erase("generated_at");
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_TRUE(fs::exists(path("r1.txt")));
  EXPECT_EQ(std::count(std::istreambuf_iterator<char>(std::ifstream(path("pred.csv")).rdbuf()), {}, '\n'), 41);

  EXPECT_EQ(run("evaluate --features " + path("x.csv") + " --labels " + path("y.csv") + " --folds 1 --out " + path("r3")), 2);
  EXPECT_FALSE(fs::exists(path("r3.json")));
}

TEST_F(Cli, ConfigFileAndFlagsPrecedence) {
  write_blobs(30, 2, 9);
  write("cfg.json", "{\"features\": \"" + path("x.csv") + "\", \"labels\": \"" + path("y.csv") +
                        "\", \"m\": 3, \"iters\": 2, \"seed\": 4}");
  ASSERT_EQ(run("train --config " + path("cfg.json") + " --m 5 --model " + path("m.json")), 0) << slurp(path("stderr.txt"));
  EXPECT_EQ(load_model(path("m.json")).atoms(), 5);
  write("bad.json", "{\"mm\": 3}");
  EXPECT_EQ(run("train --config " + path("bad.json") + " --model " + path("m2.json")), 2);
}

TEST_F(Cli, GraphExportAndUsage) {
  write("x.csv", "id,f\na,0\nb,1\nc,2\n");
  ASSERT_EQ(run("graph --features " + path("x.csv") + " --k 2"), 0);
  EXPECT_EQ(std::count(std::istreambuf_iterator<char>(std::ifstream(path("stdout.txt")).rdbuf()), {}, '\n'), 6);
  EXPECT_EQ(run("graph --features " + path("x.csv") + " --k 3"), 2);
  EXPECT_EQ(run("no-such-command"), 2);
  EXPECT_EQ(run("train --features " + path("x.csv")), 2);
}
