#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace sssc;

namespace {

NeighborGraph graph_from_dense(const Matrix& a) {
  NeighborGraph g;
  g.n = a.rows();
  g.neighbors.resize(static_cast<std::size_t>(g.n));
  g.weights.resize(static_cast<std::size_t>(g.n));
  for (Index i = 0; i < g.n; ++i) {
    std::vector<double> w;
    for (Index j = 0; j < g.n; ++j)
      if (a(i, j) != 0.0) {
        g.neighbors[i].push_back(j);
        w.push_back(a(i, j));
      }
    g.weights[i] = Eigen::Map<Vector>(w.data(), static_cast<Index>(w.size()));
  }
  return g;
}

Matrix frozen_adjacency() {
  Matrix a(5, 5);
  a << 0, .5, .5, 0, 0,
       .3, 0, .7, 0, 0,
       0, .2, 0, .8, 0,
       0, 0, .4, 0, .6,
       .1, 0, 0, .9, 0;
  return a;
}

Hyperparams small_hp() {
  Hyperparams hp;
  hp.m = 6;
  hp.k = 4;
  hp.T = 5;
  hp.T_init = 5;
  hp.early_stop = 0.0;
  return hp;
}

// Samples ordered labeled-first with the requested labeled count.
struct Prepared {
  Matrix features;
  Matrix known;
  std::vector<Index> truth;
};

Prepared prepare(const fixtures::Blobs& b, Index labeled) {
  Prepared p;
  p.features = b.features;
  p.truth = b.labels;
  std::vector<Index> head(b.labels.begin(), b.labels.begin() + labeled);
  p.known = one_hot(head, 2);
  return p;
}

}  // namespace

TEST(Extended, AssembleAndSplit) {
  std::mt19937_64 rng(1);
  Matrix x = fixtures::gaussian(3, 4, rng);
  Matrix y = Matrix::Zero(2, 4);
  ExtendedProblem p = assemble_extended(x, y, 1.0, 2.0);
  EXPECT_EQ(p.targets.topRows(3), x);
  EXPECT_TRUE(p.targets.bottomRows(2).isZero(0.0));

  y = fixtures::gaussian(2, 4, rng);
  p = assemble_extended(x, y, 4.0, 5.0);
  EXPECT_EQ(p.targets.topRows(3), x);
  EXPECT_EQ(p.targets.bottomRows(2), 2.0 * y);
  auto [x2, y2] = split_extended(p);
  EXPECT_EQ(x2, x);
  EXPECT_EQ(y2, y);
}

TEST(DictionaryClassifier, IdentityCodesRecoverTargets) {
  std::mt19937_64 rng(2);
  Matrix x = fixtures::gaussian(3, 4, rng);
  Matrix y = one_hot({0, 1, 1, 0}, 2);
  for (double beta : {1.0, 4.0}) {
    ExtendedProblem p = assemble_extended(x, y, beta, 1e6);
    CodebookClassifier bw = update_dictionary_classifier(p, Matrix::Identity(4, 4), SolverOptions{});
    EXPECT_TRUE(bw.codebook.isApprox(x, 1e-9)) << beta;
    EXPECT_TRUE(bw.classifier.isApprox(y, 1e-9)) << beta;
  }
}

TEST(DictionaryClassifier, MergedConstraintKkt) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix x = fixtures::gaussian(3, 12, rng);
    Matrix y = fixtures::gaussian(2, 12, rng);
    Matrix s = fixtures::gaussian(4, 12, rng);
    Hyperparams hp;
    hp.beta = 2.5;
    hp.radius_b = 0.4;
    hp.radius_w = 0.2;
    ExtendedProblem p = assemble_extended(x, y, hp);
    CodebookClassifier bw = update_dictionary_classifier(p, s, SolverOptions{});
    EXPECT_LE(dictionary_kkt_residual(p.targets, s, bw.extended.columns, hp.combined_radius()), 1e-6);
    for (Index k = 0; k < 4; ++k)
      EXPECT_LE(bw.codebook.col(k).squaredNorm() + hp.beta * bw.classifier.col(k).squaredNorm(),
                hp.combined_radius() + 1e-8);
    Matrix pg = oracle::dictionary_projected_gradient(p.targets, s, hp.combined_radius());
    EXPECT_NEAR((p.targets - bw.extended.columns * s).squaredNorm(), (p.targets - pg * s).squaredNorm(), 1e-6);
  }
}

TEST(Labels, GammaZeroIsClassifierOutput) {
  std::mt19937_64 rng(4);
  Matrix w = fixtures::gaussian(2, 3, rng);
  Matrix su = fixtures::gaussian(3, 3, rng);
  NeighborGraph g = graph_from_dense(frozen_adjacency());
  Matrix yu = update_labels(w, su, Matrix::Identity(2, 2), g, 1.5, 0.0);
  EXPECT_TRUE(yu.isApprox(w * su, 1e-14));
}

TEST(Labels, AllLabeledGivesEmpty) {
  NeighborGraph g = graph_from_dense(frozen_adjacency());
  Matrix yu = update_labels(Matrix::Ones(2, 3), Matrix(3, 0), one_hot({0, 1, 0, 1, 0}, 2), g, 1.0, 1.0);
  EXPECT_EQ(yu.cols(), 0);
}

TEST(Labels, FrozenInstance) {
  Matrix w(2, 3);
  w << -1.225, 0.076, 1.359, -1.547, 0.859, 0.119;
  Matrix su(3, 3);
  su << -0.641, 2., 0.762, -1.199, 0.075, 0.577, -0.189, 0.683, -0.067;
  Matrix expected(2, 3);
  expected << 0.05339851531245648, -1.0472642571368003, -1.0234807995783577,
              -0.3638480735443203, -1.901320169060411, -1.2120618683352307;
  Matrix a = frozen_adjacency();
  Matrix yu = update_labels(w, su, Matrix::Identity(2, 2), graph_from_dense(a), 1.5, 0.7);
  EXPECT_LE((yu - expected).cwiseAbs().maxCoeff(), 1e-10);
  Matrix gd = oracle::labels_gradient_descent(w, su, Matrix::Identity(2, 2), a, 1.5, 0.7);
  EXPECT_LE((yu - gd).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Labels, RandomInstancesZeroTheGradient) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 6 + trial % 4, l = 1 + trial % 3, c = 2 + trial % 2, m = 3;
    Matrix x = fixtures::gaussian(2, n, rng);
    GraphOptions go;
    go.k = 3;
    NeighborGraph g = build_graph(x, go);
    Matrix w = fixtures::gaussian(c, m, rng);
    Matrix su = fixtures::gaussian(m, n - l, rng);
    std::vector<Index> cls;
    for (Index i = 0; i < l; ++i) cls.push_back(i % c);
    Matrix yl = one_hot(cls, c);
    Matrix yu = update_labels(w, su, yl, g, 0.8, 1.3);
    Matrix gd = oracle::labels_gradient_descent(w, su, yl, g.dense(), 0.8, 1.3);
    EXPECT_LE((yu - gd).cwiseAbs().maxCoeff(), 1e-5) << trial;
  }
}

TEST(Objective, Cases) {
  std::mt19937_64 rng(6);
  Matrix x = fixtures::gaussian(3, 6, rng);
  GraphOptions go;
  go.k = 2;
  NeighborGraph g = build_graph(x, go);
  Matrix b = fixtures::gaussian(3, 4, rng);
  Matrix w = fixtures::gaussian(2, 4, rng);
  EXPECT_DOUBLE_EQ(sssc_objective(x, b, w, Matrix::Zero(4, 6), Matrix::Zero(2, 6), g, 0.3, 2.0, 5.0),
                   x.squaredNorm());

  // Identity codes reproduce B and W exactly; constant labels are harmonic.
  Matrix b4 = fixtures::gaussian(3, 4, rng);
  EXPECT_NEAR(sssc_objective(b4, b4, Matrix::Ones(2, 4), Matrix::Identity(4, 4), Matrix::Ones(2, 4),
                             build_graph(b4, go), 0.0, 1.0, 1.0),
              0.0, 1e-24);

  Matrix s = fixtures::gaussian(4, 6, rng);

  Matrix yr = fixtures::gaussian(2, 6, rng);
  const double alpha = 0.3, beta = 2.0, gamma = 5.0;
  ObjectiveTerms terms = sssc_objective_terms(x, b, w, s, yr, g, alpha, beta, gamma);
  Dictionary dict;
  dict.columns = b;
  EXPECT_NEAR(terms.reconstruction + terms.sparsity, sc_objective(x, dict, s, alpha), 1e-10);
  EXPECT_NEAR(terms.label_fit, beta * (yr - w * s).squaredNorm(), 1e-10);
  EXPECT_NEAR(terms.manifold, gamma * (yr * (Matrix::Identity(6, 6) - g.dense()).transpose()).squaredNorm(), 1e-10);
  EXPECT_NEAR(terms.total(), sssc_objective(x, b, w, s, yr, g, alpha, beta, gamma), 0.0);
}

TEST(UnsupervisedInit, MemorizesWithOneCodewordPerSample) {
  std::mt19937_64 rng(7);
  Matrix x = fixtures::gaussian(4, 6, rng);
  x.colwise().normalize();
  Hyperparams hp;
  hp.m = 6;
  hp.alpha = 1e-4;
  InitResult r = unsupervised_init(x, hp, 1);
  EXPECT_LE((x - r.dictionary.columns * r.codes).squaredNorm(), 1e-3);
}

TEST(UnsupervisedInit, TraceIsNonIncreasing) {
  std::mt19937_64 rng(8);
  Matrix x = fixtures::gaussian(10, 50, rng);
  Hyperparams hp;
  hp.m = 12;
  InitResult r = unsupervised_init(x, hp, 3);
  ASSERT_EQ(r.objective_trace.size(), static_cast<std::size_t>(2 * hp.T_init + 1));
  for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
    EXPECT_LE(r.objective_trace[i], r.objective_trace[i - 1] * (1 + 1e-8)) << i;
  EXPECT_LE(r.dictionary.max_violation(), 1e-8);
}

TEST(UnsupervisedInit, FindsRayDirections) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> len(0.5, 2.0);
  std::normal_distribution<double> jitter(0.0, 0.05);
  const double angles[3] = {0.3, 2.2, 4.1};
  Matrix x(2, 90);
  for (Index i = 0; i < 90; ++i) {
    const double a = angles[i % 3] + jitter(rng), t = len(rng);
    x(0, i) = t * std::cos(a);
    x(1, i) = t * std::sin(a);
  }
  Hyperparams hp;
  hp.m = 3;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    InitResult r = unsupervised_init(x, hp, seed);
    for (double a : angles) {
      Vector ray(2);
      ray << std::cos(a), std::sin(a);
      double best = 0.0;
      for (Index k = 0; k < 3; ++k) {
        const Vector b = r.dictionary.columns.col(k);
        if (b.norm() > 0) best = std::max(best, std::abs(b.dot(ray)) / b.norm());
      }
      EXPECT_GE(best, 0.95) << "seed " << seed << " angle " << a;
    }
  }
}

TEST(Train, SecondIterationDoesNotIncreaseObjective) {
  fixtures::silence_warnings();
  Prepared p = prepare(fixtures::two_blobs(40, 4.0, 11), 8);
  Hyperparams hp = small_hp();
  hp.T = 1;
  Model one = train(p.features, p.known, hp, 5);
  hp.T = 2;
  Model two = train(p.features, p.known, hp, 5);
  ASSERT_EQ(one.objective_trace.size(), 1u);
  ASSERT_EQ(two.objective_trace.size(), 2u);
  EXPECT_EQ(two.objective_trace[0], one.objective_trace[0]);
  EXPECT_LE(two.objective_trace[1], one.objective_trace[0] * (1 + 1e-8));
}

TEST(Train, AllLabeledKeepsLabelsFixed) {
  Prepared p = prepare(fixtures::two_blobs(30, 4.0, 12), 30);
  Hyperparams hp = small_hp();
  bool always_clamped = true;
  Model model = train(p.features, p.known, hp, 2, [&](const TrainEvent& e) {
    if (e.labels != p.known) always_clamped = false;
  });
  EXPECT_TRUE(always_clamped);
  EXPECT_EQ(model.train_labels, p.known);
}

TEST(Train, BlockMonotonicityClampAndConstraint) {
  Prepared p = prepare(fixtures::two_blobs(60, 3.0, 13), 12);
  Hyperparams hp = small_hp();
  hp.T = 8;
  hp.beta = 2.0;
  hp.radius_w = 0.5;
  double previous = std::numeric_limits<double>::infinity();
  int events = 0;
  bool clamped = true;
  Model model = train(p.features, p.known, hp, 4, [&](const TrainEvent& e) {
    EXPECT_LE(e.objective, previous + 1e-8 * std::abs(previous)) << e.iteration << " " << static_cast<int>(e.block);
    previous = e.objective;
    if (e.labels.leftCols(12) != p.known) clamped = false;
    ++events;
  });
  EXPECT_EQ(events, 3 * static_cast<int>(model.objective_trace.size()));
  EXPECT_TRUE(clamped);
  for (Index k = 0; k < model.atoms(); ++k)
    EXPECT_LE(model.codebook.columns.col(k).squaredNorm() + hp.beta * model.classifier.col(k).squaredNorm(),
              hp.combined_radius() + 1e-8);
}

TEST(Train, SeparatedBlobsAreLabeledTransductively) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Prepared p = prepare(fixtures::two_blobs(200, 6.0, 100 + seed), 40);
    Hyperparams hp;
    hp.m = 8;
    Model model = train(p.features, p.known, hp, seed);
    Index correct = 0;
    for (Index i = 40; i < 200; ++i) correct += argmax_lowest(model.train_labels.col(i)) == p.truth[i];
    EXPECT_GE(static_cast<double>(correct) / 160.0, 0.9) << "seed " << seed;
  }
}

TEST(Train, Deterministic) {
  Prepared p = prepare(fixtures::two_blobs(40, 3.0, 14), 10);
  Hyperparams hp = small_hp();
  SolverOptions threaded;
  threaded.threads = 3;
  Model a = train(p.features, p.known, hp, 9);
  Model b = train(p.features, p.known, hp, 9, {}, threaded);
  EXPECT_EQ(a.codebook.columns, b.codebook.columns);
  EXPECT_EQ(a.classifier, b.classifier);
  EXPECT_EQ(a.train_labels, b.train_labels);
  EXPECT_EQ(a.objective_trace, b.objective_trace);
}

TEST(Train, InputErrors) {
  Prepared p = prepare(fixtures::two_blobs(20, 3.0, 15), 4);
  Hyperparams hp = small_hp();
  EXPECT_THROW(train(p.features, Matrix(2, 0), hp, 1), UsageError);
  Matrix bad = p.features;
  bad(0, 3) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(train(bad, p.known, hp, 1), DataError);
  hp.beta = 0.0;
  EXPECT_THROW(train(p.features, p.known, hp, 1), UsageError);
}
