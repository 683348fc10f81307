#include <gtest/gtest.h>

#include <random>
#include <set>

#include "minpen/tuning.hpp"
#include "oracles.hpp"

using namespace minpen;

namespace {

Dataset gaussian_data(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Matrix X = oracle::random_matrix(n, 5, rng);
  Matrix B = Matrix::Zero(5, 2);
  B(0, 0) = 1.5;
  B(0, 1) = 1.5;
  B(2, 1) = -1.0;
  return Dataset(X, X * B + oracle::random_matrix(n, 2, rng), Family::gaussian);
}

}  // namespace

TEST(Folds, PartitionBalancedAndDeterministic) {
  const auto a = fold_assignment(23, 4, 99);
  const auto b = fold_assignment(23, 4, 99);
  EXPECT_EQ(a, b);
  std::vector<int> sizes(4, 0);
  for (int f : a) {
    ASSERT_GE(f, 0);
    ASSERT_LT(f, 4);
    ++sizes[static_cast<std::size_t>(f)];
  }
  EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()), 1);
  EXPECT_NE(fold_assignment(23, 4, 100), a);
  EXPECT_THROW(fold_assignment(7, 4, 1), ConfigError);
  EXPECT_THROW(fold_assignment(10, 1, 1), ConfigError);
}

TEST(CvSelect, SingleCell) {
  const Dataset d = gaussian_data(40, 1);
  TuneGrid g{{0.1}, {0.5}, 4, 7};
  const TuneResult r = cv_select(d, g, SolverConfig{});
  ASSERT_EQ(r.table.size(), 1u);
  EXPECT_EQ(r.best, PenaltySpec(0.1, 0.5));
  EXPECT_EQ(r.table[0].fold_losses.size(), 4u);
}

TEST(CvSelect, StrongSignalBeatsAllZero) {
  std::mt19937_64 rng(2);
  const Matrix x = oracle::random_matrix(30, 1, rng);
  Matrix X(60, 2), Y(60, 1);
  const Matrix noise = oracle::random_matrix(30, 1, rng);
  const Matrix other = oracle::random_matrix(30, 1, rng);
  X << x, other, x, other;  // every row duplicated
  Y << 3 * x + 0.1 * noise, 3 * x + 0.1 * noise;
  const Dataset d(X, Y, Family::gaussian);
  TuneGrid g = default_grid(d, 8);
  g.gammas = {0.0};
  g.folds = 5;
  g.seed = 3;
  const TuneResult r = cv_select(d, g, SolverConfig{});
  EXPECT_LT(r.best.delta(), g.deltas.front());
}

TEST(CvSelect, DeterministicForSeedAndArgmin) {
  const Dataset d = gaussian_data(50, 4);
  TuneGrid g = default_grid(d, 5);
  g.gammas = {0.0, 0.5};
  g.folds = 5;
  g.seed = 11;
  const TuneResult a = cv_select(d, g, SolverConfig{});
  const TuneResult b = cv_select(d, g, SolverConfig{});
  ASSERT_EQ(a.table.size(), 10u);
  for (std::size_t i = 0; i < a.table.size(); ++i) EXPECT_EQ(a.table[i].loss, b.table[i].loss);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : a.table) best = std::min(best, c.loss);
  for (const auto& c : a.table) {
    if (c.delta == a.best.delta() && c.gamma == a.best.gamma()) {
      EXPECT_EQ(c.loss, best);
    }
  }
}

TEST(CvSelect, ThreadedMatchesSequential) {
  const Dataset d = gaussian_data(50, 5);
  TuneGrid g = default_grid(d, 4);
  g.gammas = {0.0, 0.1, 1.0};
  g.folds = 3;
  g.seed = 1;
  const TuneResult a = cv_select(d, g, SolverConfig{}, TuneOptions{true, 1, std::nullopt});
  const TuneResult b = cv_select(d, g, SolverConfig{}, TuneOptions{true, 3, std::nullopt});
  for (std::size_t i = 0; i < a.table.size(); ++i) EXPECT_EQ(a.table[i].loss, b.table[i].loss);
}

TEST(CvSelect, WarmAndColdStartsAgree) {
  const Dataset d = gaussian_data(45, 6);
  TuneGrid g = default_grid(d, 3, 0.05);
  g.gammas = {0.0, 0.1, 0.5};
  g.folds = 3;
  g.seed = 5;
  SolverConfig cfg;
  cfg.cd_tol = 1e-12;
  const TuneResult warm = cv_select(d, g, cfg, TuneOptions{true, 1, std::nullopt});
  const TuneResult cold = cv_select(d, g, cfg, TuneOptions{false, 1, std::nullopt});
  ASSERT_EQ(warm.table.size(), 9u);
  for (std::size_t i = 0; i < warm.table.size(); ++i) EXPECT_NEAR(warm.table[i].loss, cold.table[i].loss, 1e-8);
}

TEST(CvSelect, DegenerateFoldNamesFoldAndColumn) {
  Matrix X(8, 2);
  X << 1, 0, 2, 0, 3, 0, 4, 0, 5, 0, 6, 0, 7, 0, 8, 1;  // column 1 is constant except one row
  Matrix Y = X.col(0);
  const Dataset d(X, Y, Family::gaussian);
  TuneGrid g{{0.1}, {0.0}, 4, 0};
  try {
    cv_select(d, g, SolverConfig{});
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("fold"), std::string::npos);
    EXPECT_NE(msg.find("predictor 1"), std::string::npos) << msg;
  }
}

TEST(CvSelect, TieBreaksTowardLargerPenalty) {
  // both deltas are above delta_max: identical all-zero fits, identical losses
  const Dataset d = gaussian_data(40, 7);
  const double top = delta_max(d);
  TuneGrid g{{3 * top, 2 * top}, {0.0, 1.0}, 4, 2};
  const TuneResult r = cv_select(d, g, SolverConfig{});
  EXPECT_EQ(r.best, PenaltySpec(3 * top, 1.0));
}

TEST(CvSelect, BinomialRuns) {
  std::mt19937_64 rng(8);
  const Matrix X = oracle::random_matrix(60, 3, rng);
  Matrix Y(60, 2);
  for (int i = 0; i < 60; ++i) {
    Y(i, 0) = X(i, 0) > 0 ? 1 : 0;
    Y(i, 1) = X(i, 0) + X(i, 1) > 0 ? 1 : 0;
  }
  const Dataset d(X, Y, Family::binomial);
  TuneGrid g = default_grid(d, 4);
  g.gammas = {0.0, 0.5};
  g.folds = 3;
  const TuneResult r = cv_select(d, g, SolverConfig{});
  EXPECT_EQ(r.table.size(), 8u);
  for (const auto& c : r.table) EXPECT_TRUE(std::isfinite(c.loss));
  // all-zero slopes on balanced labels lose to any informative fit
  EXPECT_LT(r.best.delta(), g.deltas.front());
}

TEST(SplitSelect, SameDataPicksInSampleMinimum) {
  const Dataset d = gaussian_data(40, 9);
  TuneGrid g = default_grid(d, 5);
  g.gammas = {0.0, 0.1};
  const TuneResult r = split_select(d, d, g, SolverConfig{});
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : r.table) best = std::min(best, c.loss);
  for (const auto& c : r.table) {
    SolverConfig cfg;
    const FitResult f = fit_minpen(d, PenaltySpec(c.delta, c.gamma), cfg);
    EXPECT_NEAR(validation_loss(f, d), c.loss, 1e-6 * (1 + c.loss));
  }
  const auto chosen = std::find_if(r.table.begin(), r.table.end(), [&](const TuneCell& c) {
    return c.delta == r.best.delta() && c.gamma == r.best.gamma();
  });
  EXPECT_EQ(chosen->loss, best);
}

TEST(SplitSelect, HugeDeltaPredictsTrainingMeans) {
  const Dataset train = gaussian_data(40, 10), test = gaussian_data(30, 11);
  const double top = delta_max(train);
  const TuneResult r = split_select(train, test, TuneGrid{{2 * top}, {0.0}, 2, 0}, SolverConfig{});
  Matrix centered = test.Y();
  centered.rowwise() -= train.Y().colwise().mean();
  EXPECT_NEAR(r.table[0].loss, centered.squaredNorm(), 1e-9);
}

TEST(SplitSelect, SchemaMismatch) {
  const Dataset a = gaussian_data(40, 12);
  const Dataset b(Matrix::Random(10, 4), Matrix::Random(10, 2), Family::gaussian);
  EXPECT_THROW(split_select(a, b, TuneGrid{{0.1}, {0.0}, 2, 0}, SolverConfig{}), DataError);
}

TEST(Grid, DefaultShapeAndValidation) {
  const Dataset d = gaussian_data(40, 13);
  const TuneGrid g = default_grid(d);
  ASSERT_EQ(g.deltas.size(), 20u);
  EXPECT_NEAR(g.deltas.back() / g.deltas.front(), 1e-3, 1e-12);
  EXPECT_EQ(g.gammas, (std::vector<double>{0.0, 0.01, 0.1, 0.5, 1.0, 5.0}));
  // delta_max is the zero threshold
  const FitResult at = fit_minpen(d, PenaltySpec(g.deltas.front() * 1.000001, 0), SolverConfig{});
  EXPECT_EQ(at.coef.B, Matrix::Zero(5, 2));
  const FitResult below = fit_minpen(d, PenaltySpec(g.deltas.front() * 0.99, 0), SolverConfig{});
  EXPECT_GT(below.coef.B.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW((TuneGrid{{0.1, 0.2}, {0.0}, 2, 0}.validate()), ConfigError);
  EXPECT_THROW((TuneGrid{{}, {0.0}, 2, 0}.validate()), ConfigError);
}

TEST(SplitSelect, FixedGraphScoresFixedGraphFits) {
  const Dataset train = gaussian_data(40, 14), test = gaussian_data(30, 15);
  IntMatrix D(2, 2);
  D << 0, 1, 1, 0;
  const RelationGraph g(D);
  TuneGrid grid = default_grid(train, 4);
  grid.gammas = {0.05, 0.5};
  TuneOptions opt;
  opt.graph = g;
  SolverConfig cfg;
  cfg.cd_tol = 1e-10;
  const TuneResult r = split_select(train, test, grid, cfg, opt);
  for (const auto& c : r.table) {
    const FitResult f = fit_fixed_graph(train, PenaltySpec(c.delta, c.gamma), g, cfg);
    EXPECT_NEAR(validation_loss(f, test), c.loss, 1e-7 * (1 + c.loss));
  }
  opt.graph = RelationGraph(3);
  EXPECT_THROW(split_select(train, test, grid, cfg, opt), DataError);
}
