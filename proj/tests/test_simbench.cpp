#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "minpen/simbench.hpp"

using namespace minpen;

namespace {

Matrix sample_cov(const Matrix& X) {
  const Matrix C = X.rowwise() - X.colwise().mean();
  return C.transpose() * C / static_cast<double>(X.rows() - 1);
}

FitResult fit_with(const Matrix& B, Family f, std::optional<Vector> intercepts = std::nullopt) {
  FitResult fit;
  fit.family = f;
  fit.coef.B = B;
  fit.coef.intercepts = std::move(intercepts);
  return fit;
}

SimDesign small_design(DesignKind kind = DesignKind::block) {
  SimDesign d;
  d.kind = kind;
  d.p = 32;
  d.n = 60;
  d.n_test = 40;
  d.n_val = 200;
  d.seed = 17;
  return d;
}

StudyConfig small_study() {
  StudyConfig c;
  c.reps = 2;
  c.n_delta = 5;
  c.delta_ratio = 0.05;
  c.gamma_factors = {0.0, 1e-3};
  return c;
}

void expect_same(const StudyResult& a, const StudyResult& b) {
  ASSERT_EQ(a.methods.size(), b.methods.size());
  for (const auto& ra : a.methods) {
    const auto& rb = b.report(ra.method);
    ASSERT_EQ(ra.reps.size(), rb.reps.size());
    for (std::size_t i = 0; i < ra.reps.size(); ++i) {
      ASSERT_EQ(ra.reps[i].metrics.has_value(), rb.reps[i].metrics.has_value());
      if (!ra.reps[i].metrics) continue;
      const Metrics &x = *ra.reps[i].metrics, &y = *rb.reps[i].metrics;
      EXPECT_EQ(x.spe, y.spe);
      EXPECT_EQ(x.mse, y.mse);
      EXPECT_EQ(x.tp, y.tp);
      EXPECT_EQ(x.fp, y.fp);
      EXPECT_EQ(x.kl, y.kl);
    }
  }
}

}  // namespace

TEST(GenPredictors, BlockCovarianceMoments) {
  std::mt19937_64 rng(1);
  const Matrix X = gen_predictors(100000, 8, 0.7, rng);
  const Matrix S = sample_cov(X);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      const double expect = i == j ? 1.0 : (i / 4 == j / 4 ? 0.7 : 0.0);
      EXPECT_NEAR(S(i, j), expect, 0.02) << i << "," << j;
    }
}

TEST(GenPredictors, RhoZeroIsIdentity) {
  std::mt19937_64 rng(2);
  const Matrix S = sample_cov(gen_predictors(50000, 4, 0.0, rng));
  EXPECT_LT((S - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 0.03);
}

TEST(GenPredictors, SeedReproducibleAndValidated) {
  SimDesign d = small_design();
  EXPECT_EQ(gen_predictors(d), gen_predictors(d));
  SimDesign e = d;
  e.seed = 18;
  EXPECT_NE(gen_predictors(d), gen_predictors(e));
  std::mt19937_64 rng(0);
  EXPECT_THROW(gen_predictors(10, 6, 0.7, rng), ConfigError);
}

TEST(GenBlockB, PatternAndLayout) {
  const Matrix B = gen_block_B(40, 0.5, 0.02);
  ASSERT_EQ(B.rows(), 40);
  ASSERT_EQ(B.cols(), 15);
  const double first[5] = {-0.52, 0.50, 0.52, -0.54, 0.56};
  for (int c = 0; c < 5; ++c)
    for (int j = 0; j < 10; ++j) EXPECT_NEAR(B(j, c), first[c], 1e-15);
  EXPECT_TRUE(B.bottomRows(10).isZero());
  for (int j = 0; j < 40; ++j) EXPECT_EQ(B(j, 5) != 0.0, j >= 10 && j < 20) << j;
  EXPECT_EQ((B.array() != 0.0).count(), 150);
  EXPECT_THROW(gen_block_B(28, 1.0, 0.1), ConfigError);
}

TEST(GenOverlapB, Supports) {
  const Matrix B0 = gen_overlap_B(100, 0);
  for (int k = 1; k <= 15; ++k)
    for (int j = 0; j < 100; ++j) EXPECT_EQ(B0(j, k - 1), j < 10 ? (k % 2 == 0 ? 0.5 : -0.5) : 0.0);

  const Matrix B2 = gen_overlap_B(100, 2);
  for (int j = 0; j < 100; ++j) EXPECT_EQ(B2(j, 1), j >= 2 && j < 12 ? 0.5 : 0.0);

  const Matrix B4 = gen_overlap_B(100, 4);
  for (int j = 0; j < 100; ++j) EXPECT_EQ(B4(j, 14) != 0.0, j >= 56 && j < 66);
  EXPECT_EQ(B4(56, 14), -0.5);

  EXPECT_NO_THROW(gen_overlap_B(66, 4));
  EXPECT_THROW(gen_overlap_B(65, 4), ConfigError);
}

TEST(GenResponses, GaussianNullMoments) {
  std::mt19937_64 rng(3);
  const Matrix X = gen_predictors(10000, 4, 0.7, rng);
  const Matrix Y = gen_responses(X, Matrix::Zero(4, 3), Family::gaussian, rng);
  for (int k = 0; k < 3; ++k) {
    const double mean = Y.col(k).mean();
    const double var = (Y.col(k).array() - mean).square().sum() / (Y.rows() - 1);
    EXPECT_NEAR(var, 1.0, 0.05);
    EXPECT_NEAR(mean, 0.0, 0.05);
  }
}

TEST(GenResponses, BinomialNullMean) {
  std::mt19937_64 rng(4);
  const Matrix X = gen_predictors(10000, 4, 0.7, rng);
  const Matrix Y = gen_responses(X, Matrix::Zero(4, 2), Family::binomial, rng);
  EXPECT_TRUE((Y.array() == 0.0 || Y.array() == 1.0).all());
  for (int k = 0; k < 2; ++k) EXPECT_NEAR(Y.col(k).mean(), 0.5, 0.02);
}

TEST(GenResponses, BinomialFollowsLogistic) {
  // a single predictor fixed at x = 1 and beta = log 3 gives pi = 0.75
  const Matrix X = Matrix::Ones(20000, 1);
  const Matrix B = Matrix::Constant(1, 1, std::log(3.0));
  const Matrix Y = gen_responses(X, B, Family::binomial, std::uint64_t{5});
  EXPECT_NEAR(Y.mean(), 0.75, 0.01);
}

TEST(GenResponses, ZeroNoiseAndShapes) {
  std::mt19937_64 rng(6);
  const Matrix X = gen_predictors(20, 32, 0.7, rng);
  const Matrix B = gen_block_B(32, 1.0, 0.1);
  EXPECT_EQ(gen_responses(X, B, Family::gaussian, rng, true), X * B);
  EXPECT_THROW(gen_responses(X, Matrix::Zero(31, 15), Family::gaussian, rng), DataError);
  EXPECT_THROW(gen_responses(X, B, Family::binomial, rng, true), ConfigError);
}

TEST(Metrics, TruthFitIsPerfect) {
  for (DesignKind kind : {DesignKind::block, DesignKind::overlap, DesignKind::binom_block}) {
    SimDesign d = small_design(kind);
    d.p = 40;
    d.v = 2;
    const Matrix B = design_truth(d);
    std::mt19937_64 rng(7);
    const Matrix X = gen_predictors(50, d.p, d.rho, rng);
    const Dataset val(X, kind == DesignKind::binom_block ? gen_responses(X, B, Family::binomial, rng) : X * B,
                      d.family());
    const Metrics m = metrics(fit_with(B, d.family()), B, val);
    EXPECT_EQ(m.mse, 0.0);
    EXPECT_EQ(m.tp, 1.0);
    EXPECT_EQ(m.fp, 0.0);
    if (kind == DesignKind::binom_block) {
      ASSERT_TRUE(m.kl);
      EXPECT_NEAR(*m.kl, 0.0, 1e-12);
      EXPECT_FALSE(m.spe);
    } else {
      ASSERT_TRUE(m.spe);
      EXPECT_NEAR(*m.spe, 0.0, 1e-20);
      EXPECT_FALSE(m.kl);
    }
  }
}

TEST(Metrics, AllZeroFit) {
  const Matrix B = gen_block_B(40, 1.0, 0.1);
  std::mt19937_64 rng(8);
  const Matrix X = gen_predictors(30, 40, 0.7, rng);
  const Matrix Y = gen_responses(X, B, Family::gaussian, rng);
  const Metrics m = metrics(fit_with(Matrix::Zero(40, 15), Family::gaussian), B, Dataset(X, Y, Family::gaussian));
  EXPECT_EQ(m.tp, 0.0);
  EXPECT_EQ(m.fp, 0.0);
  EXPECT_NEAR(m.mse, B.squaredNorm() / (15.0 * 40.0), 1e-15);
  EXPECT_NEAR(*m.spe, Y.squaredNorm() / (15.0 * 30.0), 1e-12);
}

TEST(Metrics, HandComputedValues) {
  // 2 x 2 truth with one nonzero per column; fit hits one of two positives and one of two zeros
  Matrix truth(2, 2), est(2, 2);
  truth << 1, 0, 0, 2;
  est << 0.5, 0.3, 0, 0;
  Matrix X(2, 2), Y(2, 2);
  X << 1, 0, 0, 1;
  Y << 1, 0, 0, 1;
  const Metrics g = metrics(fit_with(est, Family::gaussian, Vector::Constant(2, 0.1)), truth,
                            Dataset(X, Y, Family::gaussian));
  EXPECT_NEAR(g.mse, (0.25 + 0.09 + 4.0) / 4.0, 1e-15);
  EXPECT_EQ(g.tp, 0.5);
  EXPECT_EQ(g.fp, 0.5);
  // predictions: row0 = (0.6, 0.4), row1 = (0.1, 0.1)
  EXPECT_NEAR(*g.spe, (0.16 + 0.16 + 0.01 + 0.81) / 4.0, 1e-15);

  // Bernoulli KL for one cell: pi_hat = 0.3 against pi = 0.5
  const double kl = kl_divergence(Matrix::Constant(1, 1, 0.3), Matrix::Constant(1, 1, 0.5));
  EXPECT_NEAR(kl, 0.3 * std::log(0.6) + 0.7 * std::log(1.4), 1e-15);
  // clamping keeps extreme probabilities finite
  EXPECT_TRUE(std::isfinite(kl_divergence(Matrix::Constant(1, 1, 0.0), Matrix::Constant(1, 1, 1.0))));
}

TEST(Metrics, RatesStayInUnitInterval) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  for (int t = 0; t < 50; ++t) {
    Matrix B = gen_block_B(32, 1.0, 0.05), est(32, 15);
    for (Eigen::Index i = 0; i < est.size(); ++i) est.data()[i] = z(rng) > 0.5 ? z(rng) : 0.0;
    const auto [tp, fp] = selection_rates(est, B);
    EXPECT_GE(tp, 0.0);
    EXPECT_LE(tp, 1.0);
    EXPECT_GE(fp, 0.0);
    EXPECT_LE(fp, 1.0);
  }
  const auto [tp, fp] = selection_rates(Matrix::Constant(2, 2, 1e-9), Matrix::Zero(2, 2));
  EXPECT_EQ(tp, 1.0);
  EXPECT_EQ(fp, 0.0);
}

TEST(TrueGraph, BlockSignPattern) {
  const Matrix B = gen_block_B(40, 1.0, 0.02);
  const RelationGraph g = update_sets(B);
  const int sign[5] = {-1, 1, 1, -1, 1};
  int cross_nonzero = 0;
  for (int l = 0; l < 15; ++l)
    for (int m = 0; m < 15; ++m) {
      if (l == m) continue;
      if (l / 5 == m / 5)
        EXPECT_EQ(g(l, m), sign[l % 5] * sign[m % 5]) << l << "," << m;
      else
        cross_nonzero += g(l, m) != 0;
    }
  EXPECT_EQ(cross_nonzero, 0);
  SimDesign d = small_design();
  d.lambda = 0.02;
  EXPECT_EQ(true_graph(d), g);
  EXPECT_EQ(within_block_agreement(g, g), 1.0);
  EXPECT_EQ(within_block_agreement(RelationGraph(15), g), 0.0);
}

TEST(Design, ValidationAndExtrapolation) {
  SimDesign d = small_design();
  d.p = 30;
  EXPECT_THROW(d.validate(), ConfigError);
  d.p = 28;
  EXPECT_THROW(d.validate(), ConfigError);
  d = small_design(DesignKind::overlap);
  d.p = 40;
  d.v = 4;
  EXPECT_THROW(d.validate(), ConfigError);

  SimDesign studied;
  studied.p = 300;
  studied.eta = 0.5;
  studied.lambda = 0.05;
  EXPECT_TRUE(studied.extrapolation().empty());
  studied.eta = 2.0;
  ASSERT_EQ(studied.extrapolation().size(), 1u);
  EXPECT_NE(studied.extrapolation()[0].find("eta"), std::string::npos);
}

TEST(Seeds, SplitmixDerivation) {
  EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafULL);
  EXPECT_NE(replication_seed(1, 0), replication_seed(1, 1));
  EXPECT_EQ(replication_seed(1, 1), replication_seed(2, 0));
}

TEST(Study, DeterministicAndCsvCensus) {
  const SimDesign d = small_design();
  const StudyConfig c = small_study();
  const StudyResult a = run_study(d, c), b = run_study(d, c);
  expect_same(a, b);
  std::ostringstream sa, sb;
  write_study_csv(sa, a);
  write_study_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  const std::string csv = sa.str();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 3 * 4);
  EXPECT_EQ(csv.rfind("design,method,rep,metric,value\n", 0), 0u);
  for (const auto& r : a.methods)
    for (const auto& rep : r.reps) EXPECT_TRUE(rep.metrics) << rep.error;
}

TEST(Study, MethodOrderAndThreadsDoNotMatter) {
  const SimDesign d = small_design();
  StudyConfig c = small_study();
  const StudyResult a = run_study(d, c);
  c.methods = {Method::sen, Method::t_minpen, Method::minpen};
  c.threads = 2;
  expect_same(a, run_study(d, c));
}

TEST(Study, SenIsMinpenWithZeroGamma) {
  const SimDesign d = small_design();
  StudyConfig c = small_study();
  c.gamma_factors = {0.0};
  const StudyResult res = run_study(d, c);
  const auto &mp = res.report(Method::minpen), &sen = res.report(Method::sen);
  for (std::size_t i = 0; i < c.reps; ++i) {
    EXPECT_EQ(mp.reps[i].metrics->spe, sen.reps[i].metrics->spe);
    EXPECT_EQ(mp.reps[i].metrics->fp, sen.reps[i].metrics->fp);
  }
}

TEST(Study, BinomialReportsKl) {
  SimDesign d = small_design(DesignKind::binom_block);
  StudyConfig c = small_study();
  c.reps = 1;
  c.methods = {Method::sen};
  const StudyResult res = run_study(d, c);
  const auto& rep = res.report(Method::sen).reps[0];
  ASSERT_TRUE(rep.metrics) << rep.error;
  EXPECT_TRUE(rep.metrics->kl);
  EXPECT_GE(*rep.metrics->kl, 0.0);
  EXPECT_EQ(res.report(Method::sen).summary("kl").count, 1u);
}

TEST(Study, FailedReplicationIsRecorded) {
  const SimDesign d = small_design();
  SimData data = simulate_replication(d, 1);
  Matrix X = data.train.X();
  X.col(3).setConstant(2.0);
  data.train = Dataset(X, data.train.Y(), Family::gaussian);
  const RepOutcome out = run_method(Method::minpen, data, true_graph(d), small_study());
  EXPECT_FALSE(out.metrics);
  EXPECT_NE(out.error.find("predictor 3"), std::string::npos) << out.error;

  MetricsReport report{Method::minpen, {out, RepOutcome{Metrics{1.0, 0.5, 1.0, 0.0, {}}, "", {0.1, 0.0}}}};
  const Summary s = report.summary("spe");
  EXPECT_EQ(s.count, 1u);
  EXPECT_EQ(s.mean, 1.0);
  EXPECT_TRUE(std::isnan(s.se));
}

TEST(Study, SummaryStandardError) {
  MetricsReport report;
  for (double v : {1.0, 2.0, 3.0, 6.0}) report.reps.push_back({Metrics{v, 0.0, 1.0, 0.0, {}}, "", {0.1, 0.0}});
  const Summary s = report.summary("spe");
  EXPECT_DOUBLE_EQ(s.mean, 3.0);
  // sample variance 14/3, se = sqrt(14/3/4)
  EXPECT_NEAR(s.se, std::sqrt(14.0 / 12.0), 1e-15);
}

TEST(SmallGammaRegime, EstimationErrorFallsWithSampleSize) {
  // gamma below delta / (16 r max|B*|) and delta on the usual sqrt(log(pr) / n) scale
  SimDesign d;
  d.kind = DesignKind::block;
  d.p = 40;
  const Matrix B = design_truth(d);
  const double r = static_cast<double>(B.cols());
  std::vector<double> medians;
  for (Eigen::Index n : {100, 400, 1600}) {
    const double delta = std::sqrt(2.0 * std::log(double(B.size())) / double(n));
    const PenaltySpec pen(delta, 0.5 * delta / (16.0 * r * B.cwiseAbs().maxCoeff()));
    std::vector<double> errs;
    for (int rep = 0; rep < 20; ++rep) {
      std::mt19937_64 rng(replication_seed(1000 + static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep)));
      const Matrix X = gen_predictors(n, d.p, d.rho, rng);
      const Dataset data(X, gen_responses(X, B, Family::gaussian, rng), Family::gaussian);
      errs.push_back((fit_minpen(data, pen, SolverConfig{}).coef.B - B).squaredNorm());
    }
    std::nth_element(errs.begin(), errs.begin() + 10, errs.end());
    medians.push_back(errs[10]);
  }
  EXPECT_LT(medians[1], medians[0]);
  EXPECT_LT(medians[2], medians[1]);
}
