#include <gtest/gtest.h>

#include <random>
#include <set>

#include "minpen/relations.hpp"
#include "oracles.hpp"

using namespace minpen;

TEST(UpdateSets, IdenticalColumnsArePositive) {
  Matrix B(2, 3);
  B << 1, 1, 1, -2, -2, -2;
  const RelationGraph g = update_sets(B);
  for (int l = 0; l < 3; ++l)
    for (int m = 0; m < 3; ++m) EXPECT_EQ(g(l, m), l == m ? 0 : 1);
}

TEST(UpdateSets, NegatedColumnsAreNegative) {
  Matrix B(2, 2);
  B << 1, -1, 1, -1;
  const RelationGraph g = update_sets(B);
  EXPECT_EQ(g(0, 1), -1);
  EXPECT_EQ(g(1, 0), -1);
}

TEST(UpdateSets, ZeroVectorsTieToNone) {
  const RelationGraph g = update_sets(Matrix::Zero(3, 4));
  EXPECT_EQ(g.matrix(), IntMatrix::Zero(4, 4));
}

TEST(UpdateSets, CanBeAsymmetric) {
  Matrix B(2, 2);
  B << 1.0, 0.3, 0.0, 0.0;
  const RelationGraph g = update_sets(B);
  EXPECT_EQ(g(0, 1), 1);  // ||b1-b2||^2 = 0.49 < ||b1||^2 = 1
  EXPECT_EQ(g(1, 0), 0);  // ||b2||^2 = 0.09 < ||b2-b1||^2 = 0.49
}

TEST(UpdateSets, MatchesExhaustiveMinimisationForThreeResponses) {
  std::mt19937_64 rng(42);
  for (int t = 0; t < 50; ++t) {
    const Matrix B = oracle::random_matrix(4, 3, rng);
    double best = 0.0;
    const IntMatrix brute = oracle::exhaustive_set_minimizer(B, &best);
    const RelationGraph g = update_sets(B);
    EXPECT_EQ(g.matrix(), brute);
    EXPECT_NEAR(fusion_penalty(B, g), best, 1e-12 * (1 + best));
  }
}

TEST(UpdateSets, SignAndPermutationEquivariance) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 100; ++t) {
    const Matrix B = oracle::random_matrix(3, 4, rng);
    const RelationGraph g = update_sets(B);
    const int k = t % 4;
    Matrix Bf = B;
    Bf.col(k) *= -1;
    IntMatrix expect = g.matrix();
    expect.row(k) *= -1;
    expect.col(k) *= -1;
    EXPECT_EQ(update_sets(Bf).matrix(), expect);

    Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
    perm.indices() << 2, 0, 3, 1;
    const Matrix Bp = B * perm;  // column i of Bp is column perm^-1(i) of B
    const IntMatrix Dp = update_sets(Bp).matrix();
    const IntMatrix expected_p = perm.transpose() * g.matrix() * perm;
    EXPECT_EQ(Dp, expected_p);
  }
}

TEST(UpdateSets, MaskPinsEntriesAndMinimisesTheRest) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 40; ++t) {
    const Matrix B = oracle::random_matrix(3, 3, rng);
    GraphMask mask(3);
    mask.fix(0, 1, Relation::none).restrict(2, 0, GraphMask::kPositive | GraphMask::kNegative);
    const RelationGraph g = update_sets(B, mask);
    EXPECT_EQ(g(0, 1), 0);
    EXPECT_NE(g(2, 0), 0);
    // brute force over graphs allowed by the mask
    double best = std::numeric_limits<double>::infinity();
    oracle::for_each_graph(3, [&](const IntMatrix& D) {
      if (!mask.contains(RelationGraph(D))) return;
      best = std::min(best, oracle::penalty_sum(B, D));
    });
    EXPECT_NEAR(fusion_penalty(B, g), best, 1e-12 * (1 + best));
  }
}

TEST(Laplacian, SmallClosedForms) {
  IntMatrix D(2, 2);
  D << 0, 1, 1, 0;
  Matrix expect(2, 2);
  expect << 2, -2, -2, 2;
  EXPECT_EQ(laplacian(RelationGraph(D), 1), expect);

  // ||b1||^2 + ||b2||^2: each ordered pair contributes once
  EXPECT_EQ(laplacian(RelationGraph(2), 1), Matrix::Identity(2, 2));
}

TEST(Laplacian, QuadraticFormMatchesPenaltyAndIsPsd) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> lab(-1, 1);
  for (int t = 0; t < 20; ++t) {
    IntMatrix D = IntMatrix::Zero(3, 3);
    for (int l = 0; l < 3; ++l)
      for (int m = 0; m < 3; ++m)
        if (l != m) D(l, m) = lab(rng);
    const RelationGraph g(D);
    const Matrix L = laplacian(g, 2);
    EXPECT_TRUE(L.isApprox(L.transpose()));
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(L).eigenvalues().minCoeff(), -1e-10);
    const AMatrix A = AMatrix::from_graph(g);
    for (int s = 0; s < 100; ++s) {
      const Matrix B = oracle::random_matrix(2, 3, rng);
      const Vector beta = Eigen::Map<const Vector>(B.data(), B.size());
      const double direct = oracle::penalty_sum(B, D);
      EXPECT_NEAR(beta.dot(L * beta), direct, 1e-12 * direct);
      EXPECT_NEAR(A.squared_norm(B), direct, 1e-12 * direct);
    }
  }
}

TEST(EnumerateGraphs, CountsAndUniqueness) {
  auto e2 = enumerate_graphs(2);
  EXPECT_EQ(e2.size(), 9u);
  auto e3 = enumerate_graphs(3);
  EXPECT_EQ(e3.size(), 729u);
  std::set<std::vector<int>> seen;
  int count = 0;
  while (auto g = e3.next()) {
    seen.insert(std::vector<int>(g->matrix().data(), g->matrix().data() + 9));
    ++count;
  }
  EXPECT_EQ(count, 729);
  EXPECT_EQ(seen.size(), 729u);
  EXPECT_FALSE(e3.next().has_value());
}

TEST(EnumerateGraphs, DeterministicOrder) {
  auto a = enumerate_graphs(3);
  auto b = enumerate_graphs(3);
  while (auto g = a.next()) EXPECT_EQ(g->matrix(), b.next()->matrix());
}

TEST(EnumerateGraphs, CapAndArguments) {
  try {
    enumerate_graphs(5);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("3^20"), std::string::npos) << e.what();
  }
  EXPECT_THROW(enumerate_graphs(1), ConfigError);
  EXPECT_NO_THROW(enumerate_graphs(4, 12));
  EXPECT_THROW(enumerate_graphs(4, 11), ConfigError);
}

TEST(EnumerateGraphs, MaskShrinksTheSearch) {
  GraphMask mask(3);
  mask.fix(0, 1, Relation::positive).fix(1, 0, Relation::positive);
  auto e = enumerate_graphs(3, 12, mask);
  EXPECT_EQ(e.size(), 81u);
  int count = 0;
  while (auto g = e.next()) {
    EXPECT_EQ((*g)(0, 1), 1);
    ++count;
  }
  EXPECT_EQ(count, 81);
}

TEST(EdgeList, ListsNonzeroRelations) {
  IntMatrix D(3, 3);
  D << 0, 1, 0, -1, 0, 0, 0, 0, 0;
  const auto edges = edge_list(RelationGraph(D));
  ASSERT_EQ(edges.size(), 2u);
  EXPECT_EQ(std::get<2>(edges[0]), 1);
  EXPECT_EQ(std::get<0>(edges[1]), 1);
  EXPECT_EQ(std::get<2>(edges[1]), -1);
}
