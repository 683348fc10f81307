#pragma once

// Selection of (delta, gamma) by k-fold cross-validation or a train/test split.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "minpen/binom_solver.hpp"
#include "minpen/gauss_solver.hpp"
#include "minpen/parallel.hpp"

namespace minpen {

struct TuneGrid {
  std::vector<double> deltas;  // descending
  std::vector<double> gammas;
  int folds = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (deltas.empty() || gammas.empty()) throw ConfigError("tuning grid must have at least one delta and one gamma");
    for (double d : deltas)
      if (!(d > 0.0)) throw ConfigError("grid deltas must be positive");
    for (double g : gammas)
      if (!(g >= 0.0)) throw ConfigError("grid gammas must be nonnegative");
    for (std::size_t i = 1; i < deltas.size(); ++i)
      if (!(deltas[i] < deltas[i - 1])) throw ConfigError("grid deltas must be strictly descending");
  }
};

struct TuneCell {
  double delta = 0.0;
  double gamma = 0.0;
  double loss = 0.0;                // mean over folds (split: the test loss)
  std::vector<double> fold_losses;  // empty for split selection
};

struct TuneResult {
  PenaltySpec best{0.0, 0.0};
  std::vector<TuneCell> table;  // gamma-major, deltas in path order
};

/// Fold label in [0, k) for every row. Pure function of (n, k, seed); fold sizes differ by at most one.
inline std::vector<int> fold_assignment(Eigen::Index n, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("need at least 2 folds");
  if (n < 2 * static_cast<Eigen::Index>(k))
    throw ConfigError("need n >= 2k rows for " + std::to_string(k) + "-fold cross-validation, have n = " +
                      std::to_string(n));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < order.size(); ++i) fold[static_cast<std::size_t>(order[i])] = static_cast<int>(i % k);
  return fold;
}

/// Smallest delta giving all-zero slopes at gamma = 0.
inline double delta_max(const Dataset& data) {
  const Dataset s = standardize(data);
  if (s.family() == Family::gaussian)
    return (s.X().transpose() * s.Y()).cwiseAbs().maxCoeff() / static_cast<double>(s.n());
  const Matrix T = s.trials();
  double best = 0.0;
  for (Eigen::Index k = 0; k < s.r(); ++k) {
    const double pi = s.Y().col(k).sum() / T.col(k).sum();
    best = std::max(best, (s.X().transpose() * (s.Y().col(k) - pi * T.col(k))).cwiseAbs().maxCoeff());
  }
  return best;
}

/// 20 log-spaced deltas from delta_max down to 0.001 delta_max; gamma in {0, .01, .1, .5, 1, 5}.
inline TuneGrid default_grid(const Dataset& data, int n_delta = 20, double ratio = 1e-3) {
  if (n_delta < 1 || !(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("bad default grid parameters");
  const double top = delta_max(data);
  if (!(top > 0.0)) throw DataError("delta_max is zero: responses carry no linear signal");
  TuneGrid g;
  for (int i = 0; i < n_delta; ++i) {
    const double t = n_delta == 1 ? 0.0 : static_cast<double>(i) / (n_delta - 1);
    g.deltas.push_back(top * std::pow(ratio, t));
  }
  g.gammas = {0.0, 0.01, 0.1, 0.5, 1.0, 5.0};
  return g;
}

/// Held-out loss summed over responses: squared error (gaussian) or
/// negative log-likelihood with clamped probabilities (binomial).
inline double validation_loss(const FitResult& fit, const Dataset& test) {
  if (fit.coef.B.rows() != test.p() || fit.coef.B.cols() != test.r())
    throw DataError("model and validation data disagree on predictors or responses");
  Matrix eta = test.X() * fit.coef.B;
  if (fit.coef.intercepts) eta.rowwise() += fit.coef.intercepts->transpose();
  if (test.family() == Family::gaussian) return (test.Y() - eta).squaredNorm();
  const Matrix T = test.trials();
  double loss = 0.0;
  for (Eigen::Index k = 0; k < eta.cols(); ++k)
    for (Eigen::Index i = 0; i < eta.rows(); ++i) {
      const double pi = detail::clamp_prob(detail::logistic(eta(i, k)));
      const double y = test.Y()(i, k);
      loss -= y * std::log(pi) + (T(i, k) - y) * std::log1p(-pi);
    }
  return loss;
}

namespace detail {

inline FitResult fit_family(const Dataset& data, const PenaltySpec& pen, const SolverConfig& cfg,
                            const std::optional<Matrix>& warm, const std::optional<RelationGraph>& graph) {
  const bool gauss = data.family() == Family::gaussian;
  if (graph)
    return gauss ? fit_fixed_graph(data, pen, *graph, cfg, warm) : fit_binom_fixed_graph(data, pen, *graph, cfg, warm);
  return gauss ? fit_minpen(data, pen, cfg, warm) : fit_binom_minpen(data, pen, cfg, warm);
}

// Losses of one delta path (fixed gamma) fitted on `train`, scored on `test`.
inline std::vector<double> path_losses(const Dataset& train, const Dataset& test, const std::vector<double>& deltas,
                                       double gamma, const SolverConfig& cfg, bool warm_start,
                                       const std::optional<RelationGraph>& graph) {
  // standardize once so warm starts live on a single working scale
  SolverConfig inner = cfg;
  const Dataset work = cfg.standardize ? standardize(train) : train;
  inner.standardize = false;
  std::vector<double> out;
  std::optional<Matrix> warm;
  for (double d : deltas) {
    FitResult f = fit_family(work, PenaltySpec(d, gamma), inner, warm_start ? warm : std::nullopt, graph);
    out.push_back(validation_loss(f, test));
    warm = std::move(f.coef_solver);
  }
  return out;
}

inline void check_training_columns(const Dataset& train, int fold) {
  for (Eigen::Index j = 0; j < train.p(); ++j) {
    const auto col = train.X().col(j);
    if (col.maxCoeff() == col.minCoeff())
      throw DataError("degenerate fold " + std::to_string(fold) + ": predictor " + std::to_string(j) +
                      " is constant on the training rows");
  }
}

inline PenaltySpec pick_best(const std::vector<TuneCell>& table) {
  const TuneCell* best = nullptr;
  for (const auto& c : table) {
    if (!best) {
      best = &c;
      continue;
    }
    const double tol = 1e-12 * std::max(1.0, std::abs(best->loss));
    if (c.loss < best->loss - tol) {
      best = &c;
    } else if (std::abs(c.loss - best->loss) <= tol) {
      if (c.delta > best->delta || (c.delta == best->delta && c.gamma > best->gamma)) best = &c;
    }
  }
  return PenaltySpec(best->delta, best->gamma);
}

}  // namespace detail

struct TuneOptions {
  bool warm_start = true;
  int threads = 1;
  std::optional<RelationGraph> graph;  // fixed relation graph instead of estimated sets
};

/// k-fold cross-validation over the grid. Loss per fold is summed over held-out
/// rows and responses; cells are ranked by the mean over folds.
inline TuneResult cv_select(const Dataset& data, const TuneGrid& grid, const SolverConfig& cfg,
                            const TuneOptions& opt = {}) {
  grid.validate();
  cfg.validate();
  if (opt.graph && opt.graph->r() != data.r()) throw DataError("fixed graph size does not match the number of responses");
  const std::vector<int> fold = fold_assignment(data.n(), grid.folds, grid.seed);
  const std::size_t k = static_cast<std::size_t>(grid.folds);

  std::vector<Dataset> train, test;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<Eigen::Index> in, out;
    for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == static_cast<int>(f) ? out : in).push_back(Eigen::Index(i));
    train.push_back(data.subset(in));
    test.push_back(data.subset(out));
    if (cfg.standardize) detail::check_training_columns(train.back(), static_cast<int>(f));
  }

  const std::size_t ng = grid.gammas.size(), nd = grid.deltas.size();
  std::vector<std::vector<double>> losses(k * ng);  // index f * ng + g
  parallel_for(k * ng, opt.threads, [&](std::size_t task) {
    const std::size_t f = task / ng, g = task % ng;
    losses[task] = detail::path_losses(train[f], test[f], grid.deltas, grid.gammas[g], cfg, opt.warm_start, opt.graph);
  });

  TuneResult res;
  for (std::size_t g = 0; g < ng; ++g)
    for (std::size_t d = 0; d < nd; ++d) {
      TuneCell cell{grid.deltas[d], grid.gammas[g], 0.0, {}};
      for (std::size_t f = 0; f < k; ++f) cell.fold_losses.push_back(losses[f * ng + g][d]);
      cell.loss = std::accumulate(cell.fold_losses.begin(), cell.fold_losses.end(), 0.0) / static_cast<double>(k);
      res.table.push_back(std::move(cell));
    }
  res.best = detail::pick_best(res.table);
  return res;
}

/// Fit on `train` for every cell and score on `test`.
inline TuneResult split_select(const Dataset& train, const Dataset& test, const TuneGrid& grid,
                               const SolverConfig& cfg, const TuneOptions& opt = {}) {
  grid.validate();
  cfg.validate();
  if (train.p() != test.p() || train.r() != test.r() || train.family() != test.family())
    throw DataError("train and test data have different predictors, responses or family");
  if (opt.graph && opt.graph->r() != train.r()) throw DataError("fixed graph size does not match the number of responses");
  const std::size_t ng = grid.gammas.size();
  std::vector<std::vector<double>> losses(ng);
  parallel_for(ng, opt.threads, [&](std::size_t g) {
    losses[g] = detail::path_losses(train, test, grid.deltas, grid.gammas[g], cfg, opt.warm_start, opt.graph);
  });
  TuneResult res;
  for (std::size_t g = 0; g < ng; ++g)
    for (std::size_t d = 0; d < grid.deltas.size(); ++d)
      res.table.push_back({grid.deltas[d], grid.gammas[g], losses[g][d], {}});
  res.best = detail::pick_best(res.table);
  return res;
}

}  // namespace minpen
