#pragma once

// Gaussian MinPen solver. All coordinate descent here works on the data it
// is handed; fit_minpen and oracle_minpen standardize first when asked to
// and report coefficients on the original predictor scale.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "minpen/core.hpp"
#include "minpen/relations.hpp"

namespace minpen {

struct SolverConfig {
  double cd_tol = 1e-7;       // max abs coefficient change per full sweep
  int cd_max_sweeps = 10000;
  int outer_max_iters = 100;
  double obj_tol = 1e-10;
  bool standardize = true;

  // binomial only
  int irls_max_iters = 100;
  double irls_tol = 1e-8;
  bool fuse_intercept = true;  // intercepts take part in the minimum penalty

  std::optional<GraphMask> mask;

  void validate() const {
    if (!(cd_tol > 0.0)) throw ConfigError("cd_tol must be positive");
    if (!(obj_tol > 0.0)) throw ConfigError("obj_tol must be positive");
    if (!(irls_tol > 0.0)) throw ConfigError("irls_tol must be positive");
    if (cd_max_sweeps < 1 || outer_max_iters < 1 || irls_max_iters < 1)
      throw ConfigError("iteration caps must be at least 1");
  }
};

enum class StopReason { sets_stable, obj_stall, max_iters };

inline const char* to_string(StopReason s) {
  switch (s) {
    case StopReason::sets_stable:
      return "sets_stable";
    case StopReason::obj_stall:
      return "obj_stall";
    default:
      return "max_iters";
  }
}

struct FitResult {
  Family family = Family::gaussian;
  CoefMatrix coef;        // original predictor scale
  Matrix coef_solver;     // scale the solver ran on; binomial: (p+1) x r with intercept row 0
  RelationGraph graph{1};
  PenaltySpec pen{0.0, 0.0};
  std::vector<double> objective_trace;
  double objective = 0.0;
  int outer_iters = 0;
  bool converged = false;
  StopReason stop_reason = StopReason::max_iters;
  std::optional<Standardization> standardization;
};

/// sign(x) * max(|x| - a, 0).
inline double soft_threshold(double x, double a) {
  if (x > a) return x - a;
  if (x < -a) return x + a;
  return 0.0;
}

namespace detail {

// Quadratic penalty (1/2) sum_k ridge_k ||b_k||^2 - (1/2) sum_{k != m} W_km <b_k, b_m>
// with W symmetric. Its gradient in b_jk is ridge_k b_jk - sum_m W_km b_jm.
struct Coupling {
  Vector ridge;
  std::vector<std::vector<std::pair<Eigen::Index, double>>> neighbours;

  double pull(const Matrix& B, Eigen::Index row, Eigen::Index k) const {
    double h = 0.0;
    for (const auto& [m, w] : neighbours[static_cast<std::size_t>(k)]) h += w * B(row, m);
    return h;
  }
};

// (gamma/2) sum_{l != m} ||b_l - d_lm b_m||^2: ridge gamma*c_k, weights gamma*(d_km + d_mk).
inline Coupling fusion_coupling(const RelationGraph& g, double gamma) {
  const Eigen::Index r = g.r();
  Coupling c;
  c.ridge = Vector::Zero(r);
  c.neighbours.resize(static_cast<std::size_t>(r));
  for (Eigen::Index k = 0; k < r; ++k) {
    double mult = static_cast<double>(r - 1);
    for (Eigen::Index l = 0; l < r; ++l)
      if (l != k) mult += std::abs(g(l, k));
    c.ridge(k) = gamma * mult;
    for (Eigen::Index m = 0; m < r; ++m) {
      if (m == k) continue;
      const int w = g(k, m) + g(m, k);
      if (w != 0) c.neighbours[static_cast<std::size_t>(k)].emplace_back(m, gamma * w);
    }
  }
  return c;
}

// gamma * ||b_k||^2 for every response.
inline Coupling ridge_coupling(Eigen::Index r, double gamma) {
  Coupling c;
  c.ridge = Vector::Constant(r, 2.0 * gamma);
  c.neighbours.resize(static_cast<std::size_t>(r));
  return c;
}

struct CdOutcome {
  Matrix B;
  int sweeps = 0;
  double kkt = 0.0;
};

// Coordinate descent for (1/2n)||Y - XB||^2 + delta||B||_1 + coupling penalty.
// Converged when a full sweep moves no coefficient by more than cd_tol and the
// coordinatewise subgradient residual is within 10*cd_tol.
class GaussianCd {
 public:
  GaussianCd(const Matrix& X, const Matrix& Y, double delta, const Coupling& coupling)
      : X_(X), Y_(Y), delta_(delta), coupling_(coupling), n_(static_cast<double>(X.rows())) {
    xsq_ = X.colwise().squaredNorm().transpose() / n_;
  }

  CdOutcome solve(Matrix B, const SolverConfig& cfg) const {
    const Eigen::Index p = X_.cols();
    const Eigen::Index r = Y_.cols();
    Matrix R = Y_ - X_ * B;
    int sweeps = 0;

    auto update = [&](Eigen::Index j, Eigen::Index k) {
      const double old = B(j, k);
      const double denom = xsq_(j) + coupling_.ridge(k);
      if (denom <= 0.0) return 0.0;  // zero column with no ridge: leave at 0
      const double num = X_.col(j).dot(R.col(k)) / n_ + xsq_(j) * old + coupling_.pull(B, j, k);
      const double next = soft_threshold(num, delta_) / denom;
      const double change = next - old;
      if (change != 0.0) {
        R.col(k) -= change * X_.col(j);
        B(j, k) = next;
      }
      return std::abs(change);
    };

    auto full_sweep = [&] {
      double worst = 0.0;
      for (Eigen::Index k = 0; k < r; ++k)
        for (Eigen::Index j = 0; j < p; ++j) worst = std::max(worst, update(j, k));
      ++sweeps;
      return worst;
    };

    std::vector<std::pair<Eigen::Index, Eigen::Index>> active;
    while (true) {
      if (sweeps >= cfg.cd_max_sweeps) {
        throw ConvergenceError("coordinate descent did not converge within " + std::to_string(cfg.cd_max_sweeps) +
                                   " sweeps",
                               B);
      }
      const double worst = full_sweep();
      if (worst <= cfg.cd_tol) {
        const double kkt = kkt_residual(B, R);
        if (kkt <= 10.0 * cfg.cd_tol) return {std::move(B), sweeps, kkt};
        continue;
      }
      active.clear();
      for (Eigen::Index k = 0; k < r; ++k)
        for (Eigen::Index j = 0; j < p; ++j)
          if (B(j, k) != 0.0) active.emplace_back(j, k);
      while (sweeps < cfg.cd_max_sweeps) {
        double inner = 0.0;
        for (const auto& [j, k] : active) inner = std::max(inner, update(j, k));
        ++sweeps;
        if (inner <= cfg.cd_tol) break;
      }
    }
  }

  // Max over coordinates of the distance from the gradient to -delta * subdifferential.
  double kkt_residual(const Matrix& B, const Matrix& R) const {
    const Matrix G = X_.transpose() * R / n_;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < B.cols(); ++k)
      for (Eigen::Index j = 0; j < B.rows(); ++j) {
        const double grad = -G(j, k) + coupling_.ridge(k) * B(j, k) - coupling_.pull(B, j, k);
        const double b = B(j, k);
        const double res = b != 0.0 ? std::abs(grad + (b > 0 ? delta_ : -delta_))
                                    : std::max(0.0, std::abs(grad) - delta_);
        worst = std::max(worst, res);
      }
    return worst;
  }

  double kkt_residual(const Matrix& B) const { return kkt_residual(B, Y_ - X_ * B); }

 private:
  const Matrix& X_;
  const Matrix& Y_;
  double delta_;
  const Coupling& coupling_;
  double n_;
  Vector xsq_;
};

inline void require_gaussian(const Dataset& data, const char* op) {
  if (data.family() != Family::gaussian) throw DataError(std::string(op) + " requires gaussian data");
}

inline Matrix start_or_zero(const Dataset& data, const std::optional<Matrix>& warm) {
  if (!warm) return Matrix::Zero(data.p(), data.r());
  require_coef_shape(data, *warm);
  return *warm;
}

// Coefficients on the original predictor scale plus implied intercepts.
inline CoefMatrix gaussian_to_original(const Matrix& B, const Dataset& work) {
  CoefMatrix out;
  if (!work.standardization()) {
    out.B = B;
    out.intercepts = Vector::Zero(B.cols());
    return out;
  }
  const auto& st = *work.standardization();
  out.B = st.column_scales.cwiseInverse().asDiagonal() * B;
  out.intercepts = st.response_means - out.B.transpose() * st.column_means;
  return out;
}

}  // namespace detail

/// Per-response elastic net: (1/2n)||y_c - X b||^2 + delta||b||_1 + gamma||b||_2^2.
inline CoefMatrix init_elastic_net(const Dataset& data, const PenaltySpec& pen, const SolverConfig& cfg,
                                   const std::optional<Matrix>& warm = std::nullopt) {
  detail::require_gaussian(data, "init_elastic_net");
  cfg.validate();
  const auto coupling = detail::ridge_coupling(data.r(), pen.gamma());
  detail::GaussianCd cd(data.X(), data.Y(), pen.delta(), coupling);
  return {cd.solve(detail::start_or_zero(data, warm), cfg).B, std::nullopt};
}

/// Minimizer of objective_gaussian for a fixed relation graph, from a warm start.
inline CoefMatrix cd_fixed_graph(const Dataset& data, const PenaltySpec& pen, const RelationGraph& graph,
                                 const CoefMatrix& warm, const SolverConfig& cfg) {
  detail::require_gaussian(data, "cd_fixed_graph");
  cfg.validate();
  detail::require_coef_shape(data, warm.B);
  if (graph.r() != data.r()) throw DataError("graph has a different number of responses than data");
  const auto coupling = detail::fusion_coupling(graph, pen.gamma());
  detail::GaussianCd cd(data.X(), data.Y(), pen.delta(), coupling);
  return {cd.solve(warm.B, cfg).B, std::nullopt};
}

/// Coordinatewise subgradient residual of objective_gaussian at B (0 at an exact minimizer).
inline double kkt_residual(const Dataset& data, const PenaltySpec& pen, const RelationGraph& graph,
                           const Matrix& B) {
  detail::require_coef_shape(data, B);
  const auto coupling = detail::fusion_coupling(graph, pen.gamma());
  return detail::GaussianCd(data.X(), data.Y(), pen.delta(), coupling).kkt_residual(B);
}

/// The alternating algorithm: elastic-net start, then set updates and
/// fixed-graph coordinate descent until the sets stop changing, the objective
/// stalls, or the iteration cap is reached. Returns the best iterate seen.
/// `warm` seeds the elastic-net initialisation (a convex problem).
inline FitResult fit_minpen(const Dataset& data, const PenaltySpec& pen, const SolverConfig& cfg,
                            const std::optional<Matrix>& warm = std::nullopt) {
  detail::require_gaussian(data, "fit_minpen");
  cfg.validate();
  const Dataset work = cfg.standardize ? standardize(data) : data;
  auto objective = [&](const Matrix& B) {
    return objective_gaussian(work, {B, std::nullopt}, pen, update_sets(B, cfg.mask));
  };

  CoefMatrix current = init_elastic_net(work, pen, cfg, warm);
  FitResult out;
  out.family = Family::gaussian;
  out.pen = pen;
  out.objective_trace.push_back(objective(current.B));
  Matrix best = current.B;
  double best_obj = out.objective_trace.back();
  RelationGraph graph = update_sets(current.B, cfg.mask);
  out.stop_reason = StopReason::max_iters;

  for (int it = 1; it <= cfg.outer_max_iters; ++it) {
    current = cd_fixed_graph(work, pen, graph, current, cfg);
    const double obj = objective(current.B);
    const double prev = out.objective_trace.back();
    out.objective_trace.push_back(obj);
    out.outer_iters = it;
    if (obj < best_obj) {
      best_obj = obj;
      best = current.B;
    }
    RelationGraph next = update_sets(current.B, cfg.mask);
    if (next == graph) {
      out.stop_reason = StopReason::sets_stable;
      break;
    }
    if (prev - obj < cfg.obj_tol) {
      out.stop_reason = StopReason::obj_stall;
      break;
    }
    graph = std::move(next);
  }

  out.converged = out.stop_reason != StopReason::max_iters;
  out.objective = best_obj;
  out.graph = update_sets(best, cfg.mask);
  out.coef = detail::gaussian_to_original(best, work);
  out.coef_solver = std::move(best);
  out.standardization = work.standardization();
  return out;
}

/// Fixed-graph fit (the graph is supplied rather than estimated).
inline FitResult fit_fixed_graph(const Dataset& data, const PenaltySpec& pen, const RelationGraph& graph,
                                 const SolverConfig& cfg, const std::optional<Matrix>& warm = std::nullopt) {
  detail::require_gaussian(data, "fit_fixed_graph");
  cfg.validate();
  const Dataset work = cfg.standardize ? standardize(data) : data;
  const CoefMatrix init = init_elastic_net(work, pen, cfg, warm);
  FitResult out;
  out.family = Family::gaussian;
  out.pen = pen;
  out.objective_trace.push_back(objective_gaussian(work, init, pen, graph));
  const CoefMatrix fit = cd_fixed_graph(work, pen, graph, init, cfg);
  out.objective = objective_gaussian(work, fit, pen, graph);
  out.objective_trace.push_back(out.objective);
  out.outer_iters = 1;
  out.converged = true;
  out.stop_reason = StopReason::sets_stable;
  out.graph = graph;
  out.coef = detail::gaussian_to_original(fit.B, work);
  out.coef_solver = fit.B;
  out.standardization = work.standardization();
  return out;
}

struct GraphObjective {
  RelationGraph graph;
  double objective;
};

struct OracleResult {
  FitResult fit;
  std::vector<GraphObjective> table;  // one row per enumerated graph, in enumeration order
};

/// Global minimizer by exhaustive search: one convex fixed-graph problem per
/// relation graph, all started from the elastic-net initialisation.
inline OracleResult oracle_minpen(const Dataset& data, const PenaltySpec& pen, const SolverConfig& cfg,
                                  int cap = kDefaultEnumerationCap) {
  detail::require_gaussian(data, "oracle_minpen");
  cfg.validate();
  auto graphs = enumerate_graphs(data.r(), cap, cfg.mask);
  const Dataset work = cfg.standardize ? standardize(data) : data;
  const CoefMatrix init = init_elastic_net(work, pen, cfg);

  OracleResult res;
  res.table.reserve(graphs.size());
  Matrix best;
  double best_obj = std::numeric_limits<double>::infinity();
  while (auto g = graphs.next()) {
    CoefMatrix fit = cd_fixed_graph(work, pen, *g, init, cfg);
    const double obj = objective_gaussian(work, fit, pen, *g);
    if (obj < best_obj) {
      best_obj = obj;
      best = std::move(fit.B);
    }
    res.table.push_back({std::move(*g), obj});
  }

  FitResult& out = res.fit;
  out.family = Family::gaussian;
  out.pen = pen;
  out.objective = best_obj;
  out.objective_trace = {best_obj};
  out.outer_iters = 0;
  out.converged = true;
  out.stop_reason = StopReason::sets_stable;
  out.graph = update_sets(best, cfg.mask);
  out.coef = detail::gaussian_to_original(best, work);
  out.coef_solver = std::move(best);
  out.standardization = work.standardization();
  return res;
}

}  // namespace minpen
