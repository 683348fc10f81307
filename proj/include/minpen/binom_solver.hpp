#pragma once

// Multiple-binomial MinPen solver. Coefficients are (p+1) x r "theta"
// matrices: row 0 holds the intercepts, rows 1..p the slopes omega_k.
// Intercepts are never soft-thresholded but do enter the fusion penalty
// unless SolverConfig::fuse_intercept is switched off.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "minpen/core.hpp"
#include "minpen/gauss_solver.hpp"
#include "minpen/relations.hpp"

namespace minpen {

/// (p+1) x r; row 0 = intercepts alpha_k, rows 1..p = omega_k.
using ThetaMatrix = Matrix;

inline constexpr double kProbFloor = 1e-5;

/// Working responses z_ik and weights w_ik of the quadratic approximation.
struct QuadApprox {
  Matrix Z;
  Matrix W;
};

namespace detail {

inline void require_binomial(const Dataset& data, const char* op) {
  if (data.family() != Family::binomial) throw DataError(std::string(op) + " requires binomial data");
}

inline void require_theta_shape(const Dataset& data, const ThetaMatrix& theta) {
  if (theta.rows() != data.p() + 1 || theta.cols() != data.r())
    throw DataError("theta must be (p+1) x r = " + std::to_string(data.p() + 1) + "x" + std::to_string(data.r()));
}

inline Matrix linear_predictor(const Matrix& X, const ThetaMatrix& theta) {
  Matrix eta = X * theta.bottomRows(theta.rows() - 1);
  eta.rowwise() += theta.row(0);
  return eta;
}

inline double logistic(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// log(1 + exp(eta)) without overflow.
inline double log1pexp(double eta) { return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

inline double clamp_prob(double pi) { return std::clamp(pi, kProbFloor, 1.0 - kProbFloor); }

inline double negative_loglik(const Dataset& data, const ThetaMatrix& theta) {
  const Matrix eta = linear_predictor(data.X(), theta);
  const Matrix T = data.trials();
  double total = 0.0;
  for (Eigen::Index k = 0; k < eta.cols(); ++k)
    for (Eigen::Index i = 0; i < eta.rows(); ++i)
      total -= data.Y()(i, k) * eta(i, k) - T(i, k) * log1pexp(eta(i, k));
  return total;
}

// Rows of theta compared by the minimum penalty.
inline Matrix fused_rows(const ThetaMatrix& theta, bool fuse_intercept) {
  return fuse_intercept ? Matrix(theta) : Matrix(theta.bottomRows(theta.rows() - 1));
}

inline double coupling_penalty(const Coupling& c, const Matrix& V) {
  double total = 0.0;
  for (Eigen::Index k = 0; k < V.cols(); ++k) {
    total += 0.5 * c.ridge(k) * V.col(k).squaredNorm();
    for (const auto& [m, w] : c.neighbours[static_cast<std::size_t>(k)]) total -= 0.5 * w * V.col(k).dot(V.col(m));
  }
  return total;
}

// Penalized likelihood for fixed coupling (fixed graph or ridge start).
class BinomialFixed {
 public:
  BinomialFixed(const Dataset& data, double delta, const Coupling& coupling, bool fuse_intercept)
      : data_(data), delta_(delta), coupling_(coupling), fuse_intercept_(fuse_intercept) {}

  double objective(const ThetaMatrix& theta) const {
    return negative_loglik(data_, theta) + delta_ * theta.bottomRows(theta.rows() - 1).cwiseAbs().sum() +
           coupling_penalty(coupling_, fused_rows(theta, fuse_intercept_));
  }

  // IRLS with step halving; the objective never increases across accepted steps.
  ThetaMatrix solve(ThetaMatrix theta, const SolverConfig& cfg) const {
    double f_old = objective(theta);
    for (int it = 0; it < cfg.irls_max_iters; ++it) {
      const QuadApprox quad = build(theta);
      const ThetaMatrix full = weighted_cd(quad, theta, cfg);
      ThetaMatrix cand = full;
      double f_new = objective(cand);
      double step = 1.0;
      for (int halving = 0; halving < 20 && !(f_new <= f_old); ++halving) {
        step *= 0.5;
        cand = theta + step * (full - theta);
        f_new = objective(cand);
      }
      if (!(f_new <= f_old)) {
        if (std::isfinite(f_new) && f_new - f_old <= 1e-9 * std::max(1.0, std::abs(f_old))) break;
        throw ConvergenceError("IRLS divergence guard: objective increased after 20 step halvings", theta);
      }
      const double change = (cand - theta).cwiseAbs().maxCoeff();
      const double gain = f_old - f_new;
      theta = std::move(cand);
      f_old = f_new;
      if (change <= cfg.irls_tol || gain <= cfg.obj_tol * std::max(1.0, std::abs(f_new))) break;
    }
    return theta;
  }

  QuadApprox build(const ThetaMatrix& theta) const {
    const Matrix eta = linear_predictor(data_.X(), theta);
    const Matrix T = data_.trials();
    QuadApprox q{Matrix(eta.rows(), eta.cols()), Matrix(eta.rows(), eta.cols())};
    for (Eigen::Index k = 0; k < eta.cols(); ++k)
      for (Eigen::Index i = 0; i < eta.rows(); ++i) {
        const double pi = clamp_prob(logistic(eta(i, k)));
        const double w = T(i, k) * pi * (1.0 - pi);
        q.W(i, k) = w;
        q.Z(i, k) = eta(i, k) + (data_.Y()(i, k) - T(i, k) * pi) / w;
      }
    return q;
  }

  // Cyclic proximal coordinate descent on
  // (1/2) sum_k sum_i w_ik (z_ik - u_i^T theta_k)^2 + delta ||omega||_1 + coupling.
  ThetaMatrix weighted_cd(const QuadApprox& q, ThetaMatrix theta, const SolverConfig& cfg) const {
    const Matrix& X = data_.X();
    const Eigen::Index p1 = theta.rows();
    const Eigen::Index r = theta.cols();
    Matrix R = q.Z - linear_predictor(X, theta);
    Matrix wsq(p1, r);
    for (Eigen::Index k = 0; k < r; ++k) {
      wsq(0, k) = q.W.col(k).sum();
      for (Eigen::Index j = 1; j < p1; ++j) wsq(j, k) = q.W.col(k).dot(X.col(j - 1).cwiseAbs2());
    }
    const Eigen::Index offset = fuse_intercept_ ? 0 : 1;
    auto pull = [&](Eigen::Index j, Eigen::Index k) {
      if (j < offset) return 0.0;
      double h = 0.0;
      for (const auto& [m, w] : coupling_.neighbours[static_cast<std::size_t>(k)]) h += w * theta(j, m);
      return h;
    };
    auto ridge = [&](Eigen::Index j, Eigen::Index k) { return j < offset ? 0.0 : coupling_.ridge(k); };
    auto wdot = [&](Eigen::Index j, Eigen::Index k) {
      return j == 0 ? q.W.col(k).dot(R.col(k)) : q.W.col(k).cwiseProduct(X.col(j - 1)).dot(R.col(k));
    };

    auto update = [&](Eigen::Index j, Eigen::Index k) {
      const double old = theta(j, k);
      const double denom = wsq(j, k) + ridge(j, k);
      if (denom <= 0.0) return 0.0;
      const double num = wdot(j, k) + wsq(j, k) * old + pull(j, k);
      const double next = soft_threshold(num, j == 0 ? 0.0 : delta_) / denom;
      const double change = next - old;
      if (change != 0.0) {
        if (j == 0)
          R.col(k).array() -= change;
        else
          R.col(k) -= change * X.col(j - 1);
        theta(j, k) = next;
      }
      return std::abs(change);
    };

    auto kkt = [&] {
      double worst = 0.0;
      for (Eigen::Index k = 0; k < r; ++k)
        for (Eigen::Index j = 0; j < p1; ++j) {
          const double grad = -wdot(j, k) + ridge(j, k) * theta(j, k) - pull(j, k);
          const double thr = j == 0 ? 0.0 : delta_;
          const double b = theta(j, k);
          const double res =
              (b != 0.0 || j == 0) ? std::abs(grad + (b > 0 ? thr : (b < 0 ? -thr : 0.0))) : std::max(0.0, std::abs(grad) - thr);
          worst = std::max(worst, res);
        }
      return worst;
    };

    // Weighted sums are O(n) larger than the gaussian 1/n-scaled ones, so
    // the subgradient tolerance is scaled by the total weight per response.
    const double kkt_scale = std::max(1.0, q.W.colwise().sum().maxCoeff());
    int sweeps = 0;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> active;
    while (true) {
      if (sweeps >= cfg.cd_max_sweeps)
        throw ConvergenceError("weighted coordinate descent did not converge within " +
                                   std::to_string(cfg.cd_max_sweeps) + " sweeps",
                               theta);
      double worst = 0.0;
      for (Eigen::Index k = 0; k < r; ++k)
        for (Eigen::Index j = 0; j < p1; ++j) worst = std::max(worst, update(j, k));
      ++sweeps;
      if (worst <= cfg.cd_tol) {
        if (kkt() <= 10.0 * cfg.cd_tol * kkt_scale) return theta;
        continue;
      }
      active.clear();
      for (Eigen::Index k = 0; k < r; ++k)
        for (Eigen::Index j = 0; j < p1; ++j)
          if (j == 0 || theta(j, k) != 0.0) active.emplace_back(j, k);
      while (sweeps < cfg.cd_max_sweeps) {
        double inner = 0.0;
        for (const auto& [j, k] : active) inner = std::max(inner, update(j, k));
        ++sweeps;
        if (inner <= cfg.cd_tol) break;
      }
    }
  }

 private:
  const Dataset& data_;
  double delta_;
  const Coupling& coupling_;
  bool fuse_intercept_;
};

inline CoefMatrix binomial_to_original(const ThetaMatrix& theta, const Dataset& work) {
  CoefMatrix out;
  out.B = theta.bottomRows(theta.rows() - 1);
  Vector alpha = theta.row(0).transpose();
  if (work.standardization()) {
    const auto& st = *work.standardization();
    out.B = st.column_scales.cwiseInverse().asDiagonal() * out.B;
    alpha -= out.B.transpose() * st.column_means;
  }
  out.intercepts = std::move(alpha);
  return out;
}

}  // namespace detail

/// pi_ik = logistic(alpha_k + x_i^T omega_k), clamped to [1e-5, 1 - 1e-5].
inline Matrix link_probs(const Dataset& data, const ThetaMatrix& theta) {
  detail::require_binomial(data, "link_probs");
  detail::require_theta_shape(data, theta);
  return detail::linear_predictor(data.X(), theta).unaryExpr([](double e) {
    return detail::clamp_prob(detail::logistic(e));
  });
}

/// IRLS working responses and weights at theta (clamped probabilities).
inline QuadApprox build_quad(const Dataset& data, const ThetaMatrix& theta) {
  detail::require_binomial(data, "build_quad");
  detail::require_theta_shape(data, theta);
  const detail::Coupling none = detail::ridge_coupling(data.r(), 0.0);
  return detail::BinomialFixed(data, 0.0, none, true).build(theta);
}

/// Gradient of the (unpenalized) negative log-likelihood in theta.
inline ThetaMatrix nll_gradient(const Dataset& data, const ThetaMatrix& theta) {
  detail::require_binomial(data, "nll_gradient");
  detail::require_theta_shape(data, theta);
  const Matrix eta = detail::linear_predictor(data.X(), theta);
  const Matrix resid = data.Y() - data.trials().cwiseProduct(eta.unaryExpr([](double e) { return detail::logistic(e); }));
  ThetaMatrix g(theta.rows(), theta.cols());
  g.row(0) = -resid.colwise().sum();
  g.bottomRows(theta.rows() - 1) = -data.X().transpose() * resid;
  return g;
}

/// Negative log-likelihood + delta sum ||omega_k||_1 + (gamma/2) sum_{l!=m} min-penalty(theta_l, theta_m).
inline double penalized_nll(const Dataset& data, const ThetaMatrix& theta, const PenaltySpec& pen,
                            bool fuse_intercept = true) {
  detail::require_binomial(data, "penalized_nll");
  detail::require_theta_shape(data, theta);
  return detail::negative_loglik(data, theta) + pen.delta() * theta.bottomRows(theta.rows() - 1).cwiseAbs().sum() +
         0.5 * pen.gamma() * min_fusion_penalty(detail::fused_rows(theta, fuse_intercept));
}

/// Penalized likelihood with the fusion term fixed to a relation graph.
inline double penalized_nll_fixed(const Dataset& data, const ThetaMatrix& theta, const PenaltySpec& pen,
                                  const RelationGraph& graph, bool fuse_intercept = true) {
  detail::require_binomial(data, "penalized_nll_fixed");
  detail::require_theta_shape(data, theta);
  return detail::negative_loglik(data, theta) + pen.delta() * theta.bottomRows(theta.rows() - 1).cwiseAbs().sum() +
         0.5 * pen.gamma() * fusion_penalty(detail::fused_rows(theta, fuse_intercept), graph);
}

/// Fixed-graph binomial solve (IRLS outer loop, proximal CD inner loop).
inline ThetaMatrix binom_fixed_graph(const Dataset& data, const PenaltySpec& pen, const RelationGraph& graph,
                                     const ThetaMatrix& warm, const SolverConfig& cfg) {
  detail::require_binomial(data, "binom_fixed_graph");
  detail::require_theta_shape(data, warm);
  cfg.validate();
  const auto coupling = detail::fusion_coupling(graph, pen.gamma());
  return detail::BinomialFixed(data, pen.delta(), coupling, cfg.fuse_intercept).solve(warm, cfg);
}

/// Per-response logistic elastic net start: NLL + delta||omega||_1 + gamma||theta_k||^2.
inline ThetaMatrix binom_init_elastic_net(const Dataset& data, const PenaltySpec& pen, const SolverConfig& cfg,
                                          const std::optional<ThetaMatrix>& warm = std::nullopt) {
  detail::require_binomial(data, "binom_init_elastic_net");
  cfg.validate();
  ThetaMatrix start = warm ? *warm : ThetaMatrix::Zero(data.p() + 1, data.r());
  detail::require_theta_shape(data, start);
  const auto coupling = detail::ridge_coupling(data.r(), pen.gamma());
  return detail::BinomialFixed(data, pen.delta(), coupling, cfg.fuse_intercept).solve(std::move(start), cfg);
}

/// Alternating set updates on theta columns and fixed-graph IRLS solves.
inline FitResult fit_binom_minpen(const Dataset& data, const PenaltySpec& pen, const SolverConfig& cfg,
                                  const std::optional<ThetaMatrix>& warm = std::nullopt) {
  detail::require_binomial(data, "fit_binom_minpen");
  cfg.validate();
  const Dataset work = cfg.standardize ? standardize(data) : data;
  const bool fuse = cfg.fuse_intercept;
  auto sets = [&](const ThetaMatrix& t) { return update_sets(detail::fused_rows(t, fuse), cfg.mask); };
  auto objective = [&](const ThetaMatrix& t) { return penalized_nll_fixed(work, t, pen, sets(t), fuse); };

  ThetaMatrix current = binom_init_elastic_net(work, pen, cfg, warm);
  FitResult out;
  out.family = Family::binomial;
  out.pen = pen;
  out.objective_trace.push_back(objective(current));
  ThetaMatrix best = current;
  double best_obj = out.objective_trace.back();
  RelationGraph graph = sets(current);
  out.stop_reason = StopReason::max_iters;

  for (int it = 1; it <= cfg.outer_max_iters; ++it) {
    current = binom_fixed_graph(work, pen, graph, current, cfg);
    const double obj = objective(current);
    const double prev = out.objective_trace.back();
    out.objective_trace.push_back(obj);
    out.outer_iters = it;
    if (obj < best_obj) {
      best_obj = obj;
      best = current;
    }
    RelationGraph next = sets(current);
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
  out.graph = sets(best);
  out.coef = detail::binomial_to_original(best, work);
  out.coef_solver = std::move(best);
  out.standardization = work.standardization();
  return out;
}

/// Binomial fit with a supplied relation graph.
inline FitResult fit_binom_fixed_graph(const Dataset& data, const PenaltySpec& pen, const RelationGraph& graph,
                                       const SolverConfig& cfg, const std::optional<ThetaMatrix>& warm = std::nullopt) {
  detail::require_binomial(data, "fit_binom_fixed_graph");
  cfg.validate();
  const Dataset work = cfg.standardize ? standardize(data) : data;
  const ThetaMatrix init = binom_init_elastic_net(work, pen, cfg, warm);
  FitResult out;
  out.family = Family::binomial;
  out.pen = pen;
  out.objective_trace.push_back(penalized_nll_fixed(work, init, pen, graph, cfg.fuse_intercept));
  ThetaMatrix fit = binom_fixed_graph(work, pen, graph, init, cfg);
  out.objective = penalized_nll_fixed(work, fit, pen, graph, cfg.fuse_intercept);
  out.objective_trace.push_back(out.objective);
  out.outer_iters = 1;
  out.converged = true;
  out.stop_reason = StopReason::sets_stable;
  out.graph = graph;
  out.coef = detail::binomial_to_original(fit, work);
  out.coef_solver = std::move(fit);
  out.standardization = work.standardization();
  return out;
}

}  // namespace minpen
