#pragma once

// Selective confidence intervals for MinPen coefficients, conditional on the
// selected support, signs and relation graph. The KKT system at a fixed graph
// makes the selection event a polyhedron {y : Gamma y <= u}; intervals invert a
// truncated Gaussian pivot over that polyhedron.
//
// Everything runs on the solver's working scale: standardized predictors and
// centred responses when the fit standardized. Centering is exact here because
// eta and the rows of Gamma lie in the span of the centred design.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "minpen/gauss_solver.hpp"

namespace minpen {

struct SelectionEvent {
  std::vector<Eigen::Index> Q;  // indices into vec(B): k * p + j
  Vector signs;                 // s_Q
  RelationGraph graph{1};
  Matrix K_QQ;
  Matrix K_QcQ;                 // rows in the order of inactive()
  Vector beta_Q;                // polished fit on Q

  std::vector<Eigen::Index> inactive(Eigen::Index pr) const {
    std::vector<Eigen::Index> out;
    std::size_t q = 0;
    for (Eigen::Index i = 0; i < pr; ++i) {
      if (q < Q.size() && Q[q] == i) {
        ++q;
        continue;
      }
      out.push_back(i);
    }
    return out;
  }
};

struct PolyhedralEvent {
  Matrix Gamma;  // (|Q| + 2 (pr - |Q|)) x nr
  Vector u;
};

/// Selection event plus the working-scale data it was built from.
struct InferenceProblem {
  SelectionEvent event;
  PolyhedralEvent poly;
  Matrix X;  // n x p working design
  Vector y;  // vec(Y) on the working scale, length n r
  Eigen::Index n = 0, p = 0, r = 0;
  PenaltySpec pen{0.0, 0.0};
  std::optional<Standardization> standardization;
};

enum class SigmaMode { known, residual_full, diagonal };

inline const char* to_string(SigmaMode m) {
  switch (m) {
    case SigmaMode::known:
      return "known";
    case SigmaMode::residual_full:
      return "residual_full";
    default:
      return "diagonal";
  }
}

struct SigmaSpec {
  SigmaMode mode = SigmaMode::known;
  Matrix matrix;  // r x r

  bool positive_definite() const {
    if (matrix.rows() == 0 || matrix.rows() != matrix.cols()) return false;
    Eigen::LLT<Matrix> llt(matrix);
    if (llt.info() != Eigen::Success) return false;
    return llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 1e-12 * std::sqrt(matrix.diagonal().maxCoeff());
  }
};

inline SigmaSpec known_sigma(Matrix sigma) {
  if (sigma.rows() != sigma.cols()) throw ConfigError("error covariance must be square");
  if (!sigma.isApprox(sigma.transpose(), 1e-12)) throw ConfigError("error covariance must be symmetric");
  return {SigmaMode::known, std::move(sigma)};
}

/// Residual covariance of the saturated multivariate OLS fit (with intercept), divided by n - p.
inline SigmaSpec estimate_sigma(const Dataset& data, SigmaMode mode = SigmaMode::residual_full) {
  detail::require_gaussian(data, "estimate_sigma");
  if (mode == SigmaMode::known) throw ConfigError("estimate_sigma needs residual_full or diagonal mode");
  if (data.p() >= data.n() - 1)
    throw DataError("residual covariance needs p < n - 1, have p = " + std::to_string(data.p()) +
                    ", n = " + std::to_string(data.n()));
  Matrix Xc = data.X();
  Xc.rowwise() -= Xc.colwise().mean();
  Matrix Yc = data.Y();
  Yc.rowwise() -= Yc.colwise().mean();
  Matrix E = Yc - Xc * Xc.colPivHouseholderQr().solve(Yc);
  // an exact fit leaves rounding noise only
  if (E.norm() <= 1e-10 * std::max(Yc.norm(), std::numeric_limits<double>::min())) E.setZero();
  Matrix S = E.transpose() * E / static_cast<double>(data.n() - data.p());
  if (mode == SigmaMode::diagonal) S = Matrix(S.diagonal().asDiagonal());
  return {mode, std::move(S)};
}

namespace detail {

inline Matrix kron_design(const Matrix& X, Eigen::Index r) {
  Matrix out = Matrix::Zero(X.rows() * r, X.cols() * r);
  for (Eigen::Index k = 0; k < r; ++k) out.block(k * X.rows(), k * X.cols(), X.rows(), X.cols()) = X;
  return out;
}

// Sigma-tilde times v, where Sigma-tilde = Sigma (x) I_n and v = vec(V), V n x r.
inline Vector sigma_times(const Matrix& sigma, const Vector& v, Eigen::Index n) {
  const Eigen::Index r = sigma.rows();
  const Eigen::Map<const Matrix> V(v.data(), n, r);
  const Matrix out = V * sigma;  // sigma symmetric
  return Eigen::Map<const Vector>(out.data(), out.size());
}

// log P(Z > t) for standard normal Z.
inline double log_upper_tail(double t) {
  if (t == std::numeric_limits<double>::infinity()) return -std::numeric_limits<double>::infinity();
  if (t == -std::numeric_limits<double>::infinity()) return 0.0;
  if (t < 30.0) return std::log(0.5 * std::erfc(t / std::sqrt(2.0)));
  const double t2 = t * t;
  const double series = 1.0 - 1.0 / t2 + 3.0 / (t2 * t2) - 15.0 / (t2 * t2 * t2) + 105.0 / (t2 * t2 * t2 * t2);
  return -0.5 * t2 - std::log(t) - 0.5 * std::log(2.0 * M_PI) + std::log(series);
}

}  // namespace detail

/// CDF at x of N(mu, var) truncated to [a, b]. Works in log space on whichever
/// tail holds the interval so that far-tail truncations stay accurate.
inline double trunc_norm_cdf(double x, double mu, double var, double a, double b) {
  if (!(var > 0.0)) throw ConfigError("trunc_norm_cdf needs positive variance");
  if (!(a < b)) throw ConfigError("trunc_norm_cdf needs a < b");
  if (x <= a) return 0.0;
  if (x >= b) return 1.0;
  const double sd = std::sqrt(var);
  const double lo = (a - mu) / sd, hi = (b - mu) / sd, t = (x - mu) / sd;
  double num, den;
  if (lo > 0.0) {
    const double la = detail::log_upper_tail(lo);
    num = -std::expm1(detail::log_upper_tail(t) - la);
    den = -std::expm1(detail::log_upper_tail(hi) - la);
  } else {
    // Phi(s) = P(Z > -s)
    const double lb = detail::log_upper_tail(-hi), lt = detail::log_upper_tail(-t), la = detail::log_upper_tail(-lo);
    num = std::exp(lt - lb) * -std::expm1(la - lt);
    den = -std::expm1(la - lb);
  }
  if (!(den > 0.0) || !std::isfinite(num / den))
    throw InferenceError("trunc_norm_cdf: truncation interval has no representable mass");
  return std::clamp(num / den, 0.0, 1.0);
}

/// Polishes the fit at its graph, then assembles the KKT polyhedron for the
/// selected support Q (nonzero coefficients), signs and graph.
inline InferenceProblem build_event(const Dataset& data, const FitResult& fit, const PenaltySpec& pen,
                                    double polish_tol = 1e-12) {
  detail::require_gaussian(data, "build_event");
  if (fit.family != Family::gaussian) throw InferenceError("selective inference is only available for gaussian fits");
  if (fit.coef_solver.rows() != data.p() || fit.coef_solver.cols() != data.r())
    throw DataError("fit does not match the data dimensions");
  if (!fit.converged) throw InferenceError("fit did not converge; refusing to build a selection event");

  InferenceProblem prob;
  const Dataset work = fit.standardization ? standardize(data) : data;
  prob.standardization = work.standardization();
  prob.n = work.n();
  prob.p = work.p();
  prob.r = work.r();
  prob.pen = pen;
  prob.X = work.X();
  prob.y = Eigen::Map<const Vector>(work.Y().data(), work.Y().size());
  const Eigen::Index n = prob.n, p = prob.p, r = prob.r, pr = p * r;
  const double nd = static_cast<double>(n);

  SolverConfig cfg;
  cfg.cd_tol = polish_tol;
  cfg.cd_max_sweeps = 100000;
  const Matrix B = cd_fixed_graph(work, pen, fit.graph, {fit.coef_solver, std::nullopt}, cfg).B;
  const Vector beta = Eigen::Map<const Vector>(B.data(), B.size());

  SelectionEvent& ev = prob.event;
  ev.graph = fit.graph;
  for (Eigen::Index i = 0; i < pr; ++i)
    if (beta(i) != 0.0) ev.Q.push_back(i);
  const Eigen::Index q = static_cast<Eigen::Index>(ev.Q.size());
  if (q == 0) throw InferenceError("empty selection: no nonzero coefficients to make intervals for");
  const std::vector<Eigen::Index> out = ev.inactive(pr);
  const Eigen::Index m = static_cast<Eigen::Index>(out.size());
  if (m > 0 && !(pen.delta() > 0.0)) throw InferenceError("inactive coefficients with delta = 0 have no KKT bound");

  ev.signs.resize(q);
  ev.beta_Q.resize(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    ev.beta_Q(i) = beta(ev.Q[static_cast<std::size_t>(i)]);
    ev.signs(i) = ev.beta_Q(i) > 0 ? 1.0 : -1.0;
  }

  // K = (1/n) Xt^T Xt + gamma A^T A
  const Matrix G = prob.X.transpose() * prob.X / nd;
  Matrix K = pen.gamma() * laplacian(ev.graph, p);
  for (Eigen::Index k = 0; k < r; ++k) K.block(k * p, k * p, p, p) += G;
  ev.K_QQ.resize(q, q);
  ev.K_QcQ.resize(m, q);
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index jj = 0; jj < q; ++jj) ev.K_QQ(i, jj) = K(ev.Q[std::size_t(i)], ev.Q[std::size_t(jj)]);
    for (Eigen::Index jj = 0; jj < m; ++jj) ev.K_QcQ(jj, i) = K(out[std::size_t(jj)], ev.Q[std::size_t(i)]);
  }
  const Eigen::LDLT<Matrix> kqq(ev.K_QQ);
  if (kqq.info() != Eigen::Success || !(kqq.vectorD().minCoeff() > 1e-12 * kqq.vectorD().cwiseAbs().maxCoeff()))
    throw InferenceError("K_QQ is singular; selected block is rank deficient");

  // beta_Q(y) = M y + m0
  const Matrix Xt = detail::kron_design(prob.X, r);
  Matrix XtQ(n * r, q);
  for (Eigen::Index i = 0; i < q; ++i) XtQ.col(i) = Xt.col(ev.Q[std::size_t(i)]);
  const Matrix M = kqq.solve(Matrix(XtQ.transpose() / nd));
  const Vector m0 = -pen.delta() * kqq.solve(ev.signs);
  const Vector refit = M * prob.y + m0;
  if ((refit - ev.beta_Q).cwiseAbs().maxCoeff() > 1e-6 * std::max(1.0, ev.beta_Q.cwiseAbs().maxCoeff()))
    throw InferenceError("KKT reconstruction does not reproduce the fitted coefficients");

  PolyhedralEvent& poly = prob.poly;
  poly.Gamma.resize(q + 2 * m, n * r);
  poly.u.resize(q + 2 * m);
  poly.Gamma.topRows(q) = -(ev.signs.asDiagonal() * M);
  poly.u.head(q) = ev.signs.cwiseProduct(m0);
  if (m > 0) {
    Matrix XtN(n * r, m);
    for (Eigen::Index i = 0; i < m; ++i) XtN.col(i) = Xt.col(out[std::size_t(i)]);
    const Matrix Gj = (XtN.transpose() / nd - ev.K_QcQ * M) / pen.delta();
    const Vector gj = ev.K_QcQ * m0 / pen.delta();
    poly.Gamma.middleRows(q, m) = Gj;
    poly.u.segment(q, m) = Vector::Ones(m) + gj;
    poly.Gamma.bottomRows(m) = -Gj;
    poly.u.tail(m) = Vector::Ones(m) - gj;
  }
  const double slack = (poly.Gamma * prob.y - poly.u).maxCoeff();
  if (slack > 1e-8) throw InferenceError("observed response violates its own selection event (slack " +
                                         std::to_string(slack) + ")");
  return prob;
}

struct SelectiveInterval {
  Eigen::Index index = 0;     // position in vec(B)
  Eigen::Index predictor = 0;
  Eigen::Index response = 0;
  double estimate = 0.0;      // eta^T y, the least-squares coefficient on Q
  double lower = 0.0;
  double upper = 0.0;
  double v_minus = 0.0;
  double v_plus = 0.0;
  double sd = 0.0;            // sqrt(eta^T Sigma-tilde eta)
};

struct IntervalOptions {
  bool full_design = false;  // eta from the full design instead of X_Q
  double bisection_tol = 1e-8;
  double parallel_tol = 1e-12;
};

/// Contrast vector eta for position j of Q.
inline Vector contrast(const InferenceProblem& prob, Eigen::Index j, bool full_design) {
  const auto& Q = prob.event.Q;
  if (j < 0 || j >= static_cast<Eigen::Index>(Q.size())) throw ConfigError("interval index outside Q");
  const Matrix Xt = detail::kron_design(prob.X, prob.r);
  if (full_design) {
    if (prob.p >= prob.n) throw InferenceError("full-design contrast needs p < n");
    const Matrix G = Xt.transpose() * Xt;
    Vector e = Vector::Zero(G.rows());
    e(Q[std::size_t(j)]) = 1.0;
    return Xt * G.ldlt().solve(e);
  }
  const Eigen::Index q = static_cast<Eigen::Index>(Q.size());
  Matrix XtQ(Xt.rows(), q);
  for (Eigen::Index i = 0; i < q; ++i) XtQ.col(i) = Xt.col(Q[std::size_t(i)]);
  const Eigen::LDLT<Matrix> g(XtQ.transpose() * XtQ);
  if (g.info() != Eigen::Success || !(g.vectorD().minCoeff() > 1e-12 * g.vectorD().cwiseAbs().maxCoeff()))
    throw InferenceError("X_Q^T X_Q is not positive definite");
  Vector e = Vector::Zero(q);
  e(j) = 1.0;
  return XtQ * g.solve(e);
}

/// Truncation limits of eta^T y over {Gamma y <= u}.
inline std::pair<double, double> truncation_limits(const PolyhedralEvent& poly, const Vector& y, const Vector& eta,
                                                   const Vector& c, double parallel_tol = 1e-12) {
  const Vector z = y - c * eta.dot(y);
  const Vector Gc = poly.Gamma * c;
  const Vector Gz = poly.Gamma * z;
  double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < Gc.size(); ++i) {
    if (std::abs(Gc(i)) < parallel_tol) continue;
    const double v = (poly.u(i) - Gz(i)) / Gc(i);
    if (Gc(i) < 0.0)
      lo = std::max(lo, v);
    else
      hi = std::min(hi, v);
  }
  return {lo, hi};
}

namespace detail {

// mu with trunc_norm_cdf(x; mu, var, a, b) = target; the CDF falls as mu grows.
inline double invert_pivot(double x, double var, double a, double b, double target, double tol) {
  const double sd = std::sqrt(var);
  auto F = [&](double mu) { return trunc_norm_cdf(x, mu, var, a, b); };
  double left = x - sd, right = x + sd, step = sd;
  int expand = 0;
  while (F(left) < target) {
    right = left;
    left -= step;
    step *= 2.0;
    if (++expand > 200) throw InferenceError("could not bracket the lower pivot root");
  }
  step = sd;
  expand = 0;
  while (F(right) > target) {
    left = std::max(left, right);
    right += step;
    step *= 2.0;
    if (++expand > 200) throw InferenceError("could not bracket the upper pivot root");
  }
  while (right - left > tol) {
    const double mid = 0.5 * (left + right);
    if (mid <= left || mid >= right) break;
    (F(mid) > target ? left : right) = mid;
  }
  return 0.5 * (left + right);
}

}  // namespace detail

/// Interval [L, U] for beta*_{Q,j} at level 1 - alpha, j a position in Q.
inline SelectiveInterval selective_interval(const InferenceProblem& prob, const SigmaSpec& sigma, Eigen::Index j,
                                            double alpha, const IntervalOptions& opt = {}) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (sigma.matrix.rows() != prob.r || sigma.matrix.cols() != prob.r)
    throw ConfigError("error covariance must be r x r");
  if (!sigma.positive_definite()) throw InferenceError("error covariance is not positive definite");
  const Vector eta = contrast(prob, j, opt.full_design);
  const Vector se = detail::sigma_times(sigma.matrix, eta, prob.n);
  const double var = eta.dot(se);
  const Vector c = se / var;
  const auto [vm, vp] = truncation_limits(prob.poly, prob.y, eta, c, opt.parallel_tol);
  const double x = eta.dot(prob.y);
  if (!(vm < vp)) throw InferenceError("degenerate truncation: V- >= V+");

  SelectiveInterval out;
  out.index = prob.event.Q[std::size_t(j)];
  out.response = out.index / prob.p;
  out.predictor = out.index % prob.p;
  out.estimate = x;
  out.v_minus = vm;
  out.v_plus = vp;
  out.sd = std::sqrt(var);
  out.lower = detail::invert_pivot(x, var, vm, vp, 1.0 - 0.5 * alpha, opt.bisection_tol);
  out.upper = detail::invert_pivot(x, var, vm, vp, 0.5 * alpha, opt.bisection_tol);
  return out;
}

/// Intervals for every member of Q, in Q order.
inline std::vector<SelectiveInterval> selective_intervals(const InferenceProblem& prob, const SigmaSpec& sigma,
                                                          double alpha, const IntervalOptions& opt = {}) {
  std::vector<SelectiveInterval> out;
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(prob.event.Q.size()); ++j)
    out.push_back(selective_interval(prob, sigma, j, alpha, opt));
  return out;
}

}  // namespace minpen
