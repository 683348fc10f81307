#pragma once

// Shared data model: datasets, coefficient containers, penalty settings,
// signed relation graphs, and the canonical objective evaluators.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "minpen/errors.hpp"

namespace minpen {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

enum class Family { gaussian, binomial };

inline const char* to_string(Family f) { return f == Family::gaussian ? "gaussian" : "binomial"; }

inline Family family_from_string(const std::string& s) {
  if (s == "gaussian") return Family::gaussian;
  if (s == "binomial") return Family::binomial;
  throw ConfigError("unknown family '" + s + "' (expected gaussian or binomial)");
}

/// Record of the centring/scaling applied by standardize(), used to map
/// coefficients back to the original predictor scale.
struct Standardization {
  Vector column_means;
  Vector column_scales;
  Vector response_means;  // zeros for binomial data
};

/// Predictors X (n x p), responses Y (n x r), and for binomial data an
/// optional matrix of trial counts (all ones when absent).
class Dataset {
 public:
  Dataset(Matrix X, Matrix Y, Family family, std::optional<Matrix> trials = std::nullopt)
      : X_(std::move(X)), Y_(std::move(Y)), family_(family), trials_(std::move(trials)) {
    validate();
  }

  Eigen::Index n() const { return X_.rows(); }
  Eigen::Index p() const { return X_.cols(); }
  Eigen::Index r() const { return Y_.cols(); }

  const Matrix& X() const { return X_; }
  const Matrix& Y() const { return Y_; }
  Family family() const { return family_; }

  bool has_trials() const { return trials_.has_value(); }
  /// Trial counts n_ik; all ones for Bernoulli data.
  Matrix trials() const { return trials_ ? *trials_ : Matrix::Ones(n(), r()); }

  bool is_standardized() const { return standardization_.has_value(); }
  const std::optional<Standardization>& standardization() const { return standardization_; }

  const std::vector<std::string>& predictor_names() const { return predictor_names_; }
  const std::vector<std::string>& response_names() const { return response_names_; }

  Dataset with_names(std::vector<std::string> predictors, std::vector<std::string> responses) const {
    if (!predictors.empty() && static_cast<Eigen::Index>(predictors.size()) != p())
      throw DataError("predictor name count does not match the number of columns of X");
    if (!responses.empty() && static_cast<Eigen::Index>(responses.size()) != r())
      throw DataError("response name count does not match the number of columns of Y");
    Dataset out = *this;
    out.predictor_names_ = std::move(predictors);
    out.response_names_ = std::move(responses);
    return out;
  }

  /// Rows selected by index, keeping family, trials and names. Standardization is dropped.
  Dataset subset(const std::vector<Eigen::Index>& rows) const {
    Matrix X(static_cast<Eigen::Index>(rows.size()), p());
    Matrix Y(static_cast<Eigen::Index>(rows.size()), r());
    std::optional<Matrix> T;
    if (trials_) T = Matrix(static_cast<Eigen::Index>(rows.size()), r());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      X.row(ii) = X_.row(rows[i]);
      Y.row(ii) = Y_.row(rows[i]);
      if (T) T->row(ii) = trials_->row(rows[i]);
    }
    Dataset out(std::move(X), std::move(Y), family_, std::move(T));
    out.predictor_names_ = predictor_names_;
    out.response_names_ = response_names_;
    return out;
  }

 private:
  friend Dataset standardize(const Dataset& raw);

  void validate() const {
    if (X_.rows() < 2) throw DataError("dataset needs at least 2 observations");
    if (X_.cols() < 1) throw DataError("dataset needs at least 1 predictor");
    if (Y_.cols() < 1) throw DataError("dataset needs at least 1 response");
    if (Y_.rows() != X_.rows())
      throw DataError("X has " + std::to_string(X_.rows()) + " rows but Y has " +
                      std::to_string(Y_.rows()));
    if (!X_.allFinite()) throw DataError("X contains missing or non-finite entries");
    if (!Y_.allFinite()) throw DataError("Y contains missing or non-finite entries");
    if (trials_) {
      if (family_ != Family::binomial) throw DataError("trial counts are only valid for binomial data");
      if (trials_->rows() != Y_.rows() || trials_->cols() != Y_.cols())
        throw DataError("trial-count matrix must have the same shape as Y");
    }
    if (family_ == Family::binomial) {
      for (Eigen::Index k = 0; k < Y_.cols(); ++k)
        for (Eigen::Index i = 0; i < Y_.rows(); ++i) {
          const double y = Y_(i, k);
          const double t = trials_ ? (*trials_)(i, k) : 1.0;
          if (t < 1.0 || t != std::floor(t))
            throw DataError("trial counts must be positive integers");
          if (y < 0.0 || y > t || y != std::floor(y))
            throw DataError("binomial response " + std::to_string(k) + " has entry " +
                            std::to_string(y) + " outside {0,...,trials} at row " + std::to_string(i));
        }
    }
  }

  Matrix X_;
  Matrix Y_;
  Family family_;
  std::optional<Matrix> trials_;
  std::optional<Standardization> standardization_;
  std::vector<std::string> predictor_names_;
  std::vector<std::string> response_names_;
};

/// Centre every predictor to mean 0 and scale to ||x_j||^2 / n = 1; centre
/// gaussian responses. Already-standardized data is returned unchanged.
inline Dataset standardize(const Dataset& raw) {
  if (raw.is_standardized()) return raw;
  const double n = static_cast<double>(raw.n());
  Standardization st;
  st.column_means = raw.X().colwise().mean().transpose();
  st.column_scales.resize(raw.p());
  Matrix X = raw.X();
  for (Eigen::Index j = 0; j < raw.p(); ++j) {
    X.col(j).array() -= st.column_means(j);
    const double scale = std::sqrt(X.col(j).squaredNorm() / n);
    const double ref = std::max(1.0, std::abs(st.column_means(j)));
    if (!(scale > 1e-12 * ref))
      throw DataError("degenerate column: predictor " + std::to_string(j) + " is constant");
    st.column_scales(j) = scale;
    if (scale != 1.0) X.col(j) /= scale;
  }
  Matrix Y = raw.Y();
  if (raw.family() == Family::gaussian) {
    st.response_means = Y.colwise().mean().transpose();
    Y.rowwise() -= st.response_means.transpose();
  } else {
    st.response_means = Vector::Zero(raw.r());
  }
  std::optional<Matrix> trials;
  if (raw.has_trials()) trials = raw.trials();
  Dataset out(std::move(X), std::move(Y), raw.family(), std::move(trials));
  out.predictor_names_ = raw.predictor_names_;
  out.response_names_ = raw.response_names_;
  out.standardization_ = std::move(st);
  return out;
}

/// Coefficients: column k of B is beta_k. Intercepts are present for
/// binomial fits and for gaussian fits reported on the original scale.
struct CoefMatrix {
  Matrix B;
  std::optional<Vector> intercepts;

  Eigen::Index p() const { return B.rows(); }
  Eigen::Index r() const { return B.cols(); }

  /// Column-stacked vec(B) of length p*r.
  Vector vec() const { return Eigen::Map<const Vector>(B.data(), B.size()); }
};

/// Lasso weight delta and fusion weight gamma.
class PenaltySpec {
 public:
  PenaltySpec(double delta, double gamma) : delta_(delta), gamma_(gamma) {
    if (!(delta >= 0.0) || !std::isfinite(delta))
      throw ConfigError("delta must be a finite non-negative number");
    if (!(gamma >= 0.0) || !std::isfinite(gamma))
      throw ConfigError("gamma must be a finite non-negative number");
  }
  double delta() const { return delta_; }
  double gamma() const { return gamma_; }

  friend bool operator==(const PenaltySpec&, const PenaltySpec&) = default;

 private:
  double delta_;
  double gamma_;
};

/// Relation of response m to response l: +1 positive (m in P_l), -1
/// negative (m in N_l), 0 unrelated (m in Z_l).
enum class Relation : int { negative = -1, none = 0, positive = 1 };

/// r x r signed relation matrix with zero diagonal. Not necessarily symmetric.
class RelationGraph {
 public:
  explicit RelationGraph(Eigen::Index r) : D_(IntMatrix::Zero(r, r)) {
    if (r < 1) throw DataError("relation graph needs at least one response");
  }

  explicit RelationGraph(IntMatrix D) : D_(std::move(D)) {
    if (D_.rows() != D_.cols()) throw DataError("relation matrix must be square");
    if (D_.rows() < 1) throw DataError("relation graph needs at least one response");
    for (Eigen::Index l = 0; l < D_.rows(); ++l)
      for (Eigen::Index m = 0; m < D_.cols(); ++m) {
        const int d = D_(l, m);
        if (l == m && d != 0) throw DataError("relation matrix diagonal must be zero");
        if (d < -1 || d > 1)
          throw DataError("relation entries must be in {-1,0,1}, got " + std::to_string(d));
      }
  }

  Eigen::Index r() const { return D_.rows(); }
  int operator()(Eigen::Index l, Eigen::Index m) const { return D_(l, m); }
  Relation relation(Eigen::Index l, Eigen::Index m) const { return static_cast<Relation>(D_(l, m)); }
  const IntMatrix& matrix() const { return D_; }

  RelationGraph with(Eigen::Index l, Eigen::Index m, Relation rel) const {
    if (l == m) throw DataError("cannot relate a response to itself");
    IntMatrix D = D_;
    D(l, m) = static_cast<int>(rel);
    return RelationGraph(std::move(D));
  }

  friend bool operator==(const RelationGraph& a, const RelationGraph& b) {
    return a.D_.rows() == b.D_.rows() && a.D_ == b.D_;
  }

 private:
  IntMatrix D_;
};

/// Value and label of the minimum penalty between a pair of coefficient vectors.
struct PairPenalty {
  double value;
  Relation label;
};

namespace detail {

// Label from a = ||b_l||^2 is implicit: ||b_l - b_m||^2 < a  <=>  b - 2c < 0,
// ||b_l + b_m||^2 < a  <=>  b + 2c < 0, diff <= sum  <=>  c >= 0, where
// b = ||b_m||^2 and c = <b_l, b_m>. Negating b_m flips c exactly.
inline Relation pair_label(double b, double c) {
  if (c >= 0.0 && b - 2.0 * c < 0.0) return Relation::positive;
  if (c < 0.0 && b + 2.0 * c < 0.0) return Relation::negative;
  return Relation::none;
}

template <typename VL, typename VM>
double pair_term(const VL& bl, const VM& bm, int d) {
  switch (d) {
    case 1:
      return (bl - bm).squaredNorm();
    case -1:
      return (bl + bm).squaredNorm();
    default:
      return bl.squaredNorm();
  }
}

inline void require_coef_shape(const Dataset& data, const Matrix& B) {
  if (B.rows() != data.p() || B.cols() != data.r())
    throw DataError("coefficient matrix is " + std::to_string(B.rows()) + "x" +
                    std::to_string(B.cols()) + " but data is p=" + std::to_string(data.p()) +
                    ", r=" + std::to_string(data.r()));
}

}  // namespace detail

/// min(||b_l - b_m||^2, ||b_l + b_m||^2, ||b_l||^2) with its P/N/Z label.
/// Ties between difference and sum go to P; ties against ||b_l||^2 go to Z.
template <typename VL, typename VM>
PairPenalty min_penalty(const Eigen::MatrixBase<VL>& beta_l, const Eigen::MatrixBase<VM>& beta_m) {
  if (beta_l.size() != beta_m.size())
    throw DataError("min_penalty: vectors have lengths " + std::to_string(beta_l.size()) + " and " +
                    std::to_string(beta_m.size()));
  const Relation label = detail::pair_label(beta_m.squaredNorm(), beta_l.dot(beta_m));
  return {detail::pair_term(beta_l, beta_m, static_cast<int>(label)), label};
}

/// Sum over ordered pairs l != m of ||b_l - d_lm b_m||^2 (columns of B).
inline double fusion_penalty(const Matrix& B, const RelationGraph& graph) {
  if (graph.r() != B.cols()) throw DataError("graph and coefficient matrix disagree on r");
  double total = 0.0;
  for (Eigen::Index l = 0; l < B.cols(); ++l)
    for (Eigen::Index m = 0; m < B.cols(); ++m)
      if (l != m) total += detail::pair_term(B.col(l), B.col(m), graph(l, m));
  return total;
}

/// Sum over ordered pairs l != m of the minimum penalty.
inline double min_fusion_penalty(const Matrix& B) {
  double total = 0.0;
  for (Eigen::Index l = 0; l < B.cols(); ++l)
    for (Eigen::Index m = 0; m < B.cols(); ++m)
      if (l != m) total += min_penalty(B.col(l), B.col(m)).value;
  return total;
}

/// (1/2n)||Y - XB||^2 + delta ||B||_1 + (gamma/2) sum_{l!=m} ||b_l - d_lm b_m||^2.
inline double objective_gaussian(const Dataset& data, const CoefMatrix& coef, const PenaltySpec& pen,
                                 const RelationGraph& graph) {
  detail::require_coef_shape(data, coef.B);
  if (graph.r() != data.r()) throw DataError("graph has a different number of responses than data");
  const double n = static_cast<double>(data.n());
  const double loss = (data.Y() - data.X() * coef.B).squaredNorm() / (2.0 * n);
  return loss + pen.delta() * coef.B.cwiseAbs().sum() + 0.5 * pen.gamma() * fusion_penalty(coef.B, graph);
}

/// The MinPen objective: the fusion term uses the pairwise minimum penalty.
inline double objective_minpen(const Dataset& data, const CoefMatrix& coef, const PenaltySpec& pen) {
  detail::require_coef_shape(data, coef.B);
  const double n = static_cast<double>(data.n());
  const double loss = (data.Y() - data.X() * coef.B).squaredNorm() / (2.0 * n);
  return loss + pen.delta() * coef.B.cwiseAbs().sum() + 0.5 * pen.gamma() * min_fusion_penalty(coef.B);
}

}  // namespace minpen
