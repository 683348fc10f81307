#pragma once

// Relation-set updates, the signed graph Laplacian, and exhaustive
// enumeration of relation graphs.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "minpen/core.hpp"

namespace minpen {

/// Allowed labels per ordered pair, restricting the search to a subset of
/// all relation graphs. Default-constructed masks allow every label.
class GraphMask {
 public:
  static constexpr std::uint8_t kNegative = 1;
  static constexpr std::uint8_t kNone = 2;
  static constexpr std::uint8_t kPositive = 4;
  static constexpr std::uint8_t kAll = kNegative | kNone | kPositive;

  explicit GraphMask(Eigen::Index r) : r_(r), allowed_(static_cast<std::size_t>(r * r), kAll) {}

  Eigen::Index r() const { return r_; }

  std::uint8_t allowed(Eigen::Index l, Eigen::Index m) const {
    return allowed_[static_cast<std::size_t>(l * r_ + m)];
  }

  bool allows(Eigen::Index l, Eigen::Index m, Relation rel) const { return (allowed(l, m) & bit(rel)) != 0; }

  /// Pin d_lm to a single value.
  GraphMask& fix(Eigen::Index l, Eigen::Index m, Relation rel) { return restrict(l, m, bit(rel)); }

  GraphMask& restrict(Eigen::Index l, Eigen::Index m, std::uint8_t labels) {
    if (l == m || l < 0 || m < 0 || l >= r_ || m >= r_) throw ConfigError("mask index out of range");
    if ((labels & kAll) == 0) throw ConfigError("mask must allow at least one label");
    allowed_[static_cast<std::size_t>(l * r_ + m)] = labels & kAll;
    return *this;
  }

  bool is_full() const {
    for (Eigen::Index l = 0; l < r_; ++l)
      for (Eigen::Index m = 0; m < r_; ++m)
        if (l != m && allowed(l, m) != kAll) return false;
    return true;
  }

  bool contains(const RelationGraph& g) const {
    if (g.r() != r_) return false;
    for (Eigen::Index l = 0; l < r_; ++l)
      for (Eigen::Index m = 0; m < r_; ++m)
        if (l != m && !allows(l, m, g.relation(l, m))) return false;
    return true;
  }

  static std::uint8_t bit(Relation rel) {
    switch (rel) {
      case Relation::negative:
        return kNegative;
      case Relation::none:
        return kNone;
      default:
        return kPositive;
    }
  }

 private:
  Eigen::Index r_;
  std::vector<std::uint8_t> allowed_;
};

/// Sparse incidence form of a relation graph: one (l, m, d_lm) triple per
/// ordered pair, so that ||A beta||^2 = sum of ||b_l - d_lm b_m||^2.
struct AMatrix {
  struct Row {
    Eigen::Index l;
    Eigen::Index m;
    int d;
  };
  Eigen::Index r = 0;
  std::vector<Row> rows;

  static AMatrix from_graph(const RelationGraph& g) {
    AMatrix a;
    a.r = g.r();
    for (Eigen::Index l = 0; l < g.r(); ++l)
      for (Eigen::Index m = 0; m < g.r(); ++m)
        if (l != m) a.rows.push_back({l, m, g(l, m)});
    return a;
  }

  /// ||A vec(B)||^2 computed from the triples.
  double squared_norm(const Matrix& B) const {
    double total = 0.0;
    for (const auto& row : rows) total += (B.col(row.l) - row.d * B.col(row.m)).squaredNorm();
    return total;
  }
};

/// Closed-form set update: d_lm is the label of min_penalty(b_l, b_m).
/// With a mask, the cheapest allowed label is taken; ties resolve Z, then P, then N.
inline RelationGraph update_sets(const Matrix& B, const std::optional<GraphMask>& mask = std::nullopt) {
  const Eigen::Index r = B.cols();
  if (mask && mask->r() != r) throw ConfigError("mask size does not match the number of responses");
  IntMatrix D = IntMatrix::Zero(r, r);
  const Vector sq = B.colwise().squaredNorm().transpose();
  for (Eigen::Index l = 0; l < r; ++l) {
    for (Eigen::Index m = 0; m < r; ++m) {
      if (l == m) continue;
      const double c = B.col(l).dot(B.col(m));
      if (!mask || mask->allowed(l, m) == GraphMask::kAll) {
        D(l, m) = static_cast<int>(detail::pair_label(sq(m), c));
        continue;
      }
      // Compare the allowed terms directly via their offsets from ||b_l||^2.
      const std::uint8_t ok = mask->allowed(l, m);
      double best = 0.0;
      int label = 0;
      bool have = false;
      if (ok & GraphMask::kNone) {
        best = 0.0;
        label = 0;
        have = true;
      }
      const double pos = sq(m) - 2.0 * c;
      const double neg = sq(m) + 2.0 * c;
      if ((ok & GraphMask::kPositive) && (!have || pos < best)) {
        best = pos;
        label = 1;
        have = true;
      }
      if ((ok & GraphMask::kNegative) && (!have || neg < best)) {
        best = neg;
        label = -1;
      }
      D(l, m) = label;
    }
  }
  return RelationGraph(std::move(D));
}

/// Signed graph Laplacian A^T A (rp x rp, column-stacked ordering) with
/// beta^T L beta = sum_{l != m} ||b_l - d_lm b_m||^2.
inline Matrix laplacian(const RelationGraph& graph, Eigen::Index p) {
  const Eigen::Index r = graph.r();
  Matrix L = Matrix::Zero(r * p, r * p);
  for (Eigen::Index k = 0; k < r; ++k) {
    double diag = static_cast<double>(r - 1);
    for (Eigen::Index l = 0; l < r; ++l)
      if (l != k) diag += std::abs(graph(l, k));
    for (Eigen::Index m = 0; m < r; ++m) {
      const double w = (m == k) ? diag : -static_cast<double>(graph(k, m) + graph(m, k));
      if (w == 0.0) continue;
      for (Eigen::Index j = 0; j < p; ++j) L(k * p + j, m * p + j) = w;
    }
  }
  return L;
}

/// Edge list (l, m, sign) of the nonzero relations.
inline std::vector<std::tuple<Eigen::Index, Eigen::Index, int>> edge_list(const RelationGraph& g) {
  std::vector<std::tuple<Eigen::Index, Eigen::Index, int>> out;
  for (Eigen::Index l = 0; l < g.r(); ++l)
    for (Eigen::Index m = 0; m < g.r(); ++m)
      if (l != m && g(l, m) != 0) out.emplace_back(l, m, g(l, m));
  return out;
}

inline constexpr int kDefaultEnumerationCap = 12;

/// Deterministic odometer over every relation graph allowed by a mask, in
/// row-major pair order with labels cycling -1, 0, +1. Single consumer.
class GraphEnumerator {
 public:
  GraphEnumerator(Eigen::Index r, int cap = kDefaultEnumerationCap, std::optional<GraphMask> mask = std::nullopt)
      : r_(r), mask_(mask ? std::move(*mask) : GraphMask(r)) {
    if (r < 2) throw ConfigError("graph enumeration needs r >= 2");
    if (mask_.r() != r) throw ConfigError("mask size does not match r");
    for (Eigen::Index l = 0; l < r; ++l)
      for (Eigen::Index m = 0; m < r; ++m) {
        if (l == m) continue;
        std::vector<int> labels;
        for (int d : {-1, 0, 1})
          if (mask_.allows(l, m, static_cast<Relation>(d))) labels.push_back(d);
        slots_.push_back({l, m, std::move(labels)});
      }
    int free_pairs = 0;
    total_ = 1;
    for (const auto& s : slots_) {
      if (s.labels.size() > 1) ++free_pairs;
      total_ *= s.labels.size();
    }
    if (free_pairs > cap) {
      throw ConfigError("graph enumeration requires 3^" + std::to_string(free_pairs) + " = " +
                        std::to_string(std::pow(3.0, free_pairs)) + " graphs, above the cap of 3^" +
                        std::to_string(cap));
    }
    position_.assign(slots_.size(), 0);
  }

  /// Number of graphs that will be produced.
  std::uint64_t size() const { return total_; }

  std::optional<RelationGraph> next() {
    if (done_) return std::nullopt;
    IntMatrix D = IntMatrix::Zero(r_, r_);
    for (std::size_t s = 0; s < slots_.size(); ++s) D(slots_[s].l, slots_[s].m) = slots_[s].labels[position_[s]];
    // advance: last slot varies fastest
    std::size_t s = slots_.size();
    while (s > 0) {
      --s;
      if (++position_[s] < slots_[s].labels.size()) break;
      position_[s] = 0;
      if (s == 0) done_ = true;
    }
    return RelationGraph(std::move(D));
  }

 private:
  struct Slot {
    Eigen::Index l;
    Eigen::Index m;
    std::vector<int> labels;
  };

  Eigen::Index r_;
  GraphMask mask_;
  std::vector<Slot> slots_;
  std::vector<std::size_t> position_;
  std::uint64_t total_ = 1;
  bool done_ = false;
};

inline GraphEnumerator enumerate_graphs(Eigen::Index r, int cap = kDefaultEnumerationCap,
                                        std::optional<GraphMask> mask = std::nullopt) {
  return GraphEnumerator(r, cap, std::move(mask));
}

}  // namespace minpen
