#pragma once

// Simulation designs, evaluation metrics and seeded replication studies.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "minpen/format.hpp"
#include "minpen/tuning.hpp"

namespace minpen {

enum class DesignKind { block, overlap, binom_block };

inline const char* to_string(DesignKind k) {
  switch (k) {
    case DesignKind::block:
      return "block";
    case DesignKind::overlap:
      return "overlap";
    default:
      return "binom_block";
  }
}

inline DesignKind design_from_string(const std::string& s) {
  if (s == "block") return DesignKind::block;
  if (s == "overlap") return DesignKind::overlap;
  if (s == "binom_block") return DesignKind::binom_block;
  throw ConfigError("unknown design '" + s + "' (expected block, overlap or binom_block)");
}

struct SimDesign {
  DesignKind kind = DesignKind::block;
  Eigen::Index p = 40;
  Eigen::Index n = 100;         // training rows
  Eigen::Index n_test = 100;    // tuning rows
  Eigen::Index n_val = 1000;    // validation rows
  Eigen::Index r = 15;
  double eta = 1.0;
  double lambda = 0.1;
  Eigen::Index v = 0;
  double rho = 0.7;
  std::uint64_t seed = 0;

  Family family() const { return kind == DesignKind::binom_block ? Family::binomial : Family::gaussian; }

  void validate() const {
    if (p % 4 != 0) throw ConfigError("p must be divisible by 4, got " + std::to_string(p));
    if (r != 15) throw ConfigError("the simulation designs have r = 15 responses");
    if (n < 2 || n_test < 2 || n_val < 2) throw ConfigError("train, test and validation sizes must be at least 2");
    if (!(rho > -1.0 / 3.0 && rho < 1.0)) throw ConfigError("rho must lie in (-1/3, 1) for a positive definite block");
    if (!std::isfinite(eta) || !std::isfinite(lambda)) throw ConfigError("eta and lambda must be finite");
    if (kind == DesignKind::overlap) {
      if (v < 0) throw ConfigError("overlap shift v must be nonnegative");
      if (v * (r - 1) + 10 > p)
        throw ConfigError("overlap support v(r-1)+10 = " + std::to_string(v * (r - 1) + 10) + " exceeds p = " +
                          std::to_string(p));
    } else if (p < 30) {
      throw ConfigError("block designs need p >= 30, got " + std::to_string(p));
    }
  }

  /// Parameters outside the studied settings; empty when none.
  std::vector<std::string> extrapolation() const {
    std::vector<std::string> out;
    auto one_of = [](double x, std::initializer_list<double> xs) {
      for (double y : xs)
        if (x == y) return true;
      return false;
    };
    if (rho != 0.7) out.push_back("rho = " + std::to_string(rho) + " (studied: 0.7)");
    if (n != 100) out.push_back("n = " + std::to_string(n) + " (studied: 100)");
    if (kind == DesignKind::overlap) {
      if (!one_of(static_cast<double>(v), {0, 2, 4})) out.push_back("v = " + std::to_string(v) + " (studied: 0, 2, 4)");
      if (!one_of(static_cast<double>(p), {100, 300})) out.push_back("p = " + std::to_string(p) + " (studied: 100, 300)");
    } else {
      if (!one_of(eta, {0.5, 1.0})) out.push_back("eta = " + std::to_string(eta) + " (studied: 0.5, 1.0)");
      if (!one_of(lambda, {0.02, 0.05, 0.10})) out.push_back("lambda = " + std::to_string(lambda) + " (studied: 0.02, 0.05, 0.10)");
      if (!one_of(static_cast<double>(p), {40, 100, 300})) out.push_back("p = " + std::to_string(p) + " (studied: 40, 100, 300)");
    }
    return out;
  }
};

/// splitmix64 step; used to derive per-replication seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t replication_seed(std::uint64_t seed, std::size_t rep) {
  return splitmix64(seed + static_cast<std::uint64_t>(rep));
}

/// Rows i.i.d. N(0, Sigma_x), Sigma_x block diagonal with p/4 equicorrelated 4x4 blocks.
inline Matrix gen_predictors(Eigen::Index n, Eigen::Index p, double rho, std::mt19937_64& rng) {
  if (p % 4 != 0) throw ConfigError("p must be divisible by 4, got " + std::to_string(p));
  if (!(rho > -1.0 / 3.0 && rho < 1.0)) throw ConfigError("rho must lie in (-1/3, 1)");
  Eigen::Matrix4d S = Eigen::Matrix4d::Constant(rho);
  S.diagonal().setOnes();
  const Eigen::Matrix4d L = S.llt().matrixL();
  std::normal_distribution<double> z;
  Matrix X(n, p);
  Eigen::Vector4d u;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index b = 0; b < p / 4; ++b) {
      for (int t = 0; t < 4; ++t) u(t) = z(rng);
      X.block(i, 4 * b, 1, 4) = (L * u).transpose();
    }
  return X;
}

inline Matrix gen_predictors(const SimDesign& d) {
  std::mt19937_64 rng(d.seed);
  return gen_predictors(d.n, d.p, d.rho, rng);
}

/// Three diagonal blocks of Delta_10(eta, lambda) over 10 rows and 5 columns each.
inline Matrix gen_block_B(Eigen::Index p, double eta, double lambda) {
  if (p < 30) throw ConfigError("block design needs p >= 30, got " + std::to_string(p));
  const double pattern[5] = {-eta - lambda, eta, eta + lambda, -eta - 2 * lambda, eta + 3 * lambda};
  Matrix B = Matrix::Zero(p, 15);
  for (int b = 0; b < 3; ++b)
    for (int c = 0; c < 5; ++c) B.block(10 * b, 5 * b + c, 10, 1).setConstant(pattern[c]);
  return B;
}

/// Column k (1-based) is (-1)^k 0.5 on rows v(k-1)+1 .. v(k-1)+10.
inline Matrix gen_overlap_B(Eigen::Index p, Eigen::Index v, Eigen::Index r = 15) {
  if (v < 0) throw ConfigError("overlap shift v must be nonnegative");
  if (v * (r - 1) + 10 > p)
    throw ConfigError("overlap support v(r-1)+10 = " + std::to_string(v * (r - 1) + 10) + " exceeds p = " +
                      std::to_string(p));
  Matrix B = Matrix::Zero(p, r);
  for (Eigen::Index k = 1; k <= r; ++k) B.block(v * (k - 1), k - 1, 10, 1).setConstant(k % 2 == 0 ? 0.5 : -0.5);
  return B;
}

inline Matrix design_truth(const SimDesign& d) {
  return d.kind == DesignKind::overlap ? gen_overlap_B(d.p, d.v, d.r) : gen_block_B(d.p, d.eta, d.lambda);
}

/// Gaussian: Y = XB + E with standard normal E (E = 0 if zero_noise).
/// Binomial: y_ik ~ Bernoulli(logistic(x_i' beta_k)).
inline Matrix gen_responses(const Matrix& X, const Matrix& B, Family family, std::mt19937_64& rng,
                            bool zero_noise = false) {
  if (X.cols() != B.rows())
    throw DataError("X has " + std::to_string(X.cols()) + " columns but B has " + std::to_string(B.rows()) + " rows");
  Matrix Y = X * B;
  if (family == Family::gaussian) {
    if (zero_noise) return Y;
    std::normal_distribution<double> z;
    for (Eigen::Index k = 0; k < Y.cols(); ++k)
      for (Eigen::Index i = 0; i < Y.rows(); ++i) Y(i, k) += z(rng);
    return Y;
  }
  if (zero_noise) throw ConfigError("zero-noise responses are only defined for the gaussian family");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index k = 0; k < Y.cols(); ++k)
    for (Eigen::Index i = 0; i < Y.rows(); ++i) Y(i, k) = u(rng) < detail::logistic(Y(i, k)) ? 1.0 : 0.0;
  return Y;
}

inline Matrix gen_responses(const Matrix& X, const Matrix& B, Family family, std::uint64_t seed,
                            bool zero_noise = false) {
  std::mt19937_64 rng(seed);
  return gen_responses(X, B, family, rng, zero_noise);
}

inline constexpr double kSelectionThreshold = 1e-8;

/// One replication's metrics. spe is gaussian only, kl binomial only.
struct Metrics {
  std::optional<double> spe;
  double mse = 0.0;
  double tp = 0.0;
  double fp = 0.0;
  std::optional<double> kl;
};

inline std::vector<std::string> metric_names(Family f) {
  if (f == Family::gaussian) return {"spe", "mse", "tp", "fp"};
  return {"kl", "mse", "tp", "fp"};
}

inline std::optional<double> metric_value(const Metrics& m, const std::string& name) {
  if (name == "spe") return m.spe;
  if (name == "kl") return m.kl;
  if (name == "mse") return m.mse;
  if (name == "tp") return m.tp;
  if (name == "fp") return m.fp;
  throw ConfigError("unknown metric '" + name + "'");
}

/// TP / FP rates at |b| > 1e-8. Vacuous rates (no true nonzeros, or no true zeros) are 1 and 0.
inline std::pair<double, double> selection_rates(const Matrix& B_hat, const Matrix& B_true) {
  Eigen::Index pos = 0, neg = 0, tp = 0, fp = 0;
  for (Eigen::Index k = 0; k < B_true.cols(); ++k)
    for (Eigen::Index j = 0; j < B_true.rows(); ++j) {
      const bool sel = std::abs(B_hat(j, k)) > kSelectionThreshold;
      if (std::abs(B_true(j, k)) > kSelectionThreshold) {
        ++pos;
        tp += sel;
      } else {
        ++neg;
        fp += sel;
      }
    }
  return {pos ? static_cast<double>(tp) / static_cast<double>(pos) : 1.0,
          neg ? static_cast<double>(fp) / static_cast<double>(neg) : 0.0};
}

/// Sum over validation entries of the Bernoulli KL(pi_hat || pi_true), both clamped.
inline double kl_divergence(const Matrix& pi_hat, const Matrix& pi_true) {
  double kl = 0.0;
  for (Eigen::Index k = 0; k < pi_hat.cols(); ++k)
    for (Eigen::Index i = 0; i < pi_hat.rows(); ++i) {
      const double a = detail::clamp_prob(pi_hat(i, k)), b = detail::clamp_prob(pi_true(i, k));
      kl += std::log(a / b) * a + std::log((1 - a) / (1 - b)) * (1 - a);
    }
  return kl;
}

inline Metrics metrics(const FitResult& fit, const Matrix& truth_B, const Dataset& validation) {
  const Matrix& B = fit.coef.B;
  if (B.rows() != truth_B.rows() || B.cols() != truth_B.cols())
    throw DataError("fit and truth have different coefficient shapes");
  if (validation.p() != B.rows() || validation.r() != B.cols())
    throw DataError("validation data does not match the fitted model");
  Metrics m;
  m.mse = (B - truth_B).squaredNorm() / static_cast<double>(B.size());
  std::tie(m.tp, m.fp) = selection_rates(B, truth_B);
  Matrix eta = validation.X() * B;
  if (fit.coef.intercepts) eta.rowwise() += fit.coef.intercepts->transpose();
  if (validation.family() == Family::gaussian) {
    m.spe = (validation.Y() - eta).squaredNorm() / static_cast<double>(eta.size());
  } else {
    const Matrix eta_true = validation.X() * truth_B;
    auto link = [](double x) { return detail::logistic(x); };
    m.kl = kl_divergence(eta.unaryExpr(link), eta_true.unaryExpr(link));
  }
  return m;
}

/// Fraction of ordered within-block pairs (l != m, same block of `block` responses) whose
/// estimated label equals the true label.
inline double within_block_agreement(const RelationGraph& est, const RelationGraph& truth, Eigen::Index block = 5) {
  if (est.r() != truth.r()) throw DataError("graphs have different sizes");
  Eigen::Index total = 0, hit = 0;
  for (Eigen::Index l = 0; l < est.r(); ++l)
    for (Eigen::Index m = 0; m < est.r(); ++m) {
      if (l == m || l / block != m / block) continue;
      ++total;
      hit += est(l, m) == truth(l, m);
    }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 1.0;
}

struct SimData {
  Dataset train, test, validation;
  Matrix B;
};

/// Train, test and validation sets of one replication, drawn from one stream seeded by `seed`.
inline SimData simulate_replication(const SimDesign& d, std::uint64_t seed) {
  d.validate();
  std::mt19937_64 rng(seed);
  Matrix B = design_truth(d);
  auto draw = [&](Eigen::Index rows) {
    Matrix X = gen_predictors(rows, d.p, d.rho, rng);
    Matrix Y = gen_responses(X, B, d.family(), rng);
    return Dataset(std::move(X), std::move(Y), d.family());
  };
  Dataset train = draw(d.n), test = draw(d.n_test), val = draw(d.n_val);
  return {std::move(train), std::move(test), std::move(val), std::move(B)};
}

enum class Method { minpen, t_minpen, sen };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::minpen:
      return "minpen";
    case Method::t_minpen:
      return "t_minpen";
    default:
      return "sen";
  }
}

inline Method method_from_string(const std::string& s) {
  if (s == "minpen") return Method::minpen;
  if (s == "t_minpen") return Method::t_minpen;
  if (s == "sen") return Method::sen;
  throw ConfigError("unknown method '" + s + "' (expected minpen, t_minpen or sen)");
}

struct StudyConfig {
  std::vector<Method> methods{Method::minpen, Method::t_minpen, Method::sen};
  std::size_t reps = 20;
  int n_delta = 20;
  double delta_ratio = 1e-3;
  std::vector<double> gamma_factors{0.0, 1e-4, 1e-3, 1e-2, 1e-1};  // gamma = factor * delta_max(train); sen uses {0}
  SolverConfig solver{};
  int threads = 1;

  void validate() const {
    if (reps < 1) throw ConfigError("reps must be at least 1");
    if (methods.empty()) throw ConfigError("at least one method is required");
    if (n_delta < 1 || !(delta_ratio > 0.0 && delta_ratio <= 1.0)) throw ConfigError("bad delta grid settings");
    if (gamma_factors.empty()) throw ConfigError("gamma grid must not be empty");
    for (double g : gamma_factors)
      if (!(g >= 0.0)) throw ConfigError("gamma factors must be nonnegative");
    solver.validate();
  }
};

/// Per-replication outcome: metrics on success, the error message otherwise.
struct RepOutcome {
  std::optional<Metrics> metrics;
  std::string error;
  PenaltySpec chosen{0.0, 0.0};
};

struct Summary {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  std::size_t count = 0;
};

struct MetricsReport {
  Method method = Method::minpen;
  std::vector<RepOutcome> reps;

  /// Mean and standard error over the successful replications.
  Summary summary(const std::string& metric) const {
    std::vector<double> xs;
    for (const auto& r : reps)
      if (r.metrics)
        if (auto v = metric_value(*r.metrics, metric)) xs.push_back(*v);
    Summary s;
    s.count = xs.size();
    if (xs.empty()) return s;
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(xs.size());
    if (xs.size() > 1) {
      double ss = 0.0;
      for (double x : xs) ss += (x - s.mean) * (x - s.mean);
      s.se = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
    }
    return s;
  }
};

struct StudyResult {
  SimDesign design;
  RelationGraph true_graph{1};
  std::vector<MetricsReport> methods;

  const MetricsReport& report(Method m) const {
    for (const auto& r : methods)
      if (r.method == m) return r;
    throw ConfigError(std::string("method ") + to_string(m) + " was not part of the study");
  }
};

/// Fixed relation graph used by t_minpen: update_sets of the true coefficients.
inline RelationGraph true_graph(const SimDesign& d) { return update_sets(design_truth(d)); }

/// Tunes one method on (train, test) by split selection and scores the refit-free
/// selected model on the validation set.
inline RepOutcome run_method(Method method, const SimData& data, const RelationGraph& truth_graph,
                             const StudyConfig& cfg) {
  RepOutcome out;
  try {
    TuneGrid grid = default_grid(data.train, cfg.n_delta, cfg.delta_ratio);
    grid.gammas = {0.0};
    if (method != Method::sen) {
      grid.gammas.clear();
      for (double f : cfg.gamma_factors) grid.gammas.push_back(f * grid.deltas.front());
    }
    TuneOptions opt;
    if (method == Method::t_minpen) opt.graph = truth_graph;
    const TuneResult tuned = split_select(data.train, data.test, grid, cfg.solver, opt);
    out.chosen = tuned.best;
    const FitResult fit = detail::fit_family(data.train, tuned.best, cfg.solver, std::nullopt, opt.graph);
    out.metrics = metrics(fit, data.B, data.validation);
  } catch (const Error& e) {
    out.metrics.reset();
    out.error = e.what();
  }
  return out;
}

/// Replications run in parallel; replication i draws its data from replication_seed(seed, i).
inline StudyResult run_study(const SimDesign& design, const StudyConfig& cfg) {
  design.validate();
  cfg.validate();
  StudyResult res;
  res.design = design;
  res.true_graph = true_graph(design);
  for (Method m : cfg.methods) res.methods.push_back({m, std::vector<RepOutcome>(cfg.reps)});
  parallel_for(cfg.reps, cfg.threads, [&](std::size_t rep) {
    const SimData data = simulate_replication(design, replication_seed(design.seed, rep));
    for (auto& report : res.methods) report.reps[rep] = run_method(report.method, data, res.true_graph, cfg);
  });
  return res;
}

/// Long-format CSV: design,method,rep,metric,value. Failed replications write NA.
inline void write_study_csv(std::ostream& os, const StudyResult& res) {
  os << "design,method,rep,metric,value\n";
  const auto names = metric_names(res.design.family());
  for (const auto& report : res.methods)
    for (std::size_t rep = 0; rep < report.reps.size(); ++rep)
      for (const auto& name : names) {
        os << to_string(res.design.kind) << ',' << to_string(report.method) << ',' << rep << ',' << name << ',';
        const auto& m = report.reps[rep].metrics;
        const auto v = m ? metric_value(*m, name) : std::nullopt;
        if (v)
          os << format_real(*v);
        else
          os << "NA";
        os << '\n';
      }
}

}  // namespace minpen
