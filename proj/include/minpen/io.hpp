#pragma once

// CSV ingestion and output, FitResult JSON, relation-graph edge lists.

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "minpen/format.hpp"
#include "minpen/gauss_solver.hpp"

namespace minpen {

inline constexpr int kSchemaVersion = 1;

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;

  Eigen::Index column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<Eigen::Index>(j);
    throw DataError("column '" + name + "' not found in CSV header");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline double parse_real(const std::string& s, std::size_t row, std::size_t col) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v))
    throw DataError("CSV row " + std::to_string(row) + ", column " + std::to_string(col + 1) + ": '" + s +
                    "' is not a finite number");
  return v;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace detail

/// Numeric CSV with a header row. Blank lines are skipped.
inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (t.header.empty()) {
      if (lineno == 1 && fields[0].size() >= 3 && fields[0].compare(0, 3, "\xEF\xBB\xBF") == 0) fields[0].erase(0, 3);
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw DataError("CSV row " + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(t.header.size()));
    std::vector<double> vals(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) vals[j] = detail::parse_real(fields[j], lineno, j);
    rows.push_back(std::move(vals));
  }
  if (t.header.empty()) throw DataError("CSV input is empty (a header row is required)");
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return t;
}

inline CsvTable read_csv(const std::string& path) {
  auto in = detail::open_in(path);
  return read_csv(in);
}

/// Builds a Dataset: the named response columns form Y, optional trial-count columns
/// (one per response) form the trials matrix, and every other column is a predictor.
inline Dataset dataset_from_table(const CsvTable& t, const std::vector<std::string>& responses, Family family,
                                  const std::vector<std::string>& trials = {}) {
  if (responses.empty()) throw ConfigError("at least one response column is required");
  if (!trials.empty() && trials.size() != responses.size())
    throw ConfigError("give one trials column per response column");
  if (!trials.empty() && family != Family::binomial) throw ConfigError("trials columns need the binomial family");
  std::vector<Eigen::Index> ycols, tcols, xcols;
  std::vector<bool> used(t.header.size(), false);
  auto take = [&](const std::string& name) {
    const Eigen::Index c = t.column(name);
    if (used[static_cast<std::size_t>(c)]) throw ConfigError("column '" + name + "' is used twice");
    used[static_cast<std::size_t>(c)] = true;
    return c;
  };
  for (const auto& name : responses) ycols.push_back(take(name));
  for (const auto& name : trials) tcols.push_back(take(name));
  std::vector<std::string> predictor_names;
  for (std::size_t j = 0; j < t.header.size(); ++j)
    if (!used[j]) {
      xcols.push_back(static_cast<Eigen::Index>(j));
      predictor_names.push_back(t.header[j]);
    }
  if (xcols.empty()) throw DataError("no predictor columns left after removing responses");
  const Eigen::Index n = t.values.rows();
  Matrix X(n, static_cast<Eigen::Index>(xcols.size())), Y(n, static_cast<Eigen::Index>(ycols.size()));
  for (std::size_t j = 0; j < xcols.size(); ++j) X.col(static_cast<Eigen::Index>(j)) = t.values.col(xcols[j]);
  for (std::size_t k = 0; k < ycols.size(); ++k) Y.col(static_cast<Eigen::Index>(k)) = t.values.col(ycols[k]);
  std::optional<Matrix> T;
  if (!tcols.empty()) {
    T = Matrix(n, static_cast<Eigen::Index>(tcols.size()));
    for (std::size_t k = 0; k < tcols.size(); ++k) T->col(static_cast<Eigen::Index>(k)) = t.values.col(tcols[k]);
  }
  return Dataset(std::move(X), std::move(Y), family, std::move(T)).with_names(predictor_names, responses);
}

inline Dataset load_dataset(const std::string& path, const std::vector<std::string>& responses, Family family,
                            const std::vector<std::string>& trials = {}) {
  return dataset_from_table(read_csv(path), responses, family, trials);
}

inline void write_csv(std::ostream& os, const std::vector<std::string>& header, const Matrix& values) {
  if (static_cast<Eigen::Index>(header.size()) != values.cols()) throw DataError("CSV header and matrix width differ");
  for (std::size_t j = 0; j < header.size(); ++j) os << (j ? "," : "") << header[j];
  os << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) os << (j ? "," : "") << format_real(values(i, j));
    os << '\n';
  }
}

// ---- JSON -----------------------------------------------------------------

using json = nlohmann::ordered_json;

inline json matrix_to_json(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw DataError(std::string(what) + " must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw DataError(std::string(what) + " rows must all have the same length");
    for (Eigen::Index c = 0; c < cols; ++c) M(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return M;
}

inline json vector_to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Vector vector_from_json(const json& j) {
  const auto xs = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

inline json graph_to_json(const RelationGraph& g) {
  json rows = json::array();
  for (Eigen::Index l = 0; l < g.r(); ++l) {
    json row = json::array();
    for (Eigen::Index m = 0; m < g.r(); ++m) row.push_back(g(l, m));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline RelationGraph graph_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw DataError("graph must be a non-empty square integer matrix");
  const auto r = static_cast<Eigen::Index>(j.size());
  IntMatrix D(r, r);
  for (Eigen::Index l = 0; l < r; ++l) {
    const json& row = j[static_cast<std::size_t>(l)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != r) throw DataError("graph matrix must be square");
    for (Eigen::Index m = 0; m < r; ++m) D(l, m) = row[static_cast<std::size_t>(m)].get<int>();
  }
  return RelationGraph(std::move(D));
}

inline json penalty_to_json(const PenaltySpec& pen) { return json{{"delta", pen.delta()}, {"gamma", pen.gamma()}}; }

inline PenaltySpec penalty_from_json(const json& j) {
  return PenaltySpec(j.at("delta").get<double>(), j.at("gamma").get<double>());
}

/// FitResult as a versioned JSON document. Names are optional labels for rows and columns of B.
inline json fit_to_json(const FitResult& fit, const std::vector<std::string>& predictors = {},
                        const std::vector<std::string>& responses = {}) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["family"] = to_string(fit.family);
  j["penalty"] = penalty_to_json(fit.pen);
  j["predictors"] = predictors;
  j["responses"] = responses;
  j["coefficients"] = matrix_to_json(fit.coef.B);
  j["intercepts"] = fit.coef.intercepts ? vector_to_json(*fit.coef.intercepts) : json(nullptr);
  j["graph"] = graph_to_json(fit.graph);
  j["objective"] = fit.objective;
  j["objective_trace"] = fit.objective_trace;
  j["outer_iters"] = fit.outer_iters;
  j["converged"] = fit.converged;
  j["stop_reason"] = to_string(fit.stop_reason);
  j["coef_solver"] = matrix_to_json(fit.coef_solver);
  if (fit.standardization) {
    const auto& s = *fit.standardization;
    j["standardization"] = {{"column_means", vector_to_json(s.column_means)},
                            {"column_scales", vector_to_json(s.column_scales)},
                            {"response_means", vector_to_json(s.response_means)}};
  } else {
    j["standardization"] = nullptr;
  }
  return j;
}

inline StopReason stop_reason_from_string(const std::string& s) {
  if (s == "sets_stable") return StopReason::sets_stable;
  if (s == "obj_stall") return StopReason::obj_stall;
  if (s == "max_iters") return StopReason::max_iters;
  throw DataError("unknown stop_reason '" + s + "'");
}

inline FitResult fit_from_json(const json& j) {
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kSchemaVersion)
      throw DataError("unsupported model schema_version " + std::to_string(version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
    FitResult fit;
    fit.family = family_from_string(j.at("family").get<std::string>());
    fit.pen = penalty_from_json(j.at("penalty"));
    fit.coef.B = matrix_from_json(j.at("coefficients"), "coefficients");
    if (!j.at("intercepts").is_null()) fit.coef.intercepts = vector_from_json(j.at("intercepts"));
    fit.graph = graph_from_json(j.at("graph"));
    fit.objective = j.at("objective").get<double>();
    fit.objective_trace = j.at("objective_trace").get<std::vector<double>>();
    fit.outer_iters = j.at("outer_iters").get<int>();
    fit.converged = j.at("converged").get<bool>();
    fit.stop_reason = stop_reason_from_string(j.at("stop_reason").get<std::string>());
    fit.coef_solver = matrix_from_json(j.at("coef_solver"), "coef_solver");
    if (!j.at("standardization").is_null()) {
      const json& s = j.at("standardization");
      fit.standardization =
          Standardization{vector_from_json(s.at("column_means")), vector_from_json(s.at("column_scales")),
                          vector_from_json(s.at("response_means"))};
    }
    if (fit.graph.r() != fit.coef.B.cols()) throw DataError("model graph size does not match the coefficient matrix");
    return fit;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model JSON: ") + e.what());
  }
}

inline json read_json(const std::string& path) {
  auto in = detail::open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_json(const std::string& path, const json& j) {
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
}

// ---- edge lists -------------------------------------------------------------

/// Nonzero labels as CSV rows l,m,sign (0-based response indices).
inline void write_edge_list(std::ostream& os, const RelationGraph& g) {
  os << "l,m,sign\n";
  for (const auto& [l, m, d] : edge_list(g)) os << l << ',' << m << ',' << d << '\n';
}

/// Graph over r responses from an l,m,sign edge list; unlisted pairs are 0.
inline RelationGraph read_edge_list(std::istream& in, Eigen::Index r) {
  const CsvTable t = read_csv(in);
  const Eigen::Index cl = t.column("l"), cm = t.column("m"), cs = t.column("sign");
  IntMatrix D = IntMatrix::Zero(r, r);
  for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
    const double l = t.values(i, cl), m = t.values(i, cm), s = t.values(i, cs);
    if (l != std::floor(l) || m != std::floor(m) || l < 0 || m < 0 || l >= static_cast<double>(r) ||
        m >= static_cast<double>(r))
      throw DataError("edge list row " + std::to_string(i + 1) + " names a response outside 0.." + std::to_string(r - 1));
    if (s != -1.0 && s != 0.0 && s != 1.0) throw DataError("edge list signs must be -1, 0 or 1");
    D(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m)) = static_cast<int>(s);
  }
  return RelationGraph(std::move(D));
}

/// Graph file: JSON (r x r matrix, or an object with a "graph" member) or an edge-list CSV.
inline RelationGraph load_graph(const std::string& path, Eigen::Index r) {
  const bool is_json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
  if (is_json) {
    const json j = read_json(path);
    std::optional<RelationGraph> parsed;
    try {
      parsed = graph_from_json(j.is_object() ? j.at("graph") : j);
    } catch (const json::exception& e) {
      throw DataError("'" + path + "' does not hold a relation graph: " + e.what());
    }
    RelationGraph g = std::move(*parsed);
    if (g.r() != r) throw DataError("graph has " + std::to_string(g.r()) + " responses, data has " + std::to_string(r));
    return g;
  }
  auto in = detail::open_in(path);
  return read_edge_list(in, r);
}

}  // namespace minpen
