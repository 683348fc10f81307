// minpen: fit, tune, oracle, infer and simulate from the command line.
//
// Every subcommand resolves its settings from defaults, then an optional JSON
// --config file, then explicit flags, and writes the resolved settings to
// <out>.config.json before computing.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "minpen/minpen.hpp"

using namespace minpen;

namespace {

enum class Kind { text, real, integer, flag, text_list, real_list };

struct Field {
  std::string key;
  Kind kind;
  json fallback;  // null: required
  std::string help;
  std::string flag_name = {};  // overrides --key for flags such as --no-standardize
  bool flag_sets = true;       // value stored when the flag is present
  bool optional = false;       // null allowed
};

std::string cli_name(const Field& f) {
  if (!f.flag_name.empty()) return f.flag_name;
  std::string s = "--" + f.key;
  for (auto& c : s)
    if (c == '_') c = '-';
  return s;
}

class Command {
 public:
  Command(const Command&) = delete;
  Command& operator=(const Command&) = delete;

  Command(CLI::App& app, std::string name, std::string description, std::vector<Field> fields)
      : name_(std::move(name)), fields_(std::move(fields)) {
    sub_ = app.add_subcommand(name_, std::move(description));
    sub_->add_option("--config", config_path_, "JSON file with settings (flags override it)");
    for (const auto& f : fields_) {
      auto& slot = raw_[f.key];
      CLI::Option* opt = nullptr;
      if (f.kind == Kind::flag) {
        opt = sub_->add_flag(cli_name(f), f.help);
      } else if (f.kind == Kind::text_list || f.kind == Kind::real_list) {
        opt = sub_->add_option(cli_name(f), slot, f.help)->delimiter(',');
      } else {
        opt = sub_->add_option(cli_name(f), single_[f.key], f.help);
      }
      options_[f.key] = opt;
    }
  }

  CLI::App* app() const { return sub_; }
  const std::string& name() const { return name_; }

  /// Defaults, then config file, then explicit flags.
  json resolve() const {
    json cfg = json::object();
    cfg["command"] = name_;
    for (const auto& f : fields_) cfg[f.key] = f.fallback;
    if (!config_path_.empty()) {
      const json file = read_json(config_path_);
      if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
      for (const auto& [key, value] : file.items()) {
        if (key == "command") {
          if (value != name_) throw ConfigError("config file is for '" + value.dump() + "', not '" + name_ + "'");
          continue;
        }
        if (!cfg.contains(key)) throw ConfigError("unknown setting '" + key + "' for " + name_);
        cfg[key] = value;
      }
    }
    for (const auto& f : fields_) {
      if (options_.at(f.key)->count() == 0) continue;
      switch (f.kind) {
        case Kind::flag:
          cfg[f.key] = f.flag_sets;
          break;
        case Kind::text:
          cfg[f.key] = single_.at(f.key);
          break;
        case Kind::real:
          cfg[f.key] = parse_real(f.key, single_.at(f.key));
          break;
        case Kind::integer:
          cfg[f.key] = parse_int(f.key, single_.at(f.key));
          break;
        case Kind::text_list:
          cfg[f.key] = raw_.at(f.key);
          break;
        case Kind::real_list: {
          json xs = json::array();
          for (const auto& s : raw_.at(f.key)) xs.push_back(parse_real(f.key, s));
          cfg[f.key] = xs;
          break;
        }
      }
    }
    for (const auto& f : fields_) check_type(f, cfg[f.key]);
    return cfg;
  }

 private:
  static double parse_real(const std::string& key, const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("--" + key + " expects a number, got '" + s + "'");
  }

  static json parse_int(const std::string& key, const std::string& s) {
    try {
      std::size_t used = 0;
      if (!s.empty() && s[0] != '-') {
        const unsigned long long v = std::stoull(s, &used);
        if (used == s.size()) return v;
      } else {
        const long long v = std::stoll(s, &used);
        if (used == s.size()) return v;
      }
    } catch (const std::exception&) {
    }
    throw ConfigError("--" + key + " expects an integer, got '" + s + "'");
  }

  void check_type(const Field& f, const json& v) const {
    if (v.is_null()) {
      if (f.optional) return;
      throw ConfigError(name_ + ": missing required setting " + cli_name(f));
    }
    bool ok = false;
    switch (f.kind) {
      case Kind::text:
        ok = v.is_string();
        break;
      case Kind::real:
        ok = v.is_number();
        break;
      case Kind::integer:
        ok = v.is_number_integer();
        break;
      case Kind::flag:
        ok = v.is_boolean();
        break;
      case Kind::text_list:
        ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_string(); });
        break;
      case Kind::real_list:
        ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); });
        break;
    }
    if (!ok) throw ConfigError(name_ + ": setting '" + f.key + "' has the wrong type");
  }

  std::string name_;
  std::vector<Field> fields_;
  CLI::App* sub_ = nullptr;
  std::string config_path_;
  std::map<std::string, std::vector<std::string>> raw_;
  std::map<std::string, std::string> single_;
  std::map<std::string, CLI::Option*> options_;
};

// ---- shared settings --------------------------------------------------------

std::vector<Field> data_fields() {
  return {
      {"data", Kind::text, nullptr, "CSV file with a header row"},
      {"responses", Kind::text_list, nullptr, "response column names (comma separated)"},
      {"family", Kind::text, "gaussian", "gaussian or binomial"},
      {"trials", Kind::text_list, json::array(), "binomial trial-count columns, one per response"},
  };
}

std::vector<Field> solver_fields() {
  return {
      {"standardize", Kind::flag, true, "fit on standardized predictors", "--no-standardize", false},
      {"fuse_intercept", Kind::flag, true, "binomial intercepts join the fusion penalty", "--no-fuse-intercept", false},
      {"cd_tol", Kind::real, 1e-7, "coordinate descent tolerance"},
      {"outer_max_iters", Kind::integer, 100, "maximum set-update iterations"},
      {"threads", Kind::integer, 0, "worker threads (0: MINPEN_THREADS or all cores)"},
  };
}

std::vector<Field> concat(std::vector<Field> a, const std::vector<Field>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<std::string> strings(const json& j) { return j.get<std::vector<std::string>>(); }
std::vector<double> reals(const json& j) { return j.get<std::vector<double>>(); }

Dataset load(const json& cfg, const std::string& key = "data") {
  return load_dataset(cfg[key].get<std::string>(), strings(cfg["responses"]),
                      family_from_string(cfg["family"].get<std::string>()), strings(cfg["trials"]));
}

SolverConfig solver_config(const json& cfg) {
  SolverConfig s;
  s.standardize = cfg["standardize"].get<bool>();
  s.fuse_intercept = cfg["fuse_intercept"].get<bool>();
  s.cd_tol = cfg["cd_tol"].get<double>();
  s.outer_max_iters = cfg["outer_max_iters"].get<int>();
  s.validate();
  return s;
}

int threads(const json& cfg) {
  const int requested = cfg["threads"].get<int>();
  if (requested < 0) throw ConfigError("--threads must be nonnegative");
  if (requested == 0) return default_threads();
  if (std::getenv("MINPEN_THREADS")) return std::min(requested, default_threads());
  return requested;
}

std::uint64_t seed(const json& cfg, const char* why) {
  const json& s = cfg["seed"];
  if (s.is_null()) throw ConfigError(std::string("--seed is required ") + why);
  if (!s.is_number_unsigned() && s.get<long long>() < 0) throw ConfigError("--seed must be a nonnegative integer");
  return s.get<std::uint64_t>();
}

Field seed_field() { return {"seed", Kind::integer, nullptr, "random seed", "", true, true}; }

std::string out_path(const json& cfg) {
  const auto out = cfg["out"].get<std::string>();
  if (out.empty()) throw ConfigError("--out must not be empty");
  return out;
}

void guard_inputs(const std::vector<std::string>& outputs, const std::vector<std::string>& inputs) {
  namespace fs = std::filesystem;
  for (const auto& o : outputs)
    for (const auto& i : inputs)
      if (!i.empty() && fs::weakly_canonical(o) == fs::weakly_canonical(i))
        throw ConfigError("output '" + o + "' would overwrite input '" + i + "'");
}

void write_config(const std::string& out, const json& cfg) {
  const std::string path = out + ".config.json";
  const std::string text = cfg.dump(2) + "\n";
  {
    std::ifstream in(path, std::ios::binary);
    if (in) {
      std::stringstream ss;
      ss << in.rdbuf();
      if (ss.str() == text) return;
    }
  }
  auto os = detail::open_out(path);
  os << text;
}

void write_text(const std::string& path, const std::string& text) {
  auto os = detail::open_out(path);
  os << text;
}

// ---- fit --------------------------------------------------------------------

std::vector<Field> fit_fields() {
  auto f = concat(data_fields(), solver_fields());
  f.push_back({"delta", Kind::real, nullptr, "lasso weight"});
  f.push_back({"gamma", Kind::real, nullptr, "fusion weight"});
  f.push_back({"fixed_graph", Kind::text, "", "relation graph file (JSON matrix or l,m,sign CSV); skips set updates"});
  f.push_back({"out", Kind::text, nullptr, "model JSON path"});
  return f;
}

int report_convergence(const FitResult& fit) {
  if (fit.converged) return 0;
  std::cerr << "minpen: solver stopped after " << fit.outer_iters << " outer iterations without convergence ("
            << to_string(fit.stop_reason) << "); last objective " << fit.objective << "\n";
  return 4;
}

int run_fit(const json& cfg) {
  const std::string out = out_path(cfg);
  const auto fixed = cfg["fixed_graph"].get<std::string>();
  guard_inputs({out, out + ".config.json"}, {cfg["data"].get<std::string>(), fixed});
  const SolverConfig scfg = solver_config(cfg);
  const PenaltySpec pen(cfg["delta"].get<double>(), cfg["gamma"].get<double>());
  const Dataset data = load(cfg);
  write_config(out, cfg);
  FitResult fit;
  if (!fixed.empty()) {
    const RelationGraph g = load_graph(fixed, data.r());
    fit = data.family() == Family::gaussian ? fit_fixed_graph(data, pen, g, scfg) : fit_binom_fixed_graph(data, pen, g, scfg);
  } else {
    fit = data.family() == Family::gaussian ? fit_minpen(data, pen, scfg) : fit_binom_minpen(data, pen, scfg);
  }
  write_json(out, fit_to_json(fit, data.predictor_names(), data.response_names()));
  return report_convergence(fit);
}

// ---- tune -------------------------------------------------------------------

std::vector<Field> tune_fields() {
  auto f = concat(data_fields(), solver_fields());
  f.push_back({"grid_delta", Kind::real_list, json::array(), "descending delta grid (default: log grid from delta_max)"});
  f.push_back({"n_delta", Kind::integer, 20, "size of the default delta grid"});
  f.push_back({"delta_ratio", Kind::real, 1e-3, "smallest / largest delta of the default grid"});
  f.push_back({"grid_gamma", Kind::real_list, json::array(), "gamma grid (default: 0,0.01,0.1,0.5,1,5)"});
  f.push_back({"folds", Kind::integer, 5, "cross-validation folds"});
  f.push_back({"test_data", Kind::text, "", "held-out CSV; replaces cross-validation"});
  f.push_back(seed_field());
  f.push_back({"fixed_graph", Kind::text, "", "tune a fixed-graph model"});
  f.push_back({"warm_start", Kind::flag, true, "warm starts along each delta path", "--no-warm-start", false});
  f.push_back({"out", Kind::text, nullptr, "tuning table CSV path; the choice goes to <out>.best.json"});
  return f;
}

int run_tune(const json& cfg) {
  const std::string out = out_path(cfg);
  const auto test_path = cfg["test_data"].get<std::string>();
  const auto fixed = cfg["fixed_graph"].get<std::string>();
  guard_inputs({out, out + ".best.json", out + ".config.json"}, {cfg["data"].get<std::string>(), test_path, fixed});
  const SolverConfig scfg = solver_config(cfg);
  const bool split = !test_path.empty();
  std::uint64_t s = 0;
  if (!split) s = seed(cfg, "for cross-validation (fold assignment is random)");
  const Dataset data = load(cfg);

  TuneGrid grid = default_grid(data, cfg["n_delta"].get<int>(), cfg["delta_ratio"].get<double>());
  if (!cfg["grid_delta"].empty()) grid.deltas = reals(cfg["grid_delta"]);
  if (!cfg["grid_gamma"].empty()) grid.gammas = reals(cfg["grid_gamma"]);
  grid.folds = cfg["folds"].get<int>();
  grid.seed = s;
  grid.validate();

  TuneOptions opt;
  opt.warm_start = cfg["warm_start"].get<bool>();
  opt.threads = threads(cfg);
  if (!fixed.empty()) opt.graph = load_graph(fixed, data.r());
  write_config(out, cfg);

  TuneResult res;
  if (split) {
    const Dataset test = load(cfg, "test_data");
    res = split_select(data, test, grid, scfg, opt);
  } else {
    res = cv_select(data, grid, scfg, opt);
  }

  std::ostringstream table;
  table << "delta,gamma,loss";
  const std::size_t k = res.table.empty() ? 0 : res.table[0].fold_losses.size();
  for (std::size_t f = 0; f < k; ++f) table << ",fold_" << f;
  table << '\n';
  for (const auto& c : res.table) {
    table << format_real(c.delta) << ',' << format_real(c.gamma) << ',' << format_real(c.loss);
    for (double v : c.fold_losses) table << ',' << format_real(v);
    table << '\n';
  }
  write_text(out, table.str());

  double best_loss = 0.0;
  for (const auto& c : res.table)
    if (c.delta == res.best.delta() && c.gamma == res.best.gamma()) best_loss = c.loss;
  json best;
  best["schema_version"] = kSchemaVersion;
  best["method"] = split ? "split" : "cv";
  best["delta"] = res.best.delta();
  best["gamma"] = res.best.gamma();
  best["loss"] = best_loss;
  if (!split) {
    best["folds"] = grid.folds;
    best["seed"] = s;
  }
  write_json(out + ".best.json", best);
  return 0;
}

// ---- oracle -----------------------------------------------------------------

std::vector<Field> oracle_fields() {
  auto f = concat(data_fields(), solver_fields());
  f.push_back({"delta", Kind::real, nullptr, "lasso weight"});
  f.push_back({"gamma", Kind::real, nullptr, "fusion weight"});
  f.push_back({"max_pairs", Kind::integer, kDefaultEnumerationCap, "refuse to enumerate more than 3^max_pairs graphs"});
  f.push_back({"out", Kind::text, nullptr, "model JSON path; per-graph objectives go to <out>.graphs.csv"});
  return f;
}

int run_oracle(const json& cfg) {
  const std::string out = out_path(cfg);
  guard_inputs({out, out + ".graphs.csv", out + ".config.json"}, {cfg["data"].get<std::string>()});
  const SolverConfig scfg = solver_config(cfg);
  const PenaltySpec pen(cfg["delta"].get<double>(), cfg["gamma"].get<double>());
  const Dataset data = load(cfg);
  if (data.family() != Family::gaussian) throw ConfigError("oracle search is available for the gaussian family only");
  const int cap = cfg["max_pairs"].get<int>();
  enumerate_graphs(data.r(), cap);  // fail on the cap before writing anything
  write_config(out, cfg);
  const OracleResult res = oracle_minpen(data, pen, scfg, cap);

  std::ostringstream table;
  const Eigen::Index r = data.r();
  for (Eigen::Index l = 0; l < r; ++l)
    for (Eigen::Index m = 0; m < r; ++m)
      if (l != m) table << "d_" << l << '_' << m << ',';
  table << "objective\n";
  for (const auto& row : res.table) {
    for (Eigen::Index l = 0; l < r; ++l)
      for (Eigen::Index m = 0; m < r; ++m)
        if (l != m) table << row.graph(l, m) << ',';
    table << format_real(row.objective) << '\n';
  }
  write_text(out + ".graphs.csv", table.str());
  write_json(out, fit_to_json(res.fit, data.predictor_names(), data.response_names()));
  return 0;
}

// ---- infer ------------------------------------------------------------------

std::vector<Field> infer_fields() {
  return {
      {"model", Kind::text, nullptr, "gaussian model JSON written by fit"},
      {"data", Kind::text, nullptr, "CSV the model was fitted on"},
      {"responses", Kind::text_list, json::array(), "response columns (default: names stored in the model)"},
      {"alpha", Kind::real, 0.1, "intervals have level 1 - alpha"},
      {"sigma", Kind::text, nullptr, "known:FILE, residual-full or diagonal"},
      {"full_design", Kind::flag, false, "contrast from the full design instead of the selected columns"},
      {"out", Kind::text, nullptr, "interval CSV path"},
  };
}

SigmaSpec resolve_sigma(const std::string& spec, const Dataset& data) {
  if (spec.rfind("known:", 0) == 0) {
    const CsvTable t = read_csv(spec.substr(6));
    if (t.values.rows() != data.r() || t.values.cols() != data.r())
      throw DataError("known covariance must be " + std::to_string(data.r()) + " x " + std::to_string(data.r()));
    return known_sigma(t.values);
  }
  if (spec == "residual-full") return estimate_sigma(data, SigmaMode::residual_full);
  if (spec == "diagonal") return estimate_sigma(data, SigmaMode::diagonal);
  throw ConfigError("--sigma must be known:FILE, residual-full or diagonal, got '" + spec + "'");
}

int run_infer(const json& cfg) {
  const std::string out = out_path(cfg);
  const auto sigma_spec = cfg["sigma"].get<std::string>();
  const std::string sigma_file = sigma_spec.rfind("known:", 0) == 0 ? sigma_spec.substr(6) : "";
  guard_inputs({out, out + ".config.json"},
               {cfg["data"].get<std::string>(), cfg["model"].get<std::string>(), sigma_file});
  const double alpha = cfg["alpha"].get<double>();
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("--alpha must lie in (0, 1)");
  if (sigma_file.empty() && sigma_spec != "residual-full" && sigma_spec != "diagonal")
    throw ConfigError("--sigma must be known:FILE, residual-full or diagonal, got '" + sigma_spec + "'");

  const json model = read_json(cfg["model"].get<std::string>());
  const FitResult fit = fit_from_json(model);
  if (fit.family != Family::gaussian) throw ConfigError("selective inference needs a gaussian model");
  auto responses = strings(cfg["responses"]);
  if (responses.empty()) responses = model.value("responses", std::vector<std::string>{});
  if (responses.empty()) throw ConfigError("--responses is required when the model stores no response names");
  const Dataset data = load_dataset(cfg["data"].get<std::string>(), responses, Family::gaussian);
  const auto predictors = model.value("predictors", std::vector<std::string>{});
  if (!predictors.empty() && predictors != data.predictor_names())
    throw DataError("data predictors do not match the model's predictors");
  write_config(out, cfg);

  std::ostringstream csv;
  csv << "response,predictor,estimate,lower,upper,alpha,v_minus,v_plus,sd,scale,status\n";
  if (fit.coef_solver.isZero(0.0)) {
    write_text(out, csv.str());
    return 0;
  }
  const SigmaSpec sigma = resolve_sigma(sigma_spec, data);
  const InferenceProblem prob = build_event(data, fit, fit.pen);
  IntervalOptions opt;
  opt.full_design = cfg["full_design"].get<bool>();
  std::size_t degenerate = 0;
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(prob.event.Q.size()); ++j) {
    const Eigen::Index idx = prob.event.Q[static_cast<std::size_t>(j)];
    const Eigen::Index resp = idx / prob.p, pred = idx % prob.p;
    const double scale = prob.standardization ? prob.standardization->column_scales(pred) : 1.0;
    csv << data.response_names()[static_cast<std::size_t>(resp)] << ','
        << data.predictor_names()[static_cast<std::size_t>(pred)] << ',';
    try {
      const SelectiveInterval iv = selective_interval(prob, sigma, j, alpha, opt);
      // slopes on the working scale divide by the predictor's scale on the original one
      for (double v : {iv.estimate, iv.lower, iv.upper}) csv << format_real(v / scale) << ',';
      csv << format_real(alpha) << ',';
      for (double v : {iv.v_minus, iv.v_plus, iv.sd}) csv << format_real(v / scale) << ',';
      csv << format_real(scale) << ",ok\n";
    } catch (const InferenceError& e) {
      ++degenerate;
      std::cerr << "minpen: interval for " << data.response_names()[static_cast<std::size_t>(resp)] << '/'
                << data.predictor_names()[static_cast<std::size_t>(pred)] << ": " << e.what() << "\n";
      csv << "NA,NA,NA," << format_real(alpha) << ",NA,NA,NA," << format_real(scale) << ",degenerate\n";
    }
  }
  write_text(out, csv.str());
  if (degenerate == prob.event.Q.size()) {
    std::cerr << "minpen: every interval is degenerate\n";
    return 4;
  }
  return 0;
}

// ---- simulate ---------------------------------------------------------------

std::vector<Field> simulate_fields() {
  const StudyConfig d;
  std::vector<double> factors = d.gamma_factors;
  return {
      {"design", Kind::text, nullptr, "block, overlap or binom_block"},
      {"p", Kind::integer, 40, "predictors (multiple of 4)"},
      {"n", Kind::integer, 100, "training rows"},
      {"n_test", Kind::integer, 100, "tuning rows"},
      {"n_val", Kind::integer, 1000, "validation rows"},
      {"eta", Kind::real, 1.0, "block effect size"},
      {"lambda", Kind::real, 0.1, "block effect spread"},
      {"v", Kind::integer, 0, "overlap shift"},
      {"rho", Kind::real, 0.7, "within-block predictor correlation"},
      {"reps", Kind::integer, 20, "replications"},
      seed_field(),
      {"methods", Kind::text_list, json{"minpen", "t_minpen", "sen"}, "minpen, t_minpen, sen"},
      {"n_delta", Kind::integer, 20, "delta grid size"},
      {"delta_ratio", Kind::real, 1e-3, "smallest / largest delta"},
      {"gamma_factors", Kind::real_list, factors, "gamma grid as multiples of delta_max"},
      {"threads", Kind::integer, 0, "worker threads (0: MINPEN_THREADS or all cores)"},
      {"out", Kind::text, nullptr, "long-format metrics CSV path"},
  };
}

int run_simulate(const json& cfg) {
  const std::string out = out_path(cfg);
  SimDesign d;
  d.kind = design_from_string(cfg["design"].get<std::string>());
  d.p = cfg["p"].get<Eigen::Index>();
  d.n = cfg["n"].get<Eigen::Index>();
  d.n_test = cfg["n_test"].get<Eigen::Index>();
  d.n_val = cfg["n_val"].get<Eigen::Index>();
  d.eta = cfg["eta"].get<double>();
  d.lambda = cfg["lambda"].get<double>();
  d.v = cfg["v"].get<Eigen::Index>();
  d.rho = cfg["rho"].get<double>();
  d.seed = seed(cfg, "for simulate (all data are random)");
  d.validate();
  StudyConfig sc;
  const auto reps = cfg["reps"].get<long long>();
  if (reps < 1) throw ConfigError("--reps must be at least 1");
  sc.reps = static_cast<std::size_t>(reps);
  sc.methods.clear();
  for (const auto& m : strings(cfg["methods"])) sc.methods.push_back(method_from_string(m));
  sc.n_delta = cfg["n_delta"].get<int>();
  sc.delta_ratio = cfg["delta_ratio"].get<double>();
  sc.gamma_factors = reals(cfg["gamma_factors"]);
  sc.threads = threads(cfg);
  sc.validate();
  for (const auto& note : d.extrapolation()) std::cerr << "minpen: extrapolating beyond the studied designs: " << note << "\n";
  write_config(out, cfg);

  const StudyResult res = run_study(d, sc);
  std::ostringstream csv;
  write_study_csv(csv, res);
  write_text(out, csv.str());

  for (const auto& report : res.methods) {
    std::cout << to_string(report.method);
    for (const auto& name : metric_names(d.family())) {
      const Summary s = report.summary(name);
      std::cout << "  " << name << " " << s.mean << " (" << s.se << ")";
    }
    std::cout << "\n";
    for (std::size_t i = 0; i < report.reps.size(); ++i)
      if (!report.reps[i].metrics)
        std::cerr << "minpen: " << to_string(report.method) << " rep " << i << " failed: " << report.reps[i].error << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-response regression with the minimum fusion penalty"};
  app.require_subcommand(1);
  Command fit(app, "fit", "fit at one (delta, gamma)", fit_fields());
  Command tune(app, "tune", "select (delta, gamma) by cross-validation or a test set", tune_fields());
  Command oracle(app, "oracle", "global minimum by exhaustive graph search", oracle_fields());
  Command infer(app, "infer", "selective confidence intervals for a gaussian model", infer_fields());
  Command simulate(app, "simulate", "replication study on a simulation design", simulate_fields());
  const std::vector<std::pair<const Command*, int (*)(const json&)>> commands{
      {&fit, run_fit}, {&tune, run_tune}, {&oracle, run_oracle}, {&infer, run_infer}, {&simulate, run_simulate}};
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    for (const auto& [cmd, run] : commands)
      if (cmd->app()->parsed()) return run(cmd->resolve());
  } catch (const ConfigError& e) {
    std::cerr << "minpen: configuration error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "minpen: data error: " << e.what() << "\n";
    return 3;
  } catch (const ConvergenceError& e) {
    std::cerr << "minpen: solver error: " << e.what() << "\n";
    return 4;
  } catch (const InferenceError& e) {
    std::cerr << "minpen: inference error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "minpen: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
