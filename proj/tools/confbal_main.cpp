// confbal command line front end. All numerical work happens behind the C
// API in libconfbal; this translation unit only parses flags, moves tables
// to disk and records run metadata.

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "confbal.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliError {
  confbal_status status;
  std::string message;
};

[[noreturn]] void fail(confbal_status status, const std::string& message) {
  throw CliError{status, message};
}

void check(confbal_status status) {
  if (status != CONFBAL_OK) fail(status, confbal_last_error());
}

int exit_code_for(confbal_status status) {
  switch (status) {
    case CONFBAL_ERR_SCHEMA:
    case CONFBAL_ERR_PARSE:
    case CONFBAL_ERR_INVALID_ARGUMENT:
    case CONFBAL_ERR_NULL_POINTER:
    case CONFBAL_ERR_IO:
      return 2;
    default:
      return 1;
  }
}

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Every flag of every subcommand; also the schema of the metadata file so a
/// recorded run can be replayed byte for byte.
struct Options {
  std::string subcommand;
  std::string input;
  std::string outcome = "y";
  std::string treatment = "a";
  std::string covariates;  // comma list; empty = rest
  std::string method = "rf-kernel-mmd";
  int trees = 1000;
  int mtry = 0;
  int min_node = 5;
  int max_depth = -1;
  double subsample_fraction = 0.632;
  std::string forest_mode = "adaptive";
  int uniform_depth = 6;
  double lambda = -1.0;
  bool lambda_grid = false;
  bool no_nonneg = false;
  double bandwidth = 0.0;
  double fit_fraction = 0.5;
  int64_t max_iter = 50000;
  double tol = 1e-10;
  uint64_t seed = 0;
  bool seed_given = false;
  int reps = 200;
  int bootstrap = 0;
  std::string out_dir = ".";
  int threads = 0;
  std::string save_forest;
  std::string load_forest;
  std::string export_gram;
  std::string gram_cache;
  bool gram_stability = false;
  bool save_weights = false;
  std::string weights_file;
  int discrete_threshold = 10;
  std::string models = "model1";
  std::string n_grid = "250,500";
  std::string p_grid = "50,100";
  double rho = std::nan("");
  std::string methods =
      "rf-kernel-mmd,gaussian-mmd,logistic-ipw,rf-ipw";
};

json options_to_json(const Options& o) {
  json j;
  j["subcommand"] = o.subcommand;
  j["input"] = o.input;
  j["outcome"] = o.outcome;
  j["treatment"] = o.treatment;
  j["covariates"] = o.covariates;
  j["method"] = o.method;
  j["trees"] = o.trees;
  j["mtry"] = o.mtry;
  j["min_node"] = o.min_node;
  j["max_depth"] = o.max_depth;
  j["subsample_fraction"] = o.subsample_fraction;
  j["forest_mode"] = o.forest_mode;
  j["uniform_depth"] = o.uniform_depth;
  j["lambda"] = o.lambda;
  j["lambda_grid"] = o.lambda_grid;
  j["nonneg"] = !o.no_nonneg;
  j["bandwidth"] = o.bandwidth;
  j["fit_fraction"] = o.fit_fraction;
  j["max_iter"] = o.max_iter;
  j["tol"] = o.tol;
  j["seed"] = o.seed;
  j["reps"] = o.reps;
  j["bootstrap"] = o.bootstrap;
  j["save_forest"] = o.save_forest;
  j["load_forest"] = o.load_forest;
  j["export_gram"] = o.export_gram;
  j["gram_cache"] = o.gram_cache;
  j["gram_stability"] = o.gram_stability;
  j["save_weights"] = o.save_weights;
  j["weights_file"] = o.weights_file;
  j["discrete_threshold"] = o.discrete_threshold;
  j["models"] = o.models;
  j["n_grid"] = o.n_grid;
  j["p_grid"] = o.p_grid;
  if (!std::isnan(o.rho)) j["rho"] = o.rho;
  j["methods"] = o.methods;
  return j;
}

Options options_from_json(const json& j) {
  Options o;
  o.subcommand = j.value("subcommand", "");
  o.input = j.value("input", "");
  o.outcome = j.value("outcome", "y");
  o.treatment = j.value("treatment", "a");
  o.covariates = j.value("covariates", "");
  o.method = j.value("method", "rf-kernel-mmd");
  o.trees = j.value("trees", 1000);
  o.mtry = j.value("mtry", 0);
  o.min_node = j.value("min_node", 5);
  o.max_depth = j.value("max_depth", -1);
  o.subsample_fraction = j.value("subsample_fraction", 0.632);
  o.forest_mode = j.value("forest_mode", "adaptive");
  o.uniform_depth = j.value("uniform_depth", 6);
  o.lambda = j.value("lambda", -1.0);
  o.lambda_grid = j.value("lambda_grid", false);
  o.no_nonneg = !j.value("nonneg", true);
  o.bandwidth = j.value("bandwidth", 0.0);
  o.fit_fraction = j.value("fit_fraction", 0.5);
  o.max_iter = j.value("max_iter", static_cast<int64_t>(50000));
  o.tol = j.value("tol", 1e-10);
  o.seed = j.value("seed", static_cast<uint64_t>(0));
  o.seed_given = true;
  o.reps = j.value("reps", 200);
  o.bootstrap = j.value("bootstrap", 0);
  o.save_forest = j.value("save_forest", "");
  o.load_forest = j.value("load_forest", "");
  o.export_gram = j.value("export_gram", "");
  o.gram_cache = j.value("gram_cache", "");
  o.gram_stability = j.value("gram_stability", false);
  o.save_weights = j.value("save_weights", false);
  o.weights_file = j.value("weights_file", "");
  o.discrete_threshold = j.value("discrete_threshold", 10);
  o.models = j.value("models", "model1");
  o.n_grid = j.value("n_grid", "250,500");
  o.p_grid = j.value("p_grid", "50,100");
  o.rho = j.contains("rho") ? j["rho"].get<double>() : std::nan("");
  o.methods = j.value("methods", "rf-kernel-mmd,gaussian-mmd,logistic-ipw,rf-ipw");
  return o;
}

confbal_run_config to_run_config(const Options& o) {
  confbal_run_config c = confbal_run_config_default();
  c.method = o.method.c_str();
  c.trees = o.trees;
  c.mtry = o.mtry;
  c.min_node = o.min_node;
  c.max_depth = o.max_depth;
  c.subsample_fraction = o.subsample_fraction;
  c.uniform_mode = o.forest_mode == "uniform" ? 1 : 0;
  c.uniform_depth = o.uniform_depth;
  c.fit_fraction = o.fit_fraction;
  c.lambda = o.lambda;
  c.lambda_grid = o.lambda_grid ? 1 : 0;
  c.nonneg = o.no_nonneg ? 0 : 1;
  c.bandwidth = o.bandwidth;
  c.max_iter = o.max_iter;
  c.tol = o.tol;
  c.seed = o.seed;
  if (!o.load_forest.empty()) c.forest_load = o.load_forest.c_str();
  if (!o.save_forest.empty()) c.forest_save = o.save_forest.c_str();
  c.gram_stability = o.gram_stability ? 1 : 0;
  return c;
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (...) {
      fail(CONFBAL_ERR_INVALID_ARGUMENT,
           std::string("bad ") + what + " entry '" + item + "'");
    }
  }
  if (out.empty())
    fail(CONFBAL_ERR_INVALID_ARGUMENT, std::string(what) + " list is empty");
  return out;
}

std::vector<std::string> parse_string_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// RAII dataset/table/run wrappers keep the error paths leak free.
struct DatasetHandle {
  confbal_dataset* ptr = nullptr;
  ~DatasetHandle() { confbal_dataset_free(ptr); }
};
struct RunHandle {
  confbal_run* ptr = nullptr;
  ~RunHandle() { confbal_run_free(ptr); }
};
struct TableHandle {
  confbal_table* ptr = nullptr;
  ~TableHandle() { confbal_table_free(ptr); }
};

void write_table_csv(const confbal_table* t, const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail(CONFBAL_ERR_IO, "cannot write '" + path.string() + "'");
  const int64_t cols = confbal_table_cols(t);
  for (int64_t j = 0; j < cols; ++j)
    out << confbal_table_col_name(t, j) << (j + 1 < cols ? ',' : '\n');
  for (int64_t i = 0; i < confbal_table_rows(t); ++i)
    for (int64_t j = 0; j < cols; ++j)
      out << confbal_table_cell(t, i, j) << (j + 1 < cols ? ',' : '\n');
}

void write_table_aligned(const confbal_table* t, std::ostream& out) {
  const int64_t cols = confbal_table_cols(t);
  const int64_t rows = confbal_table_rows(t);
  std::vector<size_t> width(cols);
  for (int64_t j = 0; j < cols; ++j) {
    width[j] = std::string(confbal_table_col_name(t, j)).size();
    for (int64_t i = 0; i < rows; ++i)
      width[j] = std::max(width[j],
                          std::string(confbal_table_cell(t, i, j)).size());
  }
  auto pad = [&](const std::string& s, size_t w) {
    return s + std::string(w - s.size(), ' ');
  };
  for (int64_t j = 0; j < cols; ++j)
    out << pad(confbal_table_col_name(t, j), width[j]) << (j + 1 < cols ? "  " : "\n");
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j)
      out << pad(confbal_table_cell(t, i, j), width[j])
          << (j + 1 < cols ? "  " : "\n");
}

DatasetHandle open_dataset(const Options& o) {
  if (o.input.empty())
    fail(CONFBAL_ERR_INVALID_ARGUMENT, "--input is required");
  DatasetHandle d;
  check(confbal_dataset_from_csv(
      o.input.c_str(), o.outcome.c_str(), o.treatment.c_str(),
      o.covariates.empty() ? nullptr : o.covariates.c_str(), &d.ptr));
  return d;
}

void write_metadata(const Options& o, const fs::path& dir, double wall_seconds,
                    const std::vector<std::string>& outputs,
                    const json& extra = json::object()) {
  json meta;
  meta["artifact_version"] = confbal_version();
  meta["config"] = options_to_json(o);
  meta["wall_time_s"] = wall_seconds;
  meta["outputs"] = outputs;
  meta["smd_convention"] =
      "pooled sd = sqrt((var1+var0)/2) from unweighted group variances";
  for (auto it = extra.begin(); it != extra.end(); ++it)
    meta[it.key()] = it.value();
  std::ofstream out(dir / "metadata.json");
  out << meta.dump(2) << '\n';
}

void write_weights_csv(const fs::path& path, const confbal_dataset* d,
                       const std::vector<double>& w) {
  const int64_t n = confbal_dataset_n(d);
  std::vector<int32_t> a(n);
  check(confbal_dataset_treatment(d, a.data()));
  std::ofstream out(path);
  if (!out) fail(CONFBAL_ERR_IO, "cannot write '" + path.string() + "'");
  out << "row,treatment,weight\n";
  for (int64_t i = 0; i < n; ++i)
    out << (i + 1) << ',' << a[i] << ',' << format_value(w[i]) << '\n';
}

std::vector<double> read_weights_csv(const fs::path& path, int64_t n) {
  std::ifstream in(path);
  if (!in) fail(CONFBAL_ERR_IO, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line))
    fail(CONFBAL_ERR_PARSE, "empty weight file '" + path.string() + "'");
  std::vector<double> w;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t last = line.find_last_of(',');
    if (last == std::string::npos)
      fail(CONFBAL_ERR_PARSE, "bad weight row '" + line + "'");
    w.push_back(std::stod(line.substr(last + 1)));
  }
  if (static_cast<int64_t>(w.size()) != n)
    fail(CONFBAL_ERR_INVALID_ARGUMENT,
         "weight file has " + std::to_string(w.size()) + " rows, dataset has " +
             std::to_string(n));
  return w;
}

// ---- subcommands ----------------------------------------------------------

int cmd_weights(const Options& o) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  DatasetHandle d = open_dataset(o);

  confbal_run_config config = to_run_config(o);
  config.record_trace = 1;
  RunHandle run;
  check(confbal_run_method(d.ptr, &config, &run.ptr));

  std::vector<double> w(confbal_run_n(run.ptr));
  check(confbal_run_weights(run.ptr, w.data()));
  write_weights_csv(dir / "weights.csv", d.ptr, w);

  {
    std::ofstream trace(dir / "solver_trace.csv");
    trace << "iteration,objective,constraint_residual\n";
    const int64_t len = confbal_run_trace_len(run.ptr);
    if (len > 0) {
      std::vector<double> objective(len), residual(len);
      check(confbal_run_trace(run.ptr, objective.data()));
      check(confbal_run_trace_constraint(run.ptr, residual.data()));
      for (int64_t i = 0; i < len; ++i)
        trace << i << ',' << format_value(objective[i]) << ','
              << format_value(residual[i]) << '\n';
    }
  }

  if (!o.export_gram.empty() || !o.gram_cache.empty())
    check(confbal_export_gram(
        d.ptr, &config, o.export_gram.empty() ? nullptr : o.export_gram.c_str(),
        o.gram_cache.empty() ? nullptr : o.gram_cache.c_str()));

  json extra;
  extra["objective"] = confbal_run_objective(run.ptr);
  extra["iterations"] = confbal_run_iterations(run.ptr);
  extra["converged"] = confbal_run_converged(run.ptr) != 0;
  extra["kkt_residual"] = confbal_run_kkt_residual(run.ptr);
  extra["constraint_residual"] = confbal_run_constraint_residual(run.ptr);
  extra["lambda_used"] = confbal_run_lambda(run.ptr);
  if (o.gram_stability)
    extra["gram_stability"] = confbal_run_gram_stability(run.ptr);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  write_metadata(o, dir, wall, {"weights.csv", "solver_trace.csv"}, extra);

  std::cout << "wrote " << (dir / "weights.csv").string() << " ("
            << w.size() << " rows)\n";
  return 0;
}

int cmd_ate(const Options& o) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  DatasetHandle d = open_dataset(o);

  confbal_run_config config = to_run_config(o);
  RunHandle run;
  check(confbal_run_method(d.ptr, &config, &run.ptr));
  const double tau = confbal_run_tau(run.ptr);

  double se = std::nan("");
  std::vector<double> estimates;
  if (o.bootstrap > 0) {
    estimates.resize(o.bootstrap);
    check(confbal_bootstrap(d.ptr, &config, o.bootstrap, &se,
                            estimates.data()));
    std::ofstream out(dir / "bootstrap_estimates.csv");
    out << "replicate,estimate\n";
    for (int b = 0; b < o.bootstrap; ++b)
      out << (b + 1) << ',' << format_value(estimates[b]) << '\n';
  }

  const int64_t n = confbal_dataset_n(d.ptr);
  const int64_t p = confbal_dataset_p(d.ptr);
  {
    std::ofstream out(dir / "estimate.csv");
    out << "method,tau_hat,n,p,seed";
    if (o.bootstrap > 0) out << ",bootstrap_se,bootstrap_B";
    out << '\n' << o.method << ',' << format_value(tau) << ',' << n << ','
        << p << ',' << o.seed;
    if (o.bootstrap > 0)
      out << ',' << format_value(se) << ',' << o.bootstrap;
    out << '\n';
  }

  if (o.save_weights) {
    std::vector<double> w(confbal_run_n(run.ptr));
    check(confbal_run_weights(run.ptr, w.data()));
    write_weights_csv(dir / "weights.csv", d.ptr, w);
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  {
    // Run journal; one appended row per invocation.
    const fs::path log = dir / "results_log.csv";
    const bool fresh = !fs::exists(log);
    std::ofstream out(log, std::ios::app);
    if (fresh) out << "method,tau_hat,n,p,seed,runtime_s\n";
    out << o.method << ',' << format_value(tau) << ',' << n << ',' << p << ','
        << o.seed << ',' << format_value(wall) << '\n';
  }

  std::vector<std::string> outputs = {"estimate.csv", "results_log.csv"};
  if (o.bootstrap > 0) outputs.push_back("bootstrap_estimates.csv");
  if (o.save_weights) outputs.push_back("weights.csv");
  write_metadata(o, dir, wall, outputs);

  std::cout << o.method << ": tau_hat = " << format_value(tau);
  if (o.bootstrap > 0)
    std::cout << ", bootstrap_se = " << format_value(se) << " (B = "
              << o.bootstrap << ")";
  std::cout << '\n';
  return 0;
}

int cmd_simulate(const Options& o) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir(o.out_dir);
  fs::create_directories(dir);

  const std::vector<std::string> models = parse_string_list(o.models);
  const std::vector<int> n_grid = parse_int_list(o.n_grid, "n-grid");
  const std::vector<int> p_grid = parse_int_list(o.p_grid, "p-grid");
  if (models.empty())
    fail(CONFBAL_ERR_INVALID_ARGUMENT, "no models requested");

  confbal_run_config config = to_run_config(o);

  std::ofstream results(dir / "results.csv");
  std::ofstream summary(dir / "summary.csv");
  std::ostringstream aligned;
  bool header_written = false;

  for (const std::string& model : models) {
    for (int n : n_grid) {
      for (int p : p_grid) {
        TableHandle rows, cell_summary;
        check(confbal_experiment(model.c_str(), n, p, o.rho,
                                 o.methods.c_str(), o.reps, o.seed, &config,
                                 &rows.ptr, &cell_summary.ptr));
        if (!header_written) {
          for (int64_t j = 0; j < confbal_table_cols(rows.ptr); ++j)
            results << confbal_table_col_name(rows.ptr, j)
                    << (j + 1 < confbal_table_cols(rows.ptr) ? ',' : '\n');
          for (int64_t j = 0; j < confbal_table_cols(cell_summary.ptr); ++j)
            summary << confbal_table_col_name(cell_summary.ptr, j)
                    << (j + 1 < confbal_table_cols(cell_summary.ptr) ? ','
                                                                     : '\n');
          header_written = true;
        }
        for (int64_t i = 0; i < confbal_table_rows(rows.ptr); ++i)
          for (int64_t j = 0; j < confbal_table_cols(rows.ptr); ++j)
            results << confbal_table_cell(rows.ptr, i, j)
                    << (j + 1 < confbal_table_cols(rows.ptr) ? ',' : '\n');
        for (int64_t i = 0; i < confbal_table_rows(cell_summary.ptr); ++i)
          for (int64_t j = 0; j < confbal_table_cols(cell_summary.ptr); ++j)
            summary << confbal_table_cell(cell_summary.ptr, i, j)
                    << (j + 1 < confbal_table_cols(cell_summary.ptr) ? ','
                                                                     : '\n');
        aligned << "== " << model << " n=" << n << " p=" << p
                << " reps=" << o.reps << "\n";
        write_table_aligned(cell_summary.ptr, aligned);
        aligned << '\n';
      }
    }
  }

  {
    std::ofstream text(dir / "summary.txt");
    text << aligned.str();
  }
  std::cout << aligned.str();

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  write_metadata(o, dir, wall, {"results.csv", "summary.csv", "summary.txt"});
  return 0;
}

int cmd_diagnose(const Options& o) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  DatasetHandle d = open_dataset(o);
  const int64_t n = confbal_dataset_n(d.ptr);

  std::vector<double> w;
  if (!o.weights_file.empty()) {
    w = read_weights_csv(o.weights_file, n);
  } else {
    confbal_run_config config = to_run_config(o);
    RunHandle run;
    check(confbal_run_method(d.ptr, &config, &run.ptr));
    w.resize(confbal_run_n(run.ptr));
    check(confbal_run_weights(run.ptr, w.data()));
  }

  TableHandle balance, association, love;
  check(confbal_balance_table(d.ptr, w.data(), &balance.ptr));
  check(confbal_association_table(d.ptr, o.discrete_threshold,
                                  &association.ptr));
  check(confbal_love_table(d.ptr, w.data(), &love.ptr));
  write_table_csv(balance.ptr, dir / "balance.csv");
  write_table_csv(association.ptr, dir / "association.csv");
  write_table_csv(love.ptr, dir / "love_plot.csv");

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  write_metadata(o, dir, wall,
                 {"balance.csv", "association.csv", "love_plot.csv"});
  std::cout << "wrote balance.csv, association.csv, love_plot.csv in "
            << dir.string() << '\n';
  return 0;
}

int dispatch(const Options& o);

int cmd_rerun(const std::string& metadata_path, const std::string& out_dir) {
  std::ifstream in(metadata_path);
  if (!in) fail(CONFBAL_ERR_IO, "cannot open '" + metadata_path + "'");
  json meta;
  try {
    in >> meta;
  } catch (const std::exception& e) {
    fail(CONFBAL_ERR_PARSE, std::string("bad metadata: ") + e.what());
  }
  if (!meta.contains("config"))
    fail(CONFBAL_ERR_PARSE, "metadata has no config object");
  Options o = options_from_json(meta["config"]);
  if (!out_dir.empty()) o.out_dir = out_dir;
  if (o.subcommand.empty() || o.subcommand == "rerun")
    fail(CONFBAL_ERR_INVALID_ARGUMENT, "metadata does not name a subcommand");
  return dispatch(o);
}

int dispatch(const Options& o) {
  if (o.subcommand == "weights") return cmd_weights(o);
  if (o.subcommand == "ate") return cmd_ate(o);
  if (o.subcommand == "simulate") return cmd_simulate(o);
  if (o.subcommand == "diagnose") return cmd_diagnose(o);
  fail(CONFBAL_ERR_INVALID_ARGUMENT, "unknown subcommand '" + o.subcommand + "'");
}

void add_common_flags(CLI::App* cmd, Options& o, bool with_data) {
  if (with_data) {
    cmd->add_option("--input", o.input, "input CSV file");
    cmd->add_option("--outcome", o.outcome, "outcome column name");
    cmd->add_option("--treatment", o.treatment, "treatment column name");
    cmd->add_option("--covariates", o.covariates,
                    "comma-separated covariate columns (default: rest)");
  }
  cmd->add_option("--method", o.method,
                  "rf-kernel-mmd | gaussian-mmd | logistic-ipw | rf-ipw");
  cmd->add_option("--trees", o.trees, "number of trees");
  cmd->add_option("--mtry", o.mtry, "features tried per split (0 = sqrt(p))");
  cmd->add_option("--min-node", o.min_node, "minimum rows per leaf");
  cmd->add_option("--max-depth", o.max_depth, "tree depth cap (-1 = none)");
  cmd->add_option("--subsample-fraction", o.subsample_fraction,
                  "per-tree subsample fraction");
  cmd->add_option("--forest-mode", o.forest_mode, "adaptive | uniform");
  cmd->add_option("--uniform-depth", o.uniform_depth,
                  "levels k for the uniform partition mode");
  cmd->add_option("--lambda", o.lambda, "ridge penalty (< 0 = 1/n)");
  cmd->add_flag("--lambda-grid", o.lambda_grid,
                "select lambda from {1,...,1e-6}/n");
  cmd->add_flag("--no-nonneg", o.no_nonneg,
                "drop the w >= 0 constraint (equality-only program)");
  cmd->add_option("--bandwidth", o.bandwidth,
                  "Gaussian kernel bandwidth (<= 0 = median heuristic)");
  cmd->add_option("--fit-fraction", o.fit_fraction,
                  "fraction of rows used to fit the forest");
  cmd->add_option("--max-iter", o.max_iter, "solver iteration cap");
  cmd->add_option("--tol", o.tol, "solver relative-decrease tolerance");
  cmd->add_option("--seed", o.seed, "random seed (recorded in metadata)")
      ->each([&o](const std::string&) { o.seed_given = true; });
  cmd->add_option("--out-dir", o.out_dir, "output directory");
  cmd->add_option("--threads", o.threads,
                  "parallelism cap (or CONFBAL_THREADS)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"confounder-adaptive balancing weights"};
  app.require_subcommand(1);
  Options o;
  std::string rerun_metadata, rerun_out;

  CLI::App* weights = app.add_subcommand(
      "weights", "estimate balancing weights and write them as CSV");
  add_common_flags(weights, o, true);
  weights->add_option("--save-forest", o.save_forest, "persist fitted forest");
  weights->add_option("--load-forest", o.load_forest, "reuse a saved forest");
  weights->add_option("--export-gram", o.export_gram, "write the Gram as CSV");
  weights->add_option("--gram-cache", o.gram_cache,
                      "write a keyed binary Gram cache");
  weights->add_flag("--gram-stability", o.gram_stability,
                    "report the tree-count stability diagnostic");

  CLI::App* ate = app.add_subcommand(
      "ate", "estimate the average treatment effect");
  add_common_flags(ate, o, true);
  ate->add_option("--bootstrap", o.bootstrap,
                  "bootstrap resamples for a standard error");
  ate->add_flag("--save-weights", o.save_weights, "also dump the weights");
  ate->add_option("--save-forest", o.save_forest, "persist fitted forest");
  ate->add_option("--load-forest", o.load_forest, "reuse a saved forest");

  CLI::App* simulate = app.add_subcommand(
      "simulate", "replicated experiments on built-in data models");
  add_common_flags(simulate, o, false);
  simulate->add_option("--model", o.models,
                       "comma list of toy|model1|model2|model3");
  simulate->add_option("--n-grid", o.n_grid, "comma list of sample sizes");
  simulate->add_option("--p-grid", o.p_grid, "comma list of dimensions");
  simulate->add_option("--rho", o.rho, "AR-1 correlation (default per model)");
  simulate->add_option("--methods", o.methods, "comma list of methods");
  simulate->add_option("--reps", o.reps, "replicates per grid cell");

  CLI::App* diagnose = app.add_subcommand(
      "diagnose", "balance and association diagnostics");
  add_common_flags(diagnose, o, true);
  diagnose->add_option("--weights-file", o.weights_file,
                       "reuse weights from a weights.csv");
  diagnose->add_option("--discrete-threshold", o.discrete_threshold,
                       "distinct-value cutoff for chi-squared tests");

  CLI::App* rerun = app.add_subcommand(
      "rerun", "replay a recorded run from its metadata.json");
  rerun->add_option("--metadata", rerun_metadata, "metadata.json path")
      ->required();
  rerun->add_option("--out-dir", rerun_out, "override output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "{\"error\":{\"status\":\"CONFBAL_ERR_INVALID_ARGUMENT\","
              << "\"message\":" << json(e.what()).dump() << "}}\n";
    return 2;
  }

  if (o.threads == 0) {
    if (const char* env = std::getenv("CONFBAL_THREADS"))
      o.threads = std::atoi(env);
  }
  confbal_set_threads(o.threads);

  if (!o.seed_given && !app.got_subcommand(rerun)) {
    std::random_device entropy;
    o.seed = (static_cast<uint64_t>(entropy()) << 32) ^ entropy();
  }

  try {
    if (app.got_subcommand(weights)) o.subcommand = "weights";
    else if (app.got_subcommand(ate)) o.subcommand = "ate";
    else if (app.got_subcommand(simulate)) o.subcommand = "simulate";
    else if (app.got_subcommand(diagnose)) o.subcommand = "diagnose";
    else if (app.got_subcommand(rerun))
      return cmd_rerun(rerun_metadata, rerun_out);
    return dispatch(o);
  } catch (const CliError& e) {
    std::cerr << "{\"error\":{\"status\":\""
              << confbal_status_name(e.status) << "\",\"message\":"
              << json(e.message).dump() << "}}\n";
    return exit_code_for(e.status);
  } catch (const std::exception& e) {
    std::cerr << "{\"error\":{\"status\":\"CONFBAL_ERR_UNKNOWN\",\"message\":"
              << json(e.what()).dump() << "}}\n";
    return 1;
  }
}
