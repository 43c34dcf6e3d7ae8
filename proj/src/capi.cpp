#include "confbal.h"

#include <cmath>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "csv.hpp"
#include "dataset.hpp"
#include "diagnostics.hpp"
#include "estimators.hpp"
#include "simulation.hpp"

using namespace confbal;

extern "C" {

struct confbal_dataset {
  Dataset rep;
};

struct confbal_run {
  AteEstimate rep;
};

struct confbal_table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

}  // extern "C"

namespace {

thread_local std::string g_last_error;

confbal_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return CONFBAL_ERR_INVALID_ARGUMENT;
    case ErrorCode::ZeroVariance: return CONFBAL_ERR_ZERO_VARIANCE;
    case ErrorCode::ParseError: return CONFBAL_ERR_PARSE;
    case ErrorCode::SchemaError: return CONFBAL_ERR_SCHEMA;
    case ErrorCode::InvariantError: return CONFBAL_ERR_INVARIANT;
    case ErrorCode::DegenerateSplit: return CONFBAL_ERR_DEGENERATE_SPLIT;
    case ErrorCode::EmptyChild: return CONFBAL_ERR_INVALID_ARGUMENT;
    case ErrorCode::InvalidBandwidth: return CONFBAL_ERR_INVALID_ARGUMENT;
    case ErrorCode::DegenerateData: return CONFBAL_ERR_DEGENERATE_DATA;
    case ErrorCode::SingularSystem: return CONFBAL_ERR_SINGULAR_SYSTEM;
    case ErrorCode::NotConverged: return CONFBAL_ERR_NOT_CONVERGED;
    case ErrorCode::DegenerateWeights: return CONFBAL_ERR_DEGENERATE_WEIGHTS;
    case ErrorCode::ResampleDegenerate: return CONFBAL_ERR_RESAMPLE_DEGENERATE;
    case ErrorCode::ZeroPooledSd: return CONFBAL_ERR_DEGENERATE_DATA;
    case ErrorCode::DimensionTooSmall: return CONFBAL_ERR_INVALID_ARGUMENT;
    case ErrorCode::IoError: return CONFBAL_ERR_IO;
  }
  return CONFBAL_ERR_UNKNOWN;
}

template <typename Fn>
confbal_status guarded(Fn&& fn) {
  try {
    fn();
    return CONFBAL_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CONFBAL_ERR_UNKNOWN;
  } catch (...) {
    g_last_error = "unknown failure";
    return CONFBAL_ERR_UNKNOWN;
  }
}

confbal_status null_pointer(const char* what) {
  g_last_error = std::string(what) + " must not be NULL";
  return CONFBAL_ERR_NULL_POINTER;
}

std::vector<std::string> split_list(const char* csv) {
  std::vector<std::string> out;
  if (!csv) return out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    size_t b = item.find_first_not_of(" \t");
    size_t e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

EstimateConfig to_core_config(const confbal_run_config& c) {
  EstimateConfig config;
  config.forest.num_trees = c.trees;
  config.forest.mtry = c.mtry;
  config.forest.min_node = c.min_node;
  config.forest.max_depth = c.max_depth;
  config.forest.subsample_fraction = c.subsample_fraction;
  config.forest.mode = c.uniform_mode ? ForestMode::UniformRandomPartition
                                      : ForestMode::DataAdaptive;
  config.forest.uniform_depth = c.uniform_depth;
  config.fit_fraction = c.fit_fraction;
  config.lambda = c.lambda;
  config.lambda_grid = c.lambda_grid != 0;
  config.nonneg = c.nonneg != 0;
  config.bandwidth = c.bandwidth;
  config.solve.max_iter = static_cast<int>(c.max_iter);
  config.solve.tol = c.tol;
  config.seed = c.seed;
  if (c.forest_load) config.forest_load = c.forest_load;
  if (c.forest_save) config.forest_save = c.forest_save;
  config.record_trace = c.record_trace != 0;
  config.gram_stability = c.gram_stability != 0;
  return config;
}

confbal_table* make_table(std::vector<std::string> columns) {
  auto* t = new confbal_table;
  t->columns = std::move(columns);
  return t;
}

std::string fmt(double v) { return format_double(v); }

}  // namespace

extern "C" {

const char* confbal_version(void) { return "0.1.0"; }

const char* confbal_last_error(void) { return g_last_error.c_str(); }

const char* confbal_status_name(confbal_status status) {
  switch (status) {
    case CONFBAL_OK: return "CONFBAL_OK";
    case CONFBAL_ERR_NULL_POINTER: return "CONFBAL_ERR_NULL_POINTER";
    case CONFBAL_ERR_INVALID_ARGUMENT: return "CONFBAL_ERR_INVALID_ARGUMENT";
    case CONFBAL_ERR_PARSE: return "CONFBAL_ERR_PARSE";
    case CONFBAL_ERR_SCHEMA: return "CONFBAL_ERR_SCHEMA";
    case CONFBAL_ERR_INVARIANT: return "CONFBAL_ERR_INVARIANT";
    case CONFBAL_ERR_ZERO_VARIANCE: return "CONFBAL_ERR_ZERO_VARIANCE";
    case CONFBAL_ERR_DEGENERATE_SPLIT: return "CONFBAL_ERR_DEGENERATE_SPLIT";
    case CONFBAL_ERR_DEGENERATE_DATA: return "CONFBAL_ERR_DEGENERATE_DATA";
    case CONFBAL_ERR_NOT_CONVERGED: return "CONFBAL_ERR_NOT_CONVERGED";
    case CONFBAL_ERR_SINGULAR_SYSTEM: return "CONFBAL_ERR_SINGULAR_SYSTEM";
    case CONFBAL_ERR_DEGENERATE_WEIGHTS:
      return "CONFBAL_ERR_DEGENERATE_WEIGHTS";
    case CONFBAL_ERR_RESAMPLE_DEGENERATE:
      return "CONFBAL_ERR_RESAMPLE_DEGENERATE";
    case CONFBAL_ERR_IO: return "CONFBAL_ERR_IO";
    case CONFBAL_ERR_UNKNOWN: return "CONFBAL_ERR_UNKNOWN";
  }
  return "CONFBAL_ERR_UNKNOWN";
}

void confbal_set_threads(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

/* ---- datasets ---------------------------------------------------------- */

confbal_status confbal_dataset_create(const double* X, const double* y,
                                      const int32_t* a, int64_t n, int64_t p,
                                      confbal_dataset** out) {
  if (!X || !y || !a || !out) return null_pointer("X/y/a/out");
  return guarded([&] {
    MatrixXd xm(n, p);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < p; ++j) xm(i, j) = X[i * p + j];
    VectorXd yv(n);
    VectorXi av(n);
    for (int64_t i = 0; i < n; ++i) {
      yv[i] = y[i];
      av[i] = a[i];
    }
    *out = new confbal_dataset{
        Dataset::make(std::move(xm), std::move(av), std::move(yv))};
  });
}

confbal_status confbal_dataset_from_csv(const char* path, const char* outcome,
                                        const char* treatment,
                                        const char* covariates,
                                        confbal_dataset** out) {
  if (!path || !outcome || !treatment || !out)
    return null_pointer("path/outcome/treatment/out");
  return guarded([&] {
    CsvSchema schema;
    schema.outcome = outcome;
    schema.treatment = treatment;
    schema.covariates = split_list(covariates);
    *out = new confbal_dataset{load_csv(path, schema)};
  });
}

confbal_status confbal_dataset_save_csv(const confbal_dataset* d,
                                        const char* path) {
  if (!d || !path) return null_pointer("dataset/path");
  return guarded([&] { write_csv(d->rep, path); });
}

int64_t confbal_dataset_n(const confbal_dataset* d) {
  return d ? d->rep.n() : 0;
}

int64_t confbal_dataset_p(const confbal_dataset* d) {
  return d ? d->rep.p() : 0;
}

const char* confbal_dataset_covariate_name(const confbal_dataset* d,
                                           int64_t j) {
  if (!d || j < 0 || j >= d->rep.p()) return "";
  return d->rep.covariate_names[static_cast<size_t>(j)].c_str();
}

confbal_status confbal_dataset_treatment(const confbal_dataset* d,
                                         int32_t* out) {
  if (!d || !out) return null_pointer("dataset/out");
  for (int i = 0; i < d->rep.n(); ++i) out[i] = d->rep.A[i];
  return CONFBAL_OK;
}

void confbal_dataset_free(confbal_dataset* d) { delete d; }

/* ---- weighting / estimation ------------------------------------------- */

confbal_run_config confbal_run_config_default(void) {
  confbal_run_config c;
  std::memset(&c, 0, sizeof(c));
  c.method = "rf-kernel-mmd";
  c.trees = 1000;
  c.mtry = 0;
  c.min_node = 5;
  c.max_depth = -1;
  c.subsample_fraction = 0.632;
  c.uniform_mode = 0;
  c.uniform_depth = 6;
  c.fit_fraction = 0.5;
  c.lambda = -1.0;
  c.lambda_grid = 0;
  c.nonneg = 1;
  c.bandwidth = 0.0;
  c.max_iter = 50000;
  c.tol = 1e-10;
  c.seed = 0;
  return c;
}

confbal_status confbal_run_method(const confbal_dataset* d,
                                  const confbal_run_config* config,
                                  confbal_run** out) {
  if (!d || !config || !out) return null_pointer("dataset/config/out");
  if (!config->method) return null_pointer("config->method");
  return guarded([&] {
    const Method method = method_from_name(config->method);
    *out =
        new confbal_run{estimate_ate(d->rep, method, to_core_config(*config))};
  });
}

double confbal_run_tau(const confbal_run* run) {
  return run ? run->rep.tau_hat : std::nan("");
}

int64_t confbal_run_n(const confbal_run* run) {
  return run ? run->rep.weights.size() : 0;
}

confbal_status confbal_run_weights(const confbal_run* run, double* out) {
  if (!run || !out) return null_pointer("run/out");
  for (int i = 0; i < run->rep.weights.size(); ++i)
    out[i] = run->rep.weights[i];
  return CONFBAL_OK;
}

double confbal_run_objective(const confbal_run* run) {
  return run ? run->rep.solution.objective : std::nan("");
}

double confbal_run_constraint_residual(const confbal_run* run) {
  return run ? run->rep.solution.constraint_residual : std::nan("");
}

double confbal_run_kkt_residual(const confbal_run* run) {
  return run ? run->rep.solution.kkt_residual : std::nan("");
}

int64_t confbal_run_iterations(const confbal_run* run) {
  return run ? run->rep.solution.iterations : 0;
}

int confbal_run_converged(const confbal_run* run) {
  if (!run) return 0;
  const Method m = run->rep.method;
  if (m == Method::LogisticIpw || m == Method::RfIpw)
    return run->rep.propensity_converged ? 1 : 0;
  return run->rep.solution.converged ? 1 : 0;
}

double confbal_run_lambda(const confbal_run* run) {
  return run ? run->rep.lambda_used : std::nan("");
}

double confbal_run_gram_stability(const confbal_run* run) {
  return run ? run->rep.gram_stability : std::nan("");
}

int64_t confbal_run_trace_len(const confbal_run* run) {
  return run ? static_cast<int64_t>(run->rep.solution.trace.size()) : 0;
}

confbal_status confbal_run_trace(const confbal_run* run, double* out) {
  if (!run || !out) return null_pointer("run/out");
  for (size_t i = 0; i < run->rep.solution.trace.size(); ++i)
    out[i] = run->rep.solution.trace[i];
  return CONFBAL_OK;
}

confbal_status confbal_run_trace_constraint(const confbal_run* run,
                                            double* out) {
  if (!run || !out) return null_pointer("run/out");
  for (size_t i = 0; i < run->rep.solution.trace_constraint.size(); ++i)
    out[i] = run->rep.solution.trace_constraint[i];
  return CONFBAL_OK;
}

void confbal_run_free(confbal_run* run) { delete run; }

confbal_status confbal_bootstrap(const confbal_dataset* d,
                                 const confbal_run_config* config, int64_t B,
                                 double* se, double* estimates) {
  if (!d || !config || !se) return null_pointer("dataset/config/se");
  if (!config->method) return null_pointer("config->method");
  return guarded([&] {
    const Method method = method_from_name(config->method);
    const BootstrapResult result =
        bootstrap_se(d->rep, method, static_cast<int>(B), config->seed,
                     to_core_config(*config));
    *se = result.se;
    if (estimates)
      for (size_t b = 0; b < result.estimates.size(); ++b)
        estimates[b] = result.estimates[b];
  });
}

confbal_status confbal_export_gram(const confbal_dataset* d,
                                   const confbal_run_config* config,
                                   const char* csv_path,
                                   const char* cache_path) {
  if (!d || !config) return null_pointer("dataset/config");
  if (!config->method) return null_pointer("config->method");
  return guarded([&] {
    const Method method = method_from_name(config->method);
    const EstimateConfig core = to_core_config(*config);
    GramMatrix gram;
    uint64_t fkey = 0, dkey = 0;
    if (method == Method::RfKernelMmd) {
      const RfKernelParts parts = rf_kernel_parts(d->rep, core);
      gram = parts.gram;
      fkey = forest_hash(parts.forest);
      dkey = matrix_hash(parts.eval.X);
    } else if (method == Method::GaussianKernelMmd) {
      const double bandwidth = core.bandwidth > 0.0
                                   ? core.bandwidth
                                   : median_heuristic(d->rep.X, core.seed);
      gram = gaussian_gram(d->rep.X, bandwidth);
      dkey = matrix_hash(d->rep.X);
    } else {
      raise(ErrorCode::InvalidArgument,
            "gram export applies to the balancing methods");
    }
    if (csv_path) save_gram_csv(gram, csv_path);
    if (cache_path) save_gram_cache(gram, fkey, dkey, cache_path);
  });
}

/* ---- tables ------------------------------------------------------------ */

int64_t confbal_table_rows(const confbal_table* t) {
  return t ? static_cast<int64_t>(t->rows.size()) : 0;
}

int64_t confbal_table_cols(const confbal_table* t) {
  return t ? static_cast<int64_t>(t->columns.size()) : 0;
}

const char* confbal_table_col_name(const confbal_table* t, int64_t j) {
  if (!t || j < 0 || j >= confbal_table_cols(t)) return "";
  return t->columns[static_cast<size_t>(j)].c_str();
}

const char* confbal_table_cell(const confbal_table* t, int64_t i, int64_t j) {
  if (!t || i < 0 || i >= confbal_table_rows(t) || j < 0 ||
      j >= confbal_table_cols(t))
    return "";
  return t->rows[static_cast<size_t>(i)][static_cast<size_t>(j)].c_str();
}

void confbal_table_free(confbal_table* t) { delete t; }

/* ---- simulation -------------------------------------------------------- */

confbal_status confbal_generate(const char* model, int64_t n, int64_t p,
                                double rho, uint64_t seed,
                                confbal_dataset** out, double* true_tau) {
  if (!model || !out) return null_pointer("model/out");
  return guarded([&] {
    DgpSpec spec;
    spec.model = dgp_model_from_name(model);
    spec.n = static_cast<int>(n);
    spec.p = static_cast<int>(p);
    spec.rho = std::isnan(rho) ? default_rho(spec.model) : rho;
    spec.seed = seed;
    SimulatedSample sample = generate(spec);
    if (true_tau) *true_tau = sample.true_tau;
    *out = new confbal_dataset{std::move(sample.dataset)};
  });
}

confbal_status confbal_experiment(const char* model, int64_t n, int64_t p,
                                  double rho, const char* methods,
                                  int64_t reps, uint64_t base_seed,
                                  const confbal_run_config* config,
                                  confbal_table** rows,
                                  confbal_table** summary) {
  if (!model || !methods || !config)
    return null_pointer("model/methods/config");
  return guarded([&] {
    DgpSpec spec;
    spec.model = dgp_model_from_name(model);
    spec.n = static_cast<int>(n);
    spec.p = static_cast<int>(p);
    spec.rho = std::isnan(rho) ? default_rho(spec.model) : rho;

    std::vector<Method> method_list;
    for (const std::string& name : split_list(methods))
      method_list.push_back(method_from_name(name));
    if (method_list.empty())
      raise(ErrorCode::InvalidArgument, "no methods given");

    const SimulationReport report =
        run_experiment(spec, method_list, static_cast<int>(reps), base_seed,
                       to_core_config(*config));

    const std::string model_name = dgp_model_name(spec.model);
    if (rows) {
      confbal_table* t = make_table({"model", "n", "p", "method", "replicate",
                                     "tau_hat", "error", "ok", "message"});
      for (const auto& row : report.rows)
        t->rows.push_back({model_name, std::to_string(spec.n),
                           std::to_string(spec.p), method_name(row.method),
                           std::to_string(row.replicate),
                           row.ok ? fmt(row.tau_hat) : "nan",
                           row.ok ? fmt(row.error) : "nan",
                           row.ok ? "1" : "0", row.failure});
      *rows = t;
    }
    if (summary) {
      confbal_table* t =
          make_table({"model", "n", "p", "method", "completed", "mean_bias",
                      "sd", "q1", "median", "q3"});
      for (const auto& s : report.summaries)
        t->rows.push_back({model_name, std::to_string(spec.n),
                           std::to_string(spec.p), method_name(s.method),
                           std::to_string(s.completed), fmt(s.mean_bias),
                           fmt(s.sd), fmt(s.q1), fmt(s.median), fmt(s.q3)});
      *summary = t;
    }
  });
}

/* ---- diagnostics -------------------------------------------------------- */

confbal_status confbal_balance_table(const confbal_dataset* d,
                                     const double* weights,
                                     confbal_table** out) {
  if (!d || !weights || !out) return null_pointer("dataset/weights/out");
  return guarded([&] {
    VectorXd w(d->rep.n());
    for (int i = 0; i < d->rep.n(); ++i) w[i] = weights[i];
    const BalanceReport report = balance_report(d->rep, w);
    confbal_table* t =
        make_table({"covariate", "smd_before", "smd_after", "reduction"});
    for (const auto& row : report.rows)
      t->rows.push_back({row.name, fmt(row.smd_before), fmt(row.smd_after),
                         fmt(row.reduction)});
    *out = t;
  });
}

confbal_status confbal_association_table(const confbal_dataset* d,
                                         int discrete_threshold,
                                         confbal_table** out) {
  if (!d || !out) return null_pointer("dataset/out");
  return guarded([&] {
    const AssociationReport report =
        association_stats(d->rep, discrete_threshold);
    confbal_table* t =
        make_table({"covariate", "kind", "stat_treatment", "p_treatment",
                    "stat_outcome", "p_outcome"});
    for (const auto& row : report.rows)
      t->rows.push_back({row.name, row.kind, fmt(row.stat_treatment),
                         fmt(row.p_treatment), fmt(row.stat_outcome),
                         fmt(row.p_outcome)});
    *out = t;
  });
}

confbal_status confbal_love_table(const confbal_dataset* d,
                                  const double* weights, confbal_table** out) {
  if (!d || !weights || !out) return null_pointer("dataset/weights/out");
  return guarded([&] {
    VectorXd w(d->rep.n());
    for (int i = 0; i < d->rep.n(); ++i) w[i] = weights[i];
    const BalanceReport report = balance_report(d->rep, w);
    confbal_table* t = make_table({"covariate", "phase", "smd"});
    for (const auto& row : love_plot_rows(report))
      t->rows.push_back({row.name, row.phase, fmt(row.value)});
    *out = t;
  });
}

}  // extern "C"
