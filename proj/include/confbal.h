/* confbal: confounder-adaptive balancing weights for treatment effect
 * estimation. C interface to the shared library; every call that can fail
 * returns a confbal_status, with a human-readable message available from
 * confbal_last_error() on the failing thread. Handles are opaque and must be
 * released with their matching *_free function.
 */
#ifndef CONFBAL_H
#define CONFBAL_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum confbal_status {
  CONFBAL_OK = 0,
  CONFBAL_ERR_NULL_POINTER = 1,
  CONFBAL_ERR_INVALID_ARGUMENT = 2,
  CONFBAL_ERR_PARSE = 3,
  CONFBAL_ERR_SCHEMA = 4,
  CONFBAL_ERR_INVARIANT = 5,
  CONFBAL_ERR_ZERO_VARIANCE = 6,
  CONFBAL_ERR_DEGENERATE_SPLIT = 7,
  CONFBAL_ERR_DEGENERATE_DATA = 8,
  CONFBAL_ERR_NOT_CONVERGED = 9,
  CONFBAL_ERR_SINGULAR_SYSTEM = 10,
  CONFBAL_ERR_DEGENERATE_WEIGHTS = 11,
  CONFBAL_ERR_RESAMPLE_DEGENERATE = 12,
  CONFBAL_ERR_IO = 13,
  CONFBAL_ERR_UNKNOWN = 14
} confbal_status;

typedef struct confbal_dataset confbal_dataset;
typedef struct confbal_run confbal_run;
typedef struct confbal_table confbal_table;

const char* confbal_version(void);

/* Message from the most recent failing call on this thread. */
const char* confbal_last_error(void);

/* Name of a status code, e.g. "CONFBAL_ERR_SCHEMA". */
const char* confbal_status_name(confbal_status status);

/* Caps internal parallelism (0 = library default). */
void confbal_set_threads(int threads);

/* ---- datasets ---------------------------------------------------------- */

/* X is row-major n x p; a holds 0/1 treatment labels. */
confbal_status confbal_dataset_create(const double* X, const double* y,
                                      const int32_t* a, int64_t n, int64_t p,
                                      confbal_dataset** out);

/* covariates: comma-separated column names, or NULL/"" meaning every column
 * that is neither outcome nor treatment, in file order. */
confbal_status confbal_dataset_from_csv(const char* path, const char* outcome,
                                        const char* treatment,
                                        const char* covariates,
                                        confbal_dataset** out);

confbal_status confbal_dataset_save_csv(const confbal_dataset* d,
                                        const char* path);

int64_t confbal_dataset_n(const confbal_dataset* d);
int64_t confbal_dataset_p(const confbal_dataset* d);
const char* confbal_dataset_covariate_name(const confbal_dataset* d,
                                           int64_t j);

/* Copies the 0/1 treatment labels into a buffer of length n. */
confbal_status confbal_dataset_treatment(const confbal_dataset* d,
                                         int32_t* out);

void confbal_dataset_free(confbal_dataset* d);

/* ---- weighting / estimation ------------------------------------------- */

typedef struct confbal_run_config {
  const char* method; /* rf-kernel-mmd | gaussian-mmd | logistic-ipw | rf-ipw */
  int trees;
  int mtry;      /* 0 = ceil(sqrt(p)) */
  int min_node;
  int max_depth; /* < 0 = unbounded */
  double subsample_fraction;
  int uniform_mode;  /* nonzero = uniform random partition forest */
  int uniform_depth; /* levels k in uniform mode */
  double fit_fraction;
  double lambda;   /* < 0 = 1/n of the weighting sample */
  int lambda_grid; /* nonzero = pick lambda from {1,...,1e-6}/n */
  int nonneg;      /* enforce w >= 0 (default on) */
  double bandwidth; /* Gaussian kernel; <= 0 = median heuristic */
  int64_t max_iter;
  double tol;
  uint64_t seed;
  const char* forest_load; /* reuse a saved forest instead of fitting */
  const char* forest_save; /* persist the fitted forest */
  int record_trace;
  int gram_stability; /* also compute the tree-count stability diagnostic */
} confbal_run_config;

confbal_run_config confbal_run_config_default(void);

/* Runs the selected method end to end (weights plus point estimate). */
confbal_status confbal_run_method(const confbal_dataset* d,
                                  const confbal_run_config* config,
                                  confbal_run** out);

double confbal_run_tau(const confbal_run* run);
int64_t confbal_run_n(const confbal_run* run);
confbal_status confbal_run_weights(const confbal_run* run, double* out);
double confbal_run_objective(const confbal_run* run);
double confbal_run_constraint_residual(const confbal_run* run);
double confbal_run_kkt_residual(const confbal_run* run);
int64_t confbal_run_iterations(const confbal_run* run);
int confbal_run_converged(const confbal_run* run);
double confbal_run_lambda(const confbal_run* run);
double confbal_run_gram_stability(const confbal_run* run);
int64_t confbal_run_trace_len(const confbal_run* run);
confbal_status confbal_run_trace(const confbal_run* run, double* out);
/* Per-iteration worst group-sum residual, same length as the trace. */
confbal_status confbal_run_trace_constraint(const confbal_run* run,
                                            double* out);
void confbal_run_free(confbal_run* run);

/* Nonparametric bootstrap of the full pipeline. estimates may be NULL or a
 * buffer of length B (failed resamples appear as NaN). */
confbal_status confbal_bootstrap(const confbal_dataset* d,
                                 const confbal_run_config* config, int64_t B,
                                 double* se, double* estimates);

/* Writes the kernel Gram the configured balancing method would use. Either
 * path may be NULL: csv_path gets a dense matrix, cache_path a binary file
 * keyed by the forest and data hashes. */
confbal_status confbal_export_gram(const confbal_dataset* d,
                                   const confbal_run_config* config,
                                   const char* csv_path,
                                   const char* cache_path);

/* ---- tables ------------------------------------------------------------ */

/* Tabular results are returned as string-cell tables; numeric cells are
 * pre-formatted with enough digits to round-trip doubles. */
int64_t confbal_table_rows(const confbal_table* t);
int64_t confbal_table_cols(const confbal_table* t);
const char* confbal_table_col_name(const confbal_table* t, int64_t j);
const char* confbal_table_cell(const confbal_table* t, int64_t i, int64_t j);
void confbal_table_free(confbal_table* t);

/* ---- simulation -------------------------------------------------------- */

/* model: toy | model1 | model2 | model3. rho: NaN = model default. true_tau
 * may be NULL. */
confbal_status confbal_generate(const char* model, int64_t n, int64_t p,
                                double rho, uint64_t seed,
                                confbal_dataset** out, double* true_tau);

/* Replicated experiment for one (model, n, p) cell. methods is a
 * comma-separated list. Row table columns: model,n,p,method,replicate,
 * tau_hat,error,ok,message. Summary columns: model,n,p,method,completed,
 * mean_bias,sd,q1,median,q3. Either out table may be NULL. */
confbal_status confbal_experiment(const char* model, int64_t n, int64_t p,
                                  double rho, const char* methods,
                                  int64_t reps, uint64_t base_seed,
                                  const confbal_run_config* config,
                                  confbal_table** rows,
                                  confbal_table** summary);

/* ---- diagnostics -------------------------------------------------------- */

/* Columns: covariate,smd_before,smd_after,reduction (sorted by reduction). */
confbal_status confbal_balance_table(const confbal_dataset* d,
                                     const double* weights,
                                     confbal_table** out);

/* Columns: covariate,kind,stat_treatment,p_treatment,stat_outcome,p_outcome. */
confbal_status confbal_association_table(const confbal_dataset* d,
                                         int discrete_threshold,
                                         confbal_table** out);

/* Long format for love plots. Columns: covariate,phase,smd. */
confbal_status confbal_love_table(const confbal_dataset* d,
                                  const double* weights, confbal_table** out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* CONFBAL_H */
