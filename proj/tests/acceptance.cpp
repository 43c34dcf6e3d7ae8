// Acceptance suite: one test case per numbered criterion, each printing a
// single PASS/FAIL line. The replicated-simulation cases run a reduced
// replicate count sized for CI; CONFBAL_ACCEPT_FULL=1 switches to the full
// protocol.
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "diagnostics.hpp"
#include "doctest.h"
#include "estimators.hpp"
#include "kernel.hpp"
#include "oracles.hpp"
#include "rng.hpp"
#include "simulation.hpp"
#include "stats.hpp"
#include "weights.hpp"

using namespace confbal;
namespace fs = std::filesystem;

namespace {

bool full_protocol() {
  const char* env = std::getenv("CONFBAL_ACCEPT_FULL");
  return env && std::string(env) == "1";
}

struct Stopwatch {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

void report(int criterion, const std::string& name, bool pass,
            const std::string& detail, double seconds) {
  std::printf("ACCEPTANCE %02d %-34s %s  [%s, %.1fs]\n", criterion,
              name.c_str(), pass ? "PASS" : "FAIL", detail.c_str(), seconds);
  std::fflush(stdout);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

double sd_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / (v.size() - 1));
}

/// Summary of one simulation cell keyed by method.
std::map<Method, MethodSummary> summarize_cell(
    DgpModel model, int n, int p, const std::vector<Method>& methods,
    int reps, uint64_t base_seed, const EstimateConfig& config) {
  DgpSpec spec;
  spec.model = model;
  spec.n = n;
  spec.p = p;
  spec.rho = default_rho(model);
  const SimulationReport rep =
      run_experiment(spec, methods, reps, base_seed, config);
  std::map<Method, MethodSummary> out;
  for (const MethodSummary& s : rep.summaries) out[s.method] = s;
  return out;
}

EstimateConfig simulation_config(int trees) {
  EstimateConfig config;
  config.forest.num_trees = trees;
  config.solve.tol = 1e-9;
  config.solve.max_iter = 30000;
  return config;
}

}  // namespace

TEST_CASE("criterion 01 brute-force mmd equivalence") {
  Stopwatch watch;
  std::mt19937_64 gen(101);
  std::uniform_real_distribution<double> unif(0.0, 2.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 3 + static_cast<int>(gen() % 18);  // n <= 20
    const int n1 = 1 + static_cast<int>(gen() % (n - 1));
    const GramMatrix gram = oracles::random_psd_gram(gen, n);
    const VectorXi A = oracles::half_and_half(n, n1);
    VectorXd w(n);
    for (int i = 0; i < n; ++i) w[i] = unif(gen);
    for (int a : {0, 1}) {
      const double lib = mmd_squared(gram, w, a, A);
      const double ref = oracles::mmd_squared_bruteforce(gram.values, w, a, A);
      worst = std::max(worst, std::fabs(lib - ref));
    }
  }
  const double elapsed = watch.seconds();
  const bool pass = worst <= 1e-12 && elapsed < 5.0;
  report(1, "brute-force mmd equivalence", pass,
         "max |diff| = " + std::to_string(worst), elapsed);
  CHECK(worst <= 1e-12);
  CHECK(elapsed < 5.0);
}

TEST_CASE("criterion 02 qp oracle equivalence") {
  Stopwatch watch;
  std::mt19937_64 gen(202);
  SolveOptions opts;
  opts.tol = 0.0;
  opts.max_iter = 300000;

  double worst_eq = 0.0;
  const double lambdas[3] = {1e-3, 1.0, 10.0};
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 5 + static_cast<int>(gen() % 26);  // n <= 30
    const int n1 = 2 + static_cast<int>(gen() % (n - 3));
    const GramMatrix gram = oracles::random_psd_gram(gen, n);
    const VectorXi A = oracles::half_and_half(n, n1);
    BalancingProblem problem{gram, A, lambdas[trial % 3], false};
    const WeightSolution sol = solve_weights(problem, opts);
    const VectorXd oracle = kkt_solve_equality(problem);
    worst_eq = std::max(worst_eq, (sol.w - oracle).cwiseAbs().maxCoeff());
  }

  double worst_grid = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    const int n = trial == 2 ? 8 : 6;
    const int n1 = n / 2;
    const GramMatrix gram = oracles::random_psd_gram(gen, n, true);
    const VectorXi A = oracles::half_and_half(n, n1);
    BalancingProblem problem{gram, A, 1.0, true};
    const WeightSolution sol = solve_weights(problem, opts);
    const VectorXd grid =
        oracles::grid_search_nonneg(gram.values, A, 1.0, 0.01);
    worst_grid = std::max(worst_grid, (sol.w - grid).cwiseAbs().maxCoeff());
  }

  const double elapsed = watch.seconds();
  const bool pass = worst_eq <= 1e-6 && worst_grid <= 0.01 && elapsed < 60.0;
  report(2, "qp oracle equivalence", pass,
         "equality max |diff| = " + std::to_string(worst_eq) +
             ", grid max |diff| = " + std::to_string(worst_grid),
         elapsed);
  CHECK(worst_eq <= 1e-6);
  CHECK(worst_grid <= 0.01);
  CHECK(elapsed < 60.0);
}

TEST_CASE("criterion 03 kernel properties") {
  Stopwatch watch;
  Rng rng(303);
  bool all_pass = true;
  double worst_ratio = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n_fit = 20 + rng.uniform_int(40);
    const int p = 1 + rng.uniform_int(4);
    const int m = 3 + rng.uniform_int(38);
    MatrixXd X(n_fit, p);
    MatrixXd R(n_fit, 2);
    for (int i = 0; i < n_fit; ++i) {
      for (int j = 0; j < p; ++j) X(i, j) = rng.gaussian();
      R(i, 0) = X(i, 0) + 0.5 * rng.gaussian();
      R(i, 1) = rng.gaussian();
    }
    ForestParams params;
    params.num_trees = m;
    params.min_node = 1 + rng.uniform_int(5);
    params.seed = 9000 + trial;
    if (trial % 4 == 0) {
      params.mode = ForestMode::UniformRandomPartition;
      params.uniform_depth = 1 + rng.uniform_int(5);
    }
    const Forest forest = grow_forest(X, R, params);

    const int n_eval = 2 + rng.uniform_int(49);  // n <= 50
    MatrixXd X_eval(n_eval, p);
    for (int i = 0; i < n_eval; ++i)
      for (int j = 0; j < p; ++j) X_eval(i, j) = rng.gaussian();
    const GramMatrix gram = rf_gram(forest, X_eval);

    bool ok = true;
    for (int i = 0; i < n_eval && ok; ++i) {
      if (gram.values(i, i) != 1.0) ok = false;
      for (int j = 0; j < n_eval && ok; ++j) {
        if (gram.values(i, j) != gram.values(j, i)) ok = false;
        if (gram.values(i, j) < 0.0 || gram.values(i, j) > 1.0) ok = false;
      }
    }
    const PsdCheck psd = psd_check(gram, 1e-8);
    if (psd.lambda_max > 0.0)
      worst_ratio = std::max(worst_ratio, -psd.lambda_min / psd.lambda_max);
    all_pass = all_pass && ok && psd.pass;
  }
  const double elapsed = watch.seconds();
  const bool pass = all_pass && elapsed < 120.0;
  report(3, "kernel properties", pass,
         "worst -lambda_min/lambda_max = " + std::to_string(worst_ratio),
         elapsed);
  CHECK(all_pass);
  CHECK(elapsed < 120.0);
}

TEST_CASE("criterion 04 limiting-weights trend") {
  Stopwatch watch;
  // Two-covariate data model with a known logistic propensity; the solved
  // weights are compared against the normalized inverse propensity weights
  // with pi-bar estimated by n1/n.
  const std::vector<int> sizes = {250, 1000, 4000};
  const int reps = 20;
  std::vector<double> mean_gap;
  for (int n : sizes) {
    std::vector<double> gaps(reps, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int r = 0; r < reps; ++r) {
      Rng rng(derive_seed(404, n * 1000 + r));
      MatrixXd X(n, 2);
      VectorXi A(n);
      VectorXd Y(n);
      VectorXd pi(n);
      for (int i = 0; i < n; ++i) {
        X(i, 0) = rng.gaussian();
        X(i, 1) = rng.gaussian();
        pi[i] = 1.0 / (1.0 + std::exp(-(0.5 * X(i, 0) - 0.5 * X(i, 1))));
        A[i] = rng.bernoulli(pi[i]) ? 1 : 0;
        Y[i] = X(i, 0) - X(i, 1) + A[i] + rng.gaussian();
      }
      const Dataset d = Dataset::make(X, A, Y);
      EstimateConfig config;
      config.forest.num_trees = 300;
      // Kernel resolution grows with the fit sample and the ridge decays
      // faster than 1/n; with lambda pinned at 1/n every kernel direction
      // keeps an n-independent shrinkage factor and the gap plateaus.
      config.forest.min_node = static_cast<int>(std::pow(n / 2.0, 0.67));
      config.lambda = 1.0 / std::pow(n / 2.0, 1.5);
      config.solve.tol = 1e-10;
      config.solve.max_iter = 50000;
      config.seed = derive_seed(405, n * 1000 + r);
      const AteEstimate est = estimate_ate(d, Method::RfKernelMmd, config);

      // Gap on the weighting sample (rows with nonzero weight).
      int n1 = 0, n_eval = 0;
      for (int i = 0; i < n; ++i)
        if (est.weights[i] != 0.0) {
          ++n_eval;
          n1 += d.A[i];
        }
      const double pi_bar = static_cast<double>(n1) / n_eval;
      double gap = 0.0;
      for (int i = 0; i < n; ++i) {
        if (est.weights[i] == 0.0) continue;
        const double w_star = d.A[i] == 1 ? pi_bar / pi[i]
                                          : (1.0 - pi_bar) / (1.0 - pi[i]);
        gap += (est.weights[i] - w_star) * (est.weights[i] - w_star);
      }
      gaps[r] = gap / n_eval;
    }
    mean_gap.push_back(mean_of(gaps));
  }
  const double elapsed = watch.seconds();
  const bool monotone =
      mean_gap[1] < mean_gap[0] && mean_gap[2] < mean_gap[1];
  const bool pass = monotone && elapsed < 900.0;
  std::ostringstream detail;
  detail << "mean gap " << mean_gap[0] << " -> " << mean_gap[1] << " -> "
         << mean_gap[2];
  report(4, "limiting-weights trend", pass, detail.str(), elapsed);
  CHECK(monotone);
  CHECK(elapsed < 900.0);
}

TEST_CASE("criterion 05 toy balance ordering") {
  Stopwatch watch;
  const int reps = full_protocol() ? 100 : 50;
  bool pass_all = true;
  std::ostringstream detail;
  for (int p : {50, 200}) {
    int wins = 0;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) reduction(+ : wins)
#endif
    for (int r = 0; r < reps; ++r) {
      DgpSpec spec;
      spec.model = DgpModel::Toy;
      spec.n = 500;
      spec.p = p;
      spec.rho = -0.25;
      spec.seed = derive_seed(505, p * 1000 + r);
      const SimulatedSample sample = generate(spec);
      const Dataset& d = sample.dataset;

      EstimateConfig config = simulation_config(500);
      config.forest.min_node = 25;
      config.forest.mtry = p / 3;
      config.lambda = 1e-7;
      config.seed = derive_seed(506, p * 1000 + r);

      // The toy table builds the kernel on the same sample it balances, so
      // the proposed weights come from the module operations directly; the
      // comparators run their usual full-sample pipelines.
      const StandardizedPair pair = standardize_pair(d.Y, d.A);
      MatrixXd responses(d.n(), 2);
      responses.col(0) = pair.y_tilde;
      responses.col(1) = pair.a_tilde;
      ForestParams params = config.forest;
      params.seed = config.seed;
      const Forest forest = grow_forest(d.X, responses, params);
      const GramMatrix gram = rf_gram(forest, d.X);
      BalancingProblem problem{gram, d.A, config.lambda, true};
      const WeightSolution proposed_sol = solve_weights(problem, config.solve);

      auto score = [&](const VectorXd& w) {
        const BalanceTableRow row = balance_table_row(sample, w, "method");
        return 0.5 * (std::fabs(row.treatment_mean - row.pop_mean) +
                      std::fabs(row.control_mean - row.pop_mean));
      };
      const double proposed = score(proposed_sol.w);
      const double gaussian =
          score(estimate_ate(d, Method::GaussianKernelMmd, config).weights);
      const double rf_ipw =
          score(estimate_ate(d, Method::RfIpw, config).weights);
      if (proposed < gaussian && proposed < rf_ipw) wins += 1;
    }
    const double fraction = static_cast<double>(wins) / reps;
    detail << "p=" << p << " win fraction " << fraction << "; ";
    pass_all = pass_all && fraction >= 0.6;
  }
  const double elapsed = watch.seconds();
  const bool pass = pass_all && elapsed < 1800.0;
  report(5, "toy balance ordering", pass, detail.str(), elapsed);
  CHECK(pass_all);
  CHECK(elapsed < 1800.0);
}

TEST_CASE("criterion 06 model 1 bias ordering") {
  Stopwatch watch;
  const int reps = full_protocol() ? 200 : 50;
  const std::vector<Method> methods = {
      Method::RfKernelMmd, Method::GaussianKernelMmd, Method::RfIpw};
  EstimateConfig config = simulation_config(500);
  config.forest.mtry = 20;
  config.lambda = 1e-5;
  const auto cell =
      summarize_cell(DgpModel::Model1, 500, 100, methods, reps, 606, config);
  const MethodSummary rf = cell.at(Method::RfKernelMmd);
  const MethodSummary gauss = cell.at(Method::GaussianKernelMmd);
  const MethodSummary ipw = cell.at(Method::RfIpw);

  const bool ordering = std::fabs(rf.mean_bias) < std::fabs(gauss.mean_bias) &&
                        std::fabs(rf.mean_bias) < std::fabs(ipw.mean_bias);
  // Centering: |mean estimate - tau| within 3 Monte Carlo standard errors.
  const double mc_se = rf.sd / std::sqrt(static_cast<double>(rf.completed));
  const bool centered = std::fabs(rf.mean_bias) <= 3.0 * mc_se;

  const double elapsed = watch.seconds();
  const bool pass = ordering && centered;
  std::ostringstream detail;
  detail << "mean bias: rf " << rf.mean_bias << ", gaussian "
         << gauss.mean_bias << ", rf-ipw " << ipw.mean_bias << "; 3*mc_se = "
         << 3.0 * mc_se << "; tau = " << model1_true_tau(0.25);
  report(6, "model 1 bias ordering", pass, detail.str(), elapsed);
  CHECK(ordering);
  CHECK(centered);
}

TEST_CASE("criterion 07 model 2 bias ordering") {
  Stopwatch watch;
  const int reps = full_protocol() ? 200 : 50;
  const std::vector<Method> methods = {
      Method::RfKernelMmd, Method::GaussianKernelMmd, Method::LogisticIpw,
      Method::RfIpw};
  EstimateConfig config = simulation_config(500);
  config.forest.min_node = 40;
  config.forest.mtry = 33;
  config.lambda = 1e-7;
  const auto cell =
      summarize_cell(DgpModel::Model2, 500, 100, methods, reps, 707, config);
  const double rf = std::fabs(cell.at(Method::RfKernelMmd).mean_bias);
  bool smallest = true;
  std::ostringstream detail;
  detail << "|mean bias|: rf " << rf;
  for (Method m : {Method::GaussianKernelMmd, Method::LogisticIpw,
                   Method::RfIpw}) {
    const double other = std::fabs(cell.at(m).mean_bias);
    detail << ", " << method_name(m) << " " << other;
    smallest = smallest && rf < other;
  }
  const double elapsed = watch.seconds();
  report(7, "model 2 bias ordering", smallest, detail.str(), elapsed);
  CHECK(smallest);
}

TEST_CASE("criterion 08 model 3 competitiveness") {
  Stopwatch watch;
  // n = 250 from the default grid: with 100 covariates both estimators face
  // a genuinely high-dimensional design and their mean biases are
  // well-defined quantities rather than tail-dominated draws.
  const int reps = full_protocol() ? 200 : 100;
  const std::vector<Method> methods = {Method::RfKernelMmd,
                                       Method::LogisticIpw};
  EstimateConfig config = simulation_config(500);
  config.forest.min_node = 25;
  config.forest.mtry = 33;
  config.lambda = 1e-7;
  const auto cell =
      summarize_cell(DgpModel::Model3, 250, 100, methods, reps, 808, config);
  const double rf = std::fabs(cell.at(Method::RfKernelMmd).mean_bias);
  const double logistic = std::fabs(cell.at(Method::LogisticIpw).mean_bias);
  const bool within = rf <= 2.0 * logistic;
  const double elapsed = watch.seconds();
  std::ostringstream detail;
  detail << "|mean bias|: rf " << rf << ", logistic " << logistic
         << " (bar = 2x)";
  report(8, "model 3 competitiveness", within, detail.str(), elapsed);
  CHECK(within);
}

TEST_CASE("criterion 09 diagnostics trend") {
  Stopwatch watch;
  // Labeled synthetic data: columns 1-10 confounders, 11-20 instruments,
  // 21-30 precision, 31-40 null; binary outcome so both association axes
  // are defined.
  const int n = 2000, p = 40;
  Rng rng(909);
  MatrixXd X(n, p);
  VectorXi A(n);
  VectorXd Y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) X(i, j) = rng.gaussian();
    double eta_a = 0.0, eta_y = 0.0;
    for (int j = 0; j < 10; ++j) eta_a += 1.5 * X(i, j) / std::sqrt(10.0);
    for (int j = 10; j < 20; ++j) eta_a += 1.0 * X(i, j) / std::sqrt(10.0);
    for (int j = 0; j < 10; ++j) eta_y += 2.0 * X(i, j) / std::sqrt(10.0);
    for (int j = 20; j < 30; ++j) eta_y += 1.5 * X(i, j) / std::sqrt(10.0);
    A[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-eta_a))) ? 1 : 0;
    Y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-eta_y))) ? 1.0 : 0.0;
  }
  const Dataset d = Dataset::make(X, A, Y);

  EstimateConfig config = simulation_config(400);
  config.forest.min_node = 100;
  config.lambda = 1.0 / std::pow(1000.0, 1.5);
  config.solve.tol = 1e-10;
  config.seed = 910;
  const AteEstimate est = estimate_ate(d, Method::RfKernelMmd, config);
  const BalanceReport balance = balance_report(d, est.weights);
  const AssociationReport assoc = association_stats(d, 10);

  std::map<std::string, double> reduction, min_stat;
  for (const auto& row : balance.rows) reduction[row.name] = row.reduction;
  for (const auto& row : assoc.rows)
    min_stat[row.name] = std::min(row.stat_treatment, row.stat_outcome);
  std::vector<double> x, y;
  for (const auto& [name, value] : reduction) {
    x.push_back(value);
    y.push_back(min_stat.at(name));
  }
  const double rho = spearman(x, y);
  const double elapsed = watch.seconds();
  const bool pass = rho > 0.3;
  report(9, "diagnostics trend", pass,
         "spearman(reduction, min stat) = " + std::to_string(rho), elapsed);
  CHECK(rho > 0.3);
}

TEST_CASE("criterion 10 end-to-end cli with bootstrap") {
  Stopwatch watch;
  const fs::path data = fs::path(CONFBAL_DATA_DIR) / "synthetic_rhc.csv";
  REQUIRE(fs::exists(data));
  const fs::path out_root =
      fs::temp_directory_path() / "confbal_acceptance_cli";
  fs::remove_all(out_root);
  fs::create_directories(out_root);

  bool all_ok = true;
  std::ostringstream detail;
  for (const std::string method :
       {"rf-kernel-mmd", "gaussian-mmd", "logistic-ipw", "rf-ipw"}) {
    const fs::path out = out_root / method;
    std::ostringstream command;
    command << CONFBAL_CLI_PATH << " ate --input " << data
            << " --outcome death30 --treatment rhc --method " << method
            << " --trees 150 --bootstrap 200 --seed 1000 --out-dir " << out
            << " > /dev/null 2>&1";
    const int code = WEXITSTATUS(std::system(command.str().c_str()));
    bool ok = code == 0;

    double se = std::numeric_limits<double>::quiet_NaN();
    double tau = std::numeric_limits<double>::quiet_NaN();
    if (ok) {
      std::ifstream in(out / "estimate.csv");
      std::string header, row;
      std::getline(in, header);
      std::getline(in, row);
      std::stringstream cells(row);
      std::string cell;
      std::vector<std::string> fields;
      while (std::getline(cells, cell, ',')) fields.push_back(cell);
      ok = fields.size() >= 7;
      if (ok) {
        tau = std::stod(fields[1]);
        se = std::stod(fields[5]);
        ok = std::isfinite(tau) && std::isfinite(se) && se > 0.0;
      }
      // Sidecar with all 200 bootstrap estimates.
      std::ifstream sidecar(out / "bootstrap_estimates.csv");
      int lines = -1;
      std::string l;
      while (std::getline(sidecar, l)) ++lines;
      ok = ok && lines == 200;
    }
    detail << method << ": tau " << tau << " se " << se << "; ";
    all_ok = all_ok && ok;
  }
  const double elapsed = watch.seconds();
  const bool pass = all_ok && elapsed < 1200.0;
  report(10, "end-to-end cli with bootstrap", pass, detail.str(), elapsed);
  CHECK(all_ok);
  CHECK(elapsed < 1200.0);
}
