// cgpnet: simulate, estimate, evaluate, detrend and benchmark from the shell.
// Machine-readable summaries go to stdout, progress and errors to stderr.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "cgpnet/baselines.hpp"
#include "cgpnet/datagen.hpp"
#include "cgpnet/evaluation.hpp"
#include "cgpnet/io.hpp"
#include "cgpnet/solver.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace cgpnet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitNotConverged = 2;

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

// Doubles go through format_double so files stay lossless and stable.
ordered_json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return ordered_json::parse(format_double(v));
}

ordered_json num_array(const std::vector<double>& v) {
  ordered_json a = ordered_json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

ordered_json matrix_json(const Matrix<double>& m) {
  ordered_json rows = ordered_json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row;
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(num_array(row));
  }
  return rows;
}

Matrix<double> matrix_from_json(const ordered_json& rows) {
  const Index n = static_cast<Index>(rows.size());
  if (n == 0) throw IoError("empty matrix in JSON");
  const Index c = static_cast<Index>(rows.at(0).size());
  Matrix<double> m(n, c);
  for (Index r = 0; r < n; ++r) {
    if (static_cast<Index>(rows.at(r).size()) != c) throw IoError("ragged matrix in JSON");
    for (Index j = 0; j < c; ++j) m(r, j) = rows.at(r).at(j).get<double>();
  }
  return m;
}

ordered_json coefficients_json(const CoefficientVector<double>& c) {
  ordered_json j;
  j["m"] = c.order();
  j["layout"] = "c10,c11,c20,c21,c22,...";
  const Vector<double>& v = c.values();
  j["values"] = num_array(std::vector<double>(v.data(), v.data() + v.size()));
  return j;
}

CoefficientVector<double> coefficients_from_json(const ordered_json& j) {
  const int m = j.at("m").get<int>();
  auto c = CoefficientVector<double>::normalized(m);
  const auto& vals = j.at("values");
  if (static_cast<Index>(vals.size()) != coefficient_count(m)) throw IoError("coefficient count mismatch");
  for (int i = 1; i <= m; ++i)
    for (int k = 0; k <= i; ++k) c(i, k) = vals.at(static_cast<std::size_t>(coefficient_offset(i) + k)).get<double>();
  return c;
}

std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t seed) {
  if (opt->count() > 0) return seed;
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

struct SimulateArgs {
  Index n = 25;
  Index k = 100;
  int m = 3;
  std::uint64_t seed = 0;
  std::string output = ".";
  CLI::Option* seed_opt = nullptr;
};

int cmd_simulate(const SimulateArgs& a) {
  const std::uint64_t seed = resolve_seed(a.seed_opt, a.seed);
  const GraphGenSpec spec;
  const DatasetOptions opts;
  const Dataset ds = generate_dataset(a.n, a.m, a.k, spec, seed, opts);
  fs::create_directories(a.output);
  const fs::path out(a.output);
  write_matrix_csv((out / "X.csv").string(), ds.x, true);
  write_matrix_csv((out / "A_true.csv").string(), ds.a);
  write_text((out / "c_true.json").string(), dump(coefficients_json(ds.c)));

  ordered_json meta;
  meta["seed"] = seed;
  meta["n"] = a.n;
  meta["k"] = a.k;
  meta["m"] = a.m;
  meta["graph"] = {{"threshold_lo", num(spec.threshold_lo)}, {"threshold_hi", num(spec.threshold_hi)},
                   {"diag_lo", num(spec.diag_lo)},           {"diag_hi", num(spec.diag_hi)}};
  meta["burn_in"] = opts.burn_in;
  meta["noise_std"] = num(opts.noise_std);
  write_text((out / "meta.json").string(), dump(meta));

  ordered_json summary{{"command", "simulate"}, {"seed", seed}, {"output", a.output}};
  std::cout << summary.dump() << "\n";
  return kExitOk;
}

struct EstimateArgs {
  std::string input;
  std::string output = ".";
  std::string method = "cgp-extended";
  int m = 3;
  double lambda1 = -1, lambda2 = -1, lambda3 = -1;
  double tol = 1e-6;
  int max_sweeps = 50;
  int max_inner_iter = 500;
  int max_refine_sweeps = 200;
  std::string recover = "take-r1";
  std::string coefficients = "from-data";
  std::string split = "none";
  std::string dist;
  Index k_nn = 8;
  int degree = 2;
  bool timing = false;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

Matrix<double> training_part(const Matrix<double>& x, const std::string& split) {
  return split == "even-odd" ? even_odd_split(x).train : x;
}

int cmd_estimate(const EstimateArgs& a) {
  const Matrix<double> full = read_matrix_csv(a.input);
  const Matrix<double> x = training_part(full, a.split);
  if (x.cols() <= a.m)
    throw PreconditionError("need more samples than the model order (K > M), got K = " + std::to_string(x.cols()) +
                            ", M = " + std::to_string(a.m));

  SolverConfig cfg;
  const double dflt = default_lambda(x);
  cfg.lambda1 = a.lambda1 >= 0 ? a.lambda1 : dflt;
  cfg.lambda2 = a.lambda2 >= 0 ? a.lambda2 : dflt;
  cfg.lambda3 = a.lambda3 >= 0 ? a.lambda3 : dflt;
  cfg.tol_rel = a.tol;
  cfg.max_sweeps = a.max_sweeps;
  cfg.max_inner_iter = a.max_inner_iter;
  cfg.max_refine_sweeps = a.max_refine_sweeps;
  cfg.recover = a.recover == "commutator" ? RecoverMethod::commutator : RecoverMethod::take_r1;
  cfg.coefficients = a.coefficients == "from-r" ? CoefficientSource::from_r : CoefficientSource::from_data;
  cfg.seed = resolve_seed(a.seed_opt, a.seed);
  cfg.validate();

  fs::create_directories(a.output);
  const fs::path out(a.output);
  ordered_json result;
  result["method"] = a.method;
  result["m"] = a.m;
  result["split"] = a.split;
  bool converged = false;
  std::vector<std::string> warnings;
  const auto start = std::chrono::steady_clock::now();

  if (a.method == "cgp-basic" || a.method == "cgp-extended") {
    const auto r = a.method == "cgp-basic" ? basic_algorithm(x, a.m, cfg) : extended_algorithm(x, a.m, cfg);
    write_matrix_csv((out / "A_hat.csv").string(), r.a);
    write_text((out / "c_hat.json").string(), dump(coefficients_json(r.c)));
    result["bcd_trace"] = num_array(std::vector<double>(r.bcd_trace.begin(), r.bcd_trace.end()));
    result["objective_trace"] = num_array(std::vector<double>(r.objective_trace.begin(), r.objective_trace.end()));
    result["sweeps_used"] = r.sweeps_used;
    converged = r.converged;
    warnings = r.warnings;
  } else if (a.method == "svar") {
    const auto r = svar_group_lasso(x, a.m, cfg.lambda1, cfg);
    write_matrix_csv((out / "A_hat.csv").string(), r.mats.lag(1));
    ordered_json mats = ordered_json::array();
    for (int i = 1; i <= a.m; ++i) mats.push_back(matrix_json(r.mats.lag(i)));
    write_text((out / "svar_mats.json").string(), dump(ordered_json{{"m", a.m}, {"mats", mats}}));
    result["objective_trace"] = num_array(std::vector<double>(r.objective_trace.begin(), r.objective_trace.end()));
    result["iterations"] = r.iterations;
    converged = r.converged;
    warnings = r.warnings;
  } else if (a.method == "distance") {
    if (a.dist.empty()) throw PreconditionError("method distance needs --dist");
    const auto g = distance_adjacency(read_matrix_csv(a.dist), a.k_nn);
    if (g.adj.rows() != x.rows()) throw DimensionError("distance matrix and series sizes differ");
    const auto fit = fit_distance_graph(x, g.adj, a.m, a.degree, cfg.lambda3, cfg);
    write_matrix_csv((out / "A_hat.csv").string(), g.adj);
    ordered_json coef = ordered_json::array();
    for (int i = 1; i <= a.m; ++i)
      coef.push_back(num_array(std::vector<double>(fit.coef.col(i - 1).data(), fit.coef.col(i - 1).data() + fit.coef.rows())));
    write_text((out / "distance_fit.json").string(),
               dump(ordered_json{{"m", a.m}, {"degree", a.degree}, {"k_nn", a.k_nn}, {"coef_by_lag", coef}}));
    converged = fit.converged;
    if (fit.rank_deficient) warnings.push_back("power basis is rank deficient");
  } else {
    throw PreconditionError("unknown method '" + a.method + "'");
  }

  result["converged"] = converged;
  result["warnings"] = warnings;
  if (a.timing)
    result["runtime_seconds"] = num(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  result["config"] = {{"lambda1", num(cfg.lambda1)},
                      {"lambda2", num(cfg.lambda2)},
                      {"lambda3", num(cfg.lambda3)},
                      {"tol_rel", num(cfg.tol_rel)},
                      {"max_sweeps", cfg.max_sweeps},
                      {"max_inner_iter", cfg.max_inner_iter},
                      {"max_refine_sweeps", cfg.max_refine_sweeps},
                      {"backtrack_beta", num(cfg.backtrack_beta)},
                      {"step_init", num(cfg.step_init)},
                      {"recover", a.recover},
                      {"coefficients", a.coefficients},
                      {"seed", cfg.seed},
                      {"input", a.input}};
  write_text((out / "result.json").string(), dump(result));
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  std::cout << ordered_json{{"command", "estimate"}, {"method", a.method}, {"converged", converged}}.dump() << "\n";
  return converged ? kExitOk : kExitNotConverged;
}

struct EvaluateArgs {
  std::string input;
  std::string estimate = ".";
  std::string a_true;
  std::string split = "none";
  std::string output = ".";
  double eps = kNonzeroEps;
};

FilterStack<double> load_filters(const fs::path& dir, const ordered_json& result) {
  const std::string method = result.at("method").get<std::string>();
  if (method == "cgp-basic" || method == "cgp-extended") {
    const Matrix<double> a = read_matrix_csv((dir / "A_hat.csv").string());
    const auto c = coefficients_from_json(ordered_json::parse(read_text((dir / "c_hat.json").string())));
    return eval_poly_filters(a, c);
  }
  if (method == "svar") {
    const auto j = ordered_json::parse(read_text((dir / "svar_mats.json").string()));
    FilterStack<double> s;
    for (const auto& m : j.at("mats")) s.mats.push_back(matrix_from_json(m));
    return s;
  }
  if (method == "distance") {
    const Matrix<double> adj = read_matrix_csv((dir / "A_hat.csv").string());
    const auto j = ordered_json::parse(read_text((dir / "distance_fit.json").string()));
    const int degree = j.at("degree").get<int>();
    const auto pw = detail::matrix_powers<double>(adj, degree);
    FilterStack<double> s;
    for (const auto& lag : j.at("coef_by_lag")) {
      Matrix<double> f = Matrix<double>::Zero(adj.rows(), adj.cols());
      for (int d = 0; d <= degree; ++d) f += lag.at(static_cast<std::size_t>(d)).get<double>() * pw[static_cast<std::size_t>(d)];
      s.mats.push_back(std::move(f));
    }
    return s;
  }
  throw PreconditionError("unknown method '" + method + "' in result.json");
}

int cmd_evaluate(const EvaluateArgs& a) {
  const fs::path dir(a.estimate);
  const auto result = ordered_json::parse(read_text((dir / "result.json").string()));
  const FilterStack<double> filters = load_filters(dir, result);
  const Matrix<double> a_hat = read_matrix_csv((dir / "A_hat.csv").string());
  const Matrix<double> x = read_matrix_csv(a.input);
  const int m = filters.order();

  ordered_json metrics;
  metrics["method"] = result.at("method");
  if (a.split == "even-odd") {
    const auto s = even_odd_split(x);
    metrics["prediction_mse_train"] = num(prediction_mse(filters, s.train));
    metrics["prediction_mse_test"] = num(prediction_mse(filters, s.test));
  } else {
    if (x.cols() <= m) throw PreconditionError("need more samples than the model order (K > M)");
    metrics["prediction_mse_train"] = num(prediction_mse(filters, x));
  }
  metrics["p_nnz"] = num(sparsity_pnnz(a_hat, a.eps));
  if (!a.a_true.empty()) {
    const Matrix<double> truth = read_matrix_csv(a.a_true);
    metrics["entry_mse"] = num(entry_mse(truth, a_hat));
    const auto sm = support_metrics(truth, a_hat, a.eps);
    metrics["precision"] = num(sm.precision);
    metrics["recall"] = num(sm.recall);
    metrics["f1"] = num(sm.f1);
  }
  fs::create_directories(a.output);
  write_text((fs::path(a.output) / "metrics.json").string(), dump(metrics));
  std::cout << metrics.dump() << "\n";
  return kExitOk;
}

int cmd_detrend(const std::string& input, const std::string& output, double cutoff) {
  const Matrix<double> x = read_matrix_csv(input);
  const Matrix<double> y = highpass_detrend(linear_detrend(x), cutoff);
  fs::create_directories(output);
  write_matrix_csv((fs::path(output) / "X_detrended.csv").string(), y, true);
  std::cout << ordered_json{{"command", "detrend"}, {"cutoff_period", num(cutoff)}}.dump() << "\n";
  return kExitOk;
}

int cmd_benchmark(const std::string& config, const std::string& output) {
  const BenchmarkSpec spec = benchmark_spec_from_json(read_text(config));
  const fs::path out(output);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const auto table = run_benchmark(spec, output, [](const std::string& line) { std::cerr << line << "\n"; });
  int failed = 0;
  for (const auto& c : table.cells) failed += c.ok ? 0 : 1;
  std::cout << ordered_json{{"command", "benchmark"}, {"cells", table.cells.size()}, {"failed", failed}}.dump()
            << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse causal graph process estimation"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Generate a random stable graph process and a trajectory");
  s->add_option("--n", sim.n, "Node count")->check(CLI::PositiveNumber);
  s->add_option("--k", sim.k, "Sample count")->check(CLI::PositiveNumber);
  s->add_option("--m", sim.m, "Model order")->check(CLI::PositiveNumber);
  sim.seed_opt = s->add_option("--seed", sim.seed, "RNG seed (drawn from entropy when omitted)");
  s->add_option("--output", sim.output, "Output directory");

  EstimateArgs est;
  auto* e = app.add_subcommand("estimate", "Fit a model to X.csv");
  e->add_option("--input", est.input, "Time series CSV (rows = nodes)")->required();
  e->add_option("--output", est.output, "Output directory");
  e->add_option("--method", est.method)->check(CLI::IsMember({"cgp-basic", "cgp-extended", "svar", "distance"}));
  e->add_option("--m", est.m, "Model order")->check(CLI::PositiveNumber);
  e->add_option("--lambda1", est.lambda1, "l1 weight on A / R1 (SVAR group weight)");
  e->add_option("--lambda2", est.lambda2, "Commutator weight and l1 weight on c");
  e->add_option("--lambda3", est.lambda3, "l1 weight of the coefficient fit");
  e->add_option("--tol", est.tol, "Relative objective-change tolerance");
  e->add_option("--max-sweeps", est.max_sweeps)->check(CLI::PositiveNumber);
  e->add_option("--max-inner-iter", est.max_inner_iter)->check(CLI::PositiveNumber);
  e->add_option("--max-refine-sweeps", est.max_refine_sweeps)->check(CLI::NonNegativeNumber);
  e->add_option("--recover", est.recover)->check(CLI::IsMember({"take-r1", "commutator"}));
  e->add_option("--coefficients", est.coefficients)->check(CLI::IsMember({"from-data", "from-r"}));
  e->add_option("--split", est.split, "Train on even columns with even-odd")->check(CLI::IsMember({"none", "even-odd"}));
  e->add_option("--dist", est.dist, "Distance matrix CSV (method distance)");
  e->add_option("--k-nn", est.k_nn, "Neighborhood size (method distance)")->check(CLI::PositiveNumber);
  e->add_option("--degree", est.degree, "Polynomial degree per lag (method distance)")->check(CLI::NonNegativeNumber);
  e->add_flag("--timing", est.timing, "Record wall-clock runtime in result.json");
  est.seed_opt = e->add_option("--seed", est.seed, "Seed recorded with the run");

  EvaluateArgs ev;
  auto* v = app.add_subcommand("evaluate", "Score an estimate");
  v->add_option("--input", ev.input, "Time series CSV")->required();
  v->add_option("--estimate", ev.estimate, "Directory written by estimate");
  v->add_option("--a-true", ev.a_true, "True adjacency CSV");
  v->add_option("--split", ev.split)->check(CLI::IsMember({"none", "even-odd"}));
  v->add_option("--eps", ev.eps, "Nonzero threshold")->check(CLI::NonNegativeNumber);
  v->add_option("--output", ev.output, "Output directory");

  std::string dt_in, dt_out = ".";
  double cutoff = 365.0;
  auto* d = app.add_subcommand("detrend", "Linear then ideal high-pass detrending");
  d->add_option("--input", dt_in)->required();
  d->add_option("--output", dt_out);
  d->add_option("--cutoff-period", cutoff)->check(CLI::PositiveNumber);

  std::string bm_config, bm_out = "benchmark.csv";
  auto* b = app.add_subcommand("benchmark", "Run a benchmark grid from a JSON config");
  b->add_option("--config", bm_config)->required();
  b->add_option("--output", bm_out, "Results CSV (resumed when present)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*s) return cmd_simulate(sim);
    if (*e) return cmd_estimate(est);
    if (*v) return cmd_evaluate(ev);
    if (*d) return cmd_detrend(dt_in, dt_out, cutoff);
    if (*b) return cmd_benchmark(bm_config, bm_out);
  } catch (const PreconditionError& ex) {
    std::cerr << "precondition failed: " << ex.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
