#include "cgpnet/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>

#include <unsupported/Eigen/FFT>

#include "cgpnet/baselines.hpp"
#include "cgpnet/datagen.hpp"
#include "cgpnet/io.hpp"
#include "cgpnet/seed.hpp"
#include "cgpnet/solver.hpp"
#include "json.hpp"

namespace cgpnet {

double prediction_mse(const OneStepPredictor& predictor, const Matrix<double>& x, int m) {
  if (m < 1) throw PreconditionError("model order must be >= 1");
  if (x.cols() <= m) throw PreconditionError("prediction needs more than M samples");
  double total = 0.0;
  for (Index t = m; t < x.cols(); ++t) {
    const Vector<double> guess = predictor(x.middleCols(t - m, m));
    if (guess.size() != x.rows()) throw DimensionError("predictor returned a wrong-sized vector");
    total += (x.col(t) - guess).squaredNorm();
  }
  return total / static_cast<double>(x.rows() * (x.cols() - m));
}

SupportMetrics support_metrics(const Matrix<double>& a_true, const Matrix<double>& a_hat, double eps) {
  if (a_true.rows() != a_hat.rows() || a_true.cols() != a_hat.cols())
    throw DimensionError("support_metrics operands differ in size");
  const auto t = (a_true.array().abs() > eps);
  const auto h = (a_hat.array().abs() > eps);
  const double tp = static_cast<double>((t && h).count());
  const double pred = static_cast<double>(h.count());
  const double real = static_cast<double>(t.count());
  SupportMetrics s;
  s.precision = pred > 0 ? tp / pred : 0.0;
  s.recall = real > 0 ? tp / real : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

double sparsity_pnnz(const Matrix<double>& a, double eps) {
  if (a.size() == 0) throw DimensionError("p_nnz of an empty matrix");
  return static_cast<double>((a.array().abs() > eps).count()) / static_cast<double>(a.size());
}

SeriesSplit even_odd_split(const Matrix<double>& x, bool swap) {
  const Index k = x.cols();
  SeriesSplit s;
  s.train.resize(x.rows(), (k + 1) / 2);
  s.test.resize(x.rows(), k / 2);
  for (Index t = 0; t < k; ++t) {
    if (t % 2 == 0)
      s.train.col(t / 2) = x.col(t);
    else
      s.test.col(t / 2) = x.col(t);
  }
  if (swap) std::swap(s.train, s.test);
  return s;
}

Matrix<double> interleave(const Matrix<double>& even, const Matrix<double>& odd) {
  if (even.rows() != odd.rows() || even.cols() < odd.cols() || even.cols() > odd.cols() + 1)
    throw DimensionError("interleave needs equal rows and |even| - |odd| in {0, 1}");
  Matrix<double> x(even.rows(), even.cols() + odd.cols());
  for (Index t = 0; t < x.cols(); ++t) x.col(t) = t % 2 == 0 ? even.col(t / 2) : odd.col(t / 2);
  return x;
}

Matrix<double> linear_detrend(const Matrix<double>& x) {
  const Index k = x.cols();
  if (k < 2) throw PreconditionError("linear detrend needs at least two samples");
  // Centered time makes the intercept and slope fits decouple.
  const Vector<double> t = Vector<double>::LinSpaced(k, 0.0, static_cast<double>(k - 1)).array() -
                           0.5 * static_cast<double>(k - 1);
  const double tt = t.squaredNorm();
  Matrix<double> out(x.rows(), k);
  for (Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double slope = x.row(r).dot(t.transpose()) / tt;
    out.row(r) = x.row(r).array() - mean - slope * t.transpose().array();
  }
  return out;
}

Matrix<double> highpass_detrend(const Matrix<double>& x, double cutoff_period) {
  if (!(cutoff_period > 0)) throw PreconditionError("cutoff period must be positive");
  const Index k = x.cols();
  if (k < 1) throw PreconditionError("high-pass needs at least one sample");
  Eigen::FFT<double> fft;
  Matrix<double> out(x.rows(), k);
  std::vector<double> row(static_cast<std::size_t>(k));
  std::vector<std::complex<double>> spec;
  std::vector<double> back;
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index t = 0; t < k; ++t) row[static_cast<std::size_t>(t)] = x(r, t);
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    fft.fwd(spec, row);
    // Bin q has period K / q; keep it only when that is below the cutoff.
    for (std::size_t q = 0; q < spec.size(); ++q)
      if (q == 0 || static_cast<double>(k) / static_cast<double>(q) >= cutoff_period) spec[q] = 0.0;
    fft.inv(back, spec, k);
    for (Index t = 0; t < k; ++t) out(r, t) = back[static_cast<std::size_t>(t)];
  }
  return out;
}

void BenchmarkSpec::validate() const {
  if (n_list.empty() || k_list.empty() || methods.empty() || lambda1.empty() || lambda2.empty())
    throw PreconditionError("benchmark grids must be non-empty");
  if (trials < 1) throw PreconditionError("benchmark needs trials >= 1");
  if (m < 1) throw PreconditionError("model order must be >= 1");
  for (auto k : k_list)
    if (k <= m) throw PreconditionError("every K must exceed M");
  for (auto n : n_list)
    if (n < 2) throw PreconditionError("every N must be at least 2");
  for (const auto& meth : methods)
    if (meth != "cgp-basic" && meth != "cgp-extended" && meth != "cgp-gradient" && meth != "svar")
      throw PreconditionError("unknown benchmark method '" + meth + "'");
  for (double l : lambda1)
    if (l < 0) throw PreconditionError("lambda1 grid must be nonnegative");
  for (double l : lambda2)
    if (l < 0) throw PreconditionError("lambda2 grid must be nonnegative");
}

int worker_count(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("CGPNET_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

BenchmarkCell run_benchmark_cell(const BenchmarkSpec& spec, Index n, Index k, int trial, const std::string& method,
                                 double lambda1, double lambda2) {
  BenchmarkCell cell{n, k, trial, method, lambda1, lambda2, false, {}, {}};
  try {
    const std::uint64_t data_seed =
        derive_seed(spec.seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(trial)});
    const Dataset ds = generate_dataset(n, spec.m, k, GraphGenSpec{}, data_seed);
    const CGPModel<double> model{ds.a, ds.c, 1.0};
    std::mt19937_64 rng(derive_seed(data_seed, {5}));
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix<double> init(n, spec.m);
    for (Index j = 0; j < spec.m; ++j)
      for (Index i = 0; i < n; ++i) init(i, j) = normal(rng);
    const Matrix<double> test = simulate_cgp(model, k, init, derive_seed(data_seed, {6}), SimulationOptions{200});

    SolverConfig cfg;
    cfg.lambda1 = lambda1;
    cfg.lambda2 = lambda2;
    cfg.lambda3 = spec.lambda3;
    cfg.max_sweeps = spec.max_sweeps;
    cfg.max_inner_iter = spec.max_inner_iter;
    cfg.max_refine_sweeps = spec.max_refine_sweeps;
    cfg.tol_rel = spec.tol_rel;
    cfg.seed = data_seed;

    const auto start = std::chrono::steady_clock::now();
    Matrix<double> a_hat;
    FilterStack<double> filters;
    if (method == "svar") {
      auto r = svar_group_lasso(ds.x, spec.m, lambda1, cfg);
      a_hat = r.mats.lag(1);
      filters = std::move(r.mats);
    } else {
      EstimationResult<double> r;
      if (method == "cgp-basic")
        r = basic_algorithm(ds.x, spec.m, cfg);
      else if (method == "cgp-extended")
        r = extended_algorithm(ds.x, spec.m, cfg);
      else
        r = zero_initialized_refinement(ds.x, spec.m, cfg);
      a_hat = r.a;
      filters = eval_poly_filters(r.a, r.c);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const auto sm = support_metrics(ds.a, a_hat, spec.eps);
    cell.metrics = MetricsReport{entry_mse(ds.a, a_hat),
                                 prediction_mse(filters, ds.x),
                                 prediction_mse(filters, test),
                                 sparsity_pnnz(a_hat, spec.eps),
                                 sm.precision,
                                 sm.recall,
                                 sm.f1,
                                 secs};
    cell.ok = true;
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  return cell;
}

namespace {

using CellKey = std::tuple<Index, Index, int, std::string, std::string, std::string>;

CellKey key_of(const BenchmarkCell& c) {
  return {c.n, c.k, c.trial, c.method, format_double(c.lambda1), format_double(c.lambda2)};
}

const char* kHeader =
    "kind,n,k,trial,method,lambda1,lambda2,status,count,entry_mse,prediction_mse_train,prediction_mse_test,"
    "p_nnz,precision,recall,f1";

std::vector<double> metric_values(const MetricsReport& m) {
  return {m.entry_mse, m.prediction_mse_train, m.prediction_mse_test, m.p_nnz, m.precision, m.recall, m.f1};
}

MetricsReport metrics_from(const std::vector<double>& v) {
  return MetricsReport{v[0], v[1], v[2], v[3], v[4], v[5], v[6], 0.0};
}

std::string cell_row(const BenchmarkCell& c) {
  std::ostringstream os;
  os << "cell," << c.n << ',' << c.k << ',' << c.trial << ',' << c.method << ',' << format_double(c.lambda1) << ','
     << format_double(c.lambda2) << ',' << (c.ok ? "ok" : "failed") << ",1";
  for (double v : metric_values(c.metrics)) os << ',' << (c.ok ? format_double(v) : std::string("nan"));
  return os.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  return out;
}

std::map<CellKey, BenchmarkCell> load_completed(const std::string& path) {
  std::map<CellKey, BenchmarkCell> done;
  std::ifstream in(path);
  if (!in) return done;
  std::string line;
  while (std::getline(in, line)) {
    const auto f = split_csv_line(line);
    if (f.size() != 16 || f[0] != "cell" || f[7] != "ok") continue;
    try {
      BenchmarkCell c;
      c.n = std::stoll(f[1]);
      c.k = std::stoll(f[2]);
      c.trial = std::stoi(f[3]);
      c.method = f[4];
      c.lambda1 = std::stod(f[5]);
      c.lambda2 = std::stod(f[6]);
      c.ok = true;
      std::vector<double> v;
      for (std::size_t i = 9; i < 16; ++i) v.push_back(std::stod(f[i]));
      c.metrics = metrics_from(v);
      done[key_of(c)] = c;
    } catch (const std::exception&) {
      // A torn trailing line from an interrupted run; recompute that cell.
    }
  }
  return done;
}

std::vector<BenchmarkAggregate> aggregate(const BenchmarkSpec& spec, const std::vector<BenchmarkCell>& cells) {
  std::vector<BenchmarkAggregate> out;
  for (auto n : spec.n_list)
    for (auto k : spec.k_list)
      for (const auto& meth : spec.methods)
        for (double l1 : spec.lambda1)
          for (double l2 : spec.lambda2) {
            std::vector<std::vector<double>> rows;
            for (const auto& c : cells)
              if (c.ok && c.n == n && c.k == k && c.method == meth && c.lambda1 == l1 && c.lambda2 == l2)
                rows.push_back(metric_values(c.metrics));
            BenchmarkAggregate agg{n, k, meth, l1, l2, static_cast<int>(rows.size()), {}, {}};
            if (!rows.empty()) {
              const std::size_t w = rows.front().size();
              std::vector<double> mean(w, 0.0), se(w, 0.0);
              for (const auto& r : rows)
                for (std::size_t i = 0; i < w; ++i) mean[i] += r[i];
              for (auto& v : mean) v /= static_cast<double>(rows.size());
              if (rows.size() > 1) {
                for (const auto& r : rows)
                  for (std::size_t i = 0; i < w; ++i) se[i] += (r[i] - mean[i]) * (r[i] - mean[i]);
                for (auto& v : se)
                  v = std::sqrt(v / static_cast<double>(rows.size() - 1) / static_cast<double>(rows.size()));
              }
              agg.mean = metrics_from(mean);
              agg.stderr_ = metrics_from(se);
            }
            out.push_back(agg);
          }
  return out;
}

}  // namespace

std::string benchmark_csv(const BenchmarkTable& table) {
  std::ostringstream os;
  os << kHeader << '\n';
  for (const auto& c : table.cells) os << cell_row(c) << '\n';
  for (const auto& a : table.aggregates) {
    for (int which = 0; which < 2; ++which) {
      os << (which == 0 ? "mean" : "stderr") << ',' << a.n << ',' << a.k << ",," << a.method << ','
         << format_double(a.lambda1) << ',' << format_double(a.lambda2) << ',' << (a.count > 0 ? "ok" : "failed")
         << ',' << a.count;
      for (double v : metric_values(which == 0 ? a.mean : a.stderr_))
        os << ',' << (a.count > 0 ? format_double(v) : std::string("nan"));
      os << '\n';
    }
  }
  return os.str();
}

BenchmarkTable run_benchmark(const BenchmarkSpec& spec, const std::string& csv_path,
                             const std::function<void(const std::string&)>& progress) {
  spec.validate();
  std::vector<BenchmarkCell> cells;
  for (auto n : spec.n_list)
    for (auto k : spec.k_list)
      for (int trial = 0; trial < spec.trials; ++trial)
        for (const auto& meth : spec.methods)
          for (double l1 : spec.lambda1)
            for (double l2 : spec.lambda2) cells.push_back(BenchmarkCell{n, k, trial, meth, l1, l2, false, {}, {}});

  const auto done = csv_path.empty() ? std::map<CellKey, BenchmarkCell>{} : load_completed(csv_path);
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto it = done.find(key_of(cells[i]));
    if (it != done.end())
      cells[i] = it->second;
    else
      todo.push_back(i);
  }

  std::ofstream append;
  if (!csv_path.empty()) {
    const bool fresh = done.empty();
    append.open(csv_path, fresh ? std::ios::trunc : std::ios::app);
    if (!append) throw std::runtime_error("cannot open " + csv_path + " for writing");
    if (fresh) append << kHeader << '\n' << std::flush;
  }

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::size_t finished = 0;
  auto worker = [&] {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= todo.size()) return;
      auto& c = cells[todo[j]];
      c = run_benchmark_cell(spec, c.n, c.k, c.trial, c.method, c.lambda1, c.lambda2);
      std::lock_guard<std::mutex> lock(mu);
      ++finished;
      if (append.is_open() && c.ok) append << cell_row(c) << '\n' << std::flush;
      if (progress) {
        std::ostringstream os;
        os << "[" << finished << "/" << todo.size() << "] n=" << c.n << " k=" << c.k << " trial=" << c.trial << ' '
           << c.method << " l1=" << c.lambda1 << " l2=" << c.lambda2
           << (c.ok ? " mse=" + format_double(c.metrics.entry_mse) : " failed: " + c.error);
        progress(os.str());
      }
    }
  };
  const int nthreads = std::min<int>(worker_count(spec.threads), static_cast<int>(std::max<std::size_t>(todo.size(), 1)));
  std::vector<std::thread> pool;
  for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  BenchmarkTable table;
  table.cells = std::move(cells);
  table.aggregates = aggregate(spec, table.cells);
  if (!csv_path.empty()) {
    append.close();
    std::ofstream out(csv_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot rewrite " + csv_path);
    out << benchmark_csv(table);
  }
  return table;
}

BenchmarkSpec benchmark_spec_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  BenchmarkSpec s;
  auto get = [&](const char* name, auto& field) {
    if (j.contains(name)) j.at(name).get_to(field);
  };
  get("n_list", s.n_list);
  get("k_list", s.k_list);
  get("m", s.m);
  get("trials", s.trials);
  get("methods", s.methods);
  get("lambda1", s.lambda1);
  get("lambda2", s.lambda2);
  get("lambda3", s.lambda3);
  get("seed", s.seed);
  get("max_sweeps", s.max_sweeps);
  get("max_inner_iter", s.max_inner_iter);
  get("max_refine_sweeps", s.max_refine_sweeps);
  get("tol_rel", s.tol_rel);
  get("eps", s.eps);
  get("threads", s.threads);
  s.validate();
  return s;
}

}  // namespace cgpnet
