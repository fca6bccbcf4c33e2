#pragma once

// Metrics, train/test splits, detrending and the seeded benchmark harness.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cgpnet/model.hpp"

namespace cgpnet {

inline constexpr double kNonzeroEps = 1e-6;

/// (1/N^2) ||A - A_hat||_F^2.
template <typename DerivedA, typename DerivedB>
double entry_mse(const Eigen::MatrixBase<DerivedA>& a_true, const Eigen::MatrixBase<DerivedB>& a_hat) {
  if (a_true.rows() != a_hat.rows() || a_true.cols() != a_hat.cols())
    throw DimensionError("entry_mse operands differ in size");
  if (a_true.size() == 0) throw DimensionError("entry_mse of an empty matrix");
  return static_cast<double>((a_true - a_hat).squaredNorm()) / static_cast<double>(a_true.size());
}

/// Maps the M most recent samples (columns oldest to newest) to a forecast
/// of the next one.
using OneStepPredictor = std::function<Vector<double>(const Matrix<double>& history)>;

/// Mean squared one-step error (1/(N (T - M))) sum_{t >= M} ||x[t] - xhat[t]||^2.
double prediction_mse(const OneStepPredictor& predictor, const Matrix<double>& x, int m);

/// Same metric for any linear lag model (CGP filters, SVAR lags, distance
/// graph filters), computed in one pass.
template <typename Scalar>
double prediction_mse(const FilterStack<Scalar>& filters, const Matrix<Scalar>& x) {
  const int m = filters.order();
  if (x.cols() <= m) throw PreconditionError("prediction needs more than M samples");
  const Matrix<Scalar> err = x.middleCols(m, x.cols() - m) - predict_series(filters, x);
  return static_cast<double>(err.squaredNorm()) / static_cast<double>(err.size());
}

struct SupportMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Entries with |a| > eps count as edges. Undefined ratios are reported as 0.
SupportMetrics support_metrics(const Matrix<double>& a_true, const Matrix<double>& a_hat,
                               double eps = kNonzeroEps);

/// Fraction of entries with |a| > eps.
double sparsity_pnnz(const Matrix<double>& a, double eps = kNonzeroEps);

struct SeriesSplit {
  Matrix<double> train;
  Matrix<double> test;
};

/// Even-index columns train, odd-index columns test (swapped on request).
SeriesSplit even_odd_split(const Matrix<double>& x, bool swap = false);

/// Inverse of even_odd_split: column 2t from `even`, 2t + 1 from `odd`.
Matrix<double> interleave(const Matrix<double>& even, const Matrix<double>& odd);

/// Removes the least-squares line a + b t from every row.
Matrix<double> linear_detrend(const Matrix<double>& x);

/// Ideal high-pass per row: DFT, zero every bin whose period K / q is at
/// least `cutoff_period` (the DC bin included), inverse DFT.
Matrix<double> highpass_detrend(const Matrix<double>& x, double cutoff_period);

struct MetricsReport {
  double entry_mse = 0.0;
  double prediction_mse_train = 0.0;
  double prediction_mse_test = 0.0;
  double p_nnz = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double runtime_seconds = 0.0;
};

struct BenchmarkSpec {
  std::vector<Index> n_list{25};
  std::vector<Index> k_list{100};
  int m = 3;
  int trials = 5;
  /// Any of cgp-basic, cgp-extended, cgp-gradient, svar.
  std::vector<std::string> methods{"cgp-extended"};
  std::vector<double> lambda1{1.0};
  std::vector<double> lambda2{1.0};
  double lambda3 = 0.0;
  std::uint64_t seed = 1;
  int max_sweeps = 50;
  int max_inner_iter = 500;
  int max_refine_sweeps = 200;
  double tol_rel = 1e-6;
  double eps = kNonzeroEps;
  /// Worker count; 0 means hardware concurrency. CGPNET_THREADS caps it.
  int threads = 0;

  void validate() const;
};

struct BenchmarkCell {
  Index n = 0;
  Index k = 0;
  int trial = 0;
  std::string method;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  bool ok = false;
  std::string error;
  MetricsReport metrics;
};

struct BenchmarkAggregate {
  Index n = 0;
  Index k = 0;
  std::string method;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  int count = 0;
  MetricsReport mean;
  MetricsReport stderr_;
};

struct BenchmarkTable {
  std::vector<BenchmarkCell> cells;
  std::vector<BenchmarkAggregate> aggregates;
};

/// Runs every (N, K, trial, method, lambda1, lambda2) cell. The graph and
/// trajectory of a trial depend only on (seed, N, trial), so the K grid
/// reuses nested prefixes of one trajectory. When `csv_path` is non-empty,
/// completed cells already present in that file are reused, newly finished
/// cells are appended as they complete, and the file is finally rewritten
/// in canonical order. `progress` receives one line per finished cell.
BenchmarkTable run_benchmark(const BenchmarkSpec& spec, const std::string& csv_path = {},
                             const std::function<void(const std::string&)>& progress = {});

/// Metrics of one cell; exposed for the harness and its tests.
BenchmarkCell run_benchmark_cell(const BenchmarkSpec& spec, Index n, Index k, int trial,
                                 const std::string& method, double lambda1, double lambda2);

BenchmarkSpec benchmark_spec_from_json(const std::string& text);
std::string benchmark_csv(const BenchmarkTable& table);

/// Worker count after applying CGPNET_THREADS.
int worker_count(int requested);

}  // namespace cgpnet
