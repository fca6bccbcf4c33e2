#pragma once

// Causal graph process: domain types, graph-filter polynomials, simulation
// and stability.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace cgpnet {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Directed weighted adjacency matrix. Entry (i, j) is the weight of the
/// edge from node j to node i; self-loops live on the diagonal.
template <typename Scalar>
using AdjacencyMatrix = Matrix<Scalar>;

/// N x K observations; column k is the graph signal at time k.
template <typename Scalar>
using TimeSeriesMatrix = Matrix<Scalar>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a simulated trajectory overflows.
class InstabilityError : public std::runtime_error {
 public:
  InstabilityError(const std::string& what, Index first_bad_column)
      : std::runtime_error(what), column_(first_bad_column) {}
  Index column() const noexcept { return column_; }

 private:
  Index column_;
};

/// Number of polynomial coefficients of an order-M process, M(M+3)/2.
constexpr Index coefficient_count(int order) {
  return static_cast<Index>(order) * (order + 3) / 2;
}

/// Position of c_{lag,0} in the flattened coefficient vector.
constexpr Index coefficient_offset(int lag) {
  return static_cast<Index>(lag - 1) * (lag + 2) / 2;
}

/// Flattened filter coefficients (c10, c11, c20, c21, c22, ..., cMM).
template <typename Scalar>
class CoefficientVector {
 public:
  CoefficientVector() = default;

  explicit CoefficientVector(int order) : order_(order) {
    if (order < 1) throw PreconditionError("model order must be >= 1");
    values_ = Vector<Scalar>::Zero(coefficient_count(order));
  }

  CoefficientVector(int order, Vector<Scalar> values)
      : order_(order), values_(std::move(values)) {
    if (order < 1) throw PreconditionError("model order must be >= 1");
    if (values_.size() != coefficient_count(order))
      throw DimensionError("coefficient vector length " +
                           std::to_string(values_.size()) + " does not match order " +
                           std::to_string(order));
  }

  /// Zero coefficients except the identifiability pin c10 = 0, c11 = 1.
  static CoefficientVector normalized(int order) {
    CoefficientVector c(order);
    c(1, 1) = Scalar(1);
    return c;
  }

  int order() const { return order_; }
  Index size() const { return values_.size(); }

  Scalar operator()(int lag, int power) const {
    return values_(coefficient_offset(lag) + power);
  }
  Scalar& operator()(int lag, int power) {
    return values_(coefficient_offset(lag) + power);
  }

  const Vector<Scalar>& values() const { return values_; }
  Vector<Scalar>& values() { return values_; }

  bool is_normalized() const {
    return order_ >= 1 && values_(0) == Scalar(0) && values_(1) == Scalar(1);
  }

  /// Every coefficient except c10 and c11.
  Vector<Scalar> free_values() const { return values_.tail(values_.size() - 2); }

  void set_free_values(const Vector<Scalar>& free) {
    if (free.size() != values_.size() - 2)
      throw DimensionError("free coefficient count mismatch");
    values_.tail(values_.size() - 2) = free;
  }

 private:
  int order_ = 0;
  Vector<Scalar> values_;
};

/// Ordered lag matrices; mats[i - 1] holds R_i (an estimate of P_i(A)).
template <typename Scalar>
struct FilterStack {
  std::vector<Matrix<Scalar>> mats;

  int order() const { return static_cast<int>(mats.size()); }
  Index nodes() const { return mats.empty() ? 0 : mats.front().rows(); }

  const Matrix<Scalar>& lag(int i) const { return mats.at(static_cast<std::size_t>(i - 1)); }
  Matrix<Scalar>& lag(int i) { return mats.at(static_cast<std::size_t>(i - 1)); }

  static FilterStack zeros(int order, Index n) {
    FilterStack s;
    s.mats.assign(static_cast<std::size_t>(order), Matrix<Scalar>::Zero(n, n));
    return s;
  }
};

template <typename Scalar>
struct CGPModel {
  AdjacencyMatrix<Scalar> a;
  CoefficientVector<Scalar> c;
  Scalar noise_std = Scalar(1);

  int order() const { return c.order(); }
  Index nodes() const { return a.rows(); }
};

namespace detail {

template <typename Derived>
void require_square(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (m.rows() != m.cols())
    throw DimensionError(std::string(what) + " must be square, got " +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

/// I, A, A^2, ..., A^order.
template <typename Scalar>
std::vector<Matrix<Scalar>> matrix_powers(const Matrix<Scalar>& a, int order) {
  std::vector<Matrix<Scalar>> pw;
  pw.reserve(static_cast<std::size_t>(order) + 1);
  pw.push_back(Matrix<Scalar>::Identity(a.rows(), a.cols()));
  for (int j = 1; j <= order; ++j) pw.push_back(pw.back() * a);
  return pw;
}

}  // namespace detail

/// P_i(A) = sum_j c_ij A^j for i = 1..M. Powers of A are formed once.
template <typename Scalar>
FilterStack<Scalar> eval_poly_filters(const AdjacencyMatrix<Scalar>& a,
                                      const CoefficientVector<Scalar>& c) {
  detail::require_square(a, "adjacency matrix");
  const int m = c.order();
  if (m < 1) throw PreconditionError("coefficient vector is empty");
  const auto pw = detail::matrix_powers<Scalar>(a, m);
  FilterStack<Scalar> out;
  out.mats.reserve(static_cast<std::size_t>(m));
  for (int i = 1; i <= m; ++i) {
    Matrix<Scalar> p = c(i, i) * pw[static_cast<std::size_t>(i)];
    for (int j = i - 1; j >= 0; --j) p.noalias() += c(i, j) * pw[static_cast<std::size_t>(j)];
    out.mats.push_back(std::move(p));
  }
  return out;
}

/// [P, Q] = PQ - QP.
template <typename DerivedP, typename DerivedQ>
auto commutator(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& q) {
  using Scalar = typename DerivedP::Scalar;
  detail::require_square(p, "commutator operand");
  if (p.rows() != q.rows() || p.cols() != q.cols())
    throw DimensionError("commutator operands differ in size");
  Matrix<Scalar> out = p * q;
  out.noalias() -= q * p;
  return out;
}

/// Noise-free one-step prediction sum_i R_i x[k - i] from a history whose
/// columns run oldest to newest.
template <typename Scalar, typename Derived>
Vector<Scalar> predict_one_step(const FilterStack<Scalar>& filters,
                                const Eigen::MatrixBase<Derived>& history) {
  const int m = filters.order();
  if (history.cols() != m)
    throw DimensionError("history must hold exactly M = " + std::to_string(m) + " columns");
  if (history.rows() != filters.nodes()) throw DimensionError("history row count mismatch");
  Vector<Scalar> out = Vector<Scalar>::Zero(history.rows());
  for (int i = 1; i <= m; ++i) out.noalias() += filters.lag(i) * history.col(m - i);
  return out;
}

template <typename Scalar, typename Derived>
Vector<Scalar> predict_one_step(const AdjacencyMatrix<Scalar>& a, const CoefficientVector<Scalar>& c,
                                const Eigen::MatrixBase<Derived>& history) {
  if (a.rows() != history.rows()) throw DimensionError("history row count mismatch");
  return predict_one_step(eval_poly_filters(a, c), history);
}

/// Predictions for columns M..K-1 of x, returned as an N x (K - M) matrix.
template <typename Scalar>
Matrix<Scalar> predict_series(const FilterStack<Scalar>& filters, const Matrix<Scalar>& x) {
  const int m = filters.order();
  const Index span = x.cols() - m;
  if (span <= 0) throw PreconditionError("series must have more than M columns");
  if (x.rows() != filters.nodes()) throw DimensionError("series row count mismatch");
  Matrix<Scalar> out = Matrix<Scalar>::Zero(x.rows(), span);
  for (int i = 1; i <= m; ++i) out.noalias() += filters.lag(i) * x.middleCols(m - i, span);
  return out;
}

struct SimulationOptions {
  /// Samples generated and discarded before the first returned column.
  Index burn_in = 0;
};

/// Runs x[k] = sum_i P_i(A) x[k - i] + w[k] with isotropic Gaussian w.
/// With burn_in == 0 the first M columns are exactly `init`.
template <typename Scalar>
TimeSeriesMatrix<Scalar> simulate_cgp(const CGPModel<Scalar>& model, Index k,
                                      const Matrix<Scalar>& init, std::uint64_t seed,
                                      const SimulationOptions& options = {}) {
  const int m = model.order();
  const Index n = model.nodes();
  detail::require_square(model.a, "adjacency matrix");
  if (init.rows() != n || init.cols() != m)
    throw DimensionError("initial state must be N x M");
  if (k <= m) throw PreconditionError("sample count must exceed the model order");
  if (options.burn_in < 0) throw PreconditionError("burn-in must be nonnegative");

  const FilterStack<Scalar> filters = eval_poly_filters(model.a, model.c);
  const Index total = k + options.burn_in;
  Matrix<Scalar> x(n, total);
  x.leftCols(m) = init;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool noisy = model.noise_std != Scalar(0);
  for (Index t = m; t < total; ++t) {
    auto col = x.col(t);
    col.setZero();
    for (int i = 1; i <= m; ++i) col.noalias() += filters.lag(i) * x.col(t - i);
    if (noisy)
      for (Index r = 0; r < n; ++r) col(r) += model.noise_std * static_cast<Scalar>(normal(rng));
    if (!col.allFinite())
      throw InstabilityError("simulated state overflowed at step " + std::to_string(t), t);
  }
  return x.rightCols(k);
}

template <typename Scalar>
struct SpectralRadiusEstimate {
  Scalar radius = Scalar(0);
  bool converged = false;
  int iterations = 0;
};

/// Largest eigenvalue magnitude by block power (subspace) iteration with a
/// Rayleigh-Ritz projection, so complex-conjugate dominant pairs converge.
template <typename Derived>
SpectralRadiusEstimate<typename Derived::Scalar> spectral_radius(
    const Eigen::MatrixBase<Derived>& mat, double tol = 1e-8, int max_iter = 20000) {
  using Scalar = typename Derived::Scalar;
  detail::require_square(mat, "matrix");
  const Index n = mat.rows();
  SpectralRadiusEstimate<Scalar> est;
  if (n == 0) {
    est.converged = true;
    return est;
  }
  const Matrix<Scalar> a = mat;
  const Index p = std::min<Index>(n, 8);

  std::mt19937_64 rng(0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix<Scalar> q(n, p);
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < n; ++i) q(i, j) = static_cast<Scalar>(normal(rng));
  q = Eigen::HouseholderQR<Matrix<Scalar>>(q).householderQ() * Matrix<Scalar>::Identity(n, p);

  Scalar prev = Scalar(-1);
  int calm = 0;
  for (int it = 1; it <= max_iter; ++it) {
    Matrix<Scalar> z = a * q;
    const Scalar scale = z.cwiseAbs().maxCoeff();
    est.iterations = it;
    if (scale == Scalar(0)) {
      est.radius = Scalar(0);
      est.converged = true;
      return est;
    }
    q = Eigen::HouseholderQR<Matrix<Scalar>>(z / scale).householderQ() *
        Matrix<Scalar>::Identity(n, p);
    const Matrix<Scalar> h = q.transpose() * a * q;
    Eigen::EigenSolver<Matrix<Scalar>> es(h, false);
    const Scalar radius = es.eigenvalues().cwiseAbs().maxCoeff();
    est.radius = radius;
    if (prev >= Scalar(0) && std::abs(radius - prev) <= tol * std::max(radius, Scalar(1e-300))) {
      if (++calm >= 3) {
        est.converged = true;
        return est;
      }
    } else {
      calm = 0;
    }
    prev = radius;
  }
  return est;
}

/// NM x NM block companion matrix of the lag recursion.
template <typename Scalar>
Matrix<Scalar> companion_matrix(const FilterStack<Scalar>& filters) {
  const int m = filters.order();
  const Index n = filters.nodes();
  Matrix<Scalar> comp = Matrix<Scalar>::Zero(n * m, n * m);
  for (int i = 1; i <= m; ++i) comp.block(0, (i - 1) * n, n, n) = filters.lag(i);
  if (m > 1) comp.block(n, 0, n * (m - 1), n * (m - 1)).setIdentity();
  return comp;
}

template <typename Scalar>
struct StabilityReport {
  bool stable = false;
  Scalar radius = Scalar(0);
  bool converged = false;
};

template <typename Scalar>
StabilityReport<Scalar> stability_check(const CGPModel<Scalar>& model, double tol = 1e-8,
                                        int max_iter = 20000) {
  const auto est = spectral_radius(companion_matrix(eval_poly_filters(model.a, model.c)), tol, max_iter);
  return {est.radius < Scalar(1), est.radius, est.converged};
}

}  // namespace cgpnet
