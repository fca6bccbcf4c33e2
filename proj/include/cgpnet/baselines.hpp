#pragma once

// Comparison models: sparse VAR with a lag-group lasso, and polynomial
// filters of a fixed distance-kernel graph.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "cgpnet/model.hpp"
#include "cgpnet/prox.hpp"
#include "cgpnet/solver.hpp"

namespace cgpnet {

template <typename Scalar>
struct SvarResult {
  /// A^(1) .. A^(M).
  FilterStack<Scalar> mats;
  /// Entry (i, j) is set when the lag vector (A^(1)_ij, ..., A^(M)_ij) has
  /// norm above the support threshold.
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> support;
  std::vector<Scalar> objective_trace;
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> warnings;
};

inline constexpr double kSupportThreshold = 1e-6;

namespace detail {

/// 0.5 ||Y - W Z||^2 over the stacked W = [A1 ... AM], written with the
/// lagged second moments so evaluation cost does not depend on K.
template <typename Scalar>
class SvarLoss {
 public:
  explicit SvarLoss(const LaggedGram<Scalar>& lg) : lg_(lg) {
    const Index n = lg.nodes;
    const int m = lg.order;
    s_.resize(n, n * m);
    g_.resize(n * m, n * m);
    for (int i = 1; i <= m; ++i) {
      s_.middleCols((i - 1) * n, n) = lg.s(i);
      for (int j = 1; j <= m; ++j) g_.block((i - 1) * n, (j - 1) * n, n, n) = lg.g(i, j);
    }
  }

  Scalar value(const Matrix<Scalar>& w) const {
    return Scalar(0.5) * lg_.yy - s_.cwiseProduct(w).sum() + Scalar(0.5) * (w * g_).cwiseProduct(w).sum();
  }
  Scalar value_and_gradient(const Matrix<Scalar>& w, Matrix<Scalar>& grad) const {
    const Matrix<Scalar> wg = w * g_;
    grad = wg - s_;
    return Scalar(0.5) * lg_.yy - s_.cwiseProduct(w).sum() + Scalar(0.5) * wg.cwiseProduct(w).sum();
  }

 private:
  const LaggedGram<Scalar>& lg_;
  Matrix<Scalar> s_;
  Matrix<Scalar> g_;
};

}  // namespace detail

/// Data loss of the VAR with lag matrices `mats` plus lambda times the sum
/// of lag-group norms.
template <typename Scalar>
Scalar svar_objective(const TimeSeriesMatrix<Scalar>& x, const FilterStack<Scalar>& mats, double lambda) {
  const int m = mats.order();
  const Index n = x.rows();
  Matrix<Scalar> w(n, n * m);
  for (int i = 1; i <= m; ++i) w.middleCols((i - 1) * n, n) = mats.lag(i);
  const Matrix<Scalar> resid = x.middleCols(m, x.cols() - m) - predict_series(mats, x);
  return Scalar(0.5) * resid.squaredNorm() + LagGroupPenalty<Scalar>{Scalar(lambda), m}.value(w);
}

/// Gradient of the SVAR data loss with respect to the stacked [A1 ... AM].
template <typename Scalar>
Matrix<Scalar> svar_gradient(const TimeSeriesMatrix<Scalar>& x, const FilterStack<Scalar>& mats) {
  const int m = mats.order();
  const Index n = x.rows();
  const Index span = x.cols() - m;
  const Matrix<Scalar> resid = x.middleCols(m, span) - predict_series(mats, x);
  Matrix<Scalar> g(n, n * m);
  for (int i = 1; i <= m; ++i) g.middleCols((i - 1) * n, n) = -resid * x.middleCols(m - i, span).transpose();
  return g;
}

/// Proximal gradient on 0.5 sum_k ||x[k] - sum_i A^(i) x[k-i]||^2 +
/// lambda sum_ij ||a_ij||_2 started from zero. Uses the inner-solver
/// settings of `config` (iteration cap, tolerance, backtracking).
template <typename Scalar>
SvarResult<Scalar> svar_group_lasso(const TimeSeriesMatrix<Scalar>& x, int m, double lambda,
                                    const SolverConfig& config) {
  config.validate();
  if (lambda < 0) throw PreconditionError("lambda must be nonnegative");
  const auto lg = LaggedGram<Scalar>::build(x, m);
  const Index n = x.rows();
  const detail::SvarLoss<Scalar> loss(lg);
  const LagGroupPenalty<Scalar> pen{Scalar(lambda), m};

  ProxOptions opt = config.prox_options();
  auto r = minimize_prox<Scalar>(loss, pen, Matrix<Scalar>::Zero(n, n * m), opt);

  SvarResult<Scalar> out;
  out.mats = FilterStack<Scalar>::zeros(m, n);
  for (int i = 1; i <= m; ++i) out.mats.lag(i) = r.point.middleCols((i - 1) * n, n);
  out.support.resize(n, n);
  for (Index c = 0; c < n; ++c)
    for (Index row = 0; row < n; ++row) {
      Scalar s = Scalar(0);
      for (int i = 1; i <= m; ++i) s += out.mats.lag(i)(row, c) * out.mats.lag(i)(row, c);
      out.support(row, c) = std::sqrt(s) > Scalar(kSupportThreshold);
    }
  out.objective_trace = std::move(r.trace);
  out.converged = r.converged;
  out.iterations = r.iterations;
  if (r.step_underflow) out.warnings.push_back("step underflow, previous iterate kept");
  return out;
}

enum class NeighborRule {
  /// Weight kept if either endpoint lists the other among its neighbors.
  either,
  /// Weight kept only for mutual neighbors.
  both
};

template <typename Scalar>
struct DistanceGraph {
  Matrix<Scalar> dist;
  Index k_nn = 8;
  Matrix<Scalar> adj;
};

/// Gaussian-kernel graph exp(-d_mn^2) normalized by the geometric mean of the
/// kernel mass in each endpoint's k_nn-neighborhood (self excluded). Pairs
/// outside the neighborhoods, and the diagonal, are zero.
template <typename Scalar>
DistanceGraph<Scalar> distance_adjacency(const Matrix<Scalar>& dist, Index k_nn = 8,
                                         NeighborRule rule = NeighborRule::either) {
  detail::require_square(dist, "distance matrix");
  const Index n = dist.rows();
  if (k_nn < 1 || k_nn >= n)
    throw PreconditionError("k_nn must lie in [1, n - 1], got " + std::to_string(k_nn));
  if (!dist.allFinite() || (dist.array() < Scalar(0)).any())
    throw PreconditionError("distances must be finite and nonnegative");
  if (!dist.isApprox(dist.transpose()) || dist.diagonal().cwiseAbs().maxCoeff() != Scalar(0))
    throw PreconditionError("distance matrix must be symmetric with zero diagonal");

  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> near =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, n, false);
  Vector<Scalar> mass = Vector<Scalar>::Zero(n);
  std::vector<Index> order;
  for (Index v = 0; v < n; ++v) {
    order.resize(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index(0));
    order.erase(order.begin() + v);
    // Ties broken by index so the neighborhood is reproducible.
    std::stable_sort(order.begin(), order.end(), [&](Index p, Index q) { return dist(v, p) < dist(v, q); });
    for (Index t = 0; t < k_nn; ++t) {
      const Index u = order[static_cast<std::size_t>(t)];
      near(v, u) = true;
      mass(v) += std::exp(-dist(v, u) * dist(v, u));
    }
  }

  DistanceGraph<Scalar> g{dist, k_nn, Matrix<Scalar>::Zero(n, n)};
  for (Index p = 0; p < n; ++p)
    for (Index q = 0; q < n; ++q) {
      if (p == q) continue;
      const bool keep = rule == NeighborRule::either ? (near(p, q) || near(q, p)) : (near(p, q) && near(q, p));
      if (keep) g.adj(p, q) = std::exp(-dist(p, q) * dist(p, q)) / std::sqrt(mass(p) * mass(q));
    }
  return g;
}

/// Coefficients h_i(A) = sum_{j=0}^{L} coef(j, i - 1) A^j of a fixed graph.
template <typename Scalar>
struct DistanceGraphFit {
  Matrix<Scalar> coef;
  FilterStack<Scalar> filters;
  bool rank_deficient = false;
  bool converged = true;
};

/// Lasso fit of every polynomial coefficient (none pinned) for the process
/// x[k] = sum_i h_i(A) x[k - i] + w[k] with A fixed to the given graph.
template <typename Scalar>
DistanceGraphFit<Scalar> fit_distance_graph(const TimeSeriesMatrix<Scalar>& x, const Matrix<Scalar>& adj, int m,
                                            int l, double lambda, const SolverConfig& config) {
  config.validate();
  if (m < 1 || l < 0) throw PreconditionError("need m >= 1 and l >= 0");
  if (x.cols() <= m) throw PreconditionError("need K > M");
  if (lambda < 0) throw PreconditionError("lambda must be nonnegative");
  detail::require_square(adj, "graph adjacency");
  if (adj.rows() != x.rows()) throw DimensionError("graph and series sizes differ");
  const Index n = x.rows();
  const Index span = x.cols() - m;
  const auto pw = detail::matrix_powers<Scalar>(adj, l);

  Matrix<Scalar> design(n * span, m * (l + 1));
  for (int i = 1; i <= m; ++i)
    for (int j = 0; j <= l; ++j) {
      const Matrix<Scalar> col = pw[static_cast<std::size_t>(j)] * x.middleCols(m - i, span);
      design.col((i - 1) * (l + 1) + j) = Eigen::Map<const Vector<Scalar>>(col.data(), n * span);
    }
  const Matrix<Scalar> y = x.middleCols(m, span);
  const Eigen::Map<const Vector<Scalar>> yv(y.data(), n * span);
  const auto sol = lasso_normal<Scalar>(design.transpose() * design, design.transpose() * yv, Scalar(lambda));

  DistanceGraphFit<Scalar> fit;
  fit.coef.resize(l + 1, m);
  for (int i = 1; i <= m; ++i) fit.coef.col(i - 1) = sol.coef.segment((i - 1) * (l + 1), l + 1);
  fit.filters = FilterStack<Scalar>::zeros(m, n);
  for (int i = 1; i <= m; ++i)
    for (int j = 0; j <= l; ++j) fit.filters.lag(i) += fit.coef(j, i - 1) * pw[static_cast<std::size_t>(j)];
  fit.rank_deficient = sol.rank_deficient;
  fit.converged = sol.converged;
  return fit;
}

}  // namespace cgpnet
