#pragma once

// Estimation of the adjacency matrix and filter coefficients of a causal
// graph process: commutator-regularized block coordinate descent for the
// lag filters, recovery of A, coefficient fits, and joint refinement.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cgpnet/model.hpp"
#include "cgpnet/prox.hpp"

namespace cgpnet {

enum class RecoverMethod { take_r1, commutator };
enum class CoefficientSource { from_r, from_data };

struct SolverConfig {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
  int max_sweeps = 50;
  int max_inner_iter = 500;
  double tol_rel = 1e-6;
  double backtrack_beta = 0.5;
  double step_init = 1.0;
  /// Prox-step movement tolerance for the inner solvers.
  double inner_tol = 1e-9;
  /// Alternations between the A and c blocks during joint refinement.
  int max_refine_sweeps = 200;
  RecoverMethod recover = RecoverMethod::take_r1;
  CoefficientSource coefficients = CoefficientSource::from_data;
  std::uint64_t seed = 0;

  void validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0)
      throw PreconditionError("penalty weights must be nonnegative");
    if (!(tol_rel > 0) || !(inner_tol > 0)) throw PreconditionError("tolerances must be positive");
    if (!(backtrack_beta > 0 && backtrack_beta < 1))
      throw PreconditionError("backtrack_beta must lie in (0, 1)");
    if (!(step_init > 0)) throw PreconditionError("step_init must be positive");
    if (max_sweeps < 1 || max_inner_iter < 1 || max_refine_sweeps < 0)
      throw PreconditionError("iteration caps must be positive");
  }

  ProxOptions prox_options() const {
    ProxOptions o;
    o.max_iter = max_inner_iter;
    o.tol = inner_tol;
    o.step_init = step_init;
    o.backtrack_beta = backtrack_beta;
    return o;
  }
};

/// Data-scaled penalty weight 0.1 ||X||_F / sqrt(K).
template <typename Scalar>
double default_lambda(const Matrix<Scalar>& x) {
  return 0.1 * static_cast<double>(x.norm()) / std::sqrt(static_cast<double>(x.cols()));
}

template <typename Scalar>
struct EstimationResult {
  AdjacencyMatrix<Scalar> a;
  CoefficientVector<Scalar> c;
  FilterStack<Scalar> r;
  /// Sweep objective of the filter-stack descent (initial value first).
  std::vector<Scalar> bcd_trace;
  /// Joint objective during refinement; empty for the basic algorithm.
  std::vector<Scalar> objective_trace;
  bool converged = false;
  int sweeps_used = 0;
  std::vector<std::string> warnings;
};

/// Second-moment summaries of a lagged regression. With Y = X[:, M:K] and
/// X_i = X[:, M-i : K-i], holds S_i = Y X_i', G_ij = X_i X_j' and ||Y||^2,
/// so every solver evaluation is independent of K.
template <typename Scalar>
struct LaggedGram {
  int order = 0;
  Index nodes = 0;
  Index span = 0;
  Scalar yy = Scalar(0);
  std::vector<Matrix<Scalar>> cross;
  std::vector<Matrix<Scalar>> grams;

  const Matrix<Scalar>& s(int i) const { return cross[static_cast<std::size_t>(i - 1)]; }
  const Matrix<Scalar>& g(int i, int j) const {
    return grams[static_cast<std::size_t>((i - 1) * order + (j - 1))];
  }

  static LaggedGram build(const Matrix<Scalar>& x, int m) {
    if (m < 1) throw PreconditionError("model order must be >= 1");
    if (x.cols() <= m)
      throw PreconditionError("need more samples than the model order (K > M), got K = " +
                              std::to_string(x.cols()) + ", M = " + std::to_string(m));
    if (!x.allFinite()) throw PreconditionError("time series contains nonfinite entries");
    LaggedGram lg;
    lg.order = m;
    lg.nodes = x.rows();
    lg.span = x.cols() - m;
    const auto y = x.middleCols(m, lg.span);
    lg.yy = y.squaredNorm();
    for (int i = 1; i <= m; ++i) lg.cross.push_back(y * x.middleCols(m - i, lg.span).transpose());
    lg.grams.resize(static_cast<std::size_t>(m * m));
    for (int i = 1; i <= m; ++i)
      for (int j = i; j <= m; ++j) {
        Matrix<Scalar> gij = x.middleCols(m - i, lg.span) * x.middleCols(m - j, lg.span).transpose();
        lg.grams[static_cast<std::size_t>((j - 1) * m + (i - 1))] = gij.transpose();
        lg.grams[static_cast<std::size_t>((i - 1) * m + (j - 1))] = std::move(gij);
      }
    return lg;
  }
};

namespace detail {

/// T_i = sum_l R_l G_li, so that d(data loss)/dR_i = T_i - S_i.
template <typename Scalar>
std::vector<Matrix<Scalar>> stack_products(const LaggedGram<Scalar>& lg, const FilterStack<Scalar>& r) {
  std::vector<Matrix<Scalar>> t;
  t.reserve(static_cast<std::size_t>(lg.order));
  for (int i = 1; i <= lg.order; ++i) {
    Matrix<Scalar> ti = Matrix<Scalar>::Zero(lg.nodes, lg.nodes);
    for (int l = 1; l <= lg.order; ++l) ti.noalias() += r.lag(l) * lg.g(l, i);
    t.push_back(std::move(ti));
  }
  return t;
}

template <typename Scalar>
Scalar gram_data_loss(const LaggedGram<Scalar>& lg, const FilterStack<Scalar>& r,
                      const std::vector<Matrix<Scalar>>& t) {
  Scalar v = Scalar(0.5) * lg.yy;
  for (int i = 1; i <= lg.order; ++i)
    v += r.lag(i).cwiseProduct(Scalar(0.5) * t[static_cast<std::size_t>(i - 1)] - lg.s(i)).sum();
  return v;
}

template <typename Scalar>
Scalar commutator_penalty(const FilterStack<Scalar>& r) {
  Scalar v = Scalar(0);
  for (int i = 1; i <= r.order(); ++i)
    for (int j = i + 1; j <= r.order(); ++j) v += commutator(r.lag(i), r.lag(j)).squaredNorm();
  return v;
}

/// Gradient of ||[X, Q]||_F^2 with respect to X.
template <typename Scalar>
Matrix<Scalar> commutator_gradient(const Matrix<Scalar>& x, const Matrix<Scalar>& q) {
  const Matrix<Scalar> c = commutator(x, q);
  Matrix<Scalar> g = c * q.transpose();
  g.noalias() -= q.transpose() * c;
  return Scalar(2) * g;
}

template <typename Scalar>
Scalar sweep_objective(const LaggedGram<Scalar>& lg, const FilterStack<Scalar>& r, double lambda1,
                       double lambda2) {
  const auto t = stack_products(lg, r);
  return gram_data_loss(lg, r, t) + Scalar(lambda1) * r.lag(1).cwiseAbs().sum() +
         Scalar(lambda2) * commutator_penalty(r);
}

}  // namespace detail

/// 0.5 sum_{k=M}^{K-1} || x[k] - sum_i R_i x[k-i] ||^2, from the residual.
template <typename Scalar>
Scalar cgp_data_loss(const TimeSeriesMatrix<Scalar>& x, const FilterStack<Scalar>& r) {
  const int m = r.order();
  if (m < 1) throw PreconditionError("filter stack is empty");
  if (x.cols() <= m) throw PreconditionError("need K > M");
  if (x.rows() != r.nodes()) throw DimensionError("series and filters disagree on node count");
  const Matrix<Scalar> resid = x.rightCols(x.cols() - m) - predict_series(r, x);
  return Scalar(0.5) * resid.squaredNorm();
}

/// Gradient of the block-i objective data loss + lambda2 sum_{j != i}
/// ||[R_i, R_j]||^2 with the other blocks held fixed, from the residual.
template <typename Scalar>
Matrix<Scalar> grad_block(const TimeSeriesMatrix<Scalar>& x, const FilterStack<Scalar>& r, int i,
                          double lambda2) {
  const int m = r.order();
  if (i < 1 || i > m) throw PreconditionError("block index out of range");
  if (x.cols() <= m) throw PreconditionError("need K > M");
  const Index span = x.cols() - m;
  const Matrix<Scalar> resid = x.rightCols(span) - predict_series(r, x);
  Matrix<Scalar> g = -resid * x.middleCols(m - i, span).transpose();
  for (int j = 1; j <= m; ++j)
    if (j != i) g += Scalar(lambda2) * detail::commutator_gradient(r.lag(i), r.lag(j));
  return g;
}

/// Smooth part of the block-i subproblem, up to an additive constant:
/// 0.5 <R, R G_ii> - <R, B_i> + lambda2 sum_{j != i} ||[R, R_j]||^2 with
/// B_i = S_i - sum_{j != i} R_j G_ji.
template <typename Scalar>
class BlockObjective {
 public:
  BlockObjective(const LaggedGram<Scalar>& lg, const FilterStack<Scalar>& r, int i, double lambda2)
      : lg_(lg), r_(r), i_(i), lambda2_(lambda2) {
    b_ = lg.s(i);
    for (int j = 1; j <= lg.order; ++j)
      if (j != i) b_.noalias() -= r.lag(j) * lg.g(j, i);
  }

  Scalar value(const Matrix<Scalar>& x) const {
    Scalar v = x.cwiseProduct(Scalar(0.5) * (x * lg_.g(i_, i_)) - b_).sum();
    for (int j = 1; j <= lg_.order; ++j)
      if (j != i_) v += Scalar(lambda2_) * commutator(x, r_.lag(j)).squaredNorm();
    return v;
  }

  Scalar value_and_gradient(const Matrix<Scalar>& x, Matrix<Scalar>& grad) const {
    const Matrix<Scalar> xg = x * lg_.g(i_, i_);
    Scalar v = x.cwiseProduct(Scalar(0.5) * xg - b_).sum();
    grad = xg - b_;
    for (int j = 1; j <= lg_.order; ++j) {
      if (j == i_) continue;
      const Matrix<Scalar>& q = r_.lag(j);
      const Matrix<Scalar> c = commutator(x, q);
      v += Scalar(lambda2_) * c.squaredNorm();
      grad.noalias() += Scalar(2 * lambda2_) * (c * q.transpose());
      grad.noalias() -= Scalar(2 * lambda2_) * (q.transpose() * c);
    }
    return v;
  }

 private:
  const LaggedGram<Scalar>& lg_;
  const FilterStack<Scalar>& r_;
  int i_;
  double lambda2_;
  Matrix<Scalar> b_;
};

template <typename Scalar>
struct BlockUpdate {
  Matrix<Scalar> mat;
  double step = 1.0;
  bool step_underflow = false;
};

namespace detail {

template <typename Scalar>
BlockUpdate<Scalar> update_block_gram(const LaggedGram<Scalar>& lg, const FilterStack<Scalar>& r, int i,
                                      const SolverConfig& config, double step_init) {
  const BlockObjective<Scalar> f(lg, r, i, config.lambda2);
  ProxOptions opt = config.prox_options();
  opt.step_init = step_init;
  ProxResult<Scalar> res = (i == 1)
      ? minimize_prox<Scalar>(f, L1Penalty<Scalar>{Scalar(config.lambda1)}, r.lag(i), opt)
      : minimize_prox<Scalar>(f, NoPenalty{}, r.lag(i), opt);
  return {std::move(res.point), res.final_step, res.step_underflow};
}

}  // namespace detail

/// Proximal-gradient solve of the block-i subproblem; soft thresholding
/// applies to R_1 only.
template <typename Scalar>
Matrix<Scalar> update_block(const TimeSeriesMatrix<Scalar>& x, const FilterStack<Scalar>& r, int i,
                            const SolverConfig& config, std::vector<std::string>* warnings = nullptr) {
  config.validate();
  if (i < 1 || i > r.order()) throw PreconditionError("block index out of range");
  const auto lg = LaggedGram<Scalar>::build(x, r.order());
  auto up = detail::update_block_gram(lg, r, i, config, config.step_init);
  if (up.step_underflow && warnings)
    warnings->push_back("block " + std::to_string(i) + ": step underflow, previous iterate kept");
  return up.mat;
}

template <typename Scalar>
struct BcdResult {
  FilterStack<Scalar> r;
  std::vector<Scalar> trace;
  bool converged = false;
  int sweeps_used = 0;
  std::vector<std::string> warnings;
};

namespace detail {

template <typename Scalar>
BcdResult<Scalar> bcd_gram(const LaggedGram<Scalar>& lg, const SolverConfig& config) {
  BcdResult<Scalar> out;
  out.r = FilterStack<Scalar>::zeros(lg.order, lg.nodes);
  std::vector<double> steps(static_cast<std::size_t>(lg.order), config.step_init);
  Scalar prev = sweep_objective(lg, out.r, config.lambda1, config.lambda2);
  out.trace.push_back(prev);
  for (int sweep = 1; sweep <= config.max_sweeps; ++sweep) {
    out.sweeps_used = sweep;
    for (int i = 1; i <= lg.order; ++i) {
      double& step = steps[static_cast<std::size_t>(i - 1)];
      auto up = update_block_gram(lg, out.r, i, config, std::min(config.step_init, step / config.backtrack_beta));
      if (up.step_underflow) {
        out.warnings.push_back("sweep " + std::to_string(sweep) + ", block " + std::to_string(i) +
                               ": step underflow, previous iterate kept");
        continue;
      }
      step = up.step;
      out.r.lag(i) = std::move(up.mat);
    }
    const Scalar cur = sweep_objective(lg, out.r, config.lambda1, config.lambda2);
    out.trace.push_back(cur);
    if (std::abs(prev - cur) <= Scalar(config.tol_rel) * std::max(std::abs(prev), Scalar(1e-300))) {
      out.converged = true;
      break;
    }
    prev = cur;
  }
  return out;
}

}  // namespace detail

/// Cyclic block coordinate descent over R_1..R_M from R = 0. The trace
/// records data loss + lambda1 ||R_1||_1 + lambda2 sum_{i<j} ||[R_i,R_j]||^2
/// before the first sweep and after each sweep.
template <typename Scalar>
BcdResult<Scalar> block_coordinate_descent(const TimeSeriesMatrix<Scalar>& x, int m,
                                           const SolverConfig& config) {
  config.validate();
  return detail::bcd_gram(LaggedGram<Scalar>::build(x, m), config);
}

template <typename Scalar>
AdjacencyMatrix<Scalar> recover_a_take_r1(const FilterStack<Scalar>& r) {
  if (r.order() < 1) throw PreconditionError("filter stack is empty");
  return r.lag(1);
}

/// ||R_1 - A||_F^2 + lambda2 sum_{i>=2} ||[A, R_i]||_F^2.
template <typename Scalar>
class CommutatorFitObjective {
 public:
  CommutatorFitObjective(const FilterStack<Scalar>& r, double lambda2) : r_(r), lambda2_(lambda2) {}

  Scalar value(const Matrix<Scalar>& a) const {
    Scalar v = (r_.lag(1) - a).squaredNorm();
    for (int i = 2; i <= r_.order(); ++i) v += Scalar(lambda2_) * commutator(a, r_.lag(i)).squaredNorm();
    return v;
  }

  Scalar value_and_gradient(const Matrix<Scalar>& a, Matrix<Scalar>& grad) const {
    grad = Scalar(2) * (a - r_.lag(1));
    Scalar v = (r_.lag(1) - a).squaredNorm();
    for (int i = 2; i <= r_.order(); ++i) {
      v += Scalar(lambda2_) * commutator(a, r_.lag(i)).squaredNorm();
      grad += Scalar(lambda2_) * detail::commutator_gradient(a, r_.lag(i));
    }
    return v;
  }

 private:
  const FilterStack<Scalar>& r_;
  double lambda2_;
};

/// Fits A to R_1 while penalizing non-commutation with the higher lags;
/// l1-regularized with lambda1, started from R_1.
template <typename Scalar>
AdjacencyMatrix<Scalar> recover_a_commutator(const FilterStack<Scalar>& r, const SolverConfig& config,
                                             std::vector<std::string>* warnings = nullptr) {
  config.validate();
  if (r.order() < 2) return recover_a_take_r1(r);
  const CommutatorFitObjective<Scalar> f(r, config.lambda2);
  const auto res =
      minimize_prox<Scalar>(f, L1Penalty<Scalar>{Scalar(config.lambda1)}, r.lag(1), config.prox_options());
  if (res.step_underflow && warnings)
    warnings->push_back("commutator recovery: step underflow, previous iterate kept");
  return res.point;
}

/// Per-lag l1-regularized fit of vec(R_i) on (vec I, vec A, ..., vec A^i).
/// c10 = 0 and c11 = 1 are fixed, so lag 1 has no free coefficients.
template <typename Scalar>
CoefficientVector<Scalar> estimate_c_from_r(const AdjacencyMatrix<Scalar>& a, const FilterStack<Scalar>& r,
                                            const SolverConfig& config,
                                            std::vector<std::string>* warnings = nullptr) {
  config.validate();
  const int m = r.order();
  if (m < 1) throw PreconditionError("filter stack is empty");
  detail::require_square(a, "adjacency matrix");
  if (a.rows() != r.nodes()) throw DimensionError("adjacency and filter stack sizes differ");
  const Index n = a.rows();
  const auto pw = detail::matrix_powers<Scalar>(a, m);
  auto c = CoefficientVector<Scalar>::normalized(m);
  for (int i = 2; i <= m; ++i) {
    Matrix<Scalar> q(n * n, i + 1);
    for (int j = 0; j <= i; ++j)
      q.col(j) = Eigen::Map<const Vector<Scalar>>(pw[static_cast<std::size_t>(j)].data(), n * n);
    const Eigen::Map<const Vector<Scalar>> target(r.lag(i).data(), n * n);
    const Matrix<Scalar> h = q.transpose() * q;
    const Vector<Scalar> b = q.transpose() * target;
    const auto sol = lasso_normal<Scalar>(h, b, Scalar(config.lambda3));
    if (sol.rank_deficient && warnings)
      warnings->push_back("lag " + std::to_string(i) + ": power basis is rank deficient");
    for (int j = 0; j <= i; ++j) c(i, j) = sol.coef(j);
  }
  return c;
}

/// Regression of vec(X_M) - vec(A X_{M-1}) on the columns vec(A^j X_{M-i})
/// of every free coefficient c_ij, with an l1 penalty lambda3.
template <typename Scalar>
CoefficientVector<Scalar> estimate_c_from_data(const AdjacencyMatrix<Scalar>& a,
                                               const TimeSeriesMatrix<Scalar>& x, int m,
                                               const SolverConfig& config,
                                               std::vector<std::string>* warnings = nullptr) {
  config.validate();
  if (m < 1) throw PreconditionError("model order must be >= 1");
  if (x.cols() <= m) throw PreconditionError("need K > M");
  detail::require_square(a, "adjacency matrix");
  if (a.rows() != x.rows()) throw DimensionError("adjacency and series sizes differ");
  const Index n = x.rows();
  const Index span = x.cols() - m;
  const auto pw = detail::matrix_powers<Scalar>(a, m);

  Matrix<Scalar> y = x.middleCols(m, span) - a * x.middleCols(m - 1, span);
  const Index nfree = coefficient_count(m) - 2;
  Matrix<Scalar> design(n * span, nfree);
  Index col = 0;
  for (int i = 1; i <= m; ++i)
    for (int j = 0; j <= i; ++j) {
      if (i == 1) continue;
      const Matrix<Scalar> blockv = pw[static_cast<std::size_t>(j)] * x.middleCols(m - i, span);
      design.col(col++) = Eigen::Map<const Vector<Scalar>>(blockv.data(), n * span);
    }
  const Eigen::Map<const Vector<Scalar>> yv(y.data(), n * span);
  const Matrix<Scalar> h = design.transpose() * design;
  const Vector<Scalar> b = design.transpose() * yv;
  const auto sol = lasso_normal<Scalar>(h, b, Scalar(config.lambda3));
  if (sol.rank_deficient && warnings) warnings->push_back("coefficient design is rank deficient");
  auto c = CoefficientVector<Scalar>::normalized(m);
  c.set_free_values(sol.coef);
  return c;
}

/// Data loss + lambda1 ||vec A||_1 + lambda2 ||c_free||_1.
template <typename Scalar>
Scalar joint_objective(const TimeSeriesMatrix<Scalar>& x, const AdjacencyMatrix<Scalar>& a,
                       const CoefficientVector<Scalar>& c, const SolverConfig& config) {
  if (!c.is_normalized()) throw PreconditionError("joint objective needs c10 = 0, c11 = 1");
  return cgp_data_loss(x, eval_poly_filters(a, c)) + Scalar(config.lambda1) * a.cwiseAbs().sum() +
         Scalar(config.lambda2) * c.free_values().cwiseAbs().sum();
}

namespace detail {

/// Data loss of (A, c) and its partials D_i = d loss / d P_i.
template <typename Scalar>
Scalar joint_loss_parts(const LaggedGram<Scalar>& lg, const FilterStack<Scalar>& p,
                        std::vector<Matrix<Scalar>>* partials) {
  auto t = stack_products(lg, p);
  const Scalar v = gram_data_loss(lg, p, t);
  if (partials) {
    for (int i = 1; i <= lg.order; ++i) t[static_cast<std::size_t>(i - 1)] -= lg.s(i);
    *partials = std::move(t);
  }
  return v;
}

}  // namespace detail

/// Data loss as a function of A with the coefficients held fixed.
/// The gradient chains through the powers of A:
/// d tr(S' A^j) / dA = sum_{l<j} (A')^l S (A')^{j-1-l}.
template <typename Scalar>
class JointAObjective {
 public:
  JointAObjective(const LaggedGram<Scalar>& lg, const CoefficientVector<Scalar>& c) : lg_(lg), c_(c) {}

  Scalar value(const Matrix<Scalar>& a) const {
    return detail::joint_loss_parts<Scalar>(lg_, eval_poly_filters(a, c_), nullptr);
  }

  Scalar value_and_gradient(const Matrix<Scalar>& a, Matrix<Scalar>& grad) const {
    const int m = c_.order();
    std::vector<Matrix<Scalar>> d;
    const Scalar v = detail::joint_loss_parts<Scalar>(lg_, eval_poly_filters(a, c_), &d);
    const Matrix<Scalar> at = a.transpose();
    const auto pw = detail::matrix_powers<Scalar>(at, m);
    grad = Matrix<Scalar>::Zero(a.rows(), a.cols());
    for (int j = 1; j <= m; ++j) {
      Matrix<Scalar> vj = Matrix<Scalar>::Zero(a.rows(), a.cols());
      for (int i = j; i <= m; ++i) vj += c_(i, j) * d[static_cast<std::size_t>(i - 1)];
      if (vj.isZero(0)) continue;
      for (int l = 0; l < j; ++l)
        grad.noalias() += pw[static_cast<std::size_t>(l)] * vj * pw[static_cast<std::size_t>(j - 1 - l)];
    }
    return v;
  }

 private:
  const LaggedGram<Scalar>& lg_;
  const CoefficientVector<Scalar>& c_;
};

/// Data loss as a function of the free coefficients (column vector) with A
/// fixed; d loss / d c_ij = <D_i, A^j>.
template <typename Scalar>
class JointCObjective {
 public:
  JointCObjective(const LaggedGram<Scalar>& lg, const AdjacencyMatrix<Scalar>& a)
      : lg_(lg), a_(a), pw_(detail::matrix_powers<Scalar>(a, lg.order)) {}

  CoefficientVector<Scalar> coefficients(const Matrix<Scalar>& free) const {
    auto c = CoefficientVector<Scalar>::normalized(lg_.order);
    c.set_free_values(free.col(0));
    return c;
  }

  Scalar value(const Matrix<Scalar>& free) const {
    return detail::joint_loss_parts<Scalar>(lg_, eval_poly_filters(a_, coefficients(free)), nullptr);
  }

  Scalar value_and_gradient(const Matrix<Scalar>& free, Matrix<Scalar>& grad) const {
    std::vector<Matrix<Scalar>> d;
    const Scalar v = detail::joint_loss_parts<Scalar>(lg_, eval_poly_filters(a_, coefficients(free)), &d);
    grad.resize(free.rows(), 1);
    Index k = 0;
    for (int i = 1; i <= lg_.order; ++i)
      for (int j = 0; j <= i; ++j) {
        if (i == 1) continue;
        grad(k++, 0) = d[static_cast<std::size_t>(i - 1)].cwiseProduct(pw_[static_cast<std::size_t>(j)]).sum();
      }
    return v;
  }

 private:
  const LaggedGram<Scalar>& lg_;
  const AdjacencyMatrix<Scalar>& a_;
  std::vector<Matrix<Scalar>> pw_;
};

/// Alternating proximal-gradient descent on the joint objective, first over
/// A with c fixed, then over the free coefficients with A fixed.
template <typename Scalar>
EstimationResult<Scalar> extended_refinement(const TimeSeriesMatrix<Scalar>& x, const AdjacencyMatrix<Scalar>& a0,
                                             const CoefficientVector<Scalar>& c0, const SolverConfig& config) {
  config.validate();
  if (!c0.is_normalized()) throw PreconditionError("refinement needs c10 = 0, c11 = 1");
  detail::require_square(a0, "adjacency matrix");
  if (a0.rows() != x.rows()) throw DimensionError("adjacency and series sizes differ");
  const int m = c0.order();
  const auto lg = LaggedGram<Scalar>::build(x, m);

  EstimationResult<Scalar> out;
  out.a = a0;
  out.c = c0;
  const Scalar l1 = Scalar(config.lambda1);
  const Scalar l2 = Scalar(config.lambda2);
  auto penalty_a = [&](const Matrix<Scalar>& a) { return l1 * a.cwiseAbs().sum(); };
  auto penalty_c = [&](const CoefficientVector<Scalar>& c) { return l2 * c.free_values().cwiseAbs().sum(); };

  Scalar f = JointAObjective<Scalar>(lg, out.c).value(out.a) + penalty_a(out.a) + penalty_c(out.c);
  out.objective_trace.push_back(f);
  ProxOptions opt = config.prox_options();
  double step_a = config.step_init;
  double step_c = config.step_init;

  for (int sweep = 1; sweep <= config.max_refine_sweeps; ++sweep) {
    out.sweeps_used = sweep;
    const Scalar before = f;

    opt.step_init = std::min(config.step_init, step_a / config.backtrack_beta);
    const JointAObjective<Scalar> fa(lg, out.c);
    auto ra = minimize_prox<Scalar>(fa, L1Penalty<Scalar>{l1}, out.a, opt);
    out.a = std::move(ra.point);
    step_a = ra.final_step;
    if (ra.step_underflow) {
      out.warnings.push_back("refinement A-step: step underflow");
      out.converged = false;
      break;
    }

    if (m > 1) {
      opt.step_init = std::min(config.step_init, step_c / config.backtrack_beta);
      const JointCObjective<Scalar> fc(lg, out.a);
      auto rc = minimize_prox<Scalar>(fc, L1Penalty<Scalar>{l2}, Matrix<Scalar>(out.c.free_values()), opt);
      out.c = fc.coefficients(rc.point);
      step_c = rc.final_step;
      if (rc.step_underflow) {
        out.warnings.push_back("refinement c-step: step underflow");
        out.converged = false;
        f = JointAObjective<Scalar>(lg, out.c).value(out.a) + penalty_a(out.a) + penalty_c(out.c);
        out.objective_trace.push_back(f);
        break;
      }
    }

    f = JointAObjective<Scalar>(lg, out.c).value(out.a) + penalty_a(out.a) + penalty_c(out.c);
    out.objective_trace.push_back(f);
    if (std::abs(before - f) <= Scalar(config.tol_rel) * std::max(std::abs(before), Scalar(1e-300))) {
      out.converged = true;
      break;
    }
  }
  out.r = eval_poly_filters(out.a, out.c);
  return out;
}

/// Filter-stack descent, one more R_1 sweep, recovery of A, then the
/// coefficient fit selected by the config.
template <typename Scalar>
EstimationResult<Scalar> basic_algorithm(const TimeSeriesMatrix<Scalar>& x, int m, const SolverConfig& config) {
  config.validate();
  const auto lg = LaggedGram<Scalar>::build(x, m);
  auto bcd = detail::bcd_gram(lg, config);

  EstimationResult<Scalar> out;
  out.warnings = std::move(bcd.warnings);
  auto extra = detail::update_block_gram(lg, bcd.r, 1, config, config.step_init);
  if (extra.step_underflow)
    out.warnings.push_back("final R1 sweep: step underflow, previous iterate kept");
  else
    bcd.r.lag(1) = std::move(extra.mat);

  out.a = config.recover == RecoverMethod::commutator ? recover_a_commutator(bcd.r, config, &out.warnings)
                                                      : recover_a_take_r1(bcd.r);
  out.c = config.coefficients == CoefficientSource::from_r ? estimate_c_from_r(out.a, bcd.r, config, &out.warnings)
                                                           : estimate_c_from_data(out.a, x, m, config, &out.warnings);
  out.r = std::move(bcd.r);
  out.bcd_trace = std::move(bcd.trace);
  out.converged = bcd.converged;
  out.sweeps_used = bcd.sweeps_used;
  return out;
}

template <typename Scalar>
EstimationResult<Scalar> extended_algorithm(const TimeSeriesMatrix<Scalar>& x, int m, const SolverConfig& config) {
  auto basic = basic_algorithm(x, m, config);
  auto ext = extended_refinement(x, basic.a, basic.c, config);
  ext.bcd_trace = std::move(basic.bcd_trace);
  ext.warnings.insert(ext.warnings.begin(), basic.warnings.begin(), basic.warnings.end());
  ext.converged = ext.converged && basic.converged;
  return ext;
}

/// Joint refinement started from A = 0 and c = (0, 1, 0, ..., 0).
template <typename Scalar>
EstimationResult<Scalar> zero_initialized_refinement(const TimeSeriesMatrix<Scalar>& x, int m,
                                                     const SolverConfig& config) {
  const AdjacencyMatrix<Scalar> zero = AdjacencyMatrix<Scalar>::Zero(x.rows(), x.rows());
  return extended_refinement(x, zero, CoefficientVector<Scalar>::normalized(m), config);
}

}  // namespace cgpnet
