#pragma once

// Proximal gradient engine: a smooth loss plus a separable penalty,
// minimized with monotone accelerated steps and backtracking.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <vector>

#include "cgpnet/model.hpp"

namespace cgpnet {

/// Entrywise soft threshold sign(v) max(|v| - t, 0).
template <typename Derived>
Matrix<typename Derived::Scalar> prox_l1(const Eigen::MatrixBase<Derived>& v,
                                         typename Derived::Scalar t) {
  using Scalar = typename Derived::Scalar;
  if (t < Scalar(0)) throw PreconditionError("soft threshold must be nonnegative");
  return v.unaryExpr([t](Scalar x) {
    const Scalar mag = std::abs(x) - t;
    return mag > Scalar(0) ? std::copysign(mag, x) : Scalar(0);
  });
}

/// Block soft threshold v max(1 - t / ||v||, 0) applied to a whole group.
template <typename Derived>
Matrix<typename Derived::Scalar> group_soft_threshold(const Eigen::MatrixBase<Derived>& v,
                                                      typename Derived::Scalar t) {
  using Scalar = typename Derived::Scalar;
  if (t < Scalar(0)) throw PreconditionError("group threshold must be nonnegative");
  const Scalar norm = v.norm();
  if (norm <= t) return Matrix<Scalar>::Zero(v.rows(), v.cols());
  return v * ((norm - t) / norm);
}

template <typename F, typename Scalar>
concept SmoothLoss = requires(const F& f, const Matrix<Scalar>& x, Matrix<Scalar>& g) {
  { f.value(x) } -> std::convertible_to<Scalar>;
  { f.value_and_gradient(x, g) } -> std::convertible_to<Scalar>;
};

template <typename P, typename Scalar>
concept ProxPenalty = requires(const P& p, const Matrix<Scalar>& x, Scalar step) {
  { p.value(x) } -> std::convertible_to<Scalar>;
  { p.prox(x, step) } -> std::convertible_to<Matrix<Scalar>>;
};

struct NoPenalty {
  template <typename Scalar>
  Scalar value(const Matrix<Scalar>&) const { return Scalar(0); }
  template <typename Scalar>
  Matrix<Scalar> prox(const Matrix<Scalar>& v, Scalar) const { return v; }
};

template <typename Scalar>
struct L1Penalty {
  Scalar weight = Scalar(0);
  Scalar value(const Matrix<Scalar>& x) const { return weight * x.cwiseAbs().sum(); }
  Matrix<Scalar> prox(const Matrix<Scalar>& v, Scalar step) const { return prox_l1(v, weight * step); }
};

/// Group lasso over an N x (N*lags) stack [A1 ... A_lags]: entry (r, c) of
/// every lag block forms one group.
template <typename Scalar>
struct LagGroupPenalty {
  Scalar weight = Scalar(0);
  Index lags = 1;

  Scalar value(const Matrix<Scalar>& x) const {
    const Index n = x.cols() / lags;
    Scalar total = Scalar(0);
    for (Index c = 0; c < n; ++c)
      for (Index r = 0; r < x.rows(); ++r) total += group_norm(x, r, c, n);
    return weight * total;
  }

  Matrix<Scalar> prox(const Matrix<Scalar>& v, Scalar step) const {
    const Index n = v.cols() / lags;
    const Scalar t = weight * step;
    Matrix<Scalar> out = v;
    for (Index c = 0; c < n; ++c)
      for (Index r = 0; r < v.rows(); ++r) {
        const Scalar norm = group_norm(v, r, c, n);
        const Scalar shrink = norm > t ? (norm - t) / norm : Scalar(0);
        for (Index l = 0; l < lags; ++l) out(r, c + l * n) *= shrink;
      }
    return out;
  }

 private:
  Scalar group_norm(const Matrix<Scalar>& x, Index r, Index c, Index n) const {
    Scalar s = Scalar(0);
    for (Index l = 0; l < lags; ++l) s += x(r, c + l * n) * x(r, c + l * n);
    return std::sqrt(s);
  }
};

struct ProxOptions {
  int max_iter = 500;
  /// Stop once a prox step moves less than tol * max(1, ||x||).
  double tol = 1e-9;
  double step_init = 1.0;
  double backtrack_beta = 0.5;
  double min_step = 1e-200;
  bool accelerate = true;
};

template <typename Scalar>
struct ProxResult {
  Matrix<Scalar> point;
  Scalar objective = Scalar(0);
  /// Composite objective before the first step and after every iteration.
  std::vector<Scalar> trace;
  int iterations = 0;
  bool converged = false;
  bool step_underflow = false;
  double final_step = 0.0;
};

/// Minimizes f(x) + g(x). Accelerated iterates are only accepted when the
/// composite objective does not increase, so `trace` is non-increasing.
template <typename Scalar, typename Loss, typename Penalty>
  requires SmoothLoss<Loss, Scalar> && ProxPenalty<Penalty, Scalar>
ProxResult<Scalar> minimize_prox(const Loss& f, const Penalty& g, Matrix<Scalar> x0,
                                 const ProxOptions& opt) {
  ProxResult<Scalar> res;
  Matrix<Scalar> x = std::move(x0);
  Scalar fx_total = f.value(x) + g.value(x);
  res.trace.push_back(fx_total);

  Matrix<Scalar> y = x;
  Matrix<Scalar> grad(x.rows(), x.cols());
  Scalar momentum = Scalar(1);
  double step = opt.step_init;

  for (int it = 1; it <= opt.max_iter; ++it) {
    res.iterations = it;
    const bool from_incumbent = y == x;
    const Scalar fy = f.value_and_gradient(y, grad);
    Matrix<Scalar> z;
    Scalar fz = Scalar(0);
    for (;;) {
      z = g.prox(Matrix<Scalar>(y - Scalar(step) * grad), Scalar(step));
      fz = f.value(z);
      const Matrix<Scalar> d = z - y;
      const Scalar model = fy + grad.cwiseProduct(d).sum() + d.squaredNorm() / Scalar(2 * step);
      const Scalar slack = Scalar(64) * std::numeric_limits<Scalar>::epsilon() * std::abs(fy);
      if (std::isfinite(static_cast<double>(fz)) && fz <= model + slack) break;
      step *= opt.backtrack_beta;
      if (step < opt.min_step) {
        res.step_underflow = true;
        res.point = std::move(x);
        res.objective = fx_total;
        res.final_step = step;
        return res;
      }
    }

    const Scalar move = (z - y).norm();
    const Scalar fz_total = fz + g.value(z);
    Matrix<Scalar> x_prev = x;
    const bool descent = fz_total <= fx_total;
    if (descent) {
      x = z;
      fx_total = fz_total;
    }
    res.trace.push_back(fx_total);
    // A plain step from the incumbent that cannot lower the objective means
    // the remaining progress is below rounding.
    if (move <= Scalar(opt.tol) * std::max(Scalar(1), x.norm()) || (from_incumbent && !descent)) {
      res.converged = true;
      break;
    }

    if (opt.accelerate && !descent) {
      // Function-value restart: drop the momentum and retry from x.
      momentum = Scalar(1);
      y = x;
      continue;
    }
    if (opt.accelerate) {
      const Scalar next = (Scalar(1) + std::sqrt(Scalar(1) + Scalar(4) * momentum * momentum)) / Scalar(2);
      y = x + (momentum / next) * (z - x) + ((momentum - Scalar(1)) / next) * (x - x_prev);
      momentum = next;
    } else {
      y = x;
    }
  }
  res.point = std::move(x);
  res.objective = fx_total;
  res.final_step = step;
  return res;
}

/// Quadratic 0.5 x'Hx - b'x over a column vector, H symmetric PSD.
template <typename Scalar>
struct QuadraticLoss {
  Matrix<Scalar> h;
  Vector<Scalar> b;
  Scalar constant = Scalar(0);

  Scalar value(const Matrix<Scalar>& x) const {
    return Scalar(0.5) * (x.transpose() * h * x)(0, 0) - b.dot(x.col(0)) + constant;
  }
  Scalar value_and_gradient(const Matrix<Scalar>& x, Matrix<Scalar>& g) const {
    g = h * x;
    const Scalar v = Scalar(0.5) * x.col(0).dot(g.col(0)) - b.dot(x.col(0)) + constant;
    g.col(0) -= b;
    return v;
  }
};

template <typename Scalar>
struct LassoSolution {
  Vector<Scalar> coef;
  bool rank_deficient = false;
  bool converged = true;
};

/// argmin 0.5 ||y - B c||^2 + lambda ||c||_1 given the normal-equation
/// pieces H = B'B, b = B'y. lambda == 0 reduces to minimum-norm least
/// squares; otherwise accelerated ISTA warm-started from `warm` (or zero).
template <typename Scalar>
LassoSolution<Scalar> lasso_normal(const Matrix<Scalar>& h, const Vector<Scalar>& b, Scalar lambda,
                                   const Vector<Scalar>* warm = nullptr, int max_iter = 50000,
                                   double tol = 1e-13) {
  LassoSolution<Scalar> sol;
  const Index p = h.rows();
  if (p == 0) {
    sol.coef.resize(0);
    return sol;
  }
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(h, Eigen::EigenvaluesOnly);
  const Scalar lmax = es.eigenvalues().maxCoeff();
  const Scalar lmin = es.eigenvalues().minCoeff();
  sol.rank_deficient = !(lmin > lmax * Scalar(1e-12)) ;

  if (lambda == Scalar(0)) {
    Eigen::CompleteOrthogonalDecomposition<Matrix<Scalar>> cod(h);
    sol.coef = cod.solve(b);
    return sol;
  }
  if (!(lmax > Scalar(0))) {
    sol.coef = Vector<Scalar>::Zero(p);
    return sol;
  }
  QuadraticLoss<Scalar> loss{h, b, Scalar(0)};
  ProxOptions opt;
  opt.max_iter = max_iter;
  opt.tol = tol;
  opt.step_init = 1.0 / static_cast<double>(lmax);
  Matrix<Scalar> x0 = warm ? Matrix<Scalar>(*warm) : Matrix<Scalar>::Zero(p, 1);
  const auto r = minimize_prox<Scalar>(loss, L1Penalty<Scalar>{lambda}, x0, opt);
  sol.coef = r.point.col(0);
  sol.converged = r.converged;
  return sol;
}

}  // namespace cgpnet
