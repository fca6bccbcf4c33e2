#include "doctest.h"

#include <complex>

#include "cgpnet/model.hpp"
#include "test_util.hpp"

using namespace cgpnet;
using testutil::Mat;

TEST_CASE("coefficient layout") {
  CHECK(coefficient_count(1) == 2);
  CHECK(coefficient_count(2) == 5);
  CHECK(coefficient_count(3) == 9);
  CHECK(coefficient_offset(1) == 0);
  CHECK(coefficient_offset(2) == 2);
  CHECK(coefficient_offset(3) == 5);

  auto c = CoefficientVector<double>::normalized(3);
  CHECK(c.is_normalized());
  CHECK(c.values()(1) == 1.0);
  c(3, 2) = 7.0;
  CHECK(c.values()(7) == 7.0);
  CHECK(c.free_values().size() == 7);
  CHECK_THROWS_AS(CoefficientVector<double>(2, Vector<double>::Zero(4)), DimensionError);
  CHECK_THROWS_AS(CoefficientVector<double>(0), PreconditionError);
}

TEST_CASE("polynomial filters match a naive evaluation") {
  std::mt19937_64 rng(11);
  const Mat a = testutil::random_matrix(5, 5, rng);
  CoefficientVector<double> c(3, testutil::random_matrix(9, 1, rng).col(0));
  const auto p = eval_poly_filters(a, c);
  REQUIRE(p.order() == 3);
  for (int i = 1; i <= 3; ++i) {
    Mat naive = Mat::Zero(5, 5);
    Mat pow = Mat::Identity(5, 5);
    for (int j = 0; j <= i; ++j) {
      naive += c(i, j) * pow;
      pow = pow * a;
    }
    CHECK((p.lag(i) - naive).norm() <= 1e-12 * (1 + naive.norm()));
  }
  CHECK_THROWS_AS(eval_poly_filters(Mat(Mat::Zero(3, 4)), c), DimensionError);
}

TEST_CASE("filters of one graph commute") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const Mat a = testutil::random_matrix(6, 6, rng);
    CoefficientVector<double> c(3, testutil::random_matrix(9, 1, rng).col(0));
    const auto p = eval_poly_filters(a, c);
    for (int i = 1; i <= 3; ++i)
      for (int j = i + 1; j <= 3; ++j) {
        const double scale = p.lag(i).norm() * p.lag(j).norm();
        CHECK(commutator(p.lag(i), p.lag(j)).norm() / scale <= 1e-10);
      }
  }
}

TEST_CASE("commutator basics") {
  Mat p(2, 2), q(2, 2);
  p << 0, 1, 0, 0;
  q << 0, 0, 1, 0;
  Mat expect(2, 2);
  expect << 1, 0, 0, -1;
  CHECK((commutator(p, q) - expect).norm() == 0.0);
  CHECK(commutator(p, p).norm() == 0.0);
  CHECK_THROWS_AS(commutator(p, Mat(Mat::Zero(3, 3))), DimensionError);
}

TEST_CASE("simulation matches a brute-force recursion") {
  std::mt19937_64 rng(5);
  const auto model = testutil::small_model(4, 2, rng);
  const Mat init = testutil::random_matrix(4, 2, rng);
  const Mat x = simulate_cgp(model, 50, init, 99);
  CHECK((x.leftCols(2) - init).norm() == 0.0);

  // Re-draw the same noise stream and step the recursion by hand.
  std::mt19937_64 noise(99);
  std::normal_distribution<double> nd(0.0, 1.0);
  Mat y(4, 50);
  y.leftCols(2) = init;
  const Mat& a = model.a;
  for (Index t = 2; t < 50; ++t) {
    Vector<double> v = (model.c(1, 0) * Mat::Identity(4, 4) + model.c(1, 1) * a) * y.col(t - 1) +
                       (model.c(2, 0) * Mat::Identity(4, 4) + model.c(2, 1) * a + model.c(2, 2) * a * a) * y.col(t - 2);
    for (Index r = 0; r < 4; ++r) v(r) += nd(noise);
    y.col(t) = v;
  }
  CHECK((x - y).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("simulation with burn-in is a suffix and deterministic") {
  std::mt19937_64 rng(8);
  const auto model = testutil::small_model(3, 2, rng);
  const Mat init = Mat::Zero(3, 2);
  const Mat x1 = simulate_cgp(model, 30, init, 4, SimulationOptions{10});
  const Mat x2 = simulate_cgp(model, 30, init, 4, SimulationOptions{10});
  const Mat full = simulate_cgp(model, 40, init, 4);
  CHECK(x1 == x2);
  CHECK((x1 - full.rightCols(30)).norm() == 0.0);
  CHECK_THROWS_AS(simulate_cgp(model, 2, init, 4), PreconditionError);
}

TEST_CASE("explosive process raises InstabilityError") {
  CGPModel<double> model{Mat::Identity(2, 2) * 1e100, CoefficientVector<double>::normalized(1), 0.0};
  Mat init = Mat::Ones(2, 1);
  CHECK_THROWS_AS(simulate_cgp(model, 20, init, 1), InstabilityError);
}

TEST_CASE("one-step prediction") {
  std::mt19937_64 rng(2);
  const auto model = testutil::small_model(4, 3, rng);
  const Mat h = testutil::random_matrix(4, 3, rng);
  const auto p = eval_poly_filters(model.a, model.c);
  const Vector<double> expect = p.lag(1) * h.col(2) + p.lag(2) * h.col(1) + p.lag(3) * h.col(0);
  CHECK((predict_one_step(model.a, model.c, h) - expect).norm() <= 1e-12);
  CHECK_THROWS_AS(predict_one_step(p, Mat(Mat::Zero(4, 2))), DimensionError);

  const Mat x = testutil::random_matrix(4, 10, rng);
  const Mat series = predict_series(p, x);
  REQUIRE(series.cols() == 7);
  for (Index t = 3; t < 10; ++t)
    CHECK((series.col(t - 3) - predict_one_step(p, x.middleCols(t - 3, 3))).norm() <= 1e-12);
}

TEST_CASE("spectral radius agrees with a dense eigensolver") {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    const Index n = 5 + rep * 3;
    const Mat a = testutil::random_matrix(n, n, rng);
    const double oracle = Eigen::EigenSolver<Mat>(a).eigenvalues().cwiseAbs().maxCoeff();
    const auto est = spectral_radius(a, 1e-12, 100000);
    CHECK(est.converged);
    CHECK(std::abs(est.radius - oracle) <= 1e-6 * oracle);
  }
  // Dominant complex pair: rotation scaled by 0.9.
  Mat rot(2, 2);
  rot << 0, -0.9, 0.9, 0;
  CHECK(std::abs(spectral_radius(rot).radius - 0.9) <= 1e-10);
  // Nilpotent shift.
  Mat shift = Mat::Zero(4, 4);
  for (Index i = 0; i + 1 < 4; ++i) shift(i, i + 1) = 1.0;
  CHECK(spectral_radius(shift).radius == 0.0);
}

TEST_CASE("companion matrix and stability") {
  std::mt19937_64 rng(4);
  const auto model = testutil::small_model(3, 2, rng);
  const auto p = eval_poly_filters(model.a, model.c);
  const Mat comp = companion_matrix(p);
  REQUIRE(comp.rows() == 6);
  CHECK((comp.block(0, 0, 3, 3) - p.lag(1)).norm() == 0.0);
  CHECK((comp.block(0, 3, 3, 3) - p.lag(2)).norm() == 0.0);
  CHECK((comp.block(3, 0, 3, 3) - Mat::Identity(3, 3)).norm() == 0.0);
  CHECK(comp.block(3, 3, 3, 3).norm() == 0.0);

  const auto rep = stability_check(model);
  CHECK(rep.stable);
  CHECK(rep.radius < 1.0);

  CGPModel<double> unstable{Mat::Identity(3, 3) * 1.2, CoefficientVector<double>::normalized(1), 1.0};
  CHECK_FALSE(stability_check(unstable).stable);
}
