#include "doctest.h"

#include "cgpnet/datagen.hpp"
#include "cgpnet/evaluation.hpp"
#include "cgpnet/solver.hpp"
#include "test_util.hpp"

using namespace cgpnet;
using testutil::Mat;

namespace {

struct Instance {
  CGPModel<double> model;
  Mat x;
  FilterStack<double> r;
};

Instance random_instance(std::uint64_t seed, Index n = 4, int m = 2, Index k = 40) {
  std::mt19937_64 rng(seed);
  Instance in{testutil::small_model(n, m, rng), {}, {}};
  in.x = simulate_cgp(in.model, k, testutil::random_matrix(n, m, rng), seed + 1000);
  in.r = FilterStack<double>::zeros(m, n);
  for (int i = 1; i <= m; ++i) in.r.lag(i) = testutil::random_matrix(n, n, rng, 0.3);
  return in;
}

double naive_joint(const Mat& x, const Mat& a, const CoefficientVector<double>& c, double l1, double l2) {
  const int m = c.order();
  double loss = 0;
  for (Index k = m; k < x.cols(); ++k) {
    Vector<double> e = x.col(k);
    for (int i = 1; i <= m; ++i) {
      Mat p = Mat::Zero(a.rows(), a.cols());
      Mat pw = Mat::Identity(a.rows(), a.cols());
      for (int j = 0; j <= i; ++j) {
        p += c(i, j) * pw;
        pw = pw * a;
      }
      e -= p * x.col(k - i);
    }
    loss += 0.5 * e.squaredNorm();
  }
  double pc = 0;
  for (Index k = 2; k < c.size(); ++k) pc += std::abs(c.values()(k));
  return loss + l1 * a.cwiseAbs().sum() + l2 * pc;
}

}  // namespace

TEST_CASE("lagged second moments reproduce the residual loss") {
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const auto in = random_instance(s, 5, 3, 30);
    const auto lg = LaggedGram<double>::build(in.x, 3);
    const auto t = detail::stack_products(lg, in.r);
    const double direct = cgp_data_loss(in.x, in.r);
    CHECK(std::abs(detail::gram_data_loss(lg, in.r, t) - direct) <= 1e-10 * direct);
  }
  CHECK_THROWS_AS(LaggedGram<double>::build(Mat::Zero(3, 2), 2), PreconditionError);
}

TEST_CASE("block gradient matches finite differences") {
  for (std::uint64_t s = 1; s <= 10; ++s) {
    auto in = random_instance(s, 5, 3, 30);
    const double l2 = 0.7;
    for (int i = 1; i <= 3; ++i) {
      auto f = [&](const Mat& ri) {
        FilterStack<double> r = in.r;
        r.lag(i) = ri;
        double v = cgp_data_loss(in.x, r);
        for (int j = 1; j <= 3; ++j)
          if (j != i) v += l2 * commutator(ri, r.lag(j)).squaredNorm();
        return v;
      };
      const Mat g = grad_block(in.x, in.r, i, l2);
      CHECK(testutil::rel_err(g, testutil::fd_gradient(f, in.r.lag(i))) <= 1e-5);

      const auto lg = LaggedGram<double>::build(in.x, 3);
      const BlockObjective<double> obj(lg, in.r, i, l2);
      Mat gb;
      obj.value_and_gradient(in.r.lag(i), gb);
      CHECK(testutil::rel_err(gb, g) <= 1e-9);
      // The block objective differs from the full one by a constant.
      const Mat probe = in.r.lag(i) * 1.1;
      CHECK(std::abs((obj.value(probe) - obj.value(in.r.lag(i))) - (f(probe) - f(in.r.lag(i)))) <=
            1e-8 * std::abs(f(probe)));
    }
  }
}

TEST_CASE("commutator recovery gradient matches finite differences") {
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const auto in = random_instance(s, 6, 3, 30);
    const CommutatorFitObjective<double> f(in.r, 1.3);
    std::mt19937_64 rng(s);
    const Mat a = testutil::random_matrix(6, 6, rng);
    Mat g;
    f.value_and_gradient(a, g);
    CHECK(testutil::rel_err(g, testutil::fd_gradient([&](const Mat& z) { return f.value(z); }, a)) <= 1e-5);
  }
}

TEST_CASE("joint A- and c-gradients match finite differences") {
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const int m = s % 2 == 0 ? 2 : 3;
    const auto in = random_instance(s, 4, m, 30);
    const auto lg = LaggedGram<double>::build(in.x, m);
    std::mt19937_64 rng(s + 50);
    const Mat a = testutil::random_matrix(4, 4, rng, 0.5);
    auto c = CoefficientVector<double>::normalized(m);
    c.set_free_values(testutil::random_matrix(coefficient_count(m) - 2, 1, rng).col(0));

    const JointAObjective<double> fa(lg, c);
    Mat ga;
    fa.value_and_gradient(a, ga);
    CHECK(testutil::rel_err(ga, testutil::fd_gradient([&](const Mat& z) { return fa.value(z); }, a)) <= 1e-5);
    CHECK(std::abs(fa.value(a) - cgp_data_loss(in.x, eval_poly_filters(a, c))) <= 1e-9 * fa.value(a));

    const JointCObjective<double> fc(lg, a);
    const Mat free = c.free_values();
    Mat gc;
    fc.value_and_gradient(free, gc);
    CHECK(testutil::rel_err(gc, testutil::fd_gradient([&](const Mat& z) { return fc.value(z); }, free)) <= 1e-5);
  }
}

TEST_CASE("block coordinate descent is monotone") {
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const auto in = random_instance(s, 5, 3, 60);
    SolverConfig cfg;
    cfg.lambda1 = 0.5 * static_cast<double>(s % 4);
    cfg.lambda2 = 0.3 * static_cast<double>(s % 3);
    cfg.max_sweeps = 15;
    cfg.max_inner_iter = 100;
    const auto r = block_coordinate_descent(in.x, 3, cfg);
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i] <= r.trace[i - 1] + 1e-12 * std::abs(r.trace[i - 1]));
    // The recorded value matches an independent evaluation of the final point.
    double comm = 0;
    for (int i = 1; i <= 3; ++i)
      for (int j = i + 1; j <= 3; ++j) comm += commutator(r.r.lag(i), r.r.lag(j)).squaredNorm();
    const double direct = cgp_data_loss(in.x, r.r) + cfg.lambda1 * r.r.lag(1).cwiseAbs().sum() + cfg.lambda2 * comm;
    CHECK(std::abs(direct - r.trace.back()) <= 1e-9 * direct);
  }
}

TEST_CASE("update_block lowers its block objective") {
  const auto in = random_instance(3, 5, 2, 60);
  SolverConfig cfg;
  cfg.lambda1 = 1.0;
  cfg.lambda2 = 0.5;
  const auto lg = LaggedGram<double>::build(in.x, 2);
  for (int i = 1; i <= 2; ++i) {
    const BlockObjective<double> f(lg, in.r, i, cfg.lambda2);
    const double pen = i == 1 ? cfg.lambda1 : 0.0;
    const Mat up = update_block(in.x, in.r, i, cfg);
    CHECK(f.value(up) + pen * up.cwiseAbs().sum() <= f.value(in.r.lag(i)) + pen * in.r.lag(i).cwiseAbs().sum());
  }
}

TEST_CASE("larger commutator weight gives more commuting stacks") {
  const auto in = random_instance(7, 6, 3, 200);
  double prev = 1e300;
  for (double l2 : {10.0, 100.0, 1000.0}) {
    SolverConfig cfg;
    cfg.lambda1 = 1.0;
    cfg.lambda2 = l2;
    cfg.max_sweeps = 100;
    cfg.max_inner_iter = 300;
    const auto r = block_coordinate_descent(in.x, 3, cfg);
    const double comm = detail::commutator_penalty(r.r);
    CHECK(comm < prev);
    prev = comm;
  }
}

TEST_CASE("coefficient fits round-trip with no penalty") {
  for (std::uint64_t s = 1; s <= 5; ++s) {
    std::mt19937_64 rng(s);
    auto model = testutil::small_model(5, 3, rng);
    SolverConfig cfg;

    const auto r = eval_poly_filters(model.a, model.c);
    const auto c_r = estimate_c_from_r(model.a, r, cfg);
    CHECK(c_r.is_normalized());
    CHECK((c_r.values() - model.c.values()).norm() <= 1e-8);

    model.noise_std = 0.0;
    const Mat x = simulate_cgp(model, 40, testutil::random_matrix(5, 3, rng), s);
    const auto c_d = estimate_c_from_data(model.a, x, 3, cfg);
    CHECK((c_d.values() - model.c.values()).norm() <= 1e-6);

    // Fitting can only lower the residual relative to the pinned start.
    const double fitted = cgp_data_loss(x, eval_poly_filters(model.a, c_d));
    CHECK(fitted <= cgp_data_loss(x, eval_poly_filters(model.a, CoefficientVector<double>::normalized(3))));

    SolverConfig heavy;
    heavy.lambda3 = 1e12;
    const auto z = estimate_c_from_r(model.a, r, heavy);
    CHECK((z.values() - CoefficientVector<double>::normalized(3).values()).norm() == 0.0);
    const auto zd = estimate_c_from_data(model.a, x, 3, heavy);
    CHECK((zd.values() - CoefficientVector<double>::normalized(3).values()).norm() == 0.0);
  }
}

TEST_CASE("joint objective matches a naive evaluation") {
  const auto in = random_instance(9, 4, 3, 25);
  SolverConfig cfg;
  cfg.lambda1 = 0.4;
  cfg.lambda2 = 0.9;
  const double v = joint_objective(in.x, in.model.a, in.model.c, cfg);
  CHECK(std::abs(v - naive_joint(in.x, in.model.a, in.model.c, 0.4, 0.9)) <= 1e-10 * v);

  SolverConfig l1only;
  l1only.lambda1 = 1.0;
  const double base = joint_objective(in.x, in.model.a, in.model.c, SolverConfig{});
  const double one = joint_objective(in.x, in.model.a, in.model.c, l1only) - base;
  CHECK(std::abs(one - in.model.a.cwiseAbs().sum()) <= 1e-9 * one);

  auto bad = in.model.c;
  bad(1, 1) = 2.0;
  CHECK_THROWS_AS(joint_objective(in.x, in.model.a, bad, cfg), PreconditionError);
}

TEST_CASE("refinement started at the truth on noise-free data stays there") {
  std::mt19937_64 rng(12);
  auto model = testutil::small_model(4, 2, rng);
  model.noise_std = 0.0;
  const Mat x = simulate_cgp(model, 40, testutil::random_matrix(4, 2, rng), 1);
  const auto r = extended_refinement(x, model.a, model.c, SolverConfig{});
  CHECK((r.a - model.a).norm() <= 1e-8);
  CHECK((r.c.values() - model.c.values()).norm() <= 1e-8);
}

TEST_CASE("extended refinement is monotone and improves on the basic estimate") {
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const auto in = random_instance(s, 5, 2, 80);
    SolverConfig cfg;
    cfg.lambda1 = 1.0 + static_cast<double>(s % 3);
    cfg.lambda2 = 2.0;
    cfg.lambda3 = 1.0;
    cfg.max_sweeps = 20;
    cfg.max_inner_iter = 100;
    cfg.max_refine_sweeps = 20;
    const auto basic = basic_algorithm(in.x, 2, cfg);
    const auto ext = extended_refinement(in.x, basic.a, basic.c, cfg);
    const auto& tr = ext.objective_trace;
    for (std::size_t i = 1; i < tr.size(); ++i) CHECK(tr[i] <= tr[i - 1] + 1e-12 * std::abs(tr[i - 1]));
    CHECK(joint_objective(in.x, ext.a, ext.c, cfg) <=
          joint_objective(in.x, basic.a, basic.c, cfg) * (1 + 1e-12));
    CHECK(std::abs(tr.back() - joint_objective(in.x, ext.a, ext.c, cfg)) <= 1e-9 * tr.back());
  }
}

TEST_CASE("pipeline variants run and are deterministic") {
  const auto in = random_instance(4, 6, 3, 120);
  SolverConfig cfg;
  cfg.lambda1 = 2.0;
  cfg.lambda2 = 1.0;
  cfg.lambda3 = 0.5;
  cfg.max_sweeps = 10;
  cfg.max_refine_sweeps = 10;
  for (auto rec : {RecoverMethod::take_r1, RecoverMethod::commutator})
    for (auto src : {CoefficientSource::from_r, CoefficientSource::from_data}) {
      cfg.recover = rec;
      cfg.coefficients = src;
      const auto a = extended_algorithm(in.x, 3, cfg);
      const auto b = extended_algorithm(in.x, 3, cfg);
      CHECK(a.a == b.a);
      CHECK(a.c.values() == b.c.values());
      CHECK(a.c.is_normalized());
      CHECK(a.objective_trace == b.objective_trace);
    }
  const auto g = zero_initialized_refinement(in.x, 3, cfg);
  CHECK(g.c.is_normalized());
  CHECK(g.objective_trace.size() >= 2);
}

TEST_CASE("take_r1 recovery returns the first lag") {
  const auto in = random_instance(5, 4, 2, 30);
  CHECK(recover_a_take_r1(in.r) == in.r.lag(1));
  // With no commutator weight and no l1, the commutator fit reduces to R_1.
  SolverConfig cfg;
  cfg.max_inner_iter = 2000;
  CHECK((recover_a_commutator(in.r, cfg) - in.r.lag(1)).norm() <= 1e-8);
}

TEST_CASE("preconditions") {
  SolverConfig cfg;
  CHECK_THROWS_AS(basic_algorithm(Mat(Mat::Zero(3, 2)), 2, cfg), PreconditionError);
  cfg.lambda1 = -1;
  CHECK_THROWS_AS(cfg.validate(), PreconditionError);
  SolverConfig bad;
  bad.backtrack_beta = 1.0;
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
  const Mat x = Mat::Ones(2, 10);
  CHECK(std::abs(default_lambda(x) - 0.1 * std::sqrt(20.0) / std::sqrt(10.0)) <= 1e-15);
}

TEST_CASE("support recovery with ample samples") {
  // N = 15, M = 2, K = 2000: F1 of the recovered support at threshold 1e-3,
  // best over a small grid per seed, averaged over five seeds.
  double total = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto ds = generate_dataset(15, 2, 2000, GraphGenSpec{}, seed);
    double best = 0;
    for (double l1 : {200.0, 400.0, 800.0})
      for (double ratio : {3.0, 10.0}) {
        SolverConfig cfg;
        cfg.lambda1 = l1;
        cfg.lambda2 = ratio * l1;
        cfg.lambda3 = l1;
        cfg.max_refine_sweeps = 50;
        cfg.max_inner_iter = 200;
        const auto r = extended_algorithm(ds.x, 2, cfg);
        best = std::max(best, support_metrics(ds.a, r.a, 1e-3).f1);
      }
    MESSAGE("seed " << seed << " best F1 " << best);
    CHECK(best >= 0.8);
    total += best;
  }
  CHECK(total / 5 >= 0.9);
}
