#include "doctest.h"

#include "cgpnet/datagen.hpp"
#include "test_util.hpp"

using namespace cgpnet;
using testutil::Mat;

TEST_CASE("random graphs respect the generator contract") {
  for (std::uint64_t s = 1; s <= 10; ++s) {
    GraphGenSpec spec;
    spec.n = 40;
    spec.seed = s;
    const Mat a = random_sparse_adjacency(spec);
    REQUIRE(a.rows() == 40);
    for (Index i = 0; i < 40; ++i) {
      CHECK(a(i, i) >= -1.0);
      CHECK(a(i, i) <= -0.5);
    }
    Mat off = a;
    off.diagonal().setZero();
    if (off.cwiseAbs().maxCoeff() == 0) continue;
    // Surviving weights keep the 1.6..1.8 magnitude ratio after a common scaling.
    double lo = 1e300, hi = 0;
    for (Index k = 0; k < off.size(); ++k)
      if (off.data()[k] != 0) {
        lo = std::min(lo, std::abs(off.data()[k]));
        hi = std::max(hi, std::abs(off.data()[k]));
      }
    CHECK(hi / lo <= 1.8 / 1.6 + 1e-12);
    const double rho = spectral_radius(off, 1e-12).radius;
    if (rho > 1e-3) CHECK(std::abs(rho - 0.5) <= 1e-6);
  }
}

TEST_CASE("generation is seed-deterministic") {
  GraphGenSpec spec;
  spec.seed = 42;
  CHECK(random_sparse_adjacency(spec) == random_sparse_adjacency(spec));
  const auto d1 = generate_dataset(10, 2, 50, GraphGenSpec{}, 7);
  const auto d2 = generate_dataset(10, 2, 50, GraphGenSpec{}, 7);
  const auto d3 = generate_dataset(10, 2, 50, GraphGenSpec{}, 8);
  CHECK(d1.x == d2.x);
  CHECK(d1.a == d2.a);
  CHECK(d1.x != d3.x);
}

TEST_CASE("longer runs extend shorter ones") {
  const auto a = generate_dataset(8, 2, 40, GraphGenSpec{}, 3);
  const auto b = generate_dataset(8, 2, 90, GraphGenSpec{}, 3);
  CHECK(a.a == b.a);
  CHECK((a.x - b.x.leftCols(40)).norm() == 0.0);
}

TEST_CASE("coefficients are normalized and stable") {
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const auto ds = generate_dataset(12, 3, 30, GraphGenSpec{}, s);
    CHECK(ds.c.is_normalized());
    CHECK(stability_check(CGPModel<double>{ds.a, ds.c, 1.0}).stable);
    CHECK(ds.x.allFinite());
  }
}

TEST_CASE("invalid specs are rejected") {
  GraphGenSpec spec;
  spec.threshold_lo = 2.0;
  spec.threshold_hi = 1.0;
  CHECK_THROWS_AS(spec.validate(), PreconditionError);
  CHECK_THROWS_AS(generate_dataset(5, 3, 3, GraphGenSpec{}, 1), PreconditionError);
}

TEST_CASE("edge density is near 2 (Phi(1.8) - Phi(1.6))") {
  double edges = 0, slots = 0;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    GraphGenSpec spec;
    spec.n = 200;
    spec.seed = s;
    const Mat a = random_sparse_adjacency(spec);
    Mat off = a;
    off.diagonal().setZero();
    edges += static_cast<double>((off.array() != 0).count());
    slots += 200.0 * 199.0;
  }
  const double p = edges / slots;
  const double expect = std::erfc(-1.8 / std::sqrt(2.0)) - std::erfc(-1.6 / std::sqrt(2.0));
  CHECK(std::abs(p - expect) <= 0.003);
}
