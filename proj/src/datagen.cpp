#include "cgpnet/datagen.hpp"

#include <cmath>
#include <random>
#include <string>

#include "cgpnet/seed.hpp"

namespace cgpnet {

void GraphGenSpec::validate() const {
  if (n < 2) throw PreconditionError("graph needs at least two nodes");
  if (!(threshold_lo > 0 && threshold_lo < threshold_hi))
    throw PreconditionError("threshold band must satisfy 0 < lo < hi");
  if (!(diag_lo < diag_hi)) throw PreconditionError("diagonal range must satisfy lo < hi");
}

AdjacencyMatrix<double> random_sparse_adjacency(const GraphGenSpec& spec) {
  spec.validate();
  const Index n = spec.n;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix<double> off = Matrix<double>::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double v = normal(rng);
      const double mag = std::abs(v);
      if (mag >= spec.threshold_lo && mag <= spec.threshold_hi) off(i, j) = v;
    }

  if (!off.isZero(0)) {
    const double rho = spectral_radius(off).radius;
    // An acyclic support is nilpotent (radius exactly 0); fall back to the
    // spectral norm, which bounds the radius from above.
    const double scale = rho > 1e-10 ? rho
                                     : Eigen::JacobiSVD<Matrix<double>>(off).singularValues()(0);
    off /= 2.0 * scale;
  }

  std::uniform_real_distribution<double> diag(spec.diag_lo, spec.diag_hi);
  for (Index i = 0; i < n; ++i) off(i, i) = diag(rng);
  return off;
}

CoefficientVector<double> stable_coefficients(int m, const AdjacencyMatrix<double>& a, std::uint64_t seed) {
  if (m < 1) throw PreconditionError("model order must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  auto base = CoefficientVector<double>::normalized(m);
  for (int i = 2; i <= m; ++i)
    for (int j = 0; j <= i; ++j) base(i, j) = unif(rng);

  CGPModel<double> model{a, base, 1.0};
  double gamma = 1.0;
  for (int attempt = 0; attempt < 20; ++attempt) {
    for (int i = 2; i <= m; ++i)
      for (int j = 0; j <= i; ++j) model.c(i, j) = base(i, j) * std::pow(gamma, i - 1);
    if (stability_check(model).stable) return model.c;
    gamma *= 0.5;
  }
  throw GenerationError("no stable coefficients found after 20 attempts");
}

Dataset generate_dataset(Index n, int m, Index k, const GraphGenSpec& spec, std::uint64_t seed,
                         const DatasetOptions& options) {
  if (k <= m) throw PreconditionError("sample count must exceed the model order");
  GraphGenSpec gs = spec;
  gs.n = n;
  for (int attempt = 0; attempt < options.max_graph_attempts; ++attempt) {
    gs.seed = derive_seed(seed, {1, static_cast<std::uint64_t>(attempt)});
    Dataset ds;
    ds.a = random_sparse_adjacency(gs);
    try {
      ds.c = stable_coefficients(m, ds.a, derive_seed(seed, {2, static_cast<std::uint64_t>(attempt)}));
    } catch (const GenerationError&) {
      continue;
    }
    std::mt19937_64 rng(derive_seed(seed, {3, static_cast<std::uint64_t>(attempt)}));
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix<double> init(n, m);
    for (Index j = 0; j < m; ++j)
      for (Index i = 0; i < n; ++i) init(i, j) = normal(rng);
    const CGPModel<double> model{ds.a, ds.c, options.noise_std};
    ds.x = simulate_cgp(model, k, init, derive_seed(seed, {4, static_cast<std::uint64_t>(attempt)}),
                        SimulationOptions{options.burn_in});
    return ds;
  }
  throw GenerationError("no stable graph found after " + std::to_string(options.max_graph_attempts) +
                        " draws");
}

}  // namespace cgpnet
