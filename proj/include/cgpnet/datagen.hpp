#pragma once

// Random sparse stable graphs, stable filter coefficients and synthetic
// causal-graph-process datasets.

#include <cstdint>
#include <stdexcept>

#include "cgpnet/model.hpp"

namespace cgpnet {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GraphGenSpec {
  Index n = 25;
  /// An off-diagonal N(0,1) draw becomes an edge iff lo <= |draw| <= hi.
  double threshold_lo = 1.6;
  double threshold_hi = 1.8;
  double diag_lo = -1.0;
  double diag_hi = -0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Thresholded Gaussian off-diagonal support scaled to spectral radius 1/2,
/// plus a uniform negative diagonal.
AdjacencyMatrix<double> random_sparse_adjacency(const GraphGenSpec& spec);

/// Normalized coefficients (c10 = 0, c11 = 1); higher-lag coefficients are
/// U(-0.5, 0.5) draws scaled by gamma^(lag-1), gamma halving until the
/// process is stable. Throws GenerationError after 20 attempts.
CoefficientVector<double> stable_coefficients(int m, const AdjacencyMatrix<double>& a, std::uint64_t seed);

struct Dataset {
  AdjacencyMatrix<double> a;
  CoefficientVector<double> c;
  TimeSeriesMatrix<double> x;
};

struct DatasetOptions {
  Index burn_in = 200;
  double noise_std = 1.0;
  /// Graph redraws allowed when no stable coefficients exist for a draw.
  int max_graph_attempts = 100;
};

/// Graph, coefficients and a unit-noise trajectory from random initial
/// states, all derived from `seed` (spec.seed is ignored).
Dataset generate_dataset(Index n, int m, Index k, const GraphGenSpec& spec, std::uint64_t seed,
                         const DatasetOptions& options = {});

}  // namespace cgpnet
