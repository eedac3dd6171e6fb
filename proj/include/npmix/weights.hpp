#pragma once

#include <span>
#include <vector>

#include "npmix/likelihood.hpp"
#include "npmix/types.hpp"

namespace npmix {

struct WeightOptResult {
  std::vector<double> weights;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Multiplicative fixed-point iteration for the mixture weights on a fixed
// support:
//   w_k  <-  (1/n) sum_i  w_k value(i,k) / sum_j w_j value(i,j)
// Each step is an EM update, so ln L never decreases. Stops when the largest
// weight change falls below tol or after max_iter steps. Start weights must
// lie on the simplex and give every subject positive mixture likelihood.
WeightOptResult optimize_weights(const LikelihoodMatrix& matrix, std::vector<double> start,
                                 double tol = 1e-10, int max_iter = 10000);

// Reporting helper. Drops points with weight below weight_floor, then greedily
// merges points whose coordinates agree within radius (componentwise) into
// weight-averaged centroids; cluster seeds are visited in descending weight
// order. When max_points > 0, nearest pairs (Chebyshev distance scaled by
// radius) keep merging until at most max_points remain, so the result never
// exceeds the support size the theory allows. Output weights are renormalized
// and points sorted ascending by coordinates.
DiscreteDistribution prune_and_merge(const DiscreteDistribution& dist, double weight_floor,
                                     std::span<const double> radius, int max_points = 0);

}  // namespace npmix
