#include "npmix/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace npmix {

WeightOptResult optimize_weights(const LikelihoodMatrix& matrix, std::vector<double> start,
                                 double tol, int max_iter) {
  const int n = matrix.rows();
  const int K = matrix.cols();
  if (static_cast<int>(start.size()) != K) {
    throw std::invalid_argument("optimize_weights: start weight count does not match columns");
  }
  double total = 0.0;
  for (double w : start) {
    if (!(w >= 0.0)) throw std::invalid_argument("optimize_weights: negative or NaN start weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("optimize_weights: start weights must sum to 1");
  }
  if (!(tol > 0.0) || max_iter < 1) {
    throw std::invalid_argument("optimize_weights: tol must be positive and max_iter >= 1");
  }

  std::vector<double> mix(n);
  std::vector<double> next(K);
  WeightOptResult result;
  result.weights = std::move(start);

  for (int iter = 1; iter <= max_iter; ++iter) {
    for (int i = 0; i < n; ++i) {
      double m = 0.0;
      for (int k = 0; k < K; ++k) m += result.weights[k] * matrix.value(i, k);
      if (m <= 0.0) {
        throw std::invalid_argument(
            "optimize_weights: subject " + std::to_string(i) +
            " has zero mixture likelihood under the start weights; widen the support");
      }
      mix[i] = m;
    }
    std::fill(next.begin(), next.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      const double inv = 1.0 / mix[i];
      for (int k = 0; k < K; ++k) {
        next[k] += result.weights[k] * matrix.value(i, k) * inv;
      }
    }
    double sum = 0.0;
    for (int k = 0; k < K; ++k) {
      next[k] /= n;
      sum += next[k];
    }
    for (int k = 0; k < K; ++k) next[k] /= sum;

    double delta = 0.0;
    for (int k = 0; k < K; ++k) delta = std::max(delta, std::abs(next[k] - result.weights[k]));
    result.weights = next;
    result.iterations = iter;
    if (delta < tol) {
      result.converged = true;
      break;
    }
  }
  result.loglik = log_likelihood(matrix, result.weights).loglik;
  return result;
}

namespace {

struct Cluster {
  std::vector<double> centroid;
  double weight = 0.0;
};

bool within_radius(const std::vector<double>& a, const std::vector<double>& b,
                   std::span<const double> radius) {
  for (std::size_t c = 0; c < a.size(); ++c) {
    if (std::abs(a[c] - b[c]) > radius[c]) return false;
  }
  return true;
}

void absorb(Cluster& into, const std::vector<double>& coords, double weight) {
  const double total = into.weight + weight;
  if (total > 0.0) {
    for (std::size_t c = 0; c < into.centroid.size(); ++c) {
      into.centroid[c] = (into.centroid[c] * into.weight + coords[c] * weight) / total;
    }
  }
  into.weight = total;
}

// Scaled Chebyshev distance used for the closest-pair cap.
double scaled_distance(const Cluster& a, const Cluster& b, std::span<const double> radius) {
  double d = 0.0;
  for (std::size_t c = 0; c < a.centroid.size(); ++c) {
    const double scale = radius[c] > 0.0 ? radius[c] : 1.0;
    d = std::max(d, std::abs(a.centroid[c] - b.centroid[c]) / scale);
  }
  return d;
}

}  // namespace

DiscreteDistribution prune_and_merge(const DiscreteDistribution& dist, double weight_floor,
                                     std::span<const double> radius, int max_points) {
  dist.validate();
  const int dim = dist.points.front().dim();
  if (static_cast<int>(radius.size()) != dim) {
    throw std::invalid_argument("prune_and_merge: radius dimension does not match points");
  }

  // Survivors of the weight floor, highest weight first (ties keep the lower
  // original index first, so the pass is deterministic).
  std::vector<int> order;
  for (int k = 0; k < dist.size(); ++k) {
    if (dist.weights[k] >= weight_floor) order.push_back(k);
  }
  if (order.empty()) {
    throw std::invalid_argument("prune_and_merge: empty distribution after pruning; lower the weight floor");
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return dist.weights[a] > dist.weights[b]; });

  std::vector<Cluster> clusters;
  for (int k : order) {
    bool joined = false;
    for (Cluster& cl : clusters) {
      if (within_radius(cl.centroid, dist.points[k].coords, radius)) {
        absorb(cl, dist.points[k].coords, dist.weights[k]);
        joined = true;
        break;
      }
    }
    if (!joined) clusters.push_back({dist.points[k].coords, dist.weights[k]});
  }

  if (max_points > 0) {
    while (static_cast<int>(clusters.size()) > max_points) {
      std::size_t pa = 0, pb = 1;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < clusters.size(); ++a) {
        for (std::size_t b = a + 1; b < clusters.size(); ++b) {
          const double d = scaled_distance(clusters[a], clusters[b], radius);
          if (d < best) {
            best = d;
            pa = a;
            pb = b;
          }
        }
      }
      absorb(clusters[pa], clusters[pb].centroid, clusters[pb].weight);
      clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(pb));
    }
  }

  std::sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
    return a.centroid < b.centroid;
  });

  DiscreteDistribution out;
  for (const Cluster& cl : clusters) {
    out.points.push_back({cl.centroid});
    out.weights.push_back(cl.weight);
  }
  out.renormalize();
  return out;
}

}  // namespace npmix
