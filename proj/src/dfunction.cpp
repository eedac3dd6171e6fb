#include "npmix/dfunction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace npmix {

double d_theta(const Model& model, std::span<const Subject> subjects,
               std::span<const double> beta, double sigma, const SupportPoint& theta,
               std::span<const double> mixture, WorkerPool& pool, EvalCounter* counter) {
  const int n = static_cast<int>(subjects.size());
  if (static_cast<int>(mixture.size()) != n) {
    throw std::invalid_argument("d_theta: mixture likelihoods do not match the subject count");
  }
  for (int i = 0; i < n; ++i) {
    if (!(mixture[i] > 0.0)) {
      throw std::runtime_error("d_theta: subject '" + subjects[i].id +
                               "' has zero mixture likelihood");
    }
  }

  std::vector<double> cell(n);
  pool.run_blocks(n, [&](int, std::int64_t begin, std::int64_t end) {
    for (std::int64_t i = begin; i < end; ++i) {
      cell[i] = model.evaluate(subjects[i], theta.coords, beta, sigma).loglik;
    }
  });
  if (counter) counter->add(static_cast<std::uint64_t>(n));

  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += LikelihoodMatrix::clamped_exp(cell[i]) / mixture[i];
  return sum - n;
}

DPhiResult d_phi(const Model& model, std::span<const Subject> subjects,
                 const Candidate& candidate, const DPhiOptions& options) {
  const ModelDescriptor& desc = model.descriptor();
  options.sa.validate();
  if (options.workers < 1) throw std::invalid_argument("d_phi: workers must be at least 1");
  if (options.extra_seeds < 0) throw std::invalid_argument("d_phi: extra_seeds must be >= 0");
  if (static_cast<int>(options.bounds.size()) != desc.mu_dim) {
    throw std::invalid_argument("d_phi: need one search bound per model parameter (" +
                                std::to_string(desc.mu_dim) + ")");
  }
  for (const ParamRange& r : options.bounds) {
    if (!(r.upper > r.lower)) throw std::invalid_argument("d_phi: bound upper must exceed lower");
  }
  candidate.distribution.validate();
  const int n = static_cast<int>(subjects.size());
  if (n == 0) throw std::invalid_argument("d_phi: no subjects");

  WorkerPool pool(options.workers);
  EvalCounter counter;
  const LikelihoodMatrix matrix = build_matrix(model, subjects, candidate, pool, &counter);
  const std::vector<double> mixture(matrix.row_mix().begin(), matrix.row_mix().end());

  const auto score = [&](const SupportPoint& theta) {
    return d_theta(model, subjects, candidate.beta, candidate.sigma, theta, mixture, pool,
                   &counter);
  };

  // Starting points: every current support point (clamped into the box) and
  // extra uniform draws. The support guarantees max >= 0 up to rounding,
  // because the weighted average of D over the support is exactly zero.
  Rng rng = Rng::substream(options.sa.seed, 6);
  std::vector<SupportPoint> seeds = candidate.distribution.points;
  for (SupportPoint& p : seeds) {
    for (int j = 0; j < desc.mu_dim; ++j) {
      p.coords[j] = std::clamp(p.coords[j], options.bounds[j].lower, options.bounds[j].upper);
    }
  }
  for (int s = 0; s < options.extra_seeds; ++s) {
    SupportPoint p;
    p.coords.resize(desc.mu_dim);
    for (int j = 0; j < desc.mu_dim; ++j) {
      p.coords[j] = rng.uniform(options.bounds[j].lower, options.bounds[j].upper);
    }
    seeds.push_back(std::move(p));
  }

  DPhiResult result;
  result.max_d = -std::numeric_limits<double>::infinity();
  for (const SupportPoint& seed : seeds) {
    const double d = score(seed);
    if (d > result.max_d) {
      result.max_d = d;
      result.argmax = seed;
    }
  }

  const auto energy = [&](std::span<const double> x) {
    SupportPoint theta;
    theta.coords.assign(x.begin(), x.end());
    return -score(theta);
  };
  const MinimizeResult mr = minimize(energy, result.argmax.coords, options.bounds, options.sa, rng);
  result.cycles = mr.cycles;
  result.converged = mr.converged;
  if (-mr.energy > result.max_d) {
    result.max_d = -mr.energy;
    result.argmax.coords = mr.x;
  }
  result.bound = n * std::log1p(result.max_d / n);
  result.evals = counter.get();
  return result;
}

}  // namespace npmix
