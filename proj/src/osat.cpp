#include "npmix/osat.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "npmix/weights.hpp"
#include "npmix/workers.hpp"

namespace npmix {

namespace {

void validate_osat(const ModelDescriptor& desc, const std::vector<Subject>& subjects,
                   const OsatOptions& opt) {
  opt.sa.validate();
  if (opt.workers < 1) throw std::invalid_argument("osat: workers must be at least 1");
  validate_dataset(subjects, desc.requirements);
  if (static_cast<int>(opt.mu_bounds.size()) != desc.mu_dim) {
    throw std::invalid_argument("osat: need one support bound per model parameter (" +
                                std::to_string(desc.mu_dim) + ")");
  }
  for (const ParamRange& r : opt.mu_bounds) {
    // Zero width is allowed and pins the coordinate at that value.
    if (!(r.upper >= r.lower)) {
      throw std::invalid_argument("osat: bound upper must not be below lower");
    }
  }
  if (desc.beta_dim > 0 && static_cast<int>(opt.fixed_beta.size()) != desc.beta_dim) {
    throw std::invalid_argument("osat: the model's fixed effects must be given fixed values");
  }
  if (desc.beta_dim == 0 && !opt.fixed_beta.empty()) {
    throw std::invalid_argument("osat: model has no fixed effects");
  }
  if (desc.error.kind == ErrorKind::kFixedScale) {
    if (opt.consensus_sigma) {
      if (!opt.sigma_bounds || !(opt.sigma_bounds->lower > 0.0) ||
          !(opt.sigma_bounds->upper > opt.sigma_bounds->lower)) {
        throw std::invalid_argument("osat: consensus sigma needs bounds with 0 < lower < upper");
      }
    } else if (!opt.fixed_sigma || !(*opt.fixed_sigma > 0.0)) {
      throw std::invalid_argument("osat: models with a fitted scale need a positive fixed sigma");
    }
  } else if (opt.fixed_sigma || opt.consensus_sigma) {
    throw std::invalid_argument("osat: model has no fitted error scale");
  }
}

// Median of values under nonnegative weights; the smallest value whose
// cumulative weight reaches half the total.
double weighted_median(std::vector<std::pair<double, double>> value_weight) {
  std::sort(value_weight.begin(), value_weight.end());
  double total = 0.0;
  for (const auto& vw : value_weight) total += vw.second;
  double cum = 0.0;
  for (const auto& vw : value_weight) {
    cum += vw.second;
    if (cum >= 0.5 * total) return vw.first;
  }
  return value_weight.back().first;
}

}  // namespace

SubjectFit fit_subject(const Model& model, const Subject& subject, const OsatOptions& options,
                       std::uint64_t subject_index, EvalCounter* counter) {
  const ModelDescriptor& desc = model.descriptor();
  const bool anneal_sigma = options.consensus_sigma && desc.error.kind == ErrorKind::kFixedScale;
  const double base_sigma =
      desc.error.kind == ErrorKind::kFixedScale && options.fixed_sigma ? *options.fixed_sigma : 0.0;

  std::vector<ParamRange> bounds = options.mu_bounds;
  if (anneal_sigma) bounds.push_back(*options.sigma_bounds);

  // Zero-width ranges pin their coordinate; the annealer only sees the free
  // ones. Fully collapsed bounds reduce to a single evaluation.
  std::vector<double> full(bounds.size());
  std::vector<int> free_idx;
  std::vector<ParamRange> free_bounds;
  for (std::size_t j = 0; j < bounds.size(); ++j) {
    full[j] = bounds[j].midpoint();
    if (bounds[j].width() > 0.0) {
      free_idx.push_back(static_cast<int>(j));
      free_bounds.push_back(bounds[j]);
    }
  }

  const auto full_energy = [&](const std::vector<double>& x) {
    const std::span<const double> mu(x.data(), desc.mu_dim);
    const double sigma = anneal_sigma ? x[desc.mu_dim] : base_sigma;
    if (counter) counter->add(1);
    return -model.evaluate(subject, mu, options.fixed_beta, sigma).loglik;
  };

  SubjectFit fit;
  if (free_idx.empty()) {
    fit.loglik = -full_energy(full);
    fit.cycles = 0;
    fit.evals = 1;
    fit.converged = true;
  } else {
    std::vector<double> scratch = full;
    const auto energy = [&](std::span<const double> x) {
      for (std::size_t j = 0; j < free_idx.size(); ++j) scratch[free_idx[j]] = x[j];
      return full_energy(scratch);
    };
    std::vector<double> x0(free_idx.size());
    for (std::size_t j = 0; j < free_idx.size(); ++j) x0[j] = full[free_idx[j]];

    Rng rng = Rng::substream(options.sa.seed, subject_index);
    MinimizeResult mr;
    try {
      mr = minimize(energy, x0, free_bounds, options.sa, rng);
    } catch (const std::runtime_error& err) {
      throw std::runtime_error("osat: subject '" + subject.id + "': " + err.what());
    }
    for (std::size_t j = 0; j < free_idx.size(); ++j) full[free_idx[j]] = mr.x[j];
    fit.loglik = -mr.energy;
    fit.cycles = mr.cycles;
    fit.evals = mr.evals;
    fit.converged = mr.converged;
  }
  fit.point.coords.assign(full.begin(), full.begin() + desc.mu_dim);
  fit.sigma = anneal_sigma ? full[desc.mu_dim] : base_sigma;
  return fit;
}

NPSAResult fit_osat(const Model& model, const std::vector<Subject>& subjects,
                    const OsatOptions& options) {
  const auto start_time = std::chrono::steady_clock::now();
  const ModelDescriptor& desc = model.descriptor();
  validate_osat(desc, subjects, options);
  const int n = static_cast<int>(subjects.size());

  WorkerPool pool(options.workers);
  EvalCounter counter;

  // Per-subject fits. Subjects are split across workers in contiguous
  // blocks; every subject has its own stream, so the outcome does not depend
  // on the split.
  std::vector<SubjectFit> fits(n);
  pool.run_blocks(n, [&](int, std::int64_t begin, std::int64_t end) {
    for (std::int64_t i = begin; i < end; ++i) {
      fits[i] = fit_subject(model, subjects[i], options, static_cast<std::uint64_t>(i), &counter);
    }
  });

  Candidate cand;
  cand.beta = options.fixed_beta;
  if (desc.error.kind == ErrorKind::kFixedScale) {
    if (options.consensus_sigma) {
      // Likelihood-weighted median of the per-subject scales; weights are the
      // subject likelihoods normalized by the largest to avoid underflow.
      double top = -std::numeric_limits<double>::infinity();
      for (const SubjectFit& f : fits) top = std::max(top, f.loglik);
      std::vector<std::pair<double, double>> vw;
      for (const SubjectFit& f : fits) vw.emplace_back(f.sigma, std::exp(f.loglik - top));
      cand.sigma = weighted_median(std::move(vw));
    } else {
      cand.sigma = *options.fixed_sigma;
    }
  }
  cand.distribution.points.resize(n);
  for (int i = 0; i < n; ++i) cand.distribution.points[i] = fits[i].point;
  cand.distribution.weights.assign(n, 1.0 / n);

  const LikelihoodMatrix matrix = build_matrix(model, subjects, cand, pool, &counter);
  const WeightOptResult wopt = optimize_weights(matrix, cand.distribution.weights,
                                                options.weight_tol, options.weight_max_iter);
  cand.distribution.weights = wopt.weights;

  NPSAResult result;
  result.best = std::move(cand);
  result.best_loglik = wopt.loglik;
  result.best_energy = -wopt.loglik / n;
  result.eval_count = counter.get();
  result.n = n;
  result.num_points = n;
  result.converged = true;
  int max_cycles = 0;
  for (const SubjectFit& f : fits) {
    result.converged = result.converged && f.converged;
    max_cycles = std::max(max_cycles, f.cycles);
  }
  result.cycles = max_cycles;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return result;
}

}  // namespace npmix
