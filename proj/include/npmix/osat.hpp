#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "npmix/model.hpp"
#include "npmix/npsa.hpp"
#include "npmix/sa.hpp"
#include "npmix/types.hpp"

namespace npmix {

// One-support-point-per-subject approximation. Every subject gets its own
// small annealer over a single point (fixed effects and error scale held
// fixed), the n fitted points are pooled, and the pooled weights come from
// the fixed-point optimizer started at uniform. Cost grows linearly in n
// instead of quadratically.
struct OsatOptions {
  std::vector<ParamRange> mu_bounds;
  std::vector<double> fixed_beta;     // required when the model has fixed effects
  std::optional<double> fixed_sigma;  // required for models with a fitted scale
  // Extension, off by default: each subject co-anneals its own sigma within
  // sigma_bounds and the pooled table uses the likelihood-weighted median.
  bool consensus_sigma = false;
  std::optional<ParamRange> sigma_bounds;
  int workers = 1;
  SAConfig sa;
  double weight_tol = 1e-10;
  int weight_max_iter = 10000;
};

struct SubjectFit {
  SupportPoint point;
  double loglik = 0.0;  // best per-subject log likelihood
  double sigma = 0.0;   // per-subject scale when consensus_sigma is on
  int cycles = 0;
  std::int64_t evals = 0;
  bool converged = false;
};

// Fits one subject's support point with its own random stream (derived from
// the fit seed plus the subject index).
SubjectFit fit_subject(const Model& model, const Subject& subject, const OsatOptions& options,
                       std::uint64_t subject_index, EvalCounter* counter);

// Full pipeline: per-subject fits (subjects split across workers), pooling,
// weight optimization. The result's trace is empty; per-cycle records only
// exist for the joint annealers.
NPSAResult fit_osat(const Model& model, const std::vector<Subject>& subjects,
                    const OsatOptions& options);

}  // namespace npmix
