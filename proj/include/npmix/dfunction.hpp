#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "npmix/likelihood.hpp"
#include "npmix/model.hpp"
#include "npmix/sa.hpp"
#include "npmix/types.hpp"
#include "npmix/workers.hpp"

namespace npmix {

// Directional derivative of ln L at the candidate toward a point mass at
// theta: D(theta) = sum_i p(Y_i | beta, theta) / N_i - n. At a global
// optimum D(theta) <= 0 everywhere; D is always >= -n, and evaluating it at
// the support points gives sum_k w_k D(mu_k) = 0 exactly. mixture holds each
// subject's N_i and must be positive throughout. Subjects are split across
// the pool; one call costs n model evaluations.
double d_theta(const Model& model, std::span<const Subject> subjects,
               std::span<const double> beta, double sigma, const SupportPoint& theta,
               std::span<const double> mixture, WorkerPool& pool, EvalCounter* counter);

struct DPhiOptions {
  std::vector<ParamRange> bounds;  // search box for theta
  SAConfig sa;                     // shortened schedule; seed drives the whole search
  int extra_seeds = 16;            // uniform starting draws tried besides the support
  int workers = 1;

  // The diagnostic runs on the D scale (not ln L / n), so it gets its own
  // cheaper defaults.
  DPhiOptions() {
    sa.t0 = 5.0;
    sa.rt = 0.7;
    sa.nt = 5;
    sa.eps = 1e-5;
    sa.max_cycles = 200;
  }
};

struct DPhiResult {
  double max_d = 0.0;   // max_theta D(theta) found
  double bound = 0.0;   // n ln(1 + max_d / n): cap on the ln L gap to the global optimum
  SupportPoint argmax;  // where the maximum was found
  std::uint64_t evals = 0;  // model evaluations spent, matrix rebuild included
  int cycles = 0;
  bool converged = false;
};

// Optimality-gap diagnostic: anneals D(theta) over the box and reports
// n ln(1 + max D / n), which bounds how far the candidate's ln L can be from
// the global maximum. The search starts from the best of the candidate's own
// support points plus extra_seeds uniform draws, so the reported maximum can
// never fall below the support's own D values; an under-converged inner
// search still understates the bound, never overstates optimality the other
// way. beta and sigma are held at the candidate's fitted values.
DPhiResult d_phi(const Model& model, std::span<const Subject> subjects,
                 const Candidate& candidate, const DPhiOptions& options);

}  // namespace npmix
