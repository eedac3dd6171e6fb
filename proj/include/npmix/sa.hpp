#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "npmix/rng.hpp"
#include "npmix/types.hpp"

namespace npmix {

// Annealing schedule shared by every fit mode. One temperature cycle is
// nt step-adjustment periods of ns sweeps each; after every cycle the
// temperature is multiplied by rt and the walk restarts from the best state
// seen so far.
struct SAConfig {
  double t0 = 60.0;        // initial temperature
  double rt = 0.85;        // cooling factor
  int ns = 20;             // sweeps per step adjustment
  int nt = 10;             // step adjustments per temperature cycle
  double eps = 1e-4;       // stop tolerance on cycle-final energies
  int n_eps = 4;           // cycle finals that must agree before stopping
  int max_cycles = 500;    // hard cap on temperature cycles
  std::uint64_t seed = 1;

  void validate() const;  // throws std::invalid_argument
};

// Step-bounded proposal for one coordinate: value + u * step with
// u ~ U[-1, 1); a result outside the range is replaced by a uniform draw
// inside it. Consumes one uniform, two on the out-of-range path.
double propose_coordinate(double value, double step, const ParamRange& range, Rng& rng);

// Metropolis test on log likelihoods normalized by the subject count:
// accept with probability min(1, exp((ll_new - ll_old) / (n * temperature))).
// ll_new of -inf always rejects; a finite ll_new against ll_old of -inf
// always accepts. Exactly one uniform is consumed on every call.
bool metropolis_accept(double ll_old, double ll_new, int n, double temperature, Rng& rng);

// Step update from the acceptance ratio over the last adjustment period,
// with the classic steepness constant of 2: above 60% acceptance the step
// grows, below 40% it shrinks, and it never exceeds the full range width.
double adjusted_step(double step, int accepted, int attempts, double width);

// Stopping rule on the energies recorded at the end of each temperature
// cycle: stop once the newest final differs by less than eps from each of the
// previous n_eps finals and from the best energy seen so far.
class StopTracker {
 public:
  StopTracker(double eps, int n_eps) : eps_(eps), n_eps_(n_eps) {}

  // Checks the rule against the recorded history, then records final_energy.
  bool check_and_push(double final_energy, double best_energy);

  std::span<const double> history() const { return history_; }

 private:
  double eps_;
  int n_eps_;
  std::vector<double> history_;
};

struct MinimizeResult {
  std::vector<double> x;
  double energy = 0.0;
  int cycles = 0;
  std::int64_t evals = 0;  // objective evaluations
  bool converged = false;  // stopped by the eps rule rather than max_cycles
};

// Plain coordinate-wise annealer over a box, used for the per-subject fits
// and for the global search inside the distance diagnostic. Proposes every
// coordinate once per sweep in a freshly shuffled order, keeps per-coordinate
// steps, and restarts each cycle from the best point. Throws when no feasible
// point (finite energy) is found within the first temperature cycle.
MinimizeResult minimize(const std::function<double(std::span<const double>)>& energy,
                        std::span<const double> x0, std::span<const ParamRange> bounds,
                        const SAConfig& config, Rng& rng);

}  // namespace npmix
