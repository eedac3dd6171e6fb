#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "npmix/likelihood.hpp"
#include "npmix/model.hpp"
#include "npmix/sa.hpp"
#include "npmix/types.hpp"

namespace npmix {

// Per-sweep proposal ordering. q_array is a permutation of every state
// coordinate (support-point coordinates first, then fixed effects, sigma and
// independent weights); the relative order of each point's coordinates within
// it dictates which coordinate that point moves in each batched round, so
// round j moves, for every point simultaneously, the j-th coordinate of that
// point's own shuffled order. d_eff lists one slot per proposal class
// (mu rounds, each fixed effect, sigma, each independent weight) and is
// shuffled to interleave them. Only the support portion of q_array influences
// execution; its tail is kept so the array stays a full permutation.
struct ProposalSchedule {
  int num_points = 0;
  int mu_dim = 0;
  std::vector<int> q_array;                   // permutation of all coordinates
  std::vector<int> d_eff;                     // shuffled proposal slots
  std::vector<std::vector<int>> point_order;  // [k][round] -> coordinate of point k

  void reshuffle(Rng& rng_q, Rng& rng_deff);
};

// One temperature cycle as seen from outside.
struct CycleRecord {
  int cycle = 0;
  double temperature = 0.0;
  double final_energy = 0.0;
  double best_energy = 0.0;
  double final_loglik = 0.0;
  double best_loglik = 0.0;
  std::uint64_t evals = 0;     // cumulative structural-model evaluations
  double accept_rate = 0.0;    // accepted / proposed within the cycle
};

struct NPSAResult {
  Candidate best;
  double best_loglik = 0.0;
  double best_energy = 0.0;
  std::vector<CycleRecord> trace;
  std::uint64_t eval_count = 0;
  int cycles = 0;
  bool converged = false;
  double wall_seconds = 0.0;
  int n = 0;
  int num_points = 0;
};

struct FitOptions {
  int choice = 3;        // 3: joint weights/support; 2: equal weights, K >= n
  int num_points = 0;    // choice 2 support size; 0 means n
  std::optional<double> fixed_sigma;  // hold sigma fixed instead of annealing
  std::vector<double> fixed_beta;     // hold fixed effects fixed
  bool freeze_weights = false;        // choice 3: skip independent-weight moves
  int workers = 1;
  SAConfig sa;
  Bounds bounds;
  std::function<void(const CycleRecord&)> on_cycle;
};

// Joint annealing of the mixing distribution (and any fixed effects or error
// scale the bounds open up). Choice 3 fixes the support size at n and anneals
// the first n-1 weights alongside the support; choice 2 anneals a K >= n
// point support under equal weights and recovers the weights afterwards with
// the fixed-point optimizer. Results are a pure function of (data, options),
// independent of the worker count.
NPSAResult fit_npsa(const Model& model, const std::vector<Subject>& subjects,
                    const FitOptions& options);

}  // namespace npmix
