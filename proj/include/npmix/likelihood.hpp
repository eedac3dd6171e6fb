#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

#include "npmix/model.hpp"
#include "npmix/types.hpp"
#include "npmix/workers.hpp"

namespace npmix {

// Counts structural-model evaluations (one per likelihood cell). Shared by
// all workers of a fit; relaxed increments keep the total exact.
struct EvalCounter {
  std::atomic<std::uint64_t> count{0};

  void add(std::uint64_t k) { count.fetch_add(k, std::memory_order_relaxed); }
  std::uint64_t get() const { return count.load(std::memory_order_relaxed); }
};

// Log likelihood of a mixture candidate and its normalized energy
// -loglik / n, the quantity the annealer works on.
struct ObjectiveValue {
  double loglik = 0.0;
  double energy = 0.0;
};

// Subject-by-support-point likelihood table. Cells hold the exact
// log likelihood; the raw value exp(loglik) is clamped to zero below
// exp(-700) so row sums can never produce denormal garbage. For models with a
// fitted error scale the per-cell residual sum of squares is kept as well,
// which lets a change of sigma alone rescale the whole table with no
// structural-model calls. Row sums under the most recently supplied weights
// are cached in row_mix.
class LikelihoodMatrix {
 public:
  LikelihoodMatrix() = default;
  LikelihoodMatrix(int n, int K, bool keep_ssr);

  int rows() const { return n_; }
  int cols() const { return K_; }
  bool keeps_ssr() const { return !ssr_.empty(); }

  double value(int i, int k) const { return values_[idx(i, k)]; }
  double loglik(int i, int k) const { return loglik_[idx(i, k)]; }
  double ssr(int i, int k) const { return ssr_[idx(i, k)]; }
  int obs_count(int i) const { return obs_count_[i]; }

  void set_cell(int i, int k, const CellEval& cell);
  void set_obs_count(int i, int m) { obs_count_[i] = m; }

  // Mixture likelihoods N_i for the cached weights.
  std::span<const double> row_mix() const { return row_mix_; }
  std::span<const double> mix_weights() const { return mix_weights_; }

  // Recomputes every N_i from the full row, in ascending column order.
  void refresh_mix(std::span<const double> weights);

  // Swaps in a new column and refreshes the N_i cache from scratch.
  void replace_column(int k, std::span<const CellEval> column, std::span<const double> weights);

  // Replaces every cell (a structural fixed-effect move re-evaluated the
  // whole table). cells are row-major.
  void assign_all(std::span<const CellEval> cells, std::span<const double> weights);

  // Rewrites every cell for a new error scale using the stored residual sums:
  // loglik = -m_i (ln sigma + ln sqrt(2 pi)) - ssr / (2 sigma^2), the exact
  // expression the Gaussian error model itself evaluates.
  void rescale_sigma(double sigma, std::span<const double> weights);

  // ln L the table would have after rescale_sigma(sigma), with the same
  // arithmetic, without touching the table. No structural-model calls.
  double sigma_loglik_preview(double sigma, std::span<const double> weights) const;

  static double clamped_exp(double loglik);

 private:
  std::size_t idx(int i, int k) const { return static_cast<std::size_t>(i) * K_ + k; }

  int n_ = 0, K_ = 0;
  std::vector<double> loglik_;
  std::vector<double> values_;
  std::vector<double> ssr_;
  std::vector<int> obs_count_;
  std::vector<double> row_mix_;
  std::vector<double> mix_weights_;
};

// Evaluates cells for every (subject, point) pair, row-major, split across
// the pool in contiguous blocks differing by at most one cell. Pure: the
// result does not depend on the pool size.
std::vector<CellEval> evaluate_cells(const Model& model, std::span<const Subject> subjects,
                                     std::span<const SupportPoint> points,
                                     std::span<const double> beta, double sigma,
                                     WorkerPool& pool, EvalCounter* counter);

// Builds the full table for a candidate.
LikelihoodMatrix build_matrix(const Model& model, std::span<const Subject> subjects,
                              const Candidate& candidate, WorkerPool& pool,
                              EvalCounter* counter);

// ln L(phi) = sum_i ln sum_k w_k value(i, k), columns in ascending order.
// Returns -inf when any subject has zero mixture likelihood. Pure.
ObjectiveValue log_likelihood(const LikelihoodMatrix& matrix, std::span<const double> weights);

// ln L with column k replaced by the given cells, computed with the exact
// summation order of log_likelihood, so committing the column afterwards
// reproduces this value bit for bit.
double loglik_with_column(const LikelihoodMatrix& matrix, std::span<const double> weights, int k,
                          std::span<const CellEval> column);

// ln L over a freshly evaluated full table (row-major cells).
double loglik_of_cells(std::span<const CellEval> cells, int n, int K,
                       std::span<const double> weights);

// Population mean response: sum_k w_k f(t; mu_k).
std::vector<double> population_prediction(const Model& model, const Subject& subject,
                                          const Candidate& candidate);

// Posterior mean response: sum_k f(t; mu_k) w_k p(Y_i | mu_k) / N_i.
// Throws when the subject's mixture likelihood is zero.
std::vector<double> individual_prediction(const Model& model, const Subject& subject,
                                          const Candidate& candidate);

}  // namespace npmix
