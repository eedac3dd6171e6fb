#include "npmix/npsa.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "npmix/weights.hpp"

namespace npmix {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Named substreams of the fit seed. Every source of randomness has its own
// stream with a fixed draw order, so structurally identical runs (for
// example choice 2 against choice 3 with frozen weights) consume identical
// sequences, and the worker count never touches any stream.
enum StreamTag : std::uint64_t {
  kStreamInit = 1,
  kStreamQArray = 2,
  kStreamDeff = 3,
  kStreamMuMoves = 4,
  kStreamOtherMoves = 5,
};
}  // namespace

void ProposalSchedule::reshuffle(Rng& rng_q, Rng& rng_deff) {
  // Only the support portion is shuffled; the tail stays in place because the
  // batched rounds never consult it. Keeping it fixed makes the q draw count
  // independent of how many trailing coordinates the mode adds.
  const int P = num_points * mu_dim;
  rng_q.shuffle(q_array.begin(), q_array.begin() + P);
  rng_deff.shuffle(d_eff.begin(), d_eff.end());
  for (auto& ord : point_order) ord.clear();
  for (int pos = 0; pos < P; ++pos) {
    const int id = q_array[pos];
    point_order[id / mu_dim].push_back(id % mu_dim);
  }
}

namespace {

struct Snapshot {
  Candidate cand;
  LikelihoodMatrix matrix;
  double loglik = kNegInf;
};

struct Driver {
  const Model& model;
  const std::vector<Subject>& subjects;
  const FitOptions& opt;
  const ModelDescriptor& desc;

  int n = 0;
  int K = 0;
  int mu_dim = 0;
  int n_beta = 0;    // annealed fixed effects
  int n_sigma = 0;   // 1 when sigma is annealed
  int n_weight = 0;  // independent weights (choice 3)
  int P = 0;         // support coordinate count = K * mu_dim

  Rng rng_init, rng_q, rng_deff, rng_mu, rng_other;
  WorkerPool pool;
  EvalCounter counter;

  Candidate cand;
  LikelihoodMatrix matrix;
  double loglik = kNegInf;
  Snapshot best;

  std::vector<double> steps;
  std::vector<int> accepted;
  ProposalSchedule schedule;
  double temperature = 0.0;
  std::int64_t cycle_proposed = 0;
  std::int64_t cycle_accepted = 0;

  Driver(const Model& m, const std::vector<Subject>& subj, const FitOptions& o)
      : model(m), subjects(subj), opt(o), desc(m.descriptor()),
        rng_init(Rng::substream(o.sa.seed, kStreamInit)),
        rng_q(Rng::substream(o.sa.seed, kStreamQArray)),
        rng_deff(Rng::substream(o.sa.seed, kStreamDeff)),
        rng_mu(Rng::substream(o.sa.seed, kStreamMuMoves)),
        rng_other(Rng::substream(o.sa.seed, kStreamOtherMoves)),
        pool(o.workers) {}

  double energy() const { return -loglik / n; }

  void update_best() {
    if (loglik > best.loglik) {
      best.cand = cand;
      best.matrix = matrix;
      best.loglik = loglik;
    }
  }

  void restore_best() {
    cand = best.cand;
    matrix = best.matrix;
    loglik = best.loglik;
  }

  int mu_slot(int k, int c) const { return k * mu_dim + c; }
  int beta_slot(int b) const { return P + b; }
  int sigma_slot() const { return P + n_beta; }
  int weight_slot(int w) const { return P + n_beta + n_sigma + w; }

  double slot_width(int slot) const {
    if (slot < P) return opt.bounds.mu[slot % mu_dim].width();
    if (slot < P + n_beta) return opt.bounds.beta[slot - P].width();
    if (n_sigma && slot == sigma_slot()) return opt.bounds.sigma->width();
    return 1.0;  // weight coordinates live on [0, 1]
  }

  // One parallel batched move: every support point proposes the round-th
  // coordinate of its own per-sweep order, all candidate columns are
  // evaluated at once, then the Metropolis tests run sequentially against
  // the table as already updated by this round's earlier acceptances.
  void batched_support_move(int round) {
    std::vector<SupportPoint> proposals = cand.distribution.points;
    std::vector<int> moved(K);
    for (int k = 0; k < K; ++k) {
      const int c = schedule.point_order[k][round];
      moved[k] = c;
      proposals[k].coords[c] = propose_coordinate(
          proposals[k].coords[c], steps[mu_slot(k, c)], opt.bounds.mu[c], rng_mu);
    }
    const std::vector<CellEval> cells =
        evaluate_cells(model, subjects, proposals, cand.beta, cand.sigma, pool, &counter);
    std::vector<CellEval> column(n);
    for (int k = 0; k < K; ++k) {
      for (int i = 0; i < n; ++i) column[i] = cells[static_cast<std::size_t>(i) * K + k];
      const double trial = loglik_with_column(matrix, cand.distribution.weights, k, column);
      ++cycle_proposed;
      if (metropolis_accept(loglik, trial, n, temperature, rng_mu)) {
        matrix.replace_column(k, column, cand.distribution.weights);
        cand.distribution.points[k].coords[moved[k]] = proposals[k].coords[moved[k]];
        loglik = trial;
        ++accepted[mu_slot(k, moved[k])];
        ++cycle_accepted;
        update_best();
      }
    }
  }

  // Structural fixed-effect move: the whole table must be re-evaluated.
  void beta_move(int b) {
    std::vector<double> trial_beta = cand.beta;
    trial_beta[b] = propose_coordinate(trial_beta[b], steps[beta_slot(b)],
                                       opt.bounds.beta[b], rng_other);
    const std::vector<CellEval> cells = evaluate_cells(
        model, subjects, cand.distribution.points, trial_beta, cand.sigma, pool, &counter);
    const double trial = loglik_of_cells(cells, n, K, cand.distribution.weights);
    ++cycle_proposed;
    if (metropolis_accept(loglik, trial, n, temperature, rng_other)) {
      matrix.assign_all(cells, cand.distribution.weights);
      cand.beta = trial_beta;
      loglik = trial;
      ++accepted[beta_slot(b)];
      ++cycle_accepted;
      update_best();
    }
  }

  // Error-scale move: every cell rescales through its stored residual sum,
  // so no structural-model calls are spent.
  void sigma_move() {
    const double trial_sigma = propose_coordinate(cand.sigma, steps[sigma_slot()],
                                                  *opt.bounds.sigma, rng_other);
    const double trial = matrix.sigma_loglik_preview(trial_sigma, cand.distribution.weights);
    ++cycle_proposed;
    if (metropolis_accept(loglik, trial, n, temperature, rng_other)) {
      matrix.rescale_sigma(trial_sigma, cand.distribution.weights);
      cand.sigma = trial_sigma;
      loglik = trial;
      ++accepted[sigma_slot()];
      ++cycle_accepted;
      update_best();
    }
  }

  // Independent-weight move. The last weight absorbs the change; a negative
  // remainder rejects outright, before any likelihood arithmetic and without
  // consuming an acceptance draw.
  void weight_move(int w) {
    static const ParamRange kUnit{0.0, 1.0};
    std::vector<double> trial_w = cand.distribution.weights;
    trial_w[w] = propose_coordinate(trial_w[w], steps[weight_slot(w)], kUnit, rng_other);
    double head = 0.0;
    for (int k = 0; k < K - 1; ++k) head += trial_w[k];
    trial_w[K - 1] = 1.0 - head;
    ++cycle_proposed;
    if (trial_w[K - 1] < 0.0) return;
    const double trial = log_likelihood(matrix, trial_w).loglik;
    if (metropolis_accept(loglik, trial, n, temperature, rng_other)) {
      cand.distribution.weights = trial_w;
      matrix.refresh_mix(trial_w);
      loglik = trial;
      ++accepted[weight_slot(w)];
      ++cycle_accepted;
      update_best();
    }
  }

  void sweep() {
    schedule.reshuffle(rng_q, rng_deff);
    int round = 0;
    for (const int slot : schedule.d_eff) {
      if (slot < mu_dim) {
        batched_support_move(round++);
      } else if (slot < mu_dim + n_beta) {
        beta_move(slot - mu_dim);
      } else if (n_sigma && slot == mu_dim + n_beta) {
        sigma_move();
      } else {
        weight_move(slot - (mu_dim + n_beta + n_sigma));
      }
    }
  }
};

void validate_options(const ModelDescriptor& desc, const std::vector<Subject>& subjects,
                      const FitOptions& opt, int* K_out, int* n_beta, int* n_sigma) {
  if (opt.choice != 2 && opt.choice != 3) {
    throw std::invalid_argument("fit: choice must be 2 or 3");
  }
  opt.sa.validate();
  if (opt.workers < 1) throw std::invalid_argument("fit: workers must be at least 1");
  validate_dataset(subjects, desc.requirements);
  const int n = static_cast<int>(subjects.size());

  int K = n;
  if (opt.choice == 2 && opt.num_points != 0) {
    K = opt.num_points;
    if (K < n) {
      throw std::invalid_argument("fit: choice 2 needs at least as many support points as subjects");
    }
  }
  if (opt.choice == 3 && opt.num_points != 0 && opt.num_points != n) {
    throw std::invalid_argument("fit: choice 3 fixes the support size at the subject count");
  }

  if (static_cast<int>(opt.bounds.mu.size()) != desc.mu_dim) {
    throw std::invalid_argument("fit: need one support bound per model parameter (" +
                                std::to_string(desc.mu_dim) + ")");
  }
  for (const ParamRange& r : opt.bounds.mu) {
    if (!(r.upper > r.lower)) throw std::invalid_argument("fit: bound upper must exceed lower");
  }

  if (desc.beta_dim > 0) {
    const bool fixed = !opt.fixed_beta.empty();
    const bool ranged = !opt.bounds.beta.empty();
    if (fixed == ranged) {
      throw std::invalid_argument(
          "fit: fixed effects need either fixed values or bounds, not both");
    }
    if (fixed && static_cast<int>(opt.fixed_beta.size()) != desc.beta_dim) {
      throw std::invalid_argument("fit: fixed-effect value count does not match the model");
    }
    if (ranged) {
      if (static_cast<int>(opt.bounds.beta.size()) != desc.beta_dim) {
        throw std::invalid_argument("fit: fixed-effect bound count does not match the model");
      }
      if (!desc.beta_structural) {
        throw std::invalid_argument("fit: model does not support annealed fixed effects");
      }
      for (const ParamRange& r : opt.bounds.beta) {
        if (!(r.upper > r.lower)) throw std::invalid_argument("fit: bound upper must exceed lower");
      }
    }
    *n_beta = ranged ? desc.beta_dim : 0;
  } else {
    if (!opt.fixed_beta.empty() || !opt.bounds.beta.empty()) {
      throw std::invalid_argument("fit: model has no fixed effects");
    }
    *n_beta = 0;
  }

  if (desc.error.kind == ErrorKind::kFixedScale) {
    const bool fixed = opt.fixed_sigma.has_value();
    const bool ranged = opt.bounds.sigma.has_value();
    if (fixed == ranged) {
      throw std::invalid_argument("fit: sigma needs either a fixed value or bounds, not both");
    }
    if (fixed && !(*opt.fixed_sigma > 0.0)) {
      throw std::invalid_argument("fit: fixed sigma must be positive");
    }
    if (ranged && !(opt.bounds.sigma->lower > 0.0 && opt.bounds.sigma->upper > opt.bounds.sigma->lower)) {
      throw std::invalid_argument("fit: sigma bounds must satisfy 0 < lower < upper");
    }
    *n_sigma = ranged ? 1 : 0;
  } else {
    if (opt.fixed_sigma.has_value() || opt.bounds.sigma.has_value()) {
      throw std::invalid_argument("fit: model has no fitted error scale");
    }
    *n_sigma = 0;
  }
  *K_out = K;
}

}  // namespace

NPSAResult fit_npsa(const Model& model, const std::vector<Subject>& subjects,
                    const FitOptions& options) {
  const auto start_time = std::chrono::steady_clock::now();
  const ModelDescriptor& desc = model.descriptor();
  int K = 0, n_beta = 0, n_sigma = 0;
  validate_options(desc, subjects, options, &K, &n_beta, &n_sigma);
  const int n = static_cast<int>(subjects.size());

  Driver drv(model, subjects, options);
  drv.n = n;
  drv.K = K;
  drv.mu_dim = desc.mu_dim;
  drv.n_beta = n_beta;
  drv.n_sigma = n_sigma;
  drv.n_weight = options.choice == 3 ? n - 1 : 0;
  drv.P = K * desc.mu_dim;

  // Initial candidate: uniform support draws (point-major, coordinate-minor),
  // fixed effects and sigma at their fixed values or range midpoints, equal
  // weights.
  drv.cand.distribution.points.resize(K);
  for (int k = 0; k < K; ++k) {
    drv.cand.distribution.points[k].coords.resize(desc.mu_dim);
    for (int c = 0; c < desc.mu_dim; ++c) {
      drv.cand.distribution.points[k].coords[c] =
          drv.rng_init.uniform(options.bounds.mu[c].lower, options.bounds.mu[c].upper);
    }
  }
  drv.cand.distribution.weights.assign(K, 1.0 / K);
  if (desc.beta_dim > 0) {
    drv.cand.beta.resize(desc.beta_dim);
    for (int b = 0; b < desc.beta_dim; ++b) {
      drv.cand.beta[b] = n_beta ? options.bounds.beta[b].midpoint() : options.fixed_beta[b];
    }
  }
  if (desc.error.kind == ErrorKind::kFixedScale) {
    drv.cand.sigma = n_sigma ? options.bounds.sigma->midpoint() : *options.fixed_sigma;
  }

  drv.matrix = build_matrix(model, subjects, drv.cand, drv.pool, &drv.counter);
  drv.loglik = log_likelihood(drv.matrix, drv.cand.distribution.weights).loglik;
  drv.best.cand = drv.cand;
  drv.best.matrix = drv.matrix;
  drv.best.loglik = drv.loglik;

  const int d_tot = drv.P + n_beta + n_sigma + drv.n_weight;
  drv.steps.resize(d_tot);
  for (int s = 0; s < d_tot; ++s) drv.steps[s] = drv.slot_width(s);
  drv.accepted.assign(d_tot, 0);

  drv.schedule.num_points = K;
  drv.schedule.mu_dim = desc.mu_dim;
  drv.schedule.q_array.resize(d_tot);
  std::iota(drv.schedule.q_array.begin(), drv.schedule.q_array.end(), 0);
  drv.schedule.point_order.resize(K);
  const int active_weights = options.freeze_weights ? 0 : drv.n_weight;
  drv.schedule.d_eff.resize(desc.mu_dim + n_beta + n_sigma + active_weights);
  std::iota(drv.schedule.d_eff.begin(), drv.schedule.d_eff.end(), 0);

  drv.temperature = options.sa.t0;
  StopTracker tracker(options.sa.eps, options.sa.n_eps);

  NPSAResult result;
  result.n = n;
  result.num_points = K;

  for (int cycle = 1; cycle <= options.sa.max_cycles; ++cycle) {
    drv.cycle_proposed = 0;
    drv.cycle_accepted = 0;
    for (int adj = 0; adj < options.sa.nt; ++adj) {
      std::fill(drv.accepted.begin(), drv.accepted.end(), 0);
      for (int sweep = 0; sweep < options.sa.ns; ++sweep) drv.sweep();
      for (int s = 0; s < d_tot; ++s) {
        drv.steps[s] = adjusted_step(drv.steps[s], drv.accepted[s], options.sa.ns,
                                     drv.slot_width(s));
      }
    }
    result.cycles = cycle;

    CycleRecord record;
    record.cycle = cycle;
    record.temperature = drv.temperature;
    record.final_loglik = drv.loglik;
    record.final_energy = -drv.loglik / n;
    record.best_loglik = drv.best.loglik;
    record.best_energy = -drv.best.loglik / n;
    record.evals = drv.counter.get();
    record.accept_rate = drv.cycle_proposed > 0
                             ? static_cast<double>(drv.cycle_accepted) / drv.cycle_proposed
                             : 0.0;
    result.trace.push_back(record);
    if (options.on_cycle) options.on_cycle(record);

    if (cycle == 1 && drv.cycle_accepted == 0 && drv.loglik == kNegInf) {
      throw std::runtime_error(
          "fit: the initial candidate has zero likelihood and no proposal was accepted in the "
          "first temperature cycle; widen the bounds");
    }
    if (tracker.check_and_push(record.final_energy, record.best_energy)) {
      result.converged = true;
      break;
    }
    drv.temperature *= options.sa.rt;
    drv.restore_best();
  }

  // Choice 2 anneals under equal weights; the weights are recovered here on
  // the best support by the monotone fixed-point iteration.
  if (options.choice == 2) {
    const WeightOptResult wopt = optimize_weights(
        drv.best.matrix, std::vector<double>(K, 1.0 / K), 1e-10, 10000);
    drv.best.cand.distribution.weights = wopt.weights;
    drv.best.loglik = wopt.loglik;
  }

  // Internal consistency: the incrementally maintained optimum must agree
  // with a from-scratch rebuild.
  {
    LikelihoodMatrix rebuilt = build_matrix(model, subjects, drv.best.cand, drv.pool, &drv.counter);
    const double fresh = log_likelihood(rebuilt, drv.best.cand.distribution.weights).loglik;
    if (!(std::abs(fresh - drv.best.loglik) <= 1e-9)) {
      throw std::logic_error("fit: incremental log likelihood drifted from a fresh rebuild");
    }
  }

  result.best = drv.best.cand;
  result.best_loglik = drv.best.loglik;
  result.best_energy = -drv.best.loglik / n;
  result.eval_count = drv.counter.get();
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return result;
}

}  // namespace npmix
