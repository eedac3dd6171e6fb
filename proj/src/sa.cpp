#include "npmix/sa.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace npmix {

void SAConfig::validate() const {
  if (!(t0 > 0.0)) throw std::invalid_argument("sa config: t0 must be positive");
  if (!(rt > 0.0 && rt < 1.0)) throw std::invalid_argument("sa config: rt must lie in (0, 1)");
  if (ns < 1) throw std::invalid_argument("sa config: ns must be at least 1");
  if (nt < 1) throw std::invalid_argument("sa config: nt must be at least 1");
  if (!(eps > 0.0)) throw std::invalid_argument("sa config: eps must be positive");
  if (n_eps < 1) throw std::invalid_argument("sa config: n_eps must be at least 1");
  if (max_cycles < 1) throw std::invalid_argument("sa config: max_cycles must be at least 1");
}

double propose_coordinate(double value, double step, const ParamRange& range, Rng& rng) {
  const double u = rng.uniform(-1.0, 1.0);
  const double moved = value + u * step;
  if (moved < range.lower || moved > range.upper) {
    return rng.uniform(range.lower, range.upper);
  }
  return moved;
}

bool metropolis_accept(double ll_old, double ll_new, int n, double temperature, Rng& rng) {
  const double u = rng.uniform01();
  if (ll_new == -std::numeric_limits<double>::infinity()) return false;
  if (ll_new >= ll_old) return true;
  return u < std::exp((ll_new - ll_old) / (n * temperature));
}

double adjusted_step(double step, int accepted, int attempts, double width) {
  if (attempts < 1) throw std::invalid_argument("adjusted_step: attempts must be at least 1");
  const double ratio = static_cast<double>(accepted) / attempts;
  if (ratio > 0.6) {
    step *= 1.0 + 2.0 * (ratio - 0.6) / 0.4;
  } else if (ratio < 0.4) {
    step /= 1.0 + 2.0 * (0.4 - ratio) / 0.4;
  }
  return std::min(step, width);
}

bool StopTracker::check_and_push(double final_energy, double best_energy) {
  bool stop = static_cast<int>(history_.size()) >= n_eps_ &&
              std::abs(final_energy - best_energy) < eps_;
  if (stop) {
    for (int j = 0; j < n_eps_; ++j) {
      const double prev = history_[history_.size() - 1 - j];
      if (!(std::abs(final_energy - prev) < eps_)) {
        stop = false;
        break;
      }
    }
  }
  history_.push_back(final_energy);
  return stop;
}

MinimizeResult minimize(const std::function<double(std::span<const double>)>& energy,
                        std::span<const double> x0, std::span<const ParamRange> bounds,
                        const SAConfig& config, Rng& rng) {
  config.validate();
  const int d = static_cast<int>(bounds.size());
  if (static_cast<int>(x0.size()) != d || d == 0) {
    throw std::invalid_argument("minimize: empty bounds or mismatched start point");
  }
  for (int j = 0; j < d; ++j) {
    if (!(bounds[j].upper > bounds[j].lower)) {
      throw std::invalid_argument("minimize: bound upper must exceed lower");
    }
    if (!bounds[j].contains(x0[j])) {
      throw std::invalid_argument("minimize: start point outside bounds");
    }
  }

  MinimizeResult result;
  std::vector<double> x(x0.begin(), x0.end());
  double e = energy(x);
  ++result.evals;
  std::vector<double> best_x = x;
  double best_e = e;

  std::vector<double> steps(d);
  for (int j = 0; j < d; ++j) steps[j] = bounds[j].width();
  std::vector<int> accepted(d, 0);
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);

  double temperature = config.t0;
  StopTracker tracker(config.eps, config.n_eps);
  std::vector<double> trial(x);

  for (int cycle = 1; cycle <= config.max_cycles; ++cycle) {
    result.cycles = cycle;
    std::int64_t cycle_accepts = 0;
    for (int adj = 0; adj < config.nt; ++adj) {
      std::fill(accepted.begin(), accepted.end(), 0);
      for (int sweep = 0; sweep < config.ns; ++sweep) {
        rng.shuffle(order.begin(), order.end());
        for (int j : order) {
          trial = x;
          trial[j] = propose_coordinate(x[j], steps[j], bounds[j], rng);
          const double et = energy(trial);
          ++result.evals;
          if (metropolis_accept(-e, -et, 1, temperature, rng)) {
            x = trial;
            e = et;
            ++accepted[j];
            ++cycle_accepts;
            if (e < best_e) {
              best_e = e;
              best_x = x;
            }
          }
        }
      }
      for (int j = 0; j < d; ++j) {
        steps[j] = adjusted_step(steps[j], accepted[j], config.ns, bounds[j].width());
      }
    }
    if (cycle == 1 && cycle_accepts == 0 && !std::isfinite(e)) {
      throw std::runtime_error(
          "minimize: no feasible point found in the first temperature cycle; widen the bounds");
    }
    if (tracker.check_and_push(e, best_e)) {
      result.converged = true;
      break;
    }
    temperature *= config.rt;
    x = best_x;
    e = best_e;
  }

  result.x = std::move(best_x);
  result.energy = best_e;
  return result;
}

}  // namespace npmix
