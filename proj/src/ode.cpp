#include "npmix/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace npmix {
namespace {

// Dormand-Prince 5(4) tableau (FSAL form).
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                 a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                 b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
// Difference between the 5th and embedded 4th order weights.
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

// PI controller constants from the classic DOPRI5 implementation.
constexpr double kSafe = 0.9;
constexpr double kBeta = 0.04;
constexpr double kExpo = 0.2 - kBeta * 0.75;
constexpr double kMinScale = 0.2;
constexpr double kMaxScale = 10.0;

struct Stepper {
  const IntegrationProblem& p;
  std::vector<double> rate;  // per-segment constant input, one slot per state
  std::vector<double> y, k1, k2, k3, k4, k5, k6, k7, ytmp, yerr;
  std::int64_t steps_taken = 0;
  double facold = 1e-4;

  explicit Stepper(const IntegrationProblem& prob)
      : p(prob), rate(prob.dim, 0.0), y(prob.y0),
        k1(prob.dim), k2(prob.dim), k3(prob.dim), k4(prob.dim), k5(prob.dim), k6(prob.dim),
        k7(prob.dim), ytmp(prob.dim), yerr(prob.dim) {}

  void eval(double t, const std::vector<double>& state, std::vector<double>& dydt) {
    p.rhs(t, state.data(), dydt.data());
    for (int i = 0; i < p.dim; ++i) dydt[i] += rate[i];
  }

  // Loads the constant input rates active on the open segment (a, b). All
  // window edges are segment boundaries, so the rates cannot change inside.
  void load_rates(double a, double b) {
    std::fill(rate.begin(), rate.end(), 0.0);
    const double mid = a + 0.5 * (b - a);
    for (const RateWindow& w : p.windows) {
      if (w.begin <= mid && mid < w.end) rate[w.component] += w.rate;
    }
  }

  // One trial step from t with size h; fills ytmp (5th order result), k7
  // (derivative there) and yerr. k1 must hold the derivative at (t, y).
  void trial_step(double t, double h) {
    const int n = p.dim;
    for (int i = 0; i < n; ++i) ytmp[i] = y[i] + h * a21 * k1[i];
    eval(t + c2 * h, ytmp, k2);
    for (int i = 0; i < n; ++i) ytmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    eval(t + c3 * h, ytmp, k3);
    for (int i = 0; i < n; ++i) ytmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    eval(t + c4 * h, ytmp, k4);
    for (int i = 0; i < n; ++i)
      ytmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    eval(t + c5 * h, ytmp, k5);
    for (int i = 0; i < n; ++i)
      ytmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    eval(t + h, ytmp, k6);
    for (int i = 0; i < n; ++i)
      ytmp[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    eval(t + h, ytmp, k7);
    for (int i = 0; i < n; ++i)
      yerr[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
  }

  double error_norm() const {
    double sum = 0.0;
    for (int i = 0; i < p.dim; ++i) {
      const double sc = p.atol + p.rtol * std::max(std::abs(y[i]), std::abs(ytmp[i]));
      const double r = yerr[i] / sc;
      sum += r * r;
    }
    return std::sqrt(sum / p.dim);
  }

  // Classical starting step heuristic from the derivative at the left edge.
  double initial_step(double t, double span) {
    double d0 = 0.0, d1 = 0.0;
    for (int i = 0; i < p.dim; ++i) {
      const double sc = p.atol + p.rtol * std::abs(y[i]);
      double r = y[i] / sc;
      d0 += r * r;
      r = k1[i] / sc;
      d1 += r * r;
    }
    d0 = std::sqrt(d0 / p.dim);
    d1 = std::sqrt(d1 / p.dim);
    double h0 = (d0 < 1e-10 || d1 < 1e-10) ? 1e-6 : 0.01 * (d0 / d1);
    h0 = std::min(h0, span);
    for (int i = 0; i < p.dim; ++i) ytmp[i] = y[i] + h0 * k1[i];
    eval(t + h0, ytmp, k2);
    double d2 = 0.0;
    for (int i = 0; i < p.dim; ++i) {
      const double sc = p.atol + p.rtol * std::abs(y[i]);
      const double r = (k2[i] - k1[i]) / sc;
      d2 += r * r;
    }
    d2 = std::sqrt(d2 / p.dim) / h0;
    const double dmax = std::max(d1, d2);
    double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 0.2);
    return std::min({100.0 * h0, h1, span});
  }

  // Advances y from a to b (a < b) across a smooth segment.
  void advance(double a, double b) {
    load_rates(a, b);
    double t = a;
    eval(t, y, k1);
    for (int i = 0; i < p.dim; ++i) {
      if (!std::isfinite(k1[i])) {
        throw IntegrationError("non-finite derivative at t = " + std::to_string(t));
      }
    }
    double h = initial_step(t, b - a);
    bool rejected = false;
    while (t < b) {
      if (++steps_taken > p.max_steps) {
        throw IntegrationError("step limit exceeded at t = " + std::to_string(t));
      }
      const double hmin = 16.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t), 1.0);
      if (h < hmin) {
        throw IntegrationError("step size underflow at t = " + std::to_string(t));
      }
      bool last = false;
      if (t + h >= b) {
        h = b - t;
        last = true;
      }
      trial_step(t, h);
      double err = error_norm();
      if (!std::isfinite(err)) err = 1e10;
      if (err <= 1.0) {
        t = last ? b : t + h;
        std::swap(y, ytmp);
        std::swap(k1, k7);  // first-same-as-last
        double scale = err == 0.0 ? kMaxScale
                                  : kSafe * std::pow(err, -kExpo) * std::pow(facold, kBeta);
        scale = std::clamp(scale, kMinScale, kMaxScale);
        if (rejected) scale = std::min(scale, 1.0);
        h *= scale;
        facold = std::max(err, 1e-4);
        rejected = false;
      } else {
        h *= std::max(kMinScale, kSafe * std::pow(err, -kExpo));
        rejected = true;
      }
    }
  }
};

}  // namespace

std::vector<double> integrate(const IntegrationProblem& problem, std::span<const double> out_times) {
  if (problem.dim <= 0 || static_cast<int>(problem.y0.size()) != problem.dim) {
    throw std::invalid_argument("integrate: dim and y0 size disagree");
  }
  if (!problem.rhs) {
    throw std::invalid_argument("integrate: missing right-hand side");
  }
  if (!(problem.atol > 0.0) || !(problem.rtol > 0.0)) {
    throw std::invalid_argument("integrate: tolerances must be positive");
  }
  for (const JumpEvent& j : problem.jumps) {
    if (j.component < 0 || j.component >= problem.dim) {
      throw std::invalid_argument("integrate: jump component out of range");
    }
    if (j.time < problem.t0) {
      throw std::invalid_argument("integrate: jump scheduled before t0");
    }
  }
  for (const RateWindow& w : problem.windows) {
    if (w.component < 0 || w.component >= problem.dim) {
      throw std::invalid_argument("integrate: rate window component out of range");
    }
    if (!(w.end > w.begin)) {
      throw std::invalid_argument("integrate: rate window end must exceed begin");
    }
  }
  for (std::size_t j = 0; j < out_times.size(); ++j) {
    if (out_times[j] < problem.t0 || (j > 0 && out_times[j] < out_times[j - 1])) {
      throw std::invalid_argument("integrate: output times must be non-decreasing and >= t0");
    }
  }

  // Stop list: every time the integrator must land on exactly.
  std::vector<double> stops(out_times.begin(), out_times.end());
  for (const JumpEvent& j : problem.jumps) stops.push_back(j.time);
  for (const RateWindow& w : problem.windows) {
    if (w.begin > problem.t0) stops.push_back(w.begin);
    stops.push_back(w.end);
  }
  std::sort(stops.begin(), stops.end());
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());

  Stepper stepper(problem);
  std::vector<double> out(out_times.size() * problem.dim);
  double t = problem.t0;
  std::size_t next_out = 0;

  auto apply_jumps_at = [&](double when) {
    for (const JumpEvent& j : problem.jumps) {
      if (j.time == when) stepper.y[j.component] += j.delta;
    }
  };
  auto record_outputs_at = [&](double when) {
    while (next_out < out_times.size() && out_times[next_out] == when) {
      std::copy(stepper.y.begin(), stepper.y.end(), out.begin() + next_out * problem.dim);
      ++next_out;
    }
  };

  apply_jumps_at(t);
  record_outputs_at(t);
  for (double stop : stops) {
    if (stop <= t) continue;
    stepper.advance(t, stop);
    t = stop;
    apply_jumps_at(t);
    record_outputs_at(t);
  }
  return out;
}

}  // namespace npmix
