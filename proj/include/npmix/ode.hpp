#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace npmix {

// Instantaneous state change: y[component] += delta at the given time.
struct JumpEvent {
  double time = 0.0;
  int component = 0;
  double delta = 0.0;
};

// Piecewise-constant additive input: dy[component] += rate while
// begin <= t < end. Overlapping windows on one component sum.
struct RateWindow {
  double begin = 0.0;
  double end = 0.0;
  int component = 0;
  double rate = 0.0;
};

// Initial value problem with an event schedule. The right-hand side supplies
// the smooth part of the field; rate windows are added by the integrator.
struct IntegrationProblem {
  int dim = 0;
  double t0 = 0.0;
  std::vector<double> y0;
  std::function<void(double t, const double* y, double* dydt)> rhs;
  std::vector<JumpEvent> jumps;
  std::vector<RateWindow> windows;
  double atol = 1e-4;
  double rtol = 1e-4;
  std::int64_t max_steps = 200000;
};

struct IntegrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Integrates the problem and returns the state at each requested time,
// row-major (out_times.size() x dim). Requirements: out_times non-decreasing
// and >= t0; jump times >= t0; window end > begin.
//
// Embedded Dormand-Prince 5(4) pair with PI step-size control. No step ever
// crosses a jump time, a window edge, or an output time; integration restarts
// on the far side of each, so discontinuous inputs never degrade the order of
// the method. The state reported at an output time includes any jump scheduled
// at exactly that time. Output is a pure function of the inputs, bit for bit.
std::vector<double> integrate(const IntegrationProblem& problem, std::span<const double> out_times);

}  // namespace npmix
