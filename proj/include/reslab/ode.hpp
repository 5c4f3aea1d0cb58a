#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

namespace reslab::ode {

using State = std::vector<double>;
using Rhs = std::function<void(const State& y, State& dydt, double t)>;

struct Options {
  double abs_tol = 1e-12;
  double rel_tol = 1e-12;
  double initial_step = 1e-2;
  double min_step = 1e-14;
  double max_step = 0.25;  // <= 0 means unbounded
  std::size_t max_steps = 50'000'000;
};

enum class Status { completed, stopped, step_underflow, max_steps };

std::string_view to_string(Status s);

/// Called after every accepted step [t0, t1]. May adjust y1 in place (projection, clamping);
/// returning false stops the integration at t1.
using StepObserver = std::function<bool(double t0, const State& y0, double t1, State& y1)>;

/// Adaptive Runge-Kutta-Fehlberg 7(8) from (t, y) to t_end (t_end >= t). On return t and y hold
/// the last accepted point, also when the status is a failure.
Status integrate(const Rhs& rhs, State& y, double& t, double t_end, const Options& opt,
                 const StepObserver& observer = {});

/// State at time t inside an accepted step that started at (t0, y0): a single 7th-order step
/// of length t - t0. Local error is bounded by that of the accepted step.
State dense_state(const Rhs& rhs, const State& y0, double t0, double t);

/// Root of g along the step [t0, t1] (g changes sign there), refined by bisection on the dense
/// state until the bracket is below time_tol. Returns the time and fills y_at.
double locate_root(const Rhs& rhs, const State& y0, double t0, double t1,
                   const std::function<double(const State&)>& g, double time_tol, State& y_at);

}  // namespace reslab::ode
