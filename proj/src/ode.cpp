#include "reslab/ode.hpp"

#include <algorithm>
#include <boost/numeric/odeint.hpp>
#include <cmath>

namespace reslab::ode {

namespace odeint = boost::numeric::odeint;
using Stepper = odeint::runge_kutta_fehlberg78<State>;

std::string_view to_string(Status s) {
  switch (s) {
    case Status::completed: return "completed";
    case Status::stopped: return "stopped";
    case Status::step_underflow: return "step_underflow";
    case Status::max_steps: return "max_steps";
  }
  return "unknown";
}

Status integrate(const Rhs& rhs, State& y, double& t, double t_end, const Options& opt,
                 const StepObserver& observer) {
  auto controlled = odeint::make_controlled<Stepper>(opt.abs_tol, opt.rel_tol);
  auto system = [&rhs](const State& x, State& dx, double tt) { rhs(x, dx, tt); };
  double dt = opt.initial_step;
  State y_prev;
  std::size_t steps = 0;
  while (t < t_end) {
    if (steps++ >= opt.max_steps) return Status::max_steps;
    if (opt.max_step > 0) dt = std::min(dt, opt.max_step);
    const bool last = dt >= t_end - t;
    if (last) dt = t_end - t;
    y_prev = y;
    const double t_prev = t;
    if (controlled.try_step(system, y, t, dt) == odeint::fail) {
      if (dt < opt.min_step) return Status::step_underflow;
      continue;
    }
    if (!std::all_of(y.begin(), y.end(), [](double v) { return std::isfinite(v); })) {
      // overflow slips through the error estimate; retry the step at half its size
      dt = 0.5 * (t - t_prev);
      y = y_prev;
      t = t_prev;
      if (dt < opt.min_step) return Status::step_underflow;
      continue;
    }
    if (last) t = t_end;  // avoid a residual sliver from rounding in t + dt
    if (observer && !observer(t_prev, y_prev, t, y)) return Status::stopped;
  }
  return Status::completed;
}

State dense_state(const Rhs& rhs, const State& y0, double t0, double t) {
  State y = y0;
  if (t == t0) return y;
  Stepper stepper;
  auto system = [&rhs](const State& x, State& dx, double tt) { rhs(x, dx, tt); };
  stepper.do_step(system, y, t0, t - t0);
  return y;
}

double locate_root(const Rhs& rhs, const State& y0, double t0, double t1,
                   const std::function<double(const State&)>& g, double time_tol, State& y_at) {
  double lo = t0;
  double hi = t1;
  double g_lo = g(y0);
  y_at = dense_state(rhs, y0, t0, t1);
  while (hi - lo > time_tol) {
    const double mid = 0.5 * (lo + hi);
    State y_mid = dense_state(rhs, y0, t0, mid);
    const double g_mid = g(y_mid);
    if ((g_mid < 0) == (g_lo < 0) && g_mid != 0) {
      lo = mid;
      g_lo = g_mid;
    } else {
      hi = mid;
      y_at = std::move(y_mid);
    }
  }
  if (hi == t1) y_at = dense_state(rhs, y0, t0, hi);
  return hi;
}

}  // namespace reslab::ode
