#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace reslab {

struct AnalysisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Normalization {
  double delta = 1.0;
  int kappa = 0;
  double mass = 1.0;

  bool operator==(const Normalization&) const = default;
};

/// Normalized intensity samples y_k = |a_n(t_k)|^2.
struct IntensitySeries {
  std::vector<double> t;
  std::vector<double> y;
  Normalization norm;

  /// Throws AnalysisError unless times strictly increase and everything is finite.
  void validate() const;
};

/// Interpolates the series with the 4-point Lagrange cubic around t (clamped at the ends).
double interpolate(const IntensitySeries& s, double t);

struct QOptions {
  std::optional<double> T_hint;
  int grid = 1024;
  double residual_threshold = 0.05;
  double level = 0.5;
};

struct QProfile {
  double period = 0.0;
  double phase_origin = 0.0;  // an upward crossing; phase 0 of Q
  std::vector<double> phase;  // uniform on [0, 1)
  std::vector<double> Q;
  double residual = 0.0;      // sup_k |y_k - Q(phase_k)|
  double q_min = 0.0;
  double q_max = 0.0;
  int periods = 0;

  /// Median-profile value at an arbitrary time.
  double operator()(double t) const;
};

/// Period from a least-squares fit of successive upward crossings (or the refined hint when the
/// level is never crossed), then Q(phase) = median over periods of the interpolated series.
/// Throws when fewer than 3 periods are covered or the residual exceeds the threshold.
QProfile extract_Q(const IntensitySeries& s, const QOptions& opt = {});

struct Crossings {
  std::vector<double> up;    // t_j
  std::vector<double> down;  // tbar_j
  bool starts_high = false;  // first classified state
};

/// Crossings of `level` with a hysteresis band: a crossing counts once the series leaves the
/// band on the other side. Times are refined on the cubic interpolant.
Crossings half_crossings(const IntensitySeries& s, double level = 0.5, double band = 0.02);

struct Bump {
  double t_up = 0.0;
  double t_down = 0.0;
  double sup = 0.0;
  bool sup_ok = false;  // sup >= 1 - eps
};

struct Gap {
  double t_down = 0.0;
  double t_up = 0.0;
  double inf = 0.0;
  bool inf_ok = false;  // inf <= eps
};

struct BumpReport {
  std::vector<Bump> bumps;
  std::vector<Gap> gaps;
  bool passed = false;
};

BumpReport bump_check(const IntensitySeries& s, const Crossings& c, double eps);

struct Symbols {
  std::vector<long long> m;
  std::vector<double> theta;
};

/// m_j = floor((t_{j+1} - t_j) / (delta^-2 T)), theta_j the fractional part.
Symbols symbol_times(const std::vector<double>& up_crossings, double T, double delta);

struct BeatingInterval {
  double alpha = 0.0;
  double beta = 0.0;
  int tuple = 0;  // 1-based
  double length_ratio = 0.0;  // (beta - alpha) / |ln eps|
  bool long_enough = false;
};

struct TransitionInterval {
  double start = 0.0;
  double end = 0.0;
  int from = 0;
  int to = 0;
  double outgoing_peak = 0.0;
  bool outgoing_saturated = false;  // outgoing peak >= 1 - eps somewhere in the transition
  double others_peak = 0.0;         // min over tuples other than `from` of their peak
  bool others_saturated = false;    // every tuple other than `from` reaches 1 - eps
};

struct Itinerary {
  std::vector<BeatingInterval> beating;
  std::vector<TransitionInterval> transitions;
  std::vector<int> sequence() const;
  bool valid = true;
  std::vector<std::string> diagnostics;
};

struct ItineraryOptions {
  double eps = 0.05;
  /// Minimum beating length in units of |ln eps|.
  double min_length_factor = 1.0;
};

/// One series per tuple on a common time grid. A tuple is active where its intensity exceeds eps;
/// quiet stretches inside one tuple's activity belong to it. Beating intervals are maximal
/// stretches with a single active tuple; everything between two of them is a transition.
Itinerary activation_itinerary(const std::vector<IntensitySeries>& series, const ItineraryOptions& opt = {});

struct ScalingFit {
  double exponent = 0.0;
  double intercept = 0.0;
  double std_error = 0.0;
  double half_width = 0.0;  // 95% Student-t confidence half width
  double max_residual = 0.0;
};

/// Least-squares slope of log(metric) against log(delta). Needs >= 3 distinct deltas spanning a
/// factor of at least 4 and positive metrics.
ScalingFit scaling_fit(const std::vector<std::pair<double, double>>& pairs);

}  // namespace reslab
