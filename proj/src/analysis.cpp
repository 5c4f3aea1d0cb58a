#include "reslab/analysis.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace reslab {

void IntensitySeries::validate() const {
  if (t.size() != y.size()) throw AnalysisError("series: t and y differ in length");
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (!std::isfinite(t[k]) || !std::isfinite(y[k])) throw AnalysisError("series: non-finite sample");
    if (k > 0 && !(t[k] > t[k - 1])) throw AnalysisError("series: times must increase strictly");
  }
}

double interpolate(const IntensitySeries& s, double t) {
  const std::size_t n = s.t.size();
  if (n == 0) throw AnalysisError("interpolate: empty series");
  if (n < 4) {
    const auto it = std::upper_bound(s.t.begin(), s.t.end(), t);
    const std::size_t i = it == s.t.begin() ? 0 : std::min<std::size_t>(it - s.t.begin() - 1, n - 2);
    if (n == 1) return s.y[0];
    const double w = (t - s.t[i]) / (s.t[i + 1] - s.t[i]);
    return (1 - w) * s.y[i] + w * s.y[i + 1];
  }
  const auto it = std::upper_bound(s.t.begin(), s.t.end(), t);
  std::ptrdiff_t i = (it - s.t.begin()) - 1;  // t_i <= t < t_{i+1}
  std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(i - 1, 0, static_cast<std::ptrdiff_t>(n) - 4);
  double out = 0.0;
  for (std::ptrdiff_t a = lo; a < lo + 4; ++a) {
    double w = 1.0;
    for (std::ptrdiff_t b = lo; b < lo + 4; ++b)
      if (b != a) w *= (t - s.t[b]) / (s.t[a] - s.t[b]);
    out += w * s.y[a];
  }
  return out;
}

namespace {

double median(std::vector<double>& v) {
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + m, v.end());
  const double hi = v[m];
  if (v.size() % 2) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + m);
  return 0.5 * (lo + hi);
}

// crossing of `level` inside [t_i, t_{i+1}] on the interpolant
double refine(const IntensitySeries& s, std::size_t i, double level) {
  double a = s.t[i], b = s.t[i + 1];
  double fa = interpolate(s, a) - level;
  for (int it = 0; it < 200 && b - a > 1e-14 * std::max(1.0, std::abs(b)); ++it) {
    const double m = 0.5 * (a + b);
    const double fm = interpolate(s, m) - level;
    if ((fm < 0) == (fa < 0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

// last sign change of y - level in samples [from, to) in the given direction
std::size_t last_change(const IntensitySeries& s, std::size_t from, std::size_t to, double level, bool upward) {
  std::size_t found = from;
  for (std::size_t j = from; j + 1 <= to; ++j) {
    const double a = s.y[j] - level, b = s.y[j + 1] - level;
    if (upward ? (a < 0 && b >= 0) : (a > 0 && b <= 0)) found = j;
  }
  return found;
}

}  // namespace

Crossings half_crossings(const IntensitySeries& s, double level, double band) {
  s.validate();
  if (!(band >= 0)) throw AnalysisError("half_crossings: band must be >= 0");
  enum class State { unknown, low, high } state = State::unknown;
  Crossings c;
  std::size_t anchor = 0;  // last sample beyond the band on the current side
  for (std::size_t k = 0; k < s.y.size(); ++k) {
    const double y = s.y[k];
    if (y > level + band) {
      if (state == State::low) c.up.push_back(refine(s, last_change(s, anchor, k, level, true), level));
      if (state == State::unknown) c.starts_high = true;
      state = State::high;
      anchor = k;
    } else if (y < level - band) {
      if (state == State::high) c.down.push_back(refine(s, last_change(s, anchor, k, level, false), level));
      state = State::low;
      anchor = k;
    }
  }
  if (c.up.empty() && c.down.empty()) throw AnalysisError("half_crossings: level never crossed");
  return c;
}

double QProfile::operator()(double t) const {
  const int n = static_cast<int>(Q.size());
  double x = (t - phase_origin) / period;
  x = (x - std::floor(x)) * n;
  const int i = static_cast<int>(std::floor(x));
  const double f = x - i;
  // periodic 4-point Lagrange on the uniform grid, nodes i-1..i+2
  const auto q = [&](int k) { return Q[((k % n) + n) % n]; };
  const double w0 = -f * (f - 1) * (f - 2) / 6, w1 = (f + 1) * (f - 1) * (f - 2) / 2;
  const double w2 = -(f + 1) * f * (f - 2) / 2, w3 = (f + 1) * f * (f - 1) / 6;
  return w0 * q(i - 1) + w1 * q(i) + w2 * q(i + 1) + w3 * q(i + 2);
}

namespace {

QProfile fold(const IntensitySeries& s, double T, double origin, int grid) {
  QProfile p;
  p.period = T;
  p.phase_origin = origin;
  const double t0 = s.t.front(), t1 = s.t.back();
  p.periods = static_cast<int>(std::floor((t1 - t0) / T));
  const long long kmin = static_cast<long long>(std::floor((t0 - origin) / T)) - 1;
  const long long kmax = static_cast<long long>(std::ceil((t1 - origin) / T)) + 1;
  std::vector<double> vals;
  for (int g = 0; g < grid; ++g) {
    const double ph = static_cast<double>(g) / grid;
    vals.clear();
    for (long long k = kmin; k <= kmax; ++k) {
      const double t = origin + (static_cast<double>(k) + ph) * T;
      if (t >= t0 && t <= t1) vals.push_back(interpolate(s, t));
    }
    p.phase.push_back(ph);
    p.Q.push_back(vals.empty() ? std::numeric_limits<double>::quiet_NaN() : median(vals));
  }
  double r = 0.0;
  for (std::size_t k = 0; k < s.t.size(); ++k) r = std::max(r, std::abs(s.y[k] - p(s.t[k])));
  p.residual = r;
  p.q_min = *std::min_element(p.Q.begin(), p.Q.end());
  p.q_max = *std::max_element(p.Q.begin(), p.Q.end());
  return p;
}

}  // namespace

QProfile extract_Q(const IntensitySeries& s, const QOptions& opt) {
  s.validate();
  if (s.t.size() < 8) throw AnalysisError("extract_Q: too few samples");
  if (opt.grid < 8) throw AnalysisError("extract_Q: grid too small");
  std::optional<Crossings> c;
  try {
    c = half_crossings(s, opt.level);
  } catch (const AnalysisError&) {
  }
  double T = 0.0, origin = s.t.front();
  if (c && c->up.size() >= 2) {
    // least squares t_k = origin + k T over consecutive upward crossings
    const auto& u = c->up;
    const double n = static_cast<double>(u.size());
    double sk = 0, st = 0, skk = 0, skt = 0;
    for (std::size_t k = 0; k < u.size(); ++k) {
      sk += k;
      st += u[k];
      skk += static_cast<double>(k) * k;
      skt += k * u[k];
    }
    T = (n * skt - sk * st) / (n * skk - sk * sk);
    origin = u.front();
  } else if (opt.T_hint && *opt.T_hint > 0) {
    // golden-section search on the fold residual around the hint
    double a = 0.9 * *opt.T_hint, b = 1.1 * *opt.T_hint;
    const double g = (std::sqrt(5.0) - 1) / 2;
    auto cost = [&](double Tc) { return fold(s, Tc, origin, std::min(opt.grid, 256)).residual; };
    double x1 = b - g * (b - a), x2 = a + g * (b - a), f1 = cost(x1), f2 = cost(x2);
    for (int it = 0; it < 60; ++it) {
      if (f1 < f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - g * (b - a);
        f1 = cost(x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + g * (b - a);
        f2 = cost(x2);
      }
    }
    T = 0.5 * (a + b);
  } else {
    throw AnalysisError("extract_Q: no periodicity detected (fewer than two upward crossings and no usable hint)");
  }
  if (!(T > 0)) throw AnalysisError("extract_Q: no periodicity detected (non-positive period estimate)");
  if ((s.t.back() - s.t.front()) < 3 * T)
    throw AnalysisError("extract_Q: series spans fewer than 3 periods of " + std::to_string(T));
  auto p = fold(s, T, origin, opt.grid);
  if (!(p.residual <= opt.residual_threshold))
    throw AnalysisError("extract_Q: no periodicity detected (residual " + std::to_string(p.residual) + " above " +
                        std::to_string(opt.residual_threshold) + ")");
  return p;
}

BumpReport bump_check(const IntensitySeries& s, const Crossings& c, double eps) {
  s.validate();
  BumpReport r;
  const auto extreme = [&](double a, double b, bool want_max) {
    double v = want_max ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < s.t.size(); ++k)
      if (s.t[k] > a && s.t[k] < b) v = want_max ? std::max(v, s.y[k]) : std::min(v, s.y[k]);
    return v;
  };
  for (std::size_t j = 0; j < c.up.size(); ++j) {
    const auto d = std::upper_bound(c.down.begin(), c.down.end(), c.up[j]);
    if (d == c.down.end()) break;
    Bump b{c.up[j], *d, extreme(c.up[j], *d, true), false};
    b.sup_ok = b.sup >= 1 - eps;
    r.bumps.push_back(b);
    if (j + 1 < c.up.size()) {
      Gap g{*d, c.up[j + 1], extreme(*d, c.up[j + 1], false), false};
      g.inf_ok = g.inf <= eps;
      r.gaps.push_back(g);
    }
  }
  r.passed = !r.bumps.empty() && std::all_of(r.bumps.begin(), r.bumps.end(), [](const Bump& b) { return b.sup_ok; }) &&
             std::all_of(r.gaps.begin(), r.gaps.end(), [](const Gap& g) { return g.inf_ok; });
  return r;
}

Symbols symbol_times(const std::vector<double>& up, double T, double delta) {
  if (up.size() < 2) throw AnalysisError("symbol_times: need at least two upward crossings");
  if (!(T > 0) || !(delta > 0)) throw AnalysisError("symbol_times: T and delta must be positive");
  const double unit = T / (delta * delta);
  Symbols out;
  for (std::size_t j = 0; j + 1 < up.size(); ++j) {
    const double x = (up[j + 1] - up[j]) / unit;
    const double m = std::floor(x);
    out.m.push_back(static_cast<long long>(m));
    out.theta.push_back(x - m);
  }
  return out;
}

std::vector<int> Itinerary::sequence() const {
  std::vector<int> out;
  for (const auto& b : beating) out.push_back(b.tuple);
  return out;
}

Itinerary activation_itinerary(const std::vector<IntensitySeries>& series, const ItineraryOptions& opt) {
  if (series.empty()) throw AnalysisError("itinerary: no series");
  if (!(opt.eps > 0 && opt.eps < 0.5)) throw AnalysisError("itinerary: eps must lie in (0, 1/2)");
  for (const auto& s : series) {
    s.validate();
    if (s.t != series.front().t) throw AnalysisError("itinerary: series do not share a time grid");
    if (!(s.norm == series.front().norm)) throw AnalysisError("itinerary: mismatched normalization metadata");
  }
  const std::size_t n = series.front().t.size(), R = series.size();
  const auto& t = series.front().t;

  // owner[k]: tuples whose (gap-merged) activity window contains sample k
  std::vector<std::set<int>> owner(n);
  for (std::size_t r = 0; r < R; ++r) {
    std::ptrdiff_t last = -1;
    for (std::size_t k = 0; k < n; ++k) {
      if (series[r].y[k] <= opt.eps) continue;
      bool merge = last >= 0;
      for (std::size_t q = static_cast<std::size_t>(last + 1); merge && q < k; ++q)
        for (std::size_t o = 0; o < R; ++o)
          if (o != r && series[o].y[q] > opt.eps) merge = false;
      const std::size_t from = merge ? static_cast<std::size_t>(last + 1) : k;
      for (std::size_t q = from; q <= k; ++q) owner[q].insert(static_cast<int>(r));
      last = static_cast<std::ptrdiff_t>(k);
    }
  }

  struct Segment {
    std::size_t first, last;
    std::set<int> who;
  };
  std::vector<Segment> segs;
  for (std::size_t k = 0; k < n; ++k) {
    if (!segs.empty() && segs.back().who == owner[k]) segs.back().last = k;
    else segs.push_back({k, k, owner[k]});
  }

  Itinerary it;
  const double lneps = std::abs(std::log(opt.eps));
  std::vector<std::size_t> beat_seg;
  for (std::size_t i = 0; i < segs.size(); ++i)
    if (segs[i].who.size() == 1) beat_seg.push_back(i);
  for (std::size_t b = 0; b < beat_seg.size(); ++b) {
    const auto& sg = segs[beat_seg[b]];
    BeatingInterval bi;
    bi.alpha = t[sg.first];
    bi.beta = t[sg.last];
    bi.tuple = *sg.who.begin() + 1;
    bi.length_ratio = (bi.beta - bi.alpha) / lneps;
    bi.long_enough = bi.length_ratio >= opt.min_length_factor;
    if (!it.beating.empty() && it.beating.back().tuple == bi.tuple)
      it.diagnostics.push_back("tuple " + std::to_string(bi.tuple) + " resumes after an overlapping activation near t=" +
                               std::to_string(bi.alpha));
    it.beating.push_back(bi);
    if (b > 0) {
      const auto& prev = segs[beat_seg[b - 1]];
      TransitionInterval tr;
      tr.start = t[prev.last];
      tr.end = t[sg.first];
      tr.from = *prev.who.begin() + 1;
      tr.to = bi.tuple;
      double others = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < R; ++r) {
        double peak = 0.0;
        for (std::size_t k = prev.last; k <= sg.first; ++k) peak = std::max(peak, series[r].y[k]);
        if (static_cast<int>(r) + 1 == tr.from) tr.outgoing_peak = peak;
        else others = std::min(others, peak);
      }
      tr.others_peak = R > 1 ? others : 0.0;
      tr.outgoing_saturated = tr.outgoing_peak >= 1 - opt.eps;
      tr.others_saturated = R > 1 && tr.others_peak >= 1 - opt.eps;
      it.transitions.push_back(tr);
    }
  }
  if (!segs.empty() && !beat_seg.empty()) {
    if (segs.front().who.size() > 1) it.diagnostics.push_back("series starts inside an overlapping activation");
    if (segs.back().who.size() > 1) it.diagnostics.push_back("series ends inside an overlapping activation");
  }
  for (const auto& b : it.beating)
    if (!b.long_enough)
      it.diagnostics.push_back("beating interval of tuple " + std::to_string(b.tuple) + " shorter than " +
                               std::to_string(opt.min_length_factor) + " |ln eps|");
  if (beat_seg.empty() && std::any_of(segs.begin(), segs.end(), [](const Segment& s) { return s.who.size() > 1; }))
    throw AnalysisError("itinerary: no valid partition (activations overlap everywhere)");
  it.valid = it.diagnostics.empty();
  return it;
}

ScalingFit scaling_fit(const std::vector<std::pair<double, double>>& pairs) {
  std::set<double> deltas;
  for (const auto& [d, m] : pairs) {
    if (!(d > 0) || !std::isfinite(d)) throw AnalysisError("scaling_fit: delta must be positive and finite");
    if (!(m > 0) || !std::isfinite(m)) throw AnalysisError("scaling_fit: non-positive metric");
    deltas.insert(d);
  }
  if (deltas.size() < 3) throw AnalysisError("scaling_fit: need at least 3 distinct deltas");
  if (*deltas.rbegin() < 4 * *deltas.begin()) throw AnalysisError("scaling_fit: deltas must span a factor of 4");
  const double n = static_cast<double>(pairs.size());
  double sx = 0, sy = 0;
  for (const auto& [d, m] : pairs) {
    sx += std::log(d);
    sy += std::log(m);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (const auto& [d, m] : pairs) {
    sxx += (std::log(d) - mx) * (std::log(d) - mx);
    sxy += (std::log(d) - mx) * (std::log(m) - my);
  }
  ScalingFit f;
  f.exponent = sxy / sxx;
  f.intercept = my - f.exponent * mx;
  double ss = 0;
  for (const auto& [d, m] : pairs) {
    const double e = std::log(m) - (f.intercept + f.exponent * std::log(d));
    ss += e * e;
    f.max_residual = std::max(f.max_residual, std::abs(e));
  }
  f.std_error = std::sqrt(ss / (n - 2) / sxx);
  const boost::math::students_t dist(n - 2);
  f.half_width = boost::math::quantile(boost::math::complement(dist, 0.025)) * f.std_error;
  return f;
}

}  // namespace reslab
