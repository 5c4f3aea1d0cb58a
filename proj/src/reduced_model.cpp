#include "reslab/reduced_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "reslab/rng.hpp"

namespace reslab {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}  // namespace

ModelCoefficients ModelCoefficients::zero(int N, double eps) {
  ModelCoefficients c;
  c.N = N;
  c.eps = eps;
  c.a.assign(N, 0.0);
  c.b.assign(N, 0.0);
  c.c.assign(N, 0.0);
  c.d.assign(N, std::vector<double>(N, 0.0));
  return c;
}

void ModelCoefficients::validate() const {
  if (N < 1) throw std::invalid_argument("coefficients: N must be >= 1");
  if (!(eps >= 0.0)) throw std::invalid_argument("coefficients: eps must be >= 0");
  const auto n = static_cast<std::size_t>(N);
  if (a.size() != n || b.size() != n || c.size() != n || d.size() != n)
    throw std::invalid_argument("coefficients: a, b, c, d must have N entries");
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i].size() != n) throw std::invalid_argument("coefficients: d must be N x N");
    for (std::size_t j = 0; j <= i; ++j)
      if (d[i][j] != 0.0) throw std::invalid_argument("coefficients: d must be strictly upper triangular");
  }
}

ModelCoefficients sample_coefficients(int N, double eps, std::uint64_t seed) {
  auto c = ModelCoefficients::zero(N, eps);
  SplitMix64 rng(seed);
  for (int j = 0; j < N; ++j) c.a[j] = rng.uniform(-1.0, 1.0);
  for (int j = 0; j < N; ++j) c.b[j] = rng.uniform(-1.0, 1.0);
  for (int j = 0; j < N; ++j) c.c[j] = rng.uniform(-1.0, 1.0);
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j) c.d[i][j] = rng.uniform(-1.0, 1.0);
  return c;
}

double wrap_angle(double psi) {
  double r = std::fmod(psi, kTwoPi);
  if (r < 0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

double angle_diff(double a, double b) {
  double r = std::remainder(a - b, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

ReducedState ReducedState::wrapped() const {
  ReducedState out = *this;
  for (auto& p : out.psi) p = wrap_angle(p);
  return out;
}

double dof_energy(const ReducedState& s, int j) {
  const double K = s.K[j];
  return K * (1.0 - K) * (1.0 + 2.0 * std::cos(s.psi[j]));
}

double hamiltonian(const ReducedState& s, const ModelCoefficients& c) {
  double h0 = 0.0;
  double h1 = 0.0;
  for (int j = 0; j < c.N; ++j) {
    const double K = s.K[j];
    const double cs = std::cos(s.psi[j]);
    h0 += K * (1.0 - K) * (1.0 + 2.0 * cs);
    h1 += c.a[j] * K + c.b[j] * K * K + c.c[j] * K * (1.0 - K) * cs;
    for (int i = j + 1; i < c.N; ++i) h1 += c.d[j][i] * K * s.K[i];
  }
  return h0 + c.eps * h1;
}

namespace {

void field_into(const double* psi, const double* K, const ModelCoefficients& c, double* psi_dot, double* K_dot) {
  for (int j = 0; j < c.N; ++j) {
    const double cs = std::cos(psi[j]);
    const double sn = std::sin(psi[j]);
    double coupling = 0.0;
    for (int i = 0; i < c.N; ++i)
      if (i != j) coupling += c.coupling(i, j) * K[i];
    psi_dot[j] = (1.0 - 2.0 * K[j]) * (1.0 + 2.0 * cs) +
                 c.eps * (c.a[j] + 2.0 * c.b[j] * K[j] + c.c[j] * (1.0 - 2.0 * K[j]) * cs + coupling);
    K_dot[j] = (2.0 + c.eps * c.c[j]) * K[j] * (1.0 - K[j]) * sn;
  }
}

ode::State pack(const ReducedState& s) {
  ode::State y(s.psi);
  y.insert(y.end(), s.K.begin(), s.K.end());
  return y;
}

ReducedState unpack(const ode::State& y, int N) {
  ReducedState s;
  s.psi.assign(y.begin(), y.begin() + N);
  s.K.assign(y.begin() + N, y.end());
  return s;
}

ode::Rhs make_rhs(const ModelCoefficients& c, int direction) {
  return [&c, direction](const ode::State& y, ode::State& dy, double) {
    dy.resize(y.size());
    field_into(y.data(), y.data() + c.N, c, dy.data(), dy.data() + c.N);
    if (direction < 0)
      for (auto& v : dy) v = -v;
  };
}

double energy_of(const ode::State& y, const ModelCoefficients& c) { return hamiltonian(unpack(y, c.N), c); }

std::size_t clamp_actions(ode::State& y, int N) {
  std::size_t events = 0;
  for (int j = 0; j < N; ++j) {
    double& K = y[N + j];
    if (K < -kBoundaryTol) {
      K = 0.0;
      ++events;
    } else if (K > 1.0 + kBoundaryTol) {
      K = 1.0;
      ++events;
    }
  }
  return events;
}

// Pulls y back onto the level set H = level along the gradient, with the action components damped
// by 4K(1-K) so the invariant circles K = 0 and K = 1 are never left.
void project_to_level(ode::State& y, const ModelCoefficients& c, double level) {
  const int N = c.N;
  std::vector<double> dy(2 * N);
  for (int iter = 0; iter < 3; ++iter) {
    const double err = energy_of(y, c) - level;
    if (err == 0.0) return;
    field_into(y.data(), y.data() + N, c, dy.data(), dy.data() + N);
    // grad H = (-K_dot, psi_dot)
    double norm = 0.0;
    for (int j = 0; j < N; ++j) {
      const double w = std::clamp(4.0 * y[N + j] * (1.0 - y[N + j]), 0.0, 1.0);
      const double gpsi = -dy[N + j];
      const double gK = dy[j];
      norm += gpsi * gpsi + w * gK * gK;
    }
    if (norm < 1e-24) return;
    for (int j = 0; j < N; ++j) {
      const double w = std::clamp(4.0 * y[N + j] * (1.0 - y[N + j]), 0.0, 1.0);
      y[j] -= err * (-dy[N + j]) / norm;
      y[N + j] -= err * w * dy[j] / norm;
    }
  }
}

void check_state(const ReducedState& s, const ModelCoefficients& c) {
  if (s.size() != c.N || static_cast<int>(s.K.size()) != c.N)
    throw std::invalid_argument("reduced state size does not match coefficients");
}

}  // namespace

Tangent vector_field(const ReducedState& s, const ModelCoefficients& c) {
  check_state(s, c);
  Tangent t;
  t.psi_dot.resize(c.N);
  t.K_dot.resize(c.N);
  field_into(s.psi.data(), s.K.data(), c, t.psi_dot.data(), t.K_dot.data());
  return t;
}

Eigen::MatrixXd jacobian(const ReducedState& s, const ModelCoefficients& c) {
  check_state(s, c);
  const int N = c.N;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * N, 2 * N);
  for (int j = 0; j < N; ++j) {
    const double K = s.K[j];
    const double cs = std::cos(s.psi[j]);
    const double sn = std::sin(s.psi[j]);
    const double amp = 2.0 + c.eps * c.c[j];
    J(j, j) = -amp * (1.0 - 2.0 * K) * sn;
    J(j, N + j) = -2.0 * (1.0 + 2.0 * cs) + c.eps * (2.0 * c.b[j] - 2.0 * c.c[j] * cs);
    for (int i = 0; i < N; ++i)
      if (i != j) J(j, N + i) = c.eps * c.coupling(i, j);
    J(N + j, j) = amp * K * (1.0 - K) * cs;
    J(N + j, N + j) = amp * (1.0 - 2.0 * K) * sn;
  }
  return J;
}

Trajectory integrate(const ReducedState& s0, const ModelCoefficients& c, double t_end, const IntegrateOptions& opt) {
  c.validate();
  check_state(s0, c);
  if (!(opt.tol > 0)) throw std::invalid_argument("integrate: tol must be positive");
  if (t_end < 0) throw std::invalid_argument("integrate: t_end must be >= 0");
  const int N = c.N;
  const auto rhs = make_rhs(c, opt.direction);
  const double sign = opt.direction < 0 ? -1.0 : 1.0;

  Trajectory tr;
  ode::State y = pack(s0);
  const double H0 = energy_of(y, c);
  const double scale = std::max(1.0, std::abs(H0));
  auto record = [&](double t, const ode::State& state) {
    tr.t.push_back(sign * t);
    tr.states.push_back(unpack(state, N).wrapped());
    tr.H.push_back(energy_of(state, c));
    tr.energy_drift = std::max(tr.energy_drift, std::abs(tr.H.back() - H0) / scale);
  };
  record(0.0, y);

  ode::Options o;
  o.abs_tol = o.rel_tol = opt.tol;
  o.max_step = opt.max_step;
  double next_sample = opt.sample_dt;
  auto observer = [&](double t0, const ode::State& y0, double t1, ode::State& y1) {
    tr.clamp_events += clamp_actions(y1, N);
    if (opt.project_energy) project_to_level(y1, c, H0);
    if (opt.sample_dt > 0) {
      while (next_sample <= t1 * (1 + 1e-14)) {
        if (next_sample >= t1) record(t1, y1);
        else record(next_sample, ode::dense_state(rhs, y0, t0, next_sample));
        next_sample = opt.sample_dt * std::round(next_sample / opt.sample_dt + 1.0);
      }
    } else {
      record(t1, y1);
    }
    return true;
  };
  double t = 0.0;
  tr.status = ode::integrate(rhs, y, t, t_end, o, observer);
  if (opt.sample_dt > 0 && sign * t != tr.t.back()) record(t, y);
  return tr;
}

std::string_view to_string(DofEquilibrium e) {
  switch (e) {
    case DofEquilibrium::center_zero: return "center_zero";
    case DofEquilibrium::center_pi: return "center_pi";
    case DofEquilibrium::saddle_low_rise: return "saddle_low_rise";
    case DofEquilibrium::saddle_low_fall: return "saddle_low_fall";
    case DofEquilibrium::saddle_up_rise: return "saddle_up_rise";
    case DofEquilibrium::saddle_up_fall: return "saddle_up_fall";
  }
  return "unknown";
}

ReducedState equilibrium_guess(const std::vector<DofEquilibrium>& labels) {
  ReducedState s;
  for (auto e : labels) {
    switch (e) {
      case DofEquilibrium::center_zero: s.psi.push_back(0.0); s.K.push_back(0.5); break;
      case DofEquilibrium::center_pi: s.psi.push_back(kPi); s.K.push_back(0.5); break;
      case DofEquilibrium::saddle_low_rise: s.psi.push_back(kTwoPi / 3); s.K.push_back(0.0); break;
      case DofEquilibrium::saddle_low_fall: s.psi.push_back(2 * kTwoPi / 3); s.K.push_back(0.0); break;
      case DofEquilibrium::saddle_up_rise: s.psi.push_back(kTwoPi / 3); s.K.push_back(1.0); break;
      case DofEquilibrium::saddle_up_fall: s.psi.push_back(2 * kTwoPi / 3); s.K.push_back(1.0); break;
    }
  }
  return s;
}

namespace {

double sup_field(const ReducedState& s, const ModelCoefficients& c) {
  const auto f = vector_field(s, c);
  double r = 0.0;
  for (int j = 0; j < c.N; ++j) r = std::max({r, std::abs(f.psi_dot[j]), std::abs(f.K_dot[j])});
  return r;
}

std::vector<std::complex<double>> sorted_eigenvalues(const Eigen::MatrixXd& J) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(J, false);
  std::vector<std::complex<double>> ev(es.eigenvalues().begin(), es.eigenvalues().end());
  std::sort(ev.begin(), ev.end(), [](auto x, auto y) {
    return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag();
  });
  return ev;
}

}  // namespace

FixedPoint continue_fixed_point(const std::vector<DofEquilibrium>& labels, const ModelCoefficients& c) {
  c.validate();
  if (static_cast<int>(labels.size()) != c.N) throw std::invalid_argument("fixed point labels must have N entries");
  FixedPoint fp;
  fp.labels = labels;
  ReducedState s = equilibrium_guess(labels);
  const int N = c.N;
  if (c.eps > 0) {
    for (int iter = 0; iter < 50; ++iter) {
      const auto f = vector_field(s, c);
      Eigen::VectorXd F(2 * N);
      for (int j = 0; j < N; ++j) {
        F(j) = f.psi_dot[j];
        F(N + j) = f.K_dot[j];
      }
      if (F.lpNorm<Eigen::Infinity>() < 1e-14) break;
      const Eigen::VectorXd dx = jacobian(s, c).fullPivLu().solve(F);
      if (!dx.allFinite()) break;
      for (int j = 0; j < N; ++j) {
        s.psi[j] -= dx(j);
        s.K[j] -= dx(N + j);
      }
    }
  }
  fp.residual = sup_field(s, c);
  fp.converged = std::isfinite(fp.residual) && fp.residual <= 1e-10;
  fp.state = s.wrapped();
  fp.eigenvalues = sorted_eigenvalues(jacobian(fp.state, c));
  return fp;
}

std::vector<FixedPoint> fixed_points(const ModelCoefficients& c) {
  c.validate();
  if (c.N > 6) throw std::invalid_argument("fixed_points: 6^N combinations, N must be <= 6");
  std::vector<FixedPoint> out;
  std::vector<int> digits(c.N, 0);
  for (;;) {
    std::vector<DofEquilibrium> labels;
    for (int v : digits) labels.push_back(static_cast<DofEquilibrium>(v));
    out.push_back(continue_fixed_point(labels, c));
    int k = 0;
    while (k < c.N && ++digits[k] == 6) digits[k++] = 0;
    if (k == c.N) break;
  }
  return out;
}

namespace {

struct SeedDirection {
  Eigen::VectorXd vector;
  double eigenvalue = 0.0;
};

SeedDirection saddle_direction(const FixedPoint& saddle, int dof, const ModelCoefficients& c, Branch branch) {
  const int N = c.N;
  if (dof < 0 || dof >= N) throw std::invalid_argument("manifold: dof out of range");
  Eigen::EigenSolver<Eigen::MatrixXd> es(jacobian(saddle.state, c));
  const bool unstable = branch == Branch::unstable_plus || branch == Branch::unstable_minus;
  int positive = 0, negative = 0, pick = -1;
  for (int k = 0; k < 2 * N; ++k) {
    const auto lam = es.eigenvalues()(k);
    const Eigen::VectorXcd v = es.eigenvectors().col(k);
    const double in_plane = std::hypot(std::abs(v(dof)), std::abs(v(N + dof))) / v.norm();
    if (std::abs(lam.imag()) > 1e-9 || in_plane < 0.5 || std::abs(lam.real()) < 1e-9) continue;
    if (lam.real() > 0) {
      ++positive;
      if (unstable) pick = k;
    } else {
      ++negative;
      if (!unstable) pick = k;
    }
  }
  if (positive != 1 || negative != 1 || pick < 0)
    throw std::runtime_error("manifold: the selected plane does not carry one simple expanding and one simple contracting direction");
  SeedDirection d;
  d.eigenvalue = es.eigenvalues()(pick).real();
  d.vector = es.eigenvectors().col(pick).real();
  d.vector.normalize();
  const double lead = std::abs(d.vector(N + dof)) > 1e-12 ? d.vector(N + dof) : d.vector(dof);
  const bool plus = branch == Branch::unstable_plus || branch == Branch::stable_plus;
  if ((lead > 0) != plus) d.vector = -d.vector;
  return d;
}

ode::State seeded(const FixedPoint& saddle, const SeedDirection& d, double seed) {
  ode::State y = pack(saddle.state);
  for (Eigen::Index k = 0; k < d.vector.size(); ++k) y[k] += seed * d.vector(k);
  return y;
}

double plane_step(const ode::State& a, const ode::State& b, int N) {
  double s = 0.0;
  for (int k = 0; k < 2 * N; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

}  // namespace

std::vector<ManifoldPoint> manifold_trace(const FixedPoint& saddle, int dof, const ModelCoefficients& c, Branch branch,
                                          double arc, double seed, double t_budget) {
  c.validate();
  const int N = c.N;
  const auto dir = saddle_direction(saddle, dof, c, branch);
  const bool stable = branch == Branch::stable_plus || branch == Branch::stable_minus;
  const auto rhs = make_rhs(c, stable ? -1 : +1);
  const double h_saddle = hamiltonian(saddle.state, c);

  std::vector<ManifoldPoint> out;
  ode::State y = seeded(saddle, dir, seed);
  double length = 0.0;
  auto push = [&](const ode::State& state) {
    out.push_back({unpack(state, N).wrapped(), length, hamiltonian(unpack(state, N), c) - h_saddle});
  };
  push(y);
  ode::Options o;
  o.abs_tol = o.rel_tol = 1e-13;
  o.max_step = 0.02;
  double t = 0.0;
  ode::integrate(rhs, y, t, t_budget, o, [&](double t0, const ode::State& y0, double t1, ode::State& y1) {
    clamp_actions(y1, N);
    const double step = plane_step(y0, y1, N);
    if (length + step >= arc) {
      // land exactly on the requested arc length
      double lo = t0, hi = t1;
      ode::State best = y1;
      for (int k = 0; k < 60; ++k) {
        const double mid = 0.5 * (lo + hi);
        ode::State ym = ode::dense_state(rhs, y0, t0, mid);
        if (length + plane_step(y0, ym, N) < arc) lo = mid;
        else {
          hi = mid;
          best = ym;
        }
      }
      length = arc;
      push(best);
      return false;
    }
    length += step;
    push(y1);
    return true;
  });
  return out;
}

double section_function(const ReducedState& s, const SectionSpec& sec) {
  if (sec.coordinate == SectionCoordinate::K) return s.K[sec.index] - sec.value;
  return angle_diff(s.psi[sec.index], sec.value);
}

namespace {

/// Grows a manifold branch until it crosses the section (any direction); returns the crossing.
ReducedState branch_to_section(const FixedPoint& saddle, const ModelCoefficients& c, Branch branch,
                               const SectionSpec& sec, double seed, double t_budget) {
  const int N = c.N;
  const auto dir = saddle_direction(saddle, sec.index, c, branch);
  const bool stable = branch == Branch::stable_plus || branch == Branch::stable_minus;
  const auto rhs = make_rhs(c, stable ? -1 : +1);
  ode::State y = seeded(saddle, dir, seed);
  const auto g = [&](const ode::State& state) { return section_function(unpack(state, N), sec); };
  bool found = false;
  ode::State hit;
  ode::Options o;
  o.abs_tol = o.rel_tol = 1e-13;
  o.max_step = 0.05;
  double t = 0.0;
  ode::integrate(rhs, y, t, t_budget, o, [&](double t0, const ode::State& y0, double t1, ode::State& y1) {
    clamp_actions(y1, N);
    const double g0 = g(y0), g1 = g(y1);
    if ((g0 < 0) != (g1 < 0) && std::abs(g1 - g0) < kPi) {
      ode::locate_root(rhs, y0, t0, t1, g, 1e-12, hit);
      found = true;
      return false;
    }
    return true;
  });
  if (!found) throw std::runtime_error("splitting: manifold did not reach the section within the time budget");
  return unpack(hit, N);
}

}  // namespace

double splitting_distance(const ModelCoefficients& c, const SectionSpec& section, Column column) {
  c.validate();
  if (section.coordinate != SectionCoordinate::K)
    throw std::invalid_argument("splitting: the section must fix K (a psi-section contains the unperturbed separatrix)");
  const int i = section.index;
  if (i < 0 || i >= c.N) throw std::invalid_argument("splitting: section index out of range");
  std::vector<DofEquilibrium> low(c.N, DofEquilibrium::center_zero), up(c.N, DofEquilibrium::center_zero);
  const bool rising = column == Column::rising;
  low[i] = rising ? DofEquilibrium::saddle_low_rise : DofEquilibrium::saddle_low_fall;
  up[i] = rising ? DofEquilibrium::saddle_up_rise : DofEquilibrium::saddle_up_fall;
  const auto p_low = continue_fixed_point(low, c);
  const auto p_up = continue_fixed_point(up, c);
  if (!p_low.converged || !p_up.converged) throw std::runtime_error("splitting: saddle continuation failed");
  constexpr double seed = 1e-7;
  constexpr double budget = 200.0;
  ReducedState on_u, on_s;
  if (rising) {
    on_u = branch_to_section(p_low, c, Branch::unstable_plus, section, seed, budget);
    on_s = branch_to_section(p_up, c, Branch::stable_minus, section, seed, budget);
  } else {
    on_u = branch_to_section(p_up, c, Branch::unstable_minus, section, seed, budget);
    on_s = branch_to_section(p_low, c, Branch::stable_plus, section, seed, budget);
  }
  return angle_diff(on_u.psi[i], on_s.psi[i]);
}

std::vector<Crossing> poincare_map(const ReducedState& s0, const ModelCoefficients& c, const SectionSpec& section,
                                   int max_crossings, double t_max, double tol) {
  c.validate();
  check_state(s0, c);
  if (section.index < 0 || section.index >= c.N) throw std::invalid_argument("poincare: section index out of range");
  if (std::abs(section_function(s0, section)) < 1e-12) throw std::invalid_argument("poincare: initial state lies on the section");
  const int N = c.N;
  const auto rhs = make_rhs(c, +1);
  const auto g = [&](const ode::State& state) { return section_function(unpack(state, N), section); };
  std::vector<Crossing> out;
  ode::State y = pack(s0);
  ode::Options o;
  o.abs_tol = o.rel_tol = tol;
  o.max_step = 0.1;
  double t = 0.0;
  const auto status = ode::integrate(rhs, y, t, t_max, o, [&](double t0, const ode::State& y0, double t1, ode::State& y1) {
    clamp_actions(y1, N);
    const double g0 = g(y0), g1 = g(y1);
    if ((g0 < 0) == (g1 < 0) || std::abs(g1 - g0) >= kPi) return true;
    const int dir = g1 > g0 ? +1 : -1;
    if (section.direction != 0 && dir != section.direction) return true;
    ode::State hit;
    const double tc = ode::locate_root(rhs, y0, t0, t1, g, 1e-10, hit);
    out.push_back({unpack(hit, N).wrapped(), tc});
    return static_cast<int>(out.size()) < max_crossings;
  });
  if (out.empty()) {
    if (status == ode::Status::completed) throw std::runtime_error("poincare: no crossing within the time budget");
    throw std::runtime_error("poincare: integration failed before the first crossing");
  }
  return out;
}

std::vector<std::int64_t> return_time_symbols(const std::vector<Crossing>& crossings, double T_quantum) {
  if (!(T_quantum > 0)) throw std::invalid_argument("return_time_symbols: T_quantum must be positive");
  if (crossings.size() < 2) throw std::invalid_argument("return_time_symbols: need at least two crossings");
  std::vector<std::int64_t> out;
  for (std::size_t k = 1; k < crossings.size(); ++k)
    out.push_back(static_cast<std::int64_t>(std::floor((crossings[k].t - crossings[k - 1].t) / T_quantum)));
  return out;
}

ReducedState chain_target(const ModelCoefficients& c, int i) {
  if (i < 1 || i > c.N) throw std::invalid_argument("chain: itinerary entries must lie in 1..N");
  std::vector<DofEquilibrium> labels(c.N, DofEquilibrium::saddle_up_rise);
  labels[i - 1] = DofEquilibrium::saddle_low_rise;
  const auto fp = continue_fixed_point(labels, c);
  if (!fp.converged) throw std::runtime_error("chain: target continuation failed");
  return fp.state;
}

double state_distance(const ReducedState& a, const ReducedState& b) {
  double s = 0.0;
  for (int j = 0; j < a.size(); ++j) {
    const double dp = angle_diff(a.psi[j], b.psi[j]);
    const double dk = a.K[j] - b.K[j];
    s += dp * dp + dk * dk;
  }
  return std::sqrt(s);
}

namespace {

struct ChainScore {
  int visits = 0;
  double next_distance = std::numeric_limits<double>::infinity();
  std::vector<double> times, distances;
  bool better_than(const ChainScore& o) const {
    return visits != o.visits ? visits > o.visits : next_distance < o.next_distance;
  }
};

// The leading dof starts on the unstable manifold of its lower saddle; every other dof is pushed
// off its upper saddle by the shooting parameter s (the sign picks the side of the separatrix).
ReducedState chain_start(const ModelCoefficients& c, const FixedPoint& first, int lead, double s,
                         const ChainOptions& opt) {
  const auto dir = saddle_direction(first, lead, c, Branch::unstable_plus);
  ReducedState x = first.state;
  for (int j = 0; j < c.N; ++j) {
    x.psi[j] += opt.leading_offset * dir.vector(j);
    x.K[j] += opt.leading_offset * dir.vector(c.N + j);
  }
  for (int j = 0; j < c.N; ++j) {
    if (j == lead) continue;
    x.psi[j] += s;
    x.K[j] = 1.0 - std::abs(s);
  }
  return x;
}

ChainScore score_trajectory(const Trajectory& tr, const std::vector<ReducedState>& targets, double nbhd) {
  ChainScore sc;
  std::size_t k = 0;
  const std::size_t n = tr.states.size();
  // the first target is visited at t = 0 when the start lies in its neighbourhood
  double d0 = state_distance(tr.states[0], targets[0]);
  if (d0 >= nbhd) {
    sc.next_distance = d0;
    return sc;
  }
  sc.visits = 1;
  sc.times.push_back(tr.t[0]);
  sc.distances.push_back(d0);
  for (std::size_t p = 1; p < targets.size(); ++p) {
    // leave the previous neighbourhood before a new visit can count
    while (k < n && state_distance(tr.states[k], targets[p - 1]) < nbhd) ++k;
    double best = std::numeric_limits<double>::infinity();
    std::size_t hit = n;
    for (std::size_t q = k; q < n; ++q) {
      const double dq = state_distance(tr.states[q], targets[p]);
      best = std::min(best, dq);
      if (dq < nbhd) {
        hit = q;
        break;
      }
    }
    if (hit == n) {
      sc.next_distance = best;
      return sc;
    }
    // the visit time is where the distance is smallest inside this passage
    std::size_t q = hit;
    while (q + 1 < n && state_distance(tr.states[q + 1], targets[p]) <= state_distance(tr.states[q], targets[p])) ++q;
    sc.visits = static_cast<int>(p) + 1;
    sc.times.push_back(tr.t[q]);
    sc.distances.push_back(state_distance(tr.states[q], targets[p]));
    k = q;
  }
  sc.next_distance = 0.0;
  return sc;
}

}  // namespace

ChainResult chain_shadowing_run(const ModelCoefficients& c, const std::vector<int>& itinerary, double nbhd,
                                const ChainOptions& opt) {
  c.validate();
  if (itinerary.empty()) throw std::invalid_argument("chain: empty itinerary");
  if (!(nbhd > 0)) throw std::invalid_argument("chain: nbhd must be positive");
  std::vector<ReducedState> targets;
  for (int i : itinerary) targets.push_back(chain_target(c, i));
  const int lead = itinerary.front() - 1;

  std::vector<DofEquilibrium> first_labels(c.N, DofEquilibrium::saddle_up_rise);
  first_labels[lead] = DofEquilibrium::saddle_low_rise;
  const auto first = continue_fixed_point(first_labels, c);
  const int wanted = static_cast<int>(targets.size());

  IntegrateOptions io;
  io.tol = opt.tol;
  io.sample_dt = 0.02;
  auto run = [&](double s) {
    const double horizon = wanted == 1 ? 0.0 : opt.t_max;
    auto tr = integrate(chain_start(c, first, lead, s, opt), c, horizon, io);
    auto sc = score_trajectory(tr, targets, nbhd);
    return std::make_pair(std::move(tr), std::move(sc));
  };

  ChainResult result;
  std::vector<double> grid;
  for (int g = 0; g < opt.grid; ++g) {
    const double mag = opt.s_min * std::pow(opt.s_max / opt.s_min, opt.grid > 1 ? double(g) / (opt.grid - 1) : 0.0);
    grid.push_back(mag);
    grid.push_back(-mag);
  }
  double best_s = grid.front();
  ChainScore best;
  std::size_t best_index = 0;
  for (std::size_t g = 0; g < grid.size() && best.visits < wanted; ++g) {
    auto sc = run(grid[g]).second;
    if (g == 0 || sc.better_than(best)) {
      best = sc;
      best_s = grid[g];
      best_index = g;
    }
  }
  if (best.visits < wanted) {
    // golden-section refinement of the failing leg's closest approach in log|s|, keeping the sign
    const double sign = best_s < 0 ? -1.0 : 1.0;
    const std::size_t lo_i = best_index >= 2 ? best_index - 2 : best_index;
    const std::size_t hi_i = std::min(best_index + 2, grid.size() - 2 + best_index % 2);
    double lo = std::log(std::abs(grid[lo_i]));
    double hi = std::log(std::abs(grid[hi_i]));
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    auto eval = [&](double ls) {
      const double sv = sign * std::exp(ls);
      auto sc = run(sv).second;
      if (sc.better_than(best)) {
        best = sc;
        best_s = sv;
      }
      return sc.visits == wanted ? -1.0 : sc.next_distance - sc.visits;
    };
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = eval(x1), f2 = eval(x2);
    for (int it = 0; it < opt.refine_iterations && best.visits < wanted; ++it) {
      if (f1 < f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - phi * (hi - lo);
        f1 = eval(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + phi * (hi - lo);
        f2 = eval(x2);
      }
    }
  }
  auto [tr, sc] = run(best_s);
  result.shooting_parameter = best_s;
  result.visit_times = sc.times;
  result.visit_distances = sc.distances;
  result.success = sc.visits == wanted;
  // cut the trajectory shortly after the last visit
  if (result.success && targets.size() > 1) {
    const double t_cut = sc.times.back() + 1.0;
    std::size_t keep = 0;
    while (keep < tr.t.size() && tr.t[keep] <= t_cut) ++keep;
    tr.t.resize(keep);
    tr.states.resize(keep);
    tr.H.resize(keep);
  }
  result.trajectory = std::move(tr);
  result.message = result.success
                       ? "itinerary realized"
                       : "search exhausted: " + std::to_string(sc.visits) + " of " + std::to_string(targets.size()) +
                             " targets visited, closest approach to the next " + std::to_string(sc.next_distance);
  return result;
}

}  // namespace reslab
