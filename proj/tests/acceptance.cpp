// Acceptance gates. One PASS/FAIL line per criterion; exit status 1 if any gate fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "reslab/analysis.hpp"
#include "reslab/lattice.hpp"
#include "reslab/reduced_model.hpp"
#include "reslab/resonant_model.hpp"
#include "reslab/rng.hpp"
#include "reslab/run.hpp"
#include "reslab/spectral_pde.hpp"

using namespace reslab;
namespace fs = std::filesystem;

namespace {

constexpr double pi = std::numbers::pi;
const double sqrt3 = std::sqrt(3.0);

const Quad kRect{ModeVector{1, 0}, {1, 2}, {-1, 2}, {-1, 0}};
const Quad kCircle{ModeVector{3, 4}, {5, 0}, {-3, -4}, {-5, 0}};
const Quad kWave{ModeVector{3, 4}, {5, 0}, {9, 2}, {7, 6}};

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool has_class(const std::vector<ResonantTuple>& tuples, const Quad& q) {
  return oracle::classes_of(tuples).contains(oracle::tuple_class(q));
}

LambdaSet lambda_of(std::vector<Quad> qs, Model model) {
  std::vector<ResonantTuple> t;
  for (const auto& q : qs) t.push_back(make_resonant_tuple(q, model));
  return validate_lambda(std::move(t));
}

void set_tuple(ComplexModeState& a, int r, double M, double K, std::array<double, 4> phase) {
  const double I[4] = {(1 - K) * M / 2, K * M / 2, (1 - K) * M / 2, K * M / 2};
  for (int k = 0; k < 4; ++k) a[4 * r + k] = std::polar(std::sqrt(I[k]), phase[k]);
}

Outcome lattice_gate() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto beam = enumerate_beam_tuples(4);
  o.require(oracle::classes_of(beam) == oracle::brute_force_tuples(Model::beam, 4), "beam box 4 differs from brute force");
  const auto wave = enumerate_wave_tuples(6);
  o.require(oracle::classes_of(wave) == oracle::brute_force_tuples(Model::wave, 6), "wave box 6 differs from brute force");
  o.require(has_class(beam, kRect), "beam rectangle missing");
  // (9,2) lies outside box 6
  o.require(has_class(enumerate_wave_tuples(9), kWave), "wave tuple missing at box 9");
  const double secs = seconds_since(t0);
  o.require(secs < 60, "runtime " + fmt(secs) + " s");
  o.note(std::to_string(beam.size()) + " beam, " + std::to_string(wave.size()) + " wave tuples, " + fmt(secs) + " s");
  return o;
}

Outcome h41_gate() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<ModeVector> lambda(kRect.begin(), kRect.end());
  const auto got = check_h41(lambda, Model::beam);
  std::set<oracle::H41Entry> got_set;
  for (const auto& v : got) got_set.insert({v.modes, v.signs});
  const auto want = oracle::brute_force_h41(lambda, Model::beam);
  o.require(got_set.size() == got.size(), "duplicate violations");
  o.require(got_set == want, "violation list differs from direct scan");
  const double secs = seconds_since(t0);
  o.require(secs < 10, "runtime " + fmt(secs) + " s");
  o.note(std::to_string(got.size()) + " violations, " + fmt(secs) + " s");
  return o;
}

Outcome reduced_gate() {
  Outcome o;
  struct Expected {
    double psi, K;
    std::complex<double> lo, hi;
  };
  const std::vector<Expected> expected{
      {0, 0.5, {0, -sqrt3}, {0, sqrt3}},          {pi, 0.5, {0, -1}, {0, 1}},
      {2 * pi / 3, 0, {-sqrt3, 0}, {sqrt3, 0}},   {-2 * pi / 3, 0, {-sqrt3, 0}, {sqrt3, 0}},
      {2 * pi / 3, 1, {-sqrt3, 0}, {sqrt3, 0}},   {-2 * pi / 3, 1, {-sqrt3, 0}, {sqrt3, 0}}};
  const auto fps = fixed_points(ModelCoefficients::zero(1));
  o.require(fps.size() == expected.size(), "found " + std::to_string(fps.size()) + " fixed points");
  double worst_fp = 0.0;
  for (const auto& e : expected) {
    double best = 1e300;
    for (const auto& fp : fps) {
      if (fp.eigenvalues.size() != 2) continue;
      const double d = std::max({std::abs(angle_diff(fp.state.psi[0], e.psi)), std::abs(fp.state.K[0] - e.K),
                                 std::abs(fp.eigenvalues[0] - e.lo), std::abs(fp.eigenvalues[1] - e.hi)});
      best = std::min(best, d);
    }
    worst_fp = std::max(worst_fp, best);
  }
  o.require(worst_fp <= 1e-9, "fixed point/eigenvalue error " + fmt(worst_fp));

  const auto c3 = ModelCoefficients::zero(3);
  const ReducedState s0{{0.3, 2.5, 4.0}, {0.2, 0.05, 0.7}};
  const auto tr = integrate(s0, c3, 1000.0);
  double worst_h = tr.ok() ? 0.0 : 1e300;
  for (const auto& s : tr.states)
    for (int j = 0; j < 3; ++j) worst_h = std::max(worst_h, std::abs(dof_energy(s, j) - dof_energy(s0, j)));
  o.require(worst_h <= 1e-8, "h_j drift " + fmt(worst_h));

  SplitMix64 rng(99);
  const auto c = sample_coefficients(3, 0.2, 17);
  const double h = 1e-6;
  double worst_fd = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    ReducedState s;
    for (int j = 0; j < 3; ++j) {
      s.psi.push_back(rng.uniform(0, 2 * pi));
      s.K.push_back(rng.uniform(0.05, 0.95));
    }
    const auto f = vector_field(s, c);
    for (int j = 0; j < 3; ++j) {
      auto sp = s, sm = s;
      sp.K[j] += h;
      sm.K[j] -= h;
      const double dHdK = (hamiltonian(sp, c) - hamiltonian(sm, c)) / (2 * h);
      sp = s;
      sm = s;
      sp.psi[j] += h;
      sm.psi[j] -= h;
      const double dHdpsi = (hamiltonian(sp, c) - hamiltonian(sm, c)) / (2 * h);
      worst_fd = std::max({worst_fd, std::abs(f.psi_dot[j] - dHdK), std::abs(f.K_dot[j] + dHdpsi)});
    }
  }
  o.require(worst_fd <= 1e-8, "field vs finite differences " + fmt(worst_fd));
  o.note("fixed points " + fmt(worst_fp) + ", h_j " + fmt(worst_h) + ", fd " + fmt(worst_fd));
  return o;
}

Outcome splitting_gate() {
  Outcome o;
  const SectionSpec sec{0, SectionCoordinate::K, 0.5, 0};
  const double s0 = std::abs(splitting_distance(sample_coefficients(2, 0.0, 12345), sec));
  const double s1 = splitting_distance(sample_coefficients(2, 1e-3, 12345), sec);
  const double s2 = splitting_distance(sample_coefficients(2, 2e-3, 12345), sec);
  const double s4 = splitting_distance(sample_coefficients(2, 4e-3, 12345), sec);
  const double r1 = s2 / s1, r2 = s4 / s2;
  o.require(r1 >= 1.8 && r1 <= 2.2, "ratio at 1e-3 is " + fmt(r1));
  o.require(r2 >= 1.8 && r2 <= 2.2, "ratio at 2e-3 is " + fmt(r2));
  o.require(s0 <= 1e-6, "splitting(0) " + fmt(s0));
  o.note("ratios " + fmt(r1) + ", " + fmt(r2) + ", splitting(0) " + fmt(s0));
  return o;
}

Outcome horseshoe_gate() {
  Outcome o;
  const auto c = ModelCoefficients::zero(1);
  const SectionSpec sec{0, SectionCoordinate::psi, pi, -1};
  // shifted off the section, same distance from the separatrix K = 0
  const auto far = return_time_symbols(poincare_map(ReducedState{{pi + 0.25}, {1e-3}}, c, sec, 4), 1.0);
  const auto near = return_time_symbols(poincare_map(ReducedState{{pi + 0.25}, {1e-5}}, c, sec, 4), 1.0);
  o.require(!far.empty() && far.size() == near.size(), "symbol sequences missing");
  std::int64_t least = std::numeric_limits<std::int64_t>::max();
  for (std::size_t k = 0; k < std::min(far.size(), near.size()); ++k) least = std::min(least, near[k] - far[k]);
  o.require(least >= 2, "symbols differ by " + std::to_string(least));
  if (!far.empty()) o.note("symbols " + std::to_string(far[0]) + " vs " + std::to_string(near[0]));
  return o;
}

Outcome resonant_gate() {
  Outcome o;
  const auto lam = lambda_of({kRect, kCircle}, Model::beam);
  const auto H = build_resonant_hamiltonian(lam);
  ComplexModeState a(H.size());
  set_tuple(a, 0, 2.0, 0.3, {0.1, 0.7, -0.4, 1.9});
  set_tuple(a, 1, 2.0, 0.6, {0.5, -1.2, 2.2, 0.3});
  ResonantOptions opt;
  opt.sample_dt = 10.0;
  const auto tr = evolve_resonant(a, H, 1000.0, opt);
  o.require(tr.ok(), "integration failed");
  const auto I0 = first_integrals(a, H);
  o.require(I0.size() == 5, "expected 5 first integrals");
  double worst = 0.0, worst_rel = 0.0;
  for (const auto& s : tr.states) {
    const auto I = first_integrals(s, H);
    for (std::size_t k = 0; k < I.size(); ++k) {
      // relative where the integral is not zero
      const double scale = std::abs(I0[k]) > 1e-12 ? std::abs(I0[k]) : 1.0;
      worst = std::max(worst, std::abs(I[k] - I0[k]) / scale);
    }
    const auto rep = tuple_intensities(s, 2, 1e-8);
    for (double e : rep.relation_error) worst_rel = std::max(worst_rel, e);
  }
  o.require(worst <= 1e-8, "first integral drift " + fmt(worst));
  o.require(worst_rel <= 1e-8, "relation error " + fmt(worst_rel));

  ComplexModeState b(H.size());
  set_tuple(b, 0, 2.0, 0.4, {0.3, 0.1, 0.2, 1.0});
  const auto tz = evolve_resonant(b, H, 1000.0, opt);
  o.require(tz.ok(), "zero-tuple integration failed");
  double worst_zero = 0.0;
  for (const auto& s : tz.states)
    for (int k = 4; k < 8; ++k) worst_zero = std::max(worst_zero, std::abs(s[k]));
  o.require(worst_zero <= 1e-12, "empty tuple grew to " + fmt(worst_zero));
  o.note("integrals " + fmt(worst) + ", relations " + fmt(worst_rel) + ", empty tuple " + fmt(worst_zero));
  return o;
}

InitialDataSpec rect_spec(Model model, double delta, std::uint64_t seed) {
  InitialDataSpec s;
  s.lambda = lambda_of({kRect}, model);
  s.delta = delta;
  SplitMix64 rng(seed);
  for (int k = 0; k < 4; ++k) s.a0.push_back(std::polar(rng.uniform(0.3, 1.0), rng.uniform(0, 6.28)));
  return s;
}

std::optional<HartreePotential> potential_for(const InitialDataSpec& s) {
  if (s.lambda.model != Model::hartree) return std::nullopt;
  return HartreePotential::sampled(s.lambda, 0.2, 11);
}

double field_distance(const SpectralField& a, const SpectralField& b) {
  double d = 0.0;
  for (const auto& j : a.modes()) d += std::norm(a.u_hat(j) - b.u_hat(j)) + std::norm(a.v_hat(j) - b.v_hat(j));
  return std::sqrt(d);
}

SpectralField advance(SpectralField f, double dt, int steps) {
  for (int k = 0; k < steps; ++k) step(f, dt);
  return f;
}

Outcome pde_gate() {
  Outcome o;
  constexpr int J = 32;
  constexpr int steps = 100000;
  for (Model m : {Model::wave, Model::beam, Model::hartree}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto s = rect_spec(m, 0.05, 5);
    PdeOptions opt;
    opt.J = J;
    auto f = build_initial_data(s, opt, potential_for(s));
    const double dt = default_time_step(m, J);
    const double E0 = energy(f), M0 = mass(f);
    double worst_e = 0.0, worst_m = 0.0;
    for (int k = 1; k <= steps; ++k) {
      step(f, dt);
      if (k % 100 == 0) {
        worst_e = std::max(worst_e, std::abs(energy(f) - E0) / std::abs(E0));
        if (m == Model::hartree) worst_m = std::max(worst_m, std::abs(mass(f) - M0) / M0);
      }
    }
    const double secs = seconds_since(t0);
    const std::string name(to_string(m));
    o.require(worst_e < 1e-6, name + " energy drift " + fmt(worst_e));
    o.require(secs < 300, name + " runtime " + fmt(secs) + " s");
    if (m == Model::hartree) {
      o.require(worst_m < 1e-10, "hartree mass drift " + fmt(worst_m));
      const auto before = f.physical_complex();
      hartree_nonlinear_substep(f, 0.3);
      const auto after = f.physical_complex();
      double worst_u = 0.0;
      for (std::size_t i = 0; i < before.size(); ++i)
        worst_u = std::max(worst_u, std::abs(std::abs(after[i]) - std::abs(before[i])));
      o.require(worst_u < 1e-12, "|u| changed by " + fmt(worst_u));
      o.note(name + " E " + fmt(worst_e) + " mass " + fmt(worst_m) + " |u| " + fmt(worst_u) + " " + fmt(secs) + " s");
    } else {
      const double odd = odd_subspace_violation(f);
      o.require(odd < 1e-12, name + " odd-subspace violation " + fmt(odd));
      o.note(name + " E " + fmt(worst_e) + " odd " + fmt(odd) + " " + fmt(secs) + " s");
    }
  }
  for (Model m : {Model::wave, Model::beam, Model::hartree}) {
    // large amplitude so the nonlinear splitting error dominates
    const auto s = rect_spec(m, m == Model::hartree ? 1.0 : 2.0, 3);
    const auto f0 = build_initial_data(s, {}, potential_for(s));
    const double T = 0.4;
    const int n = m == Model::wave ? 20 : 80;
    const auto f1 = advance(f0, T / n, n);
    const auto f2 = advance(f0, T / (2 * n), 2 * n);
    const auto f4 = advance(f0, T / (4 * n), 4 * n);
    const double order = std::log2(field_distance(f1, f2) / field_distance(f2, f4));
    o.require(order >= 1.8 && order <= 2.2, std::string(to_string(m)) + " order " + fmt(order));
    o.note(std::string(to_string(m)) + " order " + fmt(order));
  }
  return o;
}

Outcome shadowing_gate() {
  Outcome o;
  InitialDataSpec spec;
  spec.lambda = lambda_of({kRect}, Model::beam);
  spec.a0 = {std::polar(0.9, 0.3), std::polar(0.4, 1.1), std::polar(0.9, -0.7), std::polar(0.4, 2.0)};
  std::vector<std::pair<double, double>> intensity, remainder;
  for (double delta : {0.08, 0.04, 0.02}) {
    spec.delta = delta;
    const auto r = shadowing_run(spec, {}, 1.0);
    intensity.emplace_back(delta, r.intensity_sup);
    remainder.emplace_back(delta, r.remainder_h2_sup);
    o.note("delta " + fmt(delta) + ": " + fmt(r.intensity_sup) + " / " + fmt(r.remainder_h2_sup));
  }
  const auto fi = scaling_fit(intensity);
  const auto fr = scaling_fit(remainder);
  o.require(fi.exponent >= 1.0, "intensity exponent " + fmt(fi.exponent));
  o.require(fr.exponent >= 1.0, "remainder exponent " + fmt(fr.exponent));
  o.note("p_intensity " + fmt(fi.exponent) + " +/- " + fmt(fi.half_width) + ", p_remainder " + fmt(fr.exponent) +
         " +/- " + fmt(fr.half_width));
  return o;
}

Outcome beating_gate() {
  Outcome o;
  // circle tuple with M = 2; H4 = C M^2 (3/2 + H0) so the reduced time is 2 C M t
  const auto lam = lambda_of({kCircle}, Model::beam);
  const auto H = build_resonant_hamiltonian(lam);
  const double M = 2.0, scale = 2 * (0.375 / 625.0) * M;
  const double K0 = 1e-3;
  ComplexModeState a(4);
  set_tuple(a, 0, M, K0, {pi, 0.0, 0.0, 0.0});
  ResonantOptions opt;
  opt.sample_dt = 0.01 / scale;
  const auto tr = evolve_resonant(a, H, 150.0 / scale, opt);
  o.require(tr.ok(), "integration failed");
  IntensitySeries s;
  for (std::size_t i = 0; i < tr.t.size(); ++i) {
    s.t.push_back(tr.t[i] * scale);
    s.y.push_back(2 * std::norm(tr.states[i][0]) / M);
  }
  const auto q = extract_Q(s);
  o.require(q.q_min < 0.2, "min Q " + fmt(q.q_min));
  o.require(q.q_max > 0.8, "max Q " + fmt(q.q_max));
  // matched eps: the smallest level both extremes of Q clear
  const double eps = std::max(q.q_min, 1 - q.q_max) + 1e-3;
  const auto rep = bump_check(s, half_crossings(s), eps);
  o.require(rep.passed, "bump_check fails at eps " + fmt(eps));
  o.note("T " + fmt(q.period) + ", Q in [" + fmt(q.q_min) + ", " + fmt(q.q_max) + "], residual " + fmt(q.residual) +
         ", eps " + fmt(eps) + ", " + std::to_string(rep.bumps.size()) + " bumps");
  return o;
}

template <class F>
IntensitySeries sampled(F f, double t0, double t1, std::size_t n) {
  IntensitySeries s;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = t0 + (t1 - t0) * static_cast<double>(k) / static_cast<double>(n - 1);
    s.t.push_back(t);
    s.y.push_back(f(t));
  }
  return s;
}

double pulse(double t, double a, double b) {
  if (t <= a || t >= b) return 0.0;
  return std::pow(std::sin(pi * (t - a) / (b - a)), 2);
}

Outcome analytics_gate() {
  Outcome o;
  const double T = 2.7;
  const auto sq = [](double T) { return [T](double t) { return std::pow(std::sin(pi * t / T), 2); }; };
  const auto q = extract_Q(sampled(sq(T), 0, 6.3 * T, 2521));
  o.require(std::abs(q.period / T - 1) < 1e-3, "period " + fmt(q.period));

  const double T2 = 2.0;
  const auto c = half_crossings(sampled(sq(T2), 0, 5 * T2, 2001));
  double worst = c.up.size() == 5 && c.down.size() == 5 ? 0.0 : 1e300;
  for (std::size_t k = 0; k < std::min<std::size_t>(c.up.size(), 5); ++k)
    worst = std::max(worst, std::abs(c.up[k] - (T2 / 4 + k * T2)));
  for (std::size_t k = 0; k < std::min<std::size_t>(c.down.size(), 5); ++k)
    worst = std::max(worst, std::abs(c.down[k] - (3 * T2 / 4 + k * T2)));
  o.require(worst < 1e-6, "crossing error " + fmt(worst));

  std::vector<std::pair<double, double>> pairs;
  for (double d : {0.01, 0.02, 0.04, 0.08}) pairs.emplace_back(d, 3.0 * std::pow(d, 1.5));
  const double p = scaling_fit(pairs).exponent;
  o.require(std::abs(p - 1.5) < 1e-6, "exponent " + fmt(p));

  const auto grid = sampled([](double) { return 0.0; }, 0, 60, 6001).t;
  std::vector<IntensitySeries> s(2);
  for (auto& x : s) x.t = grid;
  for (double t : grid) {
    double y1 = 0.0, y2 = 0.0;
    if (t < 18) y1 = 0.5 + 0.45 * std::sin(t);
    else if (t < 22) y1 = pulse(t, 14, 22);
    if (t > 19 && t < 24) y2 = pulse(t, 19, 29);
    else if (t >= 24 && t < 38) y2 = 0.5 + 0.45 * std::cos(t - 24);
    else if (t >= 38 && t < 41) y2 = pulse(t, 34, 41);
    if (t > 39 && t < 44) y1 = pulse(t, 39, 47);
    else if (t >= 44) y1 = 0.5 + 0.45 * std::sin(t - 44);
    s[0].y.push_back(std::clamp(y1, 0.0, 1.0));
    s[1].y.push_back(std::clamp(y2, 0.0, 1.0));
  }
  const auto seq = activation_itinerary(s, {0.05, 1.0}).sequence();
  o.require(seq == std::vector<int>{1, 2, 1}, "planted itinerary not recovered");
  o.note("T " + fmt(q.period) + ", crossings " + fmt(worst) + ", exponent " + fmt(p));
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome determinism_gate() {
  Outcome o;
  auto c = config_from_json(Json::parse(R"({
    "model": "beam",
    "seed": 42,
    "threads": 2,
    "stages": ["lattice", "resonant", "pde", "analyze"],
    "lattice": {"box": 4, "count": 2},
    "init": {"preset": "random"},
    "resonant": {"t_end": 500, "sample_dt": 1},
    "pde": {"delta": 0.1, "tau_end": 0.05}
  })"));
  const auto base = fs::temp_directory_path() / "reslab_acceptance";
  fs::remove_all(base);
  std::vector<std::string> dirs;
  for (const char* name : {"a", "b"}) {
    c.out_dir = (base / name).string();
    const auto r = run_pipeline(c);
    o.require(r.exit_code == 0, std::string("run ") + name + " exit " + std::to_string(r.exit_code));
    dirs.push_back(c.out_dir);
  }
  int compared = 0;
  for (const char* f : {"resonant.csv", "pde.csv"}) {
    const auto x = slurp(fs::path(dirs[0]) / f), y = slurp(fs::path(dirs[1]) / f);
    o.require(!x.empty(), std::string(f) + " empty");
    o.require(x == y, std::string(f) + " differs");
    ++compared;
  }
  fs::remove_all(base);
  o.note(std::to_string(compared) + " CSV files compared");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> gates{
      {"lattice oracle equivalence", lattice_gate},
      {"H41 checker", h41_gate},
      {"reduced model eps=0", reduced_gate},
      {"splitting scaling", splitting_gate},
      {"horseshoe symbols", horseshoe_gate},
      {"resonant model N=2", resonant_gate},
      {"PDE integrators", pde_gate},
      {"shadowing scaling", shadowing_gate},
      {"beating signature", beating_gate},
      {"synthetic analytics", analytics_gate},
      {"determinism", determinism_gate},
  };
  int failed = 0;
  for (const auto& [name, gate] : gates) {
    Outcome o;
    try {
      o = gate();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail += std::string(o.detail.empty() ? "" : "; ") + "exception: " + e.what();
    }
    failed += !o.pass;
    std::printf("%s  %s  (%s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, gates.size());
  return failed == 0 ? 0 : 1;
}
