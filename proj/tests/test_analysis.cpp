#include <cmath>
#include <numbers>

#include "doctest.h"
#include "reslab/analysis.hpp"
#include "reslab/reduced_model.hpp"
#include "reslab/resonant_model.hpp"
#include "reslab/rng.hpp"

using namespace reslab;

namespace {

constexpr double pi = std::numbers::pi;

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

IntensitySeries sin2(double T, double periods, std::size_t per_period = 400) {
  return sampled([T](double t) { return std::pow(std::sin(pi * t / T), 2); }, 0.0, periods * T,
                 static_cast<std::size_t>(periods * per_period) + 1);
}

// smooth 0 -> 1 -> 0 pulse supported on [a, b]
double pulse(double t, double a, double b) {
  if (t <= a || t >= b) return 0.0;
  return std::pow(std::sin(pi * (t - a) / (b - a)), 2);
}

const Quad kCircle{ModeVector{3, 4}, {5, 0}, {-3, -4}, {-5, 0}};

// Normalized n1 intensity 1 - K of the single circle tuple, sampled in reduced time.
IntensitySeries circle_run(double psi0, double K0, double tau_end, double dtau) {
  const auto lam = validate_lambda({make_resonant_tuple(kCircle, Model::beam)});
  const auto H = build_resonant_hamiltonian(lam);
  const double M = 2.0, scale = 2 * (0.375 / 625.0) * M;
  const double I[4] = {(1 - K0) * M / 2, K0 * M / 2, (1 - K0) * M / 2, K0 * M / 2};
  const double ph[4] = {psi0, 0.0, 0.0, 0.0};
  ComplexModeState a(4);
  for (int k = 0; k < 4; ++k) a[k] = std::polar(std::sqrt(I[k]), ph[k]);
  ResonantOptions opt;
  opt.sample_dt = dtau / scale;
  const auto tr = evolve_resonant(a, H, tau_end / scale, opt);
  REQUIRE(tr.ok());
  IntensitySeries s;
  for (std::size_t i = 0; i < tr.t.size(); ++i) {
    s.t.push_back(tr.t[i] * scale);
    s.y.push_back(1 - reduce_to_action_angle(tr.states[i], 0).K);
  }
  return s;
}

}  // namespace

TEST_CASE("extract_Q recovers the period of sin^2") {
  const double T = 2.7;
  const auto s = sin2(T, 6.3);
  const auto q = extract_Q(s);
  CHECK(std::abs(q.period / T - 1) < 1e-3);
  CHECK(q.residual < 1e-3);
  CHECK(q.q_min == doctest::Approx(0.0).epsilon(1e-4));
  CHECK(q.q_max == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(q.periods >= 6);
  CHECK(q(T / 2 + 3 * T) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("extract_Q refuses series without periodicity") {
  CHECK_THROWS_AS(extract_Q(sampled([](double) { return 0.3; }, 0, 10, 200)), AnalysisError);
  // clipped above 1/2: never crosses and no hint
  CHECK_THROWS_AS(extract_Q(sampled([](double t) { return std::max(0.55, std::pow(std::sin(t), 2)); }, 0, 30, 600)),
                  AnalysisError);
  // too short
  CHECK_THROWS_AS(extract_Q(sin2(2.0, 2.5)), AnalysisError);
  // non-periodic chirp
  QOptions opt;
  opt.residual_threshold = 0.05;
  CHECK_THROWS_AS(extract_Q(sampled([](double t) { return std::pow(std::sin(0.05 * t * t), 2); }, 0, 40, 4000), opt),
                  AnalysisError);
}

TEST_CASE("extract_Q uses a hint when the level is never crossed") {
  const double T = 3.1;
  auto s = sampled([T](double t) { return 0.7 + 0.2 * std::cos(2 * pi * t / T); }, 0, 8 * T, 2001);
  QOptions opt;
  opt.T_hint = 3.0;
  const auto q = extract_Q(s, opt);
  CHECK(std::abs(q.period / T - 1) < 1e-3);
  CHECK(q.residual < 1e-3);
}

TEST_CASE("Q extraction is idempotent") {
  const double T = 1.9;
  const auto s = sampled([T](double t) { return 0.5 + 0.45 * std::sin(2 * pi * t / T) + 0.04 * std::sin(4 * pi * t / T + 1); },
                         0.3, 0.3 + 7 * T, 3001);
  const auto q = extract_Q(s);
  const auto s2 = sampled([&q](double t) { return q(t); }, 0.3, 0.3 + 7 * T, 3001);
  const auto q2 = extract_Q(s2);
  CHECK(std::abs(q2.period - q.period) < 1e-6);
}

TEST_CASE("half crossings of sin^2 sit at T/4 + kT") {
  const double T = 2.0;
  const auto c = half_crossings(sin2(T, 5.0));
  REQUIRE(c.up.size() == 5);
  REQUIRE(c.down.size() == 5);
  CHECK_FALSE(c.starts_high);
  for (std::size_t k = 0; k < c.up.size(); ++k) {
    CHECK(std::abs(c.up[k] - (T / 4 + k * T)) < 1e-6);
    CHECK(std::abs(c.down[k] - (3 * T / 4 + k * T)) < 1e-6);
    CHECK(c.up[k] < c.down[k]);
    if (k + 1 < c.up.size()) CHECK(c.down[k] < c.up[k + 1]);
  }
}

TEST_CASE("half crossings fail when the level is never reached") {
  CHECK_THROWS_AS(half_crossings(sampled([](double t) { return 0.75 + 0.2 * std::sin(t); }, 0, 20, 400)),
                  AnalysisError);
}

TEST_CASE("a noisy plateau at one half yields one crossing per passage") {
  SplitMix64 rng(11);
  std::vector<double> noise(4000);
  for (auto& x : noise) x = 0.015 * (2 * rng.uniform() - 1);
  // ramps 0 -> 1/2 (plateau) -> 1 -> 1/2 (plateau) -> 0, twice
  auto shape = [](double t) {
    const double u = std::fmod(t, 10.0);
    if (u < 2) return 0.25 * u;
    if (u < 4) return 0.5;
    if (u < 5) return 0.5 + 0.5 * (u - 4);
    if (u < 6) return 1.0 - 0.5 * (u - 5);
    if (u < 8) return 0.5;
    return 0.5 - 0.25 * (u - 8);
  };
  IntensitySeries s;
  for (std::size_t k = 0; k < noise.size(); ++k) {
    const double t = 20.0 * k / (noise.size() - 1);
    s.t.push_back(t);
    s.y.push_back(shape(t) + noise[k]);
  }
  const auto c = half_crossings(s);
  CHECK(c.up.size() == 2);
  CHECK(c.down.size() == 2);
  for (std::size_t k = 0; k < c.up.size(); ++k) {
    CHECK(c.up[k] < c.down[k]);
    if (k + 1 < c.up.size()) CHECK(c.down[k] < c.up[k + 1]);
    // each crossing lies on its plateau or where the ramp is still inside the band
    CHECK(std::fmod(c.up[k], 10.0) >= 1.9);
    CHECK(std::fmod(c.up[k], 10.0) <= 4.04);
    CHECK(std::fmod(c.down[k], 10.0) >= 5.96);
    CHECK(std::fmod(c.down[k], 10.0) <= 8.08);
  }
}

TEST_CASE("bump check on full and capped oscillations") {
  const auto s = sin2(1.5, 6.0);
  const auto rep = bump_check(s, half_crossings(s), 0.01);
  CHECK(rep.passed);
  CHECK(rep.bumps.size() == 6);
  CHECK(rep.gaps.size() == 5);

  auto capped = s;
  for (auto& y : capped.y) y = std::min(y, 0.9);
  const auto bad = bump_check(capped, half_crossings(capped), 0.05);
  CHECK_FALSE(bad.passed);
  for (const auto& b : bad.bumps) {
    CHECK_FALSE(b.sup_ok);
    CHECK(b.sup == doctest::Approx(0.9));
  }
  for (const auto& g : bad.gaps) CHECK(g.inf_ok);
}

TEST_CASE("symbol times") {
  const double T = 2.0, delta = 0.5;  // unit 8
  const auto sym = symbol_times({1.0, 1.0 + 3.5 * 8, 1.0 + 3.5 * 8 + 2.25 * 8}, T, delta);
  REQUIRE(sym.m.size() == 2);
  CHECK(sym.m[0] == 3);
  CHECK(sym.theta[0] == doctest::Approx(0.5));
  CHECK(sym.m[1] == 2);
  CHECK(sym.theta[1] == doctest::Approx(0.25));
  for (double th : sym.theta) {
    CHECK(th > 0);
    CHECK(th < 1);
  }
  CHECK_THROWS_AS(symbol_times({1.0}, T, delta), AnalysisError);
}

TEST_CASE("single-tuple resonant beating is exactly periodic") {
  // H0 = K(1-K)(1+2cos psi) is conserved; the librating orbit around (0, 1/2) meets psi = 0 at
  // K(1-K) = H0/3, so 1-K ranges between the two roots
  const double psi0 = 1.0, K0 = 0.3;
  const double h = K0 * (1 - K0) * (1 + 2 * std::cos(psi0));
  const double r = std::sqrt(1 - 4 * h / 3);
  const double k_lo = (1 - r) / 2, k_hi = (1 + r) / 2;
  const auto s = circle_run(psi0, K0, 40.0, 0.005);
  const auto q = extract_Q(s);
  CHECK(q.residual < 1e-6);
  CHECK(q.periods >= 3);
  CHECK(q.q_min == doctest::Approx(1 - k_hi).epsilon(1e-5));
  CHECK(q.q_max == doctest::Approx(1 - k_lo).epsilon(1e-5));
}

TEST_CASE("return symbols separate for different distances to the separatrix") {
  std::vector<std::vector<long long>> ms;
  for (double K0 : {1e-3, 1e-5}) {
    const auto s = circle_run(pi, K0, 150.0, 0.01);
    const auto c = half_crossings(s);
    REQUIRE(c.up.size() >= 3);
    const auto rep = bump_check(s, c, 2 * K0 + 1e-4);
    CHECK(rep.passed);
    ms.push_back(symbol_times(c.up, 1.0, 1.0).m);
  }
  CHECK(ms[0].front() != ms[1].front());
  CHECK(ms[0].front() < ms[1].front());
}

TEST_CASE("planted itinerary 1,2,1 is recovered") {
  const auto grid = sampled([](double) { return 0.0; }, 0, 60, 6001).t;
  std::vector<IntensitySeries> s(2);
  for (auto& x : s) x.t = grid;
  for (double t : grid) {
    // tuple 1 beats on [0, 18] then fades out across the transition [18, 22]; tuple 2 rises inside it
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
  const auto it = activation_itinerary(s, {0.05, 1.0});
  CHECK(it.sequence() == std::vector<int>{1, 2, 1});
  REQUIRE(it.transitions.size() == 2);
  CHECK(it.transitions[0].from == 1);
  CHECK(it.transitions[0].to == 2);
  CHECK(it.transitions[1].from == 2);
  CHECK(it.transitions[1].to == 1);
  for (std::size_t p = 0; p < it.beating.size(); ++p) {
    CHECK(it.beating[p].alpha < it.beating[p].beta);
    if (p + 1 < it.beating.size()) CHECK(it.beating[p].beta < it.beating[p + 1].alpha);
  }
  // tuple 2 exceeds eps from t = 19.718, tuple 1 drops below it at t = 21.426
  CHECK(it.beating[0].beta == doctest::Approx(19.71));
  CHECK(it.beating[1].alpha == doctest::Approx(21.43));
  CHECK(it.valid);
}

TEST_CASE("all-quiet series give an empty itinerary") {
  std::vector<IntensitySeries> s(3, sampled([](double t) { return 0.01 * std::sin(t) * std::sin(t); }, 0, 10, 101));
  const auto it = activation_itinerary(s);
  CHECK(it.beating.empty());
  CHECK(it.transitions.empty());
  CHECK(it.sequence().empty());
}

TEST_CASE("itinerary input errors") {
  auto a = sampled([](double) { return 0.0; }, 0, 1, 11);
  auto b = sampled([](double) { return 0.0; }, 0, 2, 11);
  CHECK_THROWS_AS(activation_itinerary({a, b}), AnalysisError);
  CHECK_THROWS_AS(activation_itinerary({}), AnalysisError);
  auto c = a;
  c.norm.delta = 0.1;
  CHECK_THROWS_AS(activation_itinerary({a, c}), AnalysisError);
  // permanent overlap: no partition at all
  auto on = sampled([](double) { return 0.6; }, 0, 1, 11);
  CHECK_THROWS_AS(activation_itinerary({on, on}), AnalysisError);
}

TEST_CASE("chain shadowing runs read back through the itinerary detector") {
  // tuple r's n1 intensity, normalized by M/2, is 1 - K_r; the detector threshold matches the
  // visit neighbourhood
  const auto c = sample_coefficients(2, 0.01, 7);
  const double nbhd = 0.1;
  for (const auto& want : {std::vector<int>{1, 2}, std::vector<int>{1, 2, 1}}) {
    const auto run = chain_shadowing_run(c, want, nbhd);
    REQUIRE(run.success);
    std::vector<IntensitySeries> s(2);
    for (int r = 0; r < 2; ++r) {
      s[r].t = run.trajectory.t;
      for (const auto& st : run.trajectory.states) s[r].y.push_back(1 - st.K[r]);
    }
    const auto it = activation_itinerary(s, {nbhd, 1.0});
    std::vector<int> got;
    for (double v : run.visit_times)
      for (const auto& b : it.beating)
        if (b.alpha <= v && v <= b.beta) got.push_back(b.tuple);
    CHECK(got == want);
  }
}

TEST_CASE("scaling fit") {
  std::vector<std::pair<double, double>> pairs;
  for (double d : {0.01, 0.02, 0.04, 0.08}) pairs.emplace_back(d, 3.0 * std::pow(d, 1.5));
  const auto f = scaling_fit(pairs);
  CHECK(std::abs(f.exponent - 1.5) < 1e-6);
  CHECK(f.intercept == doctest::Approx(std::log(3.0)));
  CHECK(f.max_residual < 1e-9);

  for (auto& p : pairs) p.second = 0.2;
  CHECK(std::abs(scaling_fit(pairs).exponent) < 1e-12);

  CHECK_THROWS_AS(scaling_fit({{0.01, 1.0}, {0.02, 1.0}, {0.04, 0.0}}), AnalysisError);
  CHECK_THROWS_AS(scaling_fit({{0.01, 1.0}, {0.02, 1.0}}), AnalysisError);
  CHECK_THROWS_AS(scaling_fit({{0.01, 1.0}, {0.015, 1.0}, {0.02, 1.0}}), AnalysisError);
}

TEST_CASE("scaling fit reports a confidence width for noisy data") {
  const auto f = scaling_fit({{0.01, 1.1e-3}, {0.02, 2.7e-3}, {0.04, 8.3e-3}, {0.08, 2.2e-2}});
  CHECK(f.exponent > 1.0);
  CHECK(f.exponent < 2.0);
  CHECK(f.half_width > 0);
  CHECK(f.half_width > f.std_error);
}
