#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "reslab/lattice.hpp"

using namespace reslab;

namespace {
const Quad kBeamRect{ModeVector{1, 0}, {1, 2}, {-1, 2}, {-1, 0}};
const Quad kWaveTuple{ModeVector{3, 4}, {5, 0}, {9, 2}, {7, 6}};
// a parallelogram that is not a rectangle: momentum balanced, not beam resonant
const Quad kSkew{ModeVector{1, 0}, {3, 2}, {5, 2}, {3, 0}};

bool contains_class(const std::vector<ResonantTuple>& ts, const Quad& q) {
  const auto want = oracle::tuple_class(q);
  for (const auto& t : ts)
    if (oracle::tuple_class(t.modes) == want) return true;
  return false;
}
}  // namespace

TEST_CASE("squarefree decomposition") {
  CHECK(squarefree_decompose(85) == std::pair<std::int64_t, std::int64_t>{1, 85});
  CHECK(squarefree_decompose(72) == std::pair<std::int64_t, std::int64_t>{6, 2});
  CHECK(squarefree_decompose(25) == std::pair<std::int64_t, std::int64_t>{5, 1});
  CHECK(squarefree_decompose(1) == std::pair<std::int64_t, std::int64_t>{1, 1});
  CHECK_THROWS_AS(squarefree_decompose(-3), std::invalid_argument);
}

TEST_CASE("frequency") {
  const auto f = frequency({3, 4}, Model::wave);
  CHECK(f.exact == SqrtSum::integer(5));
  CHECK(f.approx == doctest::Approx(5.0));
  CHECK(frequency({1, 2}, Model::beam).exact == SqrtSum::integer(5));
  const auto g = frequency({9, 2}, Model::wave);
  CHECK(g.exact.terms() == SqrtSum::Terms{{85, 1}});
  CHECK(g.approx == doctest::Approx(9.2195).epsilon(1e-4));
}

TEST_CASE("sqrt_sum_equal") {
  CHECK(sqrt_sum_equal(SqrtSum::sqrt_of(8) + SqrtSum::sqrt_of(2), SqrtSum::sqrt_of(2).scaled(3)));
  CHECK(sqrt_sum_equal(SqrtSum::sqrt_of(5) + SqrtSum::sqrt_of(5), SqrtSum::sqrt_of(20)));
  CHECK_FALSE(sqrt_sum_equal(SqrtSum::integer(5) + SqrtSum::sqrt_of(85), SqrtSum::integer(5) + SqrtSum::sqrt_of(86)));
  CHECK((SqrtSum::sqrt_of(7) - SqrtSum::sqrt_of(7)).is_zero());
  CHECK(SqrtSum::sqrt_of(12).to_string() == "2*sqrt(3)");
}

TEST_CASE("sqrt_sum_equal agrees with floating comparison on random sums") {
  std::mt19937_64 rng(20261015);
  std::uniform_int_distribution<std::int64_t> coord(-700000, 700000);
  int planted = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::array<ModeVector, 4> n;
    for (auto& v : n) v = {coord(rng), coord(rng)};
    if (trial % 4 == 0) {  // plant an equality by permuting a sum
      n[2] = {n[1].j2, n[1].j1};
      n[3] = {-n[0].j1, n[0].j2};
      ++planted;
    }
    const auto lhs = SqrtSum::sqrt_of(n[0].norm2()) + SqrtSum::sqrt_of(n[1].norm2());
    const auto rhs = SqrtSum::sqrt_of(n[2].norm2()) + SqrtSum::sqrt_of(n[3].norm2());
    const bool exact = sqrt_sum_equal(lhs, rhs);
    const double diff = std::abs(lhs.value() - rhs.value());
    const bool approx = diff <= 1e-9 * std::max(1.0, lhs.value());
    CHECK(exact == approx);
  }
  CHECK(planted == 250);
}

TEST_CASE("tuple predicates and normal form") {
  CHECK(momentum_resonant(kBeamRect));
  CHECK(frequency_resonant(kBeamRect, Model::beam));
  CHECK_FALSE(is_degenerate(kBeamRect));
  CHECK(momentum_resonant(kWaveTuple));
  CHECK(frequency_resonant(kWaveTuple, Model::wave));
  CHECK(frequency_resonant(kWaveTuple, Model::beam));  // it is also a rectangle
  CHECK(momentum_resonant(kSkew));
  CHECK_FALSE(frequency_resonant(kSkew, Model::beam));
  CHECK_FALSE(frequency_resonant(kSkew, Model::wave));

  const Quad flat{ModeVector{1, 0}, {3, 0}, {5, 0}, {3, 0}};
  CHECK(is_degenerate(flat));
  const Quad swapped{ModeVector{1, 0}, {1, 2}, {1, 2}, {1, 0}};
  CHECK(is_degenerate(swapped));

  const auto nf = normalize_tuple(kBeamRect);
  const Quad rotated{kBeamRect[1], kBeamRect[2], kBeamRect[3], kBeamRect[0]};
  const Quad reflected{kBeamRect[0], kBeamRect[3], kBeamRect[2], kBeamRect[1]};
  CHECK(normalize_tuple(rotated) == nf);
  CHECK(normalize_tuple(reflected) == nf);
  CHECK(momentum_resonant(nf));
}

TEST_CASE("make_resonant_tuple rejects non-resonant quadruples") {
  CHECK_THROWS_AS(make_resonant_tuple({ModeVector{1, 0}, {1, 2}, {3, 2}, {-1, 0}}, Model::beam), std::invalid_argument);
  CHECK_THROWS_AS(make_resonant_tuple(kSkew, Model::beam), std::invalid_argument);
  CHECK_THROWS_AS(make_resonant_tuple(kSkew, Model::wave), std::invalid_argument);
}

TEST_CASE("enumerate_beam_tuples matches brute force") {
  for (int box = 1; box <= 4; ++box) {
    const auto got = enumerate_beam_tuples(box);
    CHECK(oracle::classes_of(got) == oracle::brute_force_tuples(Model::beam, box));
    CHECK(got.size() == oracle::classes_of(got).size());
    for (const auto& t : got) {
      CHECK(momentum_resonant(t.modes));
      CHECK(frequency_resonant(t.modes, Model::beam));
      for (const auto& m : t.modes) CHECK(m.is_odd());
    }
  }
  CHECK(contains_class(enumerate_beam_tuples(3), kBeamRect));
  for (const auto& t : enumerate_beam_tuples(1))
    for (const auto& m : t.modes) CHECK(m != ModeVector{0, 0});
  CHECK(enumerate_beam_tuples(3, Annulus{10.0, 0.01}).empty());
}

TEST_CASE("enumerate_wave_tuples matches brute force") {
  for (int box = 1; box <= 6; ++box) {
    const auto got = enumerate_wave_tuples(box);
    CHECK(oracle::classes_of(got) == oracle::brute_force_tuples(Model::wave, box));
    for (const auto& t : got) CHECK(frequency_resonant(t.modes, Model::wave));
  }
  // box 2 holds the symmetric rectangle, which is also wave resonant (1 - sqrt5 + sqrt5 - 1 = 0)
  const auto small = enumerate_wave_tuples(2);
  CHECK(small.size() == oracle::brute_force_tuples(Model::wave, 2).size());
  CHECK(contains_class(small, kBeamRect));
}

TEST_CASE("wave tuple in box 9 and its ellipse") {
  const auto tuples = enumerate_wave_tuples(9);
  CHECK(contains_class(tuples, kWaveTuple));
  const auto t = make_resonant_tuple(kWaveTuple, Model::wave);
  const auto e = wave_ellipse(t);
  CHECK(e.focus1 == ModeVector{0, 0});
  CHECK(e.focus2 == ModeVector{12, 6});
  CHECK(e.major_axis == SqrtSum::integer(5) + SqrtSum::sqrt_of(85));
  CHECK(e.semi_major == doctest::Approx((5 + std::sqrt(85.0)) / 2));
  // swapping n1 <-> n3 leaves the ellipse unchanged
  const auto e2 = wave_ellipse(make_resonant_tuple({kWaveTuple[2], kWaveTuple[1], kWaveTuple[0], kWaveTuple[3]}, Model::wave));
  CHECK(e2.focus2 == e.focus2);
  CHECK(e2.major_axis == e.major_axis);
  // every vertex lies on the ellipse: |n| + |n - F2| = 2a
  for (const auto& n : kWaveTuple) {
    const double sum = std::sqrt(double(n.norm2())) + std::sqrt(double((n - e.focus2).norm2()));
    CHECK(sum == doctest::Approx(e.major_axis.value()).epsilon(1e-12));
  }
}

TEST_CASE("enumeration does not depend on worker count") {
  CHECK(enumerate_tuples(Model::wave, 7, std::nullopt, 1).size() == enumerate_tuples(Model::wave, 7, std::nullopt, 3).size());
  const auto a = enumerate_tuples(Model::beam, 5, std::nullopt, 1);
  const auto b = enumerate_tuples(Model::beam, 5, std::nullopt, 4);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].modes == b[i].modes);
}

TEST_CASE("hartree tuples live in all of Z^2") {
  const auto tuples = enumerate_hartree_tuples(2);
  CHECK(oracle::classes_of(tuples) == oracle::brute_force_tuples(Model::hartree, 2));
  bool has_even_first = false;
  for (const auto& t : tuples)
    for (const auto& m : t.modes) has_even_first |= (m.j1 % 2 == 0);
  CHECK(has_even_first);
}

TEST_CASE("check_h41 against direct scan") {
  const std::vector<ModeVector> lambda(kBeamRect.begin(), kBeamRect.end());
  const auto got = check_h41(lambda, Model::beam);
  std::set<oracle::H41Entry> got_set;
  for (const auto& v : got) got_set.insert({v.modes, v.signs});
  CHECK(got_set.size() == got.size());
  CHECK(got_set == oracle::brute_force_h41(lambda, Model::beam));

  // (+,-,+,-) with three equal modes forces j4 = j1, which is in Lambda
  for (const auto& v : got) {
    const bool all_equal = v.modes[0] == v.modes[1] && v.modes[1] == v.modes[2];
    if (all_equal) CHECK(v.signs != std::array<int, 4>{1, -1, 1, -1});
  }
}

TEST_CASE("check_h41 wave tuple against direct scan") {
  const std::vector<ModeVector> lambda(kWaveTuple.begin(), kWaveTuple.end());
  const auto got = check_h41(lambda, Model::wave);
  std::set<oracle::H41Entry> got_set;
  for (const auto& v : got) got_set.insert({v.modes, v.signs});
  CHECK(got_set == oracle::brute_force_h41(lambda, Model::wave));
  // the wave frequency is homogeneous of degree one, so j+j+j-3j always resonates
  CHECK(got_set.contains(oracle::H41Entry{{kWaveTuple[0], kWaveTuple[0], kWaveTuple[0], {9, 12}}, {1, 1, 1, -1}}));
}

TEST_CASE("validate_lambda") {
  const auto tuples = enumerate_beam_tuples(5);
  // pick two disjoint rectangles
  std::vector<ResonantTuple> pick;
  for (const auto& t : tuples) {
    bool clash = false;
    for (const auto& p : pick)
      for (const auto& m : p.modes)
        for (const auto& n : t.modes) clash |= (m == n);
    if (!clash) pick.push_back(t);
    if (pick.size() == 2) break;
  }
  REQUIRE(pick.size() == 2);
  const auto lam = validate_lambda(pick);
  CHECK(lam.size() == 2);
  CHECK(lam.check("pairwise_disjoint")->passed);
  CHECK(lam.check("parity")->passed);
  CHECK(lam.check("non_degenerate")->passed);
  REQUIRE(lam.check("h41") != nullptr);
  CHECK(lam.check("h41")->passed == lam.h41_violations.empty());
  CHECK(lam.check("no_cross_tuple_exchange") != nullptr);
  CHECK(lam.check("annulus") == nullptr);

  const auto twice = validate_lambda({pick[0], pick[0]});
  CHECK_FALSE(twice.check("pairwise_disjoint")->passed);
  CHECK_FALSE(twice.certificate_passed());

  ResonantTuple bad{{ModeVector{1, 0}, {1, 2}, {3, 2}, {-1, 0}}, Model::beam, false};
  CHECK_THROWS_AS(validate_lambda({bad}), std::invalid_argument);
  ResonantTuple wave_one = make_resonant_tuple(kWaveTuple, Model::wave);
  CHECK_THROWS_AS(validate_lambda({pick[0], wave_one}), std::invalid_argument);
  CHECK_THROWS_AS(validate_lambda({}), std::invalid_argument);

  const auto with_annulus = validate_lambda({pick[0]}, Annulus{100.0, 0.01});
  CHECK_FALSE(with_annulus.check("annulus")->passed);

  const ExtraCheck custom = [](const LambdaSet& l) { return CheckResult{"custom", l.size() == 1, "one tuple"}; };
  const auto hooked = validate_lambda({pick[0]}, std::nullopt, std::span(&custom, 1));
  CHECK(hooked.check("custom")->passed);
}
