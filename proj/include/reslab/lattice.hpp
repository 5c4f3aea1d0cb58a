#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reslab/sqrt_sum.hpp"

namespace reslab {

enum class Model { wave, beam, hartree };

std::string_view to_string(Model m);
Model model_from_string(std::string_view name);

/// Integer lattice point j = (j1, j2) in Z^2.
struct ModeVector {
  std::int64_t j1 = 0;
  std::int64_t j2 = 0;

  std::int64_t norm2() const { return j1 * j1 + j2 * j2; }
  std::int64_t sup_norm() const;
  /// Membership in Z^2_odd: first component odd, second even.
  bool is_odd() const { return (j1 % 2 != 0) && (j2 % 2 == 0); }

  ModeVector operator+(const ModeVector& o) const { return {j1 + o.j1, j2 + o.j2}; }
  ModeVector operator-(const ModeVector& o) const { return {j1 - o.j1, j2 - o.j2}; }
  ModeVector operator-() const { return {-j1, -j2}; }
  ModeVector operator*(std::int64_t k) const { return {k * j1, k * j2}; }
  auto operator<=>(const ModeVector&) const = default;
};

std::string to_string(const ModeVector& v);

/// Linear frequency omega(j): |j| for wave (exact as a SqrtSum), |j|^2 for beam/hartree.
struct Frequency {
  SqrtSum exact;
  double approx = 0.0;
};

Frequency frequency(const ModeVector& j, Model model);
double frequency_value(const ModeVector& j, Model model);

/// Modes admissible for a model: Z^2_odd for wave/beam, all of Z^2 for hartree.
bool in_ambient_set(const ModeVector& j, Model model);

using Quad = std::array<ModeVector, 4>;

/// Ellipse on which a wave tuple is inscribed: foci 0 and n1+n3, major axis |n1|+|n3|.
struct Ellipse {
  ModeVector focus1;
  ModeVector focus2;
  SqrtSum major_axis;  // 2a, exact
  double semi_major = 0.0;
};

struct ResonantTuple {
  Quad modes;
  Model model = Model::beam;
  bool degenerate = false;

  const ModeVector& operator[](std::size_t i) const { return modes[i]; }
};

bool momentum_resonant(const Quad& q);
/// sum sigma_i omega(n_i) = 0 with sigma = (+,-,+,-), decided exactly.
bool frequency_resonant(const Quad& q, Model model);
/// Collinear vertices or {n1,n3} = {n2,n4} as multisets.
bool is_degenerate(const Quad& q);
bool pairwise_distinct(const Quad& q);

/// Lexicographically smallest image of q under the dihedral relabelings of the 4-cycle
/// n1-n2-n3-n4 (these preserve the alternating sign pattern).
Quad normalize_tuple(const Quad& q);

/// Validates momentum/frequency resonance exactly and builds the tuple; throws on failure.
ResonantTuple make_resonant_tuple(const Quad& q, Model model);

Ellipse wave_ellipse(const ResonantTuple& t);

struct Annulus {
  double radius = 0.0;
  double eps = 0.0;
  bool contains(const ModeVector& n) const;
};

/// All non-degenerate resonant tuples with |j|_inf <= box in the model's ambient set,
/// one representative per symmetry class (normal form), sorted.
/// `threads` only partitions the work; the result does not depend on it.
std::vector<ResonantTuple> enumerate_tuples(Model model, int box,
                                            std::optional<Annulus> annulus = std::nullopt,
                                            int threads = 1);
std::vector<ResonantTuple> enumerate_beam_tuples(int box, std::optional<Annulus> annulus = std::nullopt);
std::vector<ResonantTuple> enumerate_wave_tuples(int box, std::optional<Annulus> annulus = std::nullopt);
std::vector<ResonantTuple> enumerate_hartree_tuples(int box, std::optional<Annulus> annulus = std::nullopt);

/// A resonant quartic monomial supported on exactly one mode outside Lambda.
struct H41Violation {
  Quad modes;  // j1, j2, j3 in Lambda; j4 outside
  std::array<int, 4> signs{};
};

/// Scans every (j1,j2,j3) in Lambda^3 and sigma in {+-1}^4, solves sum sigma_i j_i = 0 for j4
/// and reports the choices where j4 is an admissible mode outside Lambda with exact
/// frequency resonance. An empty result means H^(4,1) = 0.
std::vector<H41Violation> check_h41(std::span<const ModeVector> lambda_modes, Model model);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct LambdaSet {
  std::vector<ResonantTuple> tuples;
  Model model = Model::beam;
  std::optional<Annulus> annulus;
  std::vector<CheckResult> certificate;
  std::vector<H41Violation> h41_violations;

  std::size_t size() const { return tuples.size(); }
  /// Modes flattened in tuple order: tuple r occupies [4r, 4r+4).
  std::vector<ModeVector> modes() const;
  bool certificate_passed() const;
  const CheckResult* check(std::string_view name) const;
};

/// Hook for extra genericity predicates recorded alongside the built-in checks.
using ExtraCheck = std::function<CheckResult(const LambdaSet&)>;

/// Hard-fails (std::invalid_argument) on empty input, mixed models, or tuples that are not
/// exactly resonant; every other property is recorded in the certificate.
LambdaSet validate_lambda(std::vector<ResonantTuple> tuples,
                          std::optional<Annulus> annulus = std::nullopt,
                          std::span<const ExtraCheck> extra_checks = {});

/// Resonant quartic monomials (n1,n2,n3,n4) in Lambda^4 that are not of the product form
/// |a_p|^2 |a_q|^2 and touch more than one tuple.
std::vector<Quad> cross_tuple_exchanges(const LambdaSet& lambda);

}  // namespace reslab
