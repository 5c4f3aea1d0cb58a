#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace reslab {

/// Splits n >= 0 as n = m^2 * s with s squarefree. Returns {m, s}; n = 0 gives {0, 1}.
std::pair<std::int64_t, std::int64_t> squarefree_decompose(std::int64_t n);

/// Exact finite sum  sum_i k_i sqrt(s_i)  with distinct squarefree s_i > 0 and nonzero k_i.
///
/// Square roots of distinct squarefree integers are linearly independent over Q, so two
/// values are equal iff their canonical term maps are identical. This is what makes
/// resonance of irrational (wave) frequencies decidable without a tolerance.
class SqrtSum {
 public:
  using Terms = std::map<std::int64_t, std::int64_t>;

  SqrtSum() = default;

  /// sqrt(n) for n >= 0, already in canonical form.
  static SqrtSum sqrt_of(std::int64_t n);
  static SqrtSum integer(std::int64_t k);

  SqrtSum& operator+=(const SqrtSum& rhs);
  SqrtSum& operator-=(const SqrtSum& rhs);
  SqrtSum operator-() const;
  friend SqrtSum operator+(SqrtSum lhs, const SqrtSum& rhs) { return lhs += rhs; }
  friend SqrtSum operator-(SqrtSum lhs, const SqrtSum& rhs) { return lhs -= rhs; }
  SqrtSum scaled(std::int64_t k) const;

  bool is_zero() const { return terms_.empty(); }
  double value() const;
  const Terms& terms() const { return terms_; }

  /// "3*sqrt(2) + 5" style rendering; "0" when empty.
  std::string to_string() const;

  friend bool operator==(const SqrtSum&, const SqrtSum&) = default;
  friend auto operator<=>(const SqrtSum& a, const SqrtSum& b) { return a.terms_ <=> b.terms_; }

 private:
  void add_term(std::int64_t squarefree, std::int64_t coeff);
  Terms terms_;
};

/// True iff the two sums denote the same real number.
inline bool sqrt_sum_equal(const SqrtSum& lhs, const SqrtSum& rhs) { return lhs == rhs; }

}  // namespace reslab
