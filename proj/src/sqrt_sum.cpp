#include "reslab/sqrt_sum.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace reslab {

std::pair<std::int64_t, std::int64_t> squarefree_decompose(std::int64_t n) {
  if (n < 0) throw std::invalid_argument("squarefree_decompose: negative argument");
  if (n == 0) return {0, 1};
  std::int64_t square_part = 1;
  std::int64_t free_part = 1;
  std::int64_t rest = n;
  for (std::int64_t p = 2; p * p <= rest; p += (p == 2 ? 1 : 2)) {
    int mult = 0;
    while (rest % p == 0) {
      rest /= p;
      ++mult;
    }
    for (int i = 0; i + 1 < mult; i += 2) square_part *= p;
    if (mult % 2 == 1) free_part *= p;
  }
  free_part *= rest;  // leftover is 1 or a prime
  return {square_part, free_part};
}

SqrtSum SqrtSum::sqrt_of(std::int64_t n) {
  SqrtSum out;
  auto [m, s] = squarefree_decompose(n);
  out.add_term(s, m);
  return out;
}

SqrtSum SqrtSum::integer(std::int64_t k) {
  SqrtSum out;
  out.add_term(1, k);
  return out;
}

void SqrtSum::add_term(std::int64_t squarefree, std::int64_t coeff) {
  if (coeff == 0) return;
  auto [it, inserted] = terms_.try_emplace(squarefree, coeff);
  if (!inserted) {
    it->second += coeff;
    if (it->second == 0) terms_.erase(it);
  }
}

SqrtSum& SqrtSum::operator+=(const SqrtSum& rhs) {
  for (auto [s, k] : rhs.terms_) add_term(s, k);
  return *this;
}

SqrtSum& SqrtSum::operator-=(const SqrtSum& rhs) {
  for (auto [s, k] : rhs.terms_) add_term(s, -k);
  return *this;
}

SqrtSum SqrtSum::operator-() const { return scaled(-1); }

SqrtSum SqrtSum::scaled(std::int64_t k) const {
  SqrtSum out;
  if (k == 0) return out;
  for (auto [s, c] : terms_) out.terms_.emplace(s, c * k);
  return out;
}

double SqrtSum::value() const {
  double sum = 0.0;
  for (auto [s, k] : terms_) sum += static_cast<double>(k) * std::sqrt(static_cast<double>(s));
  return sum;
}

std::string SqrtSum::to_string() const {
  if (terms_.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (auto [s, k] : terms_) {
    if (!first) os << (k < 0 ? " - " : " + ");
    else if (k < 0) os << "-";
    first = false;
    const auto mag = k < 0 ? -k : k;
    if (s == 1) {
      os << mag;
    } else {
      if (mag != 1) os << mag << "*";
      os << "sqrt(" << s << ")";
    }
  }
  return os.str();
}

}  // namespace reslab
