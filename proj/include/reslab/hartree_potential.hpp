#pragma once

#include <cstdint>
#include <map>

#include "reslab/lattice.hpp"

namespace reslab {

/// Fourier coefficients of a real even convolution potential: V_j = 1 + eps * gamma_j on the
/// difference set {n1 - n2 : n1, n2 in Lambda}, a constant background elsewhere.
class HartreePotential {
 public:
  HartreePotential() = default;
  /// gamma must be even (gamma_j = gamma_{-j}); throws otherwise.
  HartreePotential(double eps, std::map<ModeVector, double> gamma, double background = 1.0);

  /// gamma_j uniform in [-1, 1] from SplitMix64(seed), drawn for the lexicographically larger of
  /// each pair {j, -j} in increasing order and mirrored.
  static HartreePotential sampled(const LambdaSet& lambda, double eps, std::uint64_t seed, double background = 1.0);
  /// V identically equal to `value` (eps = 0, empty gamma).
  static HartreePotential constant(double value);

  double value(const ModeVector& j) const;
  double eps() const { return eps_; }
  double background() const { return background_; }
  const std::map<ModeVector, double>& gamma() const { return gamma_; }

 private:
  double eps_ = 0.0;
  double background_ = 1.0;
  std::map<ModeVector, double> gamma_;
};

std::map<ModeVector, double> difference_set_zero(const LambdaSet& lambda);

}  // namespace reslab
