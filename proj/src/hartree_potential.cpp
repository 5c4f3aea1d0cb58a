#include "reslab/hartree_potential.hpp"

#include <stdexcept>

#include "reslab/rng.hpp"

namespace reslab {

HartreePotential::HartreePotential(double eps, std::map<ModeVector, double> gamma, double background)
    : eps_(eps), background_(background), gamma_(std::move(gamma)) {
  for (const auto& [j, g] : gamma_) {
    const auto it = gamma_.find(-j);
    if (it == gamma_.end() || it->second != g)
      throw std::invalid_argument("hartree potential: gamma must satisfy gamma_j = gamma_{-j}");
  }
}

std::map<ModeVector, double> difference_set_zero(const LambdaSet& lambda) {
  std::map<ModeVector, double> out;
  const auto modes = lambda.modes();
  for (const auto& p : modes)
    for (const auto& q : modes) out.emplace(p - q, 0.0);
  return out;
}

HartreePotential HartreePotential::sampled(const LambdaSet& lambda, double eps, std::uint64_t seed, double background) {
  auto gamma = difference_set_zero(lambda);
  SplitMix64 rng(seed);
  for (auto& [j, g] : gamma) {
    if (j < -j) continue;
    g = rng.uniform(-1.0, 1.0);
    gamma[-j] = g;
  }
  return HartreePotential(eps, std::move(gamma), background);
}

HartreePotential HartreePotential::constant(double value) { return HartreePotential(0.0, {}, value); }

double HartreePotential::value(const ModeVector& j) const {
  const auto it = gamma_.find(j);
  if (it == gamma_.end()) return background_;
  return 1.0 + eps_ * it->second;
}

}  // namespace reslab
