#pragma once

#include <array>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "reslab/hartree_potential.hpp"
#include "reslab/lattice.hpp"
#include "reslab/ode.hpp"

namespace reslab {

/// Amplitudes a_n indexed like LambdaSet::modes(): tuple r owns entries [4r, 4r+4).
using ComplexModeState = std::vector<std::complex<double>>;

/// Coefficient of a_{n1} conj(a_{n2}) a_{n3} conj(a_{n4}), indices into the mode list.
struct Monomial {
  std::array<int, 4> index{};
  double coeff = 0.0;
};

struct ResonantHamiltonian {
  Model model = Model::beam;
  std::vector<ModeVector> modes;
  std::vector<double> omega;
  int tuples = 0;
  std::vector<Monomial> monomials;  // every ordered resonant quadruple in Lambda^4
  double sign = 1.0;                // +1 defocusing, -1 focusing
  /// Normal coordinates a = (w^{1/2} u + i w^{-1/2} v)/sqrt2 for wave/beam; u = sum a e^{inx} for hartree.
  std::string convention;

  int size() const { return static_cast<int>(modes.size()); }
};

/// Quartic weights: sign * 3/8 * prod omega^{-1/2} for wave/beam (from the u^4/4 potential),
/// 1/2 V_{n1-n2} for hartree.
ResonantHamiltonian build_resonant_hamiltonian(const LambdaSet& lambda,
                                               const std::optional<HartreePotential>& potential = std::nullopt,
                                               double sign = 1.0);

/// Quartic part, plus sum omega |a|^2 when include_quadratic.
double resonant_energy(const ComplexModeState& a, const ResonantHamiltonian& H, bool include_quadratic = false);
/// dH/d conj(a_n), so that i da/dt equals it.
ComplexModeState resonant_gradient(const ComplexModeState& a, const ResonantHamiltonian& H, bool include_quadratic = false);

struct ResonantOptions {
  double tol = 1e-12;
  bool rotating_frame = true;  // drop the quadratic part (intensities are unaffected)
  double sample_dt = 0.0;      // 0 records every accepted step
  double max_step = 0.25;
};

struct ResonantTrajectory {
  std::vector<double> t;
  std::vector<ComplexModeState> states;
  bool rotating_frame = true;
  ode::Status status = ode::Status::completed;
  double energy_drift = 0.0;

  bool ok() const { return status == ode::Status::completed; }
};

ResonantTrajectory evolve_resonant(const ComplexModeState& a0, const ResonantHamiltonian& H, double t_end,
                                   const ResonantOptions& opt = {});

/// [H, M_1..M_N, P_x, P_y] with M_r the mass of tuple r and P = sum n |a_n|^2.
std::vector<double> first_integrals(const ComplexModeState& a, const ResonantHamiltonian& H,
                                    bool include_quadratic = false);

struct IntensityReport {
  std::vector<double> intensities;      // |a_n|^2 in mode order
  std::vector<double> relation_error;   // per tuple: max deviation of the three relations
  std::vector<bool> relations_hold;     // per tuple, within the tolerance
};

/// Checks |a1|^2 = |a3|^2, |a2|^2 = |a4|^2 and |a1|^2 + |a2|^2 = M_r / 2 per tuple.
IntensityReport tuple_intensities(const ComplexModeState& a, int tuples, double tol = 1e-8);

struct ActionAngle {
  double psi = 0.0;  // arg(a1 a3 conj(a2 a4)) in [0, 2pi)
  double K = 0.0;    // (|a2|^2 + |a4|^2) / M_r
};

/// Throws when the tuple mass is below 1e-12 or its relations fail beyond tol.
ActionAngle reduce_to_action_angle(const ComplexModeState& a, int tuple_index, double tol = 1e-6);

}  // namespace reslab
