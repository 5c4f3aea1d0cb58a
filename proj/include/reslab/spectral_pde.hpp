#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "reslab/hartree_potential.hpp"
#include "reslab/lattice.hpp"
#include "reslab/resonant_model.hpp"

namespace reslab {

using cplx = std::complex<double>;

struct PdeOptions {
  int J = 0;                     // spectral truncation |j|_inf <= J; 0 selects 4 max|n|_inf over Lambda
  double dt = 0.0;               // 0 selects 2pi / (20 omega_max)
  double sign = 1.0;             // +1 defocusing (+u^3, +V*|u|^2 u), -1 focusing
  bool hartree_literal = true;   // i u_t = Lap u + N; false gives i u_t = -Lap u + N
};

struct InitialDataSpec {
  LambdaSet lambda;
  double delta = 0.0;
  ComplexModeState a0;            // one amplitude per Lambda mode, |a_n| <= 1
  double background = 0.0;        // optional noise on the other modes, relative to delta
  std::uint64_t background_seed = 0;

  /// 1 for wave, 2 for beam; 0 for hartree.
  int kappa() const;
};

int default_truncation(const LambdaSet& lambda);
double default_time_step(Model model, int J);

struct FftWorkspace;

/// Spectral state on T^2 = [0, 2pi)^2 with the normalized measure dx/(4pi^2), so u = sum u_j e^{ij.x}.
///
/// Wave/beam keep u_j, v_j (v = u_t) for |j|_inf <= J in the half-complex layout of a real transform
/// on a P x P grid, P = 4(J+1), which makes every cubic product alias-free. Hartree keeps the
/// complex u_j on the whole P x P grid.
class SpectralField {
 public:
  SpectralField(Model model, int J, const PdeOptions& opt = {});
  SpectralField(const SpectralField& other);
  SpectralField& operator=(const SpectralField& other);
  SpectralField(SpectralField&&) noexcept;
  SpectralField& operator=(SpectralField&&) noexcept;
  ~SpectralField();

  Model model() const { return model_; }
  int truncation() const { return J_; }
  int grid() const { return P_; }
  const PdeOptions& options() const { return opt_; }

  bool contains(const ModeVector& j) const;
  cplx u_hat(const ModeVector& j) const;
  cplx v_hat(const ModeVector& j) const;
  /// Wave/beam: also sets the mirror -j to the conjugate.
  void set_u_hat(const ModeVector& j, cplx value);
  void set_v_hat(const ModeVector& j, cplx value);

  /// (omega^{1/2} u_j + i omega^{-1/2} v_j)/sqrt2 for wave/beam (j != 0), u_j for hartree.
  cplx normal_variable(const ModeVector& j) const;

  /// u on the P x P grid, row-major with the first index along x1.
  std::vector<double> physical_real() const;
  std::vector<cplx> physical_complex() const;
  /// max |u_j - conj(u_{-j})| (and the same for v); zero for hartree.
  double reality_defect() const;

  /// Wavenumbers carried by the field (wave/beam: the full |j|_inf <= J square).
  std::vector<ModeVector> modes() const;

  void set_potential(const HartreePotential& V);
  const std::optional<HartreePotential>& potential() const { return V_; }

 private:
  friend void step_wave(SpectralField&, double);
  friend void step_beam(SpectralField&, double);
  friend void step_hartree(SpectralField&, double, const HartreePotential&);
  friend void hartree_nonlinear_substep(SpectralField&, double);
  friend double energy(const SpectralField&);

  std::size_t half_index(const ModeVector& j, bool& conjugate) const;
  std::size_t full_index(const ModeVector& j) const;
  void linear_real(double h);
  void kick_real(double dt);
  void to_physical_complex(std::vector<cplx>& out) const;
  void linear_hartree(double h);

  Model model_;
  int J_;
  int P_;
  PdeOptions opt_;
  std::vector<cplx> u_;  // half layout P x (P/2+1) for wave/beam, full P x P for hartree
  std::vector<cplx> v_;
  std::vector<double> Vgrid_;
  std::optional<HartreePotential> V_;
  std::unique_ptr<FftWorkspace> ws_;
};

SpectralField build_initial_data(const InitialDataSpec& spec, const PdeOptions& opt = {},
                                 const std::optional<HartreePotential>& V = std::nullopt);

void step_wave(SpectralField& f, double dt);
void step_beam(SpectralField& f, double dt);
void step_hartree(SpectralField& f, double dt, const HartreePotential& V);
/// Dispatches on the model; hartree uses the stored potential.
void step(SpectralField& f, double dt);
/// u <- exp(-i sign dt (V*|u|^2)) u on the grid.
void hartree_nonlinear_substep(SpectralField& f, double dt);

/// wave: mean(v^2/2 + |grad u|^2/2 + sign u^4/4); beam: mean(v^2/2 + |Lap u|^2/2 + sign u^4/4);
/// hartree: mean(|grad u|^2 - s sign (V*|u|^2)|u|^2 / 2) with s = +1 literal, -1 otherwise.
double energy(const SpectralField& f);
/// mean |u|^2 = sum |u_j|^2.
double mass(const SpectralField& f);
/// |normal variable|^2 / delta^2.
double mode_intensity(const SpectralField& f, const ModeVector& n, double delta);
double sobolev_norm(const SpectralField& f, double s);
/// H^s norm of u after removing the normal variables of the given modes.
double remainder_norm(const SpectralField& f, const std::vector<ModeVector>& lambda_modes, double s);
/// max |u_j|, |v_j| over j outside Z^2_odd.
double odd_subspace_violation(const SpectralField& f);

struct PdeSeries {
  std::vector<ModeVector> modes;
  std::vector<double> t;
  std::vector<double> tau;
  std::vector<std::vector<double>> intensity;  // per sample, per Lambda mode
  std::vector<double> energy;
  std::vector<double> mass;
  std::vector<std::array<double, 3>> remainder;  // H^0, H^1, H^2
  std::vector<double> odd_violation;
  double dt = 0.0;
  int J = 0;
  std::int64_t steps = 0;
};

/// Integrates to t_end with a step count rounded up so that the final time is hit exactly,
/// sampling every `sample_every` steps (and at the end).
PdeSeries run_pde(const InitialDataSpec& spec, const PdeOptions& opt, double t_end, std::int64_t sample_every,
                  const std::optional<HartreePotential>& V = std::nullopt);

struct ShadowingReport {
  double delta = 0.0;
  double tau_end = 0.0;
  double intensity_sup = 0.0;     // sup over samples and Lambda modes of |I_pde - |a_n|^2|
  double remainder_h2_sup = 0.0;  // sup of the H^2 norm off Lambda
  PdeSeries pde;
  ResonantTrajectory resonant;
};

/// Runs the PDE to t = tau_end / delta^2 and the rotating-frame resonant model from the same a0
/// to tau_end, compared on the PDE's sample grid (about `samples` points).
ShadowingReport shadowing_run(const InitialDataSpec& spec, const PdeOptions& opt, double tau_end, int samples = 200,
                              const std::optional<HartreePotential>& V = std::nullopt);

}  // namespace reslab
