#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "reslab/ode.hpp"

namespace reslab {

/// Coefficients of the N degree-of-freedom reduced Hamiltonian
///   H = sum_j K_j(1-K_j)(1+2cos psi_j)
///     + eps [ sum_j (a_j K_j + b_j K_j^2 + c_j K_j(1-K_j) cos psi_j) + sum_{i<j} d_ij K_i K_j ].
/// Only the strict upper triangle of d is read.
struct ModelCoefficients {
  int N = 1;
  double eps = 0.0;
  std::vector<double> a, b, c;
  std::vector<std::vector<double>> d;

  static ModelCoefficients zero(int N, double eps = 0.0);
  /// Throws std::invalid_argument on inconsistent sizes, N < 1, eps < 0 or a nonzero lower triangle.
  void validate() const;
  double coupling(int i, int j) const { return i < j ? d[i][j] : d[j][i]; }
};

/// Seeded "generic" coefficients: a, b, c, d uniform in [-1, 1] from SplitMix64.
ModelCoefficients sample_coefficients(int N, double eps, std::uint64_t seed);

struct ReducedState {
  std::vector<double> psi;
  std::vector<double> K;

  int size() const { return static_cast<int>(psi.size()); }
  /// Copy with every angle reduced to [0, 2pi).
  ReducedState wrapped() const;
};

inline constexpr double kBoundaryTol = 1e-12;

double wrap_angle(double psi);
/// a - b reduced to (-pi, pi].
double angle_diff(double a, double b);

double hamiltonian(const ReducedState& s, const ModelCoefficients& c);
/// Unperturbed energy of one degree of freedom, K_j(1-K_j)(1+2cos psi_j).
double dof_energy(const ReducedState& s, int j);

struct Tangent {
  std::vector<double> psi_dot;
  std::vector<double> K_dot;
};

/// psi_dot = dH/dK, K_dot = -dH/dpsi.
Tangent vector_field(const ReducedState& s, const ModelCoefficients& c);
/// Jacobian of the vector field in the ordering (psi_1..psi_N, K_1..K_N).
Eigen::MatrixXd jacobian(const ReducedState& s, const ModelCoefficients& c);

struct IntegrateOptions {
  double tol = 1e-12;
  double sample_dt = 0.0;  // 0 records every accepted step
  double max_step = 0.25;
  int direction = +1;      // -1 integrates backwards in time
  bool project_energy = true;  // gradient projection onto the initial energy level after each step
};

struct Trajectory {
  std::vector<double> t;
  std::vector<ReducedState> states;  // angles wrapped
  std::vector<double> H;
  ode::Status status = ode::Status::completed;
  double energy_drift = 0.0;  // max |H(t)-H(0)| / max(1, |H(0)|)
  std::size_t clamp_events = 0;

  bool ok() const { return status == ode::Status::completed; }
};

Trajectory integrate(const ReducedState& s0, const ModelCoefficients& c, double t_end,
                     const IntegrateOptions& opt = {});

/// Equilibria of a single unperturbed degree of freedom.
enum class DofEquilibrium {
  center_zero,      // (0, 1/2)
  center_pi,        // (pi, 1/2)
  saddle_low_rise,  // (2pi/3, 0)
  saddle_low_fall,  // (4pi/3, 0)
  saddle_up_rise,   // (2pi/3, 1)
  saddle_up_fall,   // (4pi/3, 1)
};

std::string_view to_string(DofEquilibrium e);
ReducedState equilibrium_guess(const std::vector<DofEquilibrium>& labels);

struct FixedPoint {
  ReducedState state;
  std::vector<DofEquilibrium> labels;
  std::vector<std::complex<double>> eigenvalues;  // sorted by (real, imag)
  bool converged = false;
  double residual = 0.0;  // sup norm of the vector field
};

/// Newton continuation of an unperturbed equilibrium to the given coefficients.
FixedPoint continue_fixed_point(const std::vector<DofEquilibrium>& labels, const ModelCoefficients& c);
/// All 6^N label combinations (N <= 6), continued when eps > 0.
std::vector<FixedPoint> fixed_points(const ModelCoefficients& c);

enum class Branch { unstable_plus, unstable_minus, stable_plus, stable_minus };

struct ManifoldPoint {
  ReducedState state;
  double arc = 0.0;
  double energy_deviation = 0.0;
};

/// One branch of the 1-d invariant manifold of a saddle, in the plane of degree of freedom `dof`.
/// "plus" orients the seed eigenvector so that its K_dof component is positive (psi_dof when the
/// K component vanishes). Stable branches are grown backwards in time.
std::vector<ManifoldPoint> manifold_trace(const FixedPoint& saddle, int dof, const ModelCoefficients& c,
                                          Branch branch, double arc, double seed = 1e-7,
                                          double t_budget = 200.0);

enum class SectionCoordinate { psi, K };

struct SectionSpec {
  int index = 0;
  SectionCoordinate coordinate = SectionCoordinate::psi;
  double value = 0.0;
  int direction = +1;  // sign of the section coordinate's velocity at a crossing; 0 = both
};

/// Signed distance to the section: K - value, or the wrapped angle difference.
double section_function(const ReducedState& s, const SectionSpec& sec);

/// Which vertical leg of the heteroclinic cycle of `section.index` is measured: the rising leg
/// near psi = 2pi/3 or the falling leg near psi = 4pi/3.
enum class Column { rising, falling };

/// psi(W^u) - psi(W^s) on a K-section of degree of freedom `section.index` (other degrees of
/// freedom sit at the continued center (0, 1/2)). W^u belongs to the saddle the leg leaves, W^s
/// to the saddle it enters.
double splitting_distance(const ModelCoefficients& c, const SectionSpec& section, Column column = Column::rising);

struct Crossing {
  ReducedState state;
  double t = 0.0;
};

/// Directional crossings of the section, each refined to 1e-10 in time. Throws if s0 lies on the
/// section or no crossing happens within t_max.
std::vector<Crossing> poincare_map(const ReducedState& s0, const ModelCoefficients& c, const SectionSpec& section,
                                   int max_crossings, double t_max = 1e4, double tol = 1e-12);

/// floor of successive return times in units of T_quantum.
std::vector<std::int64_t> return_time_symbols(const std::vector<Crossing>& crossings, double T_quantum);

struct ChainOptions {
  double leading_offset = 1e-3;  // seed distance of the leading dof along its unstable direction
  double s_min = 1e-6;  // search range for the shooting parameter (log-spaced grid)
  double s_max = 0.2;
  int grid = 64;
  int refine_iterations = 60;
  double t_max = 400.0;
  double tol = 1e-10;
};

struct ChainResult {
  bool success = false;
  Trajectory trajectory;
  std::vector<double> visit_times;
  std::vector<double> visit_distances;
  double shooting_parameter = 0.0;
  std::string message;
};

/// Target state for itinerary entry i (1-based): dof i at its lower rising saddle, every other dof
/// at its upper rising saddle.
ReducedState chain_target(const ModelCoefficients& c, int i);
/// Distance over wrapped angles and actions.
double state_distance(const ReducedState& a, const ReducedState& b);

/// Shoots from near the first target, varying the offset of the non-leading dofs from their
/// separatrix, for an orbit that enters the nbhd-neighbourhood of each target in itinerary order.
ChainResult chain_shadowing_run(const ModelCoefficients& c, const std::vector<int>& itinerary, double nbhd,
                                const ChainOptions& opt = {});

}  // namespace reslab
