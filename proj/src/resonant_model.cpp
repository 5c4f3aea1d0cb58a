#include "reslab/resonant_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace reslab {

ResonantHamiltonian build_resonant_hamiltonian(const LambdaSet& lambda, const std::optional<HartreePotential>& potential,
                                               double sign) {
  if (lambda.tuples.empty()) throw std::invalid_argument("resonant: empty Lambda");
  if (lambda.model == Model::hartree && !potential)
    throw std::invalid_argument("resonant: hartree model needs a potential");
  ResonantHamiltonian H;
  H.model = lambda.model;
  H.modes = lambda.modes();
  H.tuples = static_cast<int>(lambda.size());
  H.sign = sign;
  H.convention = lambda.model == Model::hartree ? "u = delta sum a_n e^{inx}"
                                                : "a = (w^{1/2} u_hat + i w^{-1/2} v_hat)/sqrt(2)";
  const int n = H.size();
  for (const auto& m : H.modes) H.omega.push_back(frequency_value(m, lambda.model));
  std::vector<SqrtSum> exact;
  for (const auto& m : H.modes) exact.push_back(frequency(m, lambda.model).exact);

  for (int i1 = 0; i1 < n; ++i1)
    for (int i2 = 0; i2 < n; ++i2)
      for (int i3 = 0; i3 < n; ++i3)
        for (int i4 = 0; i4 < n; ++i4) {
          const Quad q{H.modes[i1], H.modes[i2], H.modes[i3], H.modes[i4]};
          if (!momentum_resonant(q)) continue;
          SqrtSum s = exact[i1];
          s -= exact[i2];
          s += exact[i3];
          s -= exact[i4];
          if (!s.is_zero()) continue;
          double coeff;
          if (lambda.model == Model::hartree) {
            coeff = 0.5 * potential->value(q[0] - q[1]);
          } else {
            coeff = 0.375 / std::sqrt(H.omega[i1] * H.omega[i2] * H.omega[i3] * H.omega[i4]);
          }
          H.monomials.push_back({{i1, i2, i3, i4}, sign * coeff});
        }
  return H;
}

double resonant_energy(const ComplexModeState& a, const ResonantHamiltonian& H, bool include_quadratic) {
  std::complex<double> quartic = 0.0;
  for (const auto& m : H.monomials) {
    const auto& k = m.index;
    quartic += m.coeff * a[k[0]] * std::conj(a[k[1]]) * a[k[2]] * std::conj(a[k[3]]);
  }
  double e = quartic.real();
  if (include_quadratic)
    for (int n = 0; n < H.size(); ++n) e += H.omega[n] * std::norm(a[n]);
  return e;
}

ComplexModeState resonant_gradient(const ComplexModeState& a, const ResonantHamiltonian& H, bool include_quadratic) {
  ComplexModeState g(a.size(), 0.0);
  for (const auto& m : H.monomials) {
    const auto& k = m.index;
    g[k[1]] += m.coeff * a[k[0]] * a[k[2]] * std::conj(a[k[3]]);
    g[k[3]] += m.coeff * a[k[0]] * std::conj(a[k[1]]) * a[k[2]];
  }
  if (include_quadratic)
    for (int n = 0; n < H.size(); ++n) g[n] += H.omega[n] * a[n];
  return g;
}

namespace {

ode::State pack(const ComplexModeState& a) {
  ode::State y(2 * a.size());
  for (std::size_t n = 0; n < a.size(); ++n) {
    y[2 * n] = a[n].real();
    y[2 * n + 1] = a[n].imag();
  }
  return y;
}

ComplexModeState unpack(const ode::State& y) {
  ComplexModeState a(y.size() / 2);
  for (std::size_t n = 0; n < a.size(); ++n) a[n] = {y[2 * n], y[2 * n + 1]};
  return a;
}

}  // namespace

ResonantTrajectory evolve_resonant(const ComplexModeState& a0, const ResonantHamiltonian& H, double t_end,
                                   const ResonantOptions& opt) {
  if (static_cast<int>(a0.size()) != H.size()) throw std::invalid_argument("resonant: state size does not match Lambda");
  if (!(opt.tol > 0)) throw std::invalid_argument("resonant: tol must be positive");
  // The quartic part is resonant, so it Poisson-commutes with sum omega |a|^2: integrate the
  // quartic flow alone and restore the linear phases exactly afterwards.
  const bool quad = !opt.rotating_frame;
  const ode::Rhs rhs = [&H](const ode::State& y, ode::State& dy, double) {
    // i da/dt = g  =>  da/dt = -i g
    const auto g = resonant_gradient(unpack(y), H, false);
    dy.resize(y.size());
    for (std::size_t n = 0; n < g.size(); ++n) {
      dy[2 * n] = g[n].imag();
      dy[2 * n + 1] = -g[n].real();
    }
  };
  ResonantTrajectory tr;
  tr.rotating_frame = opt.rotating_frame;
  const double E0 = resonant_energy(a0, H, quad);
  const double scale = std::max(1.0, std::abs(E0));
  auto record = [&](double t, const ode::State& y) {
    tr.t.push_back(t);
    tr.states.push_back(unpack(y));
    if (quad)
      for (int n = 0; n < H.size(); ++n) tr.states.back()[n] *= std::polar(1.0, -H.omega[n] * t);
    tr.energy_drift = std::max(tr.energy_drift, std::abs(resonant_energy(tr.states.back(), H, quad) - E0) / scale);
  };
  ode::State y = pack(a0);
  record(0.0, y);
  ode::Options o;
  o.abs_tol = o.rel_tol = opt.tol;
  o.max_step = opt.max_step;
  double next_sample = opt.sample_dt;
  double t = 0.0;
  tr.status = ode::integrate(rhs, y, t, t_end, o, [&](double t0, const ode::State& y0, double t1, ode::State& y1) {
    if (opt.sample_dt > 0) {
      while (next_sample <= t1 * (1 + 1e-14)) {
        if (next_sample >= t1) record(t1, y1);
        else record(next_sample, ode::dense_state(rhs, y0, t0, next_sample));
        next_sample = opt.sample_dt * std::round(next_sample / opt.sample_dt + 1.0);
      }
    } else {
      record(t1, y1);
    }
    return true;
  });
  if (opt.sample_dt > 0 && t != tr.t.back()) record(t, y);
  return tr;
}

std::vector<double> first_integrals(const ComplexModeState& a, const ResonantHamiltonian& H, bool include_quadratic) {
  std::vector<double> out;
  out.push_back(resonant_energy(a, H, include_quadratic));
  for (int r = 0; r < H.tuples; ++r) {
    double m = 0.0;
    for (int k = 0; k < 4; ++k) m += std::norm(a[4 * r + k]);
    out.push_back(m);
  }
  double px = 0.0, py = 0.0;
  for (int n = 0; n < H.size(); ++n) {
    px += static_cast<double>(H.modes[n].j1) * std::norm(a[n]);
    py += static_cast<double>(H.modes[n].j2) * std::norm(a[n]);
  }
  out.push_back(px);
  out.push_back(py);
  return out;
}

IntensityReport tuple_intensities(const ComplexModeState& a, int tuples, double tol) {
  if (static_cast<int>(a.size()) != 4 * tuples) throw std::invalid_argument("intensities: state size does not match tuples");
  IntensityReport rep;
  for (const auto& z : a) rep.intensities.push_back(std::norm(z));
  for (int r = 0; r < tuples; ++r) {
    const double* I = rep.intensities.data() + 4 * r;
    const double mass = I[0] + I[1] + I[2] + I[3];
    const double err = std::max({std::abs(I[0] - I[2]), std::abs(I[1] - I[3]), std::abs(I[0] + I[1] - 0.5 * mass)});
    rep.relation_error.push_back(err);
    rep.relations_hold.push_back(err <= tol);
  }
  return rep;
}

ActionAngle reduce_to_action_angle(const ComplexModeState& a, int tuple_index, double tol) {
  if (tuple_index < 0 || 4 * (tuple_index + 1) > static_cast<int>(a.size()))
    throw std::invalid_argument("reduce: tuple index out of range");
  const auto* z = a.data() + 4 * tuple_index;
  const double mass = std::norm(z[0]) + std::norm(z[1]) + std::norm(z[2]) + std::norm(z[3]);
  if (mass < 1e-12) throw std::domain_error("reduce: tuple mass below 1e-12, angle undefined");
  const ComplexModeState tuple(z, z + 4);
  const auto rep = tuple_intensities(tuple, 1, tol * mass);
  if (!rep.relations_hold[0]) throw std::domain_error("reduce: intra-tuple intensity relations violated");
  ActionAngle out;
  out.K = (std::norm(z[1]) + std::norm(z[3])) / mass;
  double psi = std::arg(z[0] * z[2] * std::conj(z[1]) * std::conj(z[3]));
  if (psi < 0) psi += 2 * std::numbers::pi;
  out.psi = psi;
  return out;
}

}  // namespace reslab
