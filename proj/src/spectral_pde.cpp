#include "reslab/spectral_pde.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <stdexcept>
#include <string>

#include "reslab/rng.hpp"

namespace reslab {

namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

double omega_of(const ModeVector& j, Model model) {
  const double r2 = static_cast<double>(j.norm2());
  return model == Model::wave ? std::sqrt(r2) : r2;
}

std::int64_t wrap(std::int64_t k, int P) {
  const std::int64_t r = k % P;
  return r < 0 ? r + P : r;
}

std::int64_t unwrap(std::int64_t k, int P) { return k < P / 2 ? k : k - P; }

}  // namespace

struct FftWorkspace {
  int P;
  bool complex_field;
  double* real = nullptr;
  fftw_complex* a = nullptr;
  fftw_complex* b = nullptr;
  fftw_plan forward = nullptr;   // r2c, or c2c forward on a
  fftw_plan backward = nullptr;  // c2r, or c2c backward on a
  // cached linear propagators keyed by the substep length
  double cached_h = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> cos_h, sin_h;
  std::vector<cplx> phase_h;

  FftWorkspace(int P_, bool complex_field_) : P(P_), complex_field(complex_field_) {
    std::lock_guard lock(planner_mutex());
    const std::size_t n = static_cast<std::size_t>(P) * P;
    if (complex_field) {
      a = fftw_alloc_complex(n);
      b = fftw_alloc_complex(n);
      forward = fftw_plan_dft_2d(P, P, a, a, FFTW_FORWARD, FFTW_ESTIMATE);
      backward = fftw_plan_dft_2d(P, P, a, a, FFTW_BACKWARD, FFTW_ESTIMATE);
    } else {
      real = fftw_alloc_real(n);
      a = fftw_alloc_complex(static_cast<std::size_t>(P) * (P / 2 + 1));
      forward = fftw_plan_dft_r2c_2d(P, P, real, a, FFTW_ESTIMATE);
      backward = fftw_plan_dft_c2r_2d(P, P, a, real, FFTW_ESTIMATE);
    }
    if (!forward || !backward) throw std::runtime_error("fftw: plan creation failed");
  }
  FftWorkspace(const FftWorkspace&) = delete;
  FftWorkspace& operator=(const FftWorkspace&) = delete;
  ~FftWorkspace() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
    if (real) fftw_free(real);
    fftw_free(a);
    if (b) fftw_free(b);
  }

  cplx* ca() { return reinterpret_cast<cplx*>(a); }
  cplx* cb() { return reinterpret_cast<cplx*>(b); }
};

int InitialDataSpec::kappa() const {
  switch (lambda.model) {
    case Model::wave: return 1;
    case Model::beam: return 2;
    case Model::hartree: return 0;
  }
  return 0;
}

int default_truncation(const LambdaSet& lambda) {
  std::int64_t m = 0;
  for (const auto& n : lambda.modes()) m = std::max(m, n.sup_norm());
  return static_cast<int>(4 * m);
}

double default_time_step(Model model, int J) {
  if (J < 1) throw std::invalid_argument("default_time_step: J must be >= 1");
  const double w = omega_of({J, J}, model);
  return 2 * std::numbers::pi / (20.0 * w);
}

SpectralField::SpectralField(Model model, int J, const PdeOptions& opt)
    : model_(model), J_(J), P_(4 * (J + 1)), opt_(opt) {
  if (J < 1) throw std::invalid_argument("spectral field: J must be >= 1");
  if (opt.sign != 1.0 && opt.sign != -1.0) throw std::invalid_argument("spectral field: sign must be +1 or -1");
  const bool cf = model == Model::hartree;
  const std::size_t n = cf ? static_cast<std::size_t>(P_) * P_ : static_cast<std::size_t>(P_) * (P_ / 2 + 1);
  u_.assign(n, 0.0);
  if (!cf) v_.assign(n, 0.0);
  ws_ = std::make_unique<FftWorkspace>(P_, cf);
}

SpectralField::SpectralField(const SpectralField& o)
    : model_(o.model_), J_(o.J_), P_(o.P_), opt_(o.opt_), u_(o.u_), v_(o.v_), Vgrid_(o.Vgrid_), V_(o.V_),
      ws_(std::make_unique<FftWorkspace>(o.P_, o.model_ == Model::hartree)) {}

SpectralField& SpectralField::operator=(const SpectralField& o) {
  if (this != &o) {
    SpectralField tmp(o);
    *this = std::move(tmp);
  }
  return *this;
}

SpectralField::SpectralField(SpectralField&&) noexcept = default;
SpectralField& SpectralField::operator=(SpectralField&&) noexcept = default;
SpectralField::~SpectralField() = default;

bool SpectralField::contains(const ModeVector& j) const {
  if (model_ == Model::hartree) return j.j1 >= -P_ / 2 && j.j1 < P_ / 2 && j.j2 >= -P_ / 2 && j.j2 < P_ / 2;
  return j.sup_norm() <= J_;
}

std::size_t SpectralField::half_index(const ModeVector& j, bool& conjugate) const {
  const ModeVector k = j.j2 < 0 ? -j : j;
  conjugate = j.j2 < 0;
  return static_cast<std::size_t>(wrap(k.j1, P_)) * (P_ / 2 + 1) + static_cast<std::size_t>(k.j2);
}

std::size_t SpectralField::full_index(const ModeVector& j) const {
  return static_cast<std::size_t>(wrap(j.j1, P_)) * P_ + static_cast<std::size_t>(wrap(j.j2, P_));
}

cplx SpectralField::u_hat(const ModeVector& j) const {
  if (!contains(j)) return 0.0;
  if (model_ == Model::hartree) return u_[full_index(j)];
  bool c;
  const auto z = u_[half_index(j, c)];
  return c ? std::conj(z) : z;
}

cplx SpectralField::v_hat(const ModeVector& j) const {
  if (model_ == Model::hartree || !contains(j)) return 0.0;
  bool c;
  const auto z = v_[half_index(j, c)];
  return c ? std::conj(z) : z;
}

void SpectralField::set_u_hat(const ModeVector& j, cplx value) {
  if (!contains(j)) throw std::out_of_range("spectral field: mode " + to_string(j) + " outside truncation");
  if (model_ == Model::hartree) {
    u_[full_index(j)] = value;
    return;
  }
  bool c;
  u_[half_index(j, c)] = c ? std::conj(value) : value;
  if (j.j2 == 0) u_[half_index(-j, c)] = std::conj(value);
}

void SpectralField::set_v_hat(const ModeVector& j, cplx value) {
  if (model_ == Model::hartree) throw std::logic_error("spectral field: hartree carries no v");
  if (!contains(j)) throw std::out_of_range("spectral field: mode " + to_string(j) + " outside truncation");
  bool c;
  v_[half_index(j, c)] = c ? std::conj(value) : value;
  if (j.j2 == 0) v_[half_index(-j, c)] = std::conj(value);
}

cplx SpectralField::normal_variable(const ModeVector& j) const {
  if (model_ == Model::hartree) return u_hat(j);
  const double w = omega_of(j, model_);
  if (w == 0.0) return u_hat(j);
  return (std::sqrt(w) * u_hat(j) + cplx(0, 1) / std::sqrt(w) * v_hat(j)) / std::numbers::sqrt2;
}

std::vector<ModeVector> SpectralField::modes() const {
  std::vector<ModeVector> out;
  const std::int64_t lo = model_ == Model::hartree ? -P_ / 2 : -J_;
  const std::int64_t hi = model_ == Model::hartree ? P_ / 2 - 1 : J_;
  for (std::int64_t a = lo; a <= hi; ++a)
    for (std::int64_t b = lo; b <= hi; ++b) out.push_back({a, b});
  return out;
}

std::vector<double> SpectralField::physical_real() const {
  if (model_ == Model::hartree) throw std::logic_error("physical_real: hartree field is complex");
  std::copy(u_.begin(), u_.end(), ws_->ca());
  fftw_execute_dft_c2r(ws_->backward, ws_->a, ws_->real);
  return {ws_->real, ws_->real + static_cast<std::size_t>(P_) * P_};
}

void SpectralField::to_physical_complex(std::vector<cplx>& out) const {
  out.assign(static_cast<std::size_t>(P_) * P_, 0.0);
  if (model_ == Model::hartree) {
    std::copy(u_.begin(), u_.end(), ws_->ca());
    fftw_execute_dft(ws_->backward, ws_->a, ws_->a);
    std::copy(ws_->ca(), ws_->ca() + out.size(), out.begin());
    return;
  }
  // full complex synthesis, independent of the real transform
  fftw_complex* buf = fftw_alloc_complex(out.size());
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_2d(P_, P_, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  auto* z = reinterpret_cast<cplx*>(buf);
  std::fill(z, z + out.size(), cplx(0.0));
  for (const auto& j : modes()) z[full_index(j)] = u_hat(j);
  fftw_execute(plan);
  std::copy(z, z + out.size(), out.begin());
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
}

std::vector<cplx> SpectralField::physical_complex() const {
  std::vector<cplx> out;
  to_physical_complex(out);
  return out;
}

double SpectralField::reality_defect() const {
  if (model_ == Model::hartree) return 0.0;
  double worst = 0.0;
  for (std::int64_t a = -J_; a <= J_; ++a) {
    bool c;
    const ModeVector j{a, 0};
    const auto ip = half_index(j, c), im = half_index(-j, c);
    worst = std::max({worst, std::abs(u_[ip] - std::conj(u_[im])), std::abs(v_[ip] - std::conj(v_[im]))});
  }
  return worst;
}

void SpectralField::set_potential(const HartreePotential& V) {
  if (V_ && V_->eps() == V.eps() && V_->background() == V.background() && V_->gamma() == V.gamma()) return;
  V_ = V;
  Vgrid_.assign(static_cast<std::size_t>(P_) * P_, 0.0);
  for (int a = 0; a < P_; ++a)
    for (int b = 0; b < P_; ++b)
      Vgrid_[static_cast<std::size_t>(a) * P_ + b] = V.value({unwrap(a, P_), unwrap(b, P_)});
}

void SpectralField::linear_real(double h) {
  auto& w = *ws_;
  const int H = P_ / 2 + 1;
  if (w.cached_h != h) {
    w.cos_h.assign(u_.size(), 1.0);
    w.sin_h.assign(u_.size(), 0.0);
    for (std::int64_t a = -J_; a <= J_; ++a)
      for (std::int64_t b = 0; b <= J_; ++b) {
        const std::size_t i = static_cast<std::size_t>(wrap(a, P_)) * H + static_cast<std::size_t>(b);
        const double om = omega_of({a, b}, model_);
        w.cos_h[i] = std::cos(om * h);
        w.sin_h[i] = std::sin(om * h);
      }
    w.cached_h = h;
  }
  for (std::int64_t a = -J_; a <= J_; ++a)
    for (std::int64_t b = 0; b <= J_; ++b) {
      const std::size_t i = static_cast<std::size_t>(wrap(a, P_)) * H + static_cast<std::size_t>(b);
      const double om = omega_of({a, b}, model_);
      const cplx u = u_[i], v = v_[i];
      if (om == 0.0) {
        u_[i] = u + h * v;
        continue;
      }
      u_[i] = u * w.cos_h[i] + v * (w.sin_h[i] / om);
      v_[i] = v * w.cos_h[i] - u * (om * w.sin_h[i]);
    }
}

void SpectralField::kick_real(double dt) {
  auto& w = *ws_;
  const std::size_t n = static_cast<std::size_t>(P_) * P_;
  std::copy(u_.begin(), u_.end(), w.ca());
  fftw_execute_dft_c2r(w.backward, w.a, w.real);
  for (std::size_t i = 0; i < n; ++i) w.real[i] = w.real[i] * w.real[i] * w.real[i];
  fftw_execute_dft_r2c(w.forward, w.real, w.a);
  const double scale = opt_.sign * dt / static_cast<double>(n);
  const int H = P_ / 2 + 1;
  for (std::int64_t a = -J_; a <= J_; ++a)
    for (std::int64_t b = 0; b <= J_; ++b) {
      const std::size_t i = static_cast<std::size_t>(wrap(a, P_)) * H + static_cast<std::size_t>(b);
      v_[i] -= scale * w.ca()[i];
    }
}

void SpectralField::linear_hartree(double h) {
  auto& w = *ws_;
  if (w.cached_h != h) {
    w.phase_h.resize(u_.size());
    const double s = opt_.hartree_literal ? 1.0 : -1.0;
    for (int a = 0; a < P_; ++a)
      for (int b = 0; b < P_; ++b) {
        const ModeVector j{unwrap(a, P_), unwrap(b, P_)};
        w.phase_h[static_cast<std::size_t>(a) * P_ + b] = std::polar(1.0, s * static_cast<double>(j.norm2()) * h);
      }
    w.cached_h = h;
  }
  for (std::size_t i = 0; i < u_.size(); ++i) u_[i] *= w.phase_h[i];
}

namespace {

void require_model(const SpectralField& f, Model m, const char* op) {
  if (f.model() != m) throw std::invalid_argument(std::string(op) + ": wrong model " + std::string(to_string(f.model())));
}

void require_dt(double dt) {
  if (!(dt > 0) || !std::isfinite(dt)) throw std::invalid_argument("step: dt must be positive");
}

// (V * |u|^2) on the grid, given u in physical space in ws.a; result in ws.b (real part meaningful)
void convolve_density(FftWorkspace& w, const std::vector<double>& Vgrid, int P, fftw_plan forward_b, fftw_plan backward_b) {
  const std::size_t n = static_cast<std::size_t>(P) * P;
  cplx* u = w.ca();
  cplx* r = w.cb();
  for (std::size_t i = 0; i < n; ++i) r[i] = std::norm(u[i]);
  fftw_execute_dft(forward_b, w.b, w.b);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) r[i] *= Vgrid[i] * inv;
  fftw_execute_dft(backward_b, w.b, w.b);
}

}  // namespace

void step_wave(SpectralField& f, double dt) {
  require_model(f, Model::wave, "step_wave");
  require_dt(dt);
  f.linear_real(0.5 * dt);
  f.kick_real(dt);
  f.linear_real(0.5 * dt);
}

void step_beam(SpectralField& f, double dt) {
  require_model(f, Model::beam, "step_beam");
  require_dt(dt);
  f.linear_real(0.5 * dt);
  f.kick_real(dt);
  f.linear_real(0.5 * dt);
}

void hartree_nonlinear_substep(SpectralField& f, double dt) {
  require_model(f, Model::hartree, "hartree_nonlinear_substep");
  if (!f.V_) throw std::invalid_argument("hartree: no potential set");
  auto& w = *f.ws_;
  const std::size_t n = f.u_.size();
  // physical u in a; the plans were made for a, new-array execution reuses them on b
  std::copy(f.u_.begin(), f.u_.end(), w.ca());
  fftw_execute_dft(w.backward, w.a, w.a);
  convolve_density(w, f.Vgrid_, f.P_, w.forward, w.backward);
  const double k = f.opt_.sign * dt;
  for (std::size_t i = 0; i < n; ++i) w.ca()[i] *= std::polar(1.0, -k * w.cb()[i].real());
  fftw_execute_dft(w.forward, w.a, w.a);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) f.u_[i] = w.ca()[i] * inv;
}

void step_hartree(SpectralField& f, double dt, const HartreePotential& V) {
  require_model(f, Model::hartree, "step_hartree");
  require_dt(dt);
  f.set_potential(V);
  f.linear_hartree(0.5 * dt);
  hartree_nonlinear_substep(f, dt);
  f.linear_hartree(0.5 * dt);
}

void step(SpectralField& f, double dt) {
  switch (f.model()) {
    case Model::wave: step_wave(f, dt); break;
    case Model::beam: step_beam(f, dt); break;
    case Model::hartree:
      if (!f.potential()) throw std::invalid_argument("step: hartree field has no potential");
      step_hartree(f, dt, *f.potential());
      break;
  }
}

double energy(const SpectralField& f) {
  const auto modes = f.modes();
  if (f.model() == Model::hartree) {
    if (!f.V_) throw std::invalid_argument("energy: hartree field has no potential");
    double kinetic = 0.0;
    for (const auto& j : modes) kinetic += static_cast<double>(j.norm2()) * std::norm(f.u_hat(j));
    auto& w = *f.ws_;
    const std::size_t n = f.u_.size();
    std::copy(f.u_.begin(), f.u_.end(), w.ca());
    fftw_execute_dft(w.backward, w.a, w.a);
    convolve_density(w, f.Vgrid_, f.P_, w.forward, w.backward);
    double quartic = 0.0;
    for (std::size_t i = 0; i < n; ++i) quartic += w.cb()[i].real() * std::norm(w.ca()[i]);
    quartic /= static_cast<double>(n);
    const double s = f.opt_.hartree_literal ? 1.0 : -1.0;
    return kinetic - s * f.opt_.sign * 0.5 * quartic;
  }
  double quad = 0.0;
  for (const auto& j : modes) {
    const double om = omega_of(j, f.model());
    quad += 0.5 * std::norm(f.v_hat(j)) + 0.5 * om * om * std::norm(f.u_hat(j));
  }
  const auto u = f.physical_real();
  double quartic = 0.0;
  for (double x : u) quartic += x * x * x * x;
  quartic /= static_cast<double>(u.size());
  return quad + f.opt_.sign * 0.25 * quartic;
}

double mass(const SpectralField& f) {
  double m = 0.0;
  for (const auto& j : f.modes()) m += std::norm(f.u_hat(j));
  return m;
}

double mode_intensity(const SpectralField& f, const ModeVector& n, double delta) {
  if (!(delta > 0)) throw std::invalid_argument("mode_intensity: delta must be positive");
  if (!f.contains(n)) throw std::out_of_range("mode_intensity: mode outside truncation");
  return std::norm(f.normal_variable(n)) / (delta * delta);
}

double sobolev_norm(const SpectralField& f, double s) {
  if (!(s >= 0)) throw std::invalid_argument("sobolev_norm: s must be >= 0");
  double sum = 0.0;
  for (const auto& j : f.modes()) sum += std::pow(1.0 + static_cast<double>(j.norm2()), s) * std::norm(f.u_hat(j));
  return std::sqrt(sum);
}

double remainder_norm(const SpectralField& f, const std::vector<ModeVector>& lambda_modes, double s) {
  if (!(s >= 0)) throw std::invalid_argument("remainder_norm: s must be >= 0");
  const std::set<ModeVector> in(lambda_modes.begin(), lambda_modes.end());
  double sum = 0.0;
  for (const auto& j : f.modes()) {
    cplx u = f.u_hat(j);
    if (f.model() == Model::hartree) {
      if (in.contains(j)) u = 0.0;
    } else {
      const double om = omega_of(j, f.model());
      if (om > 0) {
        if (in.contains(j)) u -= f.normal_variable(j) / std::sqrt(2 * om);
        if (in.contains(-j)) u -= std::conj(f.normal_variable(-j)) / std::sqrt(2 * om);
      }
    }
    sum += std::pow(1.0 + static_cast<double>(j.norm2()), s) * std::norm(u);
  }
  return std::sqrt(sum);
}

double odd_subspace_violation(const SpectralField& f) {
  if (f.model() == Model::hartree) throw std::invalid_argument("odd_subspace_violation: wave/beam only");
  double worst = 0.0;
  for (const auto& j : f.modes())
    if (!j.is_odd()) worst = std::max({worst, std::abs(f.u_hat(j)), std::abs(f.v_hat(j))});
  return worst;
}

SpectralField build_initial_data(const InitialDataSpec& spec, const PdeOptions& opt,
                                 const std::optional<HartreePotential>& V) {
  const auto& lam = spec.lambda;
  if (lam.tuples.empty()) throw std::invalid_argument("initial data: empty Lambda");
  if (!(spec.delta >= 0) || !std::isfinite(spec.delta)) throw std::invalid_argument("initial data: delta must be >= 0");
  const auto modes = lam.modes();
  if (spec.a0.size() != modes.size())
    throw std::invalid_argument("initial data: need one amplitude per Lambda mode (" + std::to_string(modes.size()) + ")");
  for (const auto& z : spec.a0)
    if (std::abs(z) > 1.0 + 1e-12) throw std::invalid_argument("initial data: |a_n(0)| must be <= 1");
  if (lam.model == Model::hartree && !V) throw std::invalid_argument("initial data: hartree needs a potential");
  const int J = opt.J > 0 ? opt.J : default_truncation(lam);
  for (const auto& n : modes)
    if (n.sup_norm() > J)
      throw std::out_of_range("initial data: Lambda mode " + to_string(n) + " outside truncation J=" + std::to_string(J));

  PdeOptions o = opt;
  o.J = J;
  SpectralField f(lam.model, J, o);
  if (V) f.set_potential(*V);

  std::map<ModeVector, cplx> A;
  for (std::size_t i = 0; i < modes.size(); ++i) A[modes[i]] += spec.delta * spec.a0[i];
  if (spec.background > 0) {
    SplitMix64 rng(spec.background_seed);
    for (std::int64_t a = -J; a <= J; ++a)
      for (std::int64_t b = -J; b <= J; ++b) {
        const ModeVector j{a, b};
        if (j == ModeVector{} || !in_ambient_set(j, lam.model) || A.contains(j)) continue;
        const double re = rng.uniform(-1, 1), im = rng.uniform(-1, 1);
        A[j] = spec.background * spec.delta * cplx(re, im);
      }
  }
  const auto amp = [&](const ModeVector& j) {
    const auto it = A.find(j);
    return it == A.end() ? cplx(0.0) : it->second;
  };

  if (lam.model == Model::hartree) {
    for (const auto& [j, z] : A) f.set_u_hat(j, z);
    return f;
  }
  for (std::int64_t a = -J; a <= J; ++a)
    for (std::int64_t b = 0; b <= J; ++b) {
      const ModeVector j{a, b};
      if (b == 0 && a <= 0) continue;  // mirrors of a > 0 (and j = 0 stays zero)
      const cplx ap = amp(j), am = std::conj(amp(-j));
      if (ap == 0.0 && am == 0.0) continue;
      const double w = omega_of(j, lam.model);
      f.set_u_hat(j, (ap + am) / std::sqrt(2 * w));
      f.set_v_hat(j, cplx(0, -1) * std::sqrt(w / 2) * (ap - am));
    }
  return f;
}

PdeSeries run_pde(const InitialDataSpec& spec, const PdeOptions& opt, double t_end, std::int64_t sample_every,
                  const std::optional<HartreePotential>& V) {
  if (!(t_end > 0) || !std::isfinite(t_end)) throw std::invalid_argument("run_pde: t_end must be positive");
  if (sample_every < 1) throw std::invalid_argument("run_pde: sample_every must be >= 1");
  if (!(spec.delta > 0)) throw std::invalid_argument("run_pde: delta must be positive");
  auto f = build_initial_data(spec, opt, V);
  PdeSeries out;
  out.J = f.truncation();
  const double dt0 = opt.dt > 0 ? opt.dt : default_time_step(spec.lambda.model, out.J);
  out.steps = static_cast<std::int64_t>(std::ceil(t_end / dt0 - 1e-9));
  out.dt = t_end / static_cast<double>(out.steps);
  out.modes = spec.lambda.modes();
  const bool realfield = spec.lambda.model != Model::hartree;
  auto sample = [&](std::int64_t k) {
    const double t = k == out.steps ? t_end : static_cast<double>(k) * out.dt;
    out.t.push_back(t);
    out.tau.push_back(spec.delta * spec.delta * t);
    std::vector<double> I;
    for (const auto& n : out.modes) I.push_back(mode_intensity(f, n, spec.delta));
    out.intensity.push_back(std::move(I));
    out.energy.push_back(energy(f));
    out.mass.push_back(mass(f));
    out.remainder.push_back({remainder_norm(f, out.modes, 0), remainder_norm(f, out.modes, 1),
                             remainder_norm(f, out.modes, 2)});
    out.odd_violation.push_back(realfield ? odd_subspace_violation(f) : std::numeric_limits<double>::quiet_NaN());
  };
  sample(0);
  for (std::int64_t k = 1; k <= out.steps; ++k) {
    step(f, out.dt);
    if (k % sample_every == 0 || k == out.steps) sample(k);
  }
  return out;
}

ShadowingReport shadowing_run(const InitialDataSpec& spec, const PdeOptions& opt, double tau_end, int samples,
                              const std::optional<HartreePotential>& V) {
  if (!(tau_end > 0)) throw std::invalid_argument("shadowing_run: tau_end must be positive");
  if (samples < 1) throw std::invalid_argument("shadowing_run: samples must be >= 1");
  if (!(spec.delta > 0)) throw std::invalid_argument("shadowing_run: delta must be positive");
  ShadowingReport rep;
  rep.delta = spec.delta;
  rep.tau_end = tau_end;
  const double t_end = tau_end / (spec.delta * spec.delta);
  const int J = opt.J > 0 ? opt.J : default_truncation(spec.lambda);
  const double dt0 = opt.dt > 0 ? opt.dt : default_time_step(spec.lambda.model, J);
  const auto steps = static_cast<std::int64_t>(std::ceil(t_end / dt0 - 1e-9));
  const std::int64_t every = std::max<std::int64_t>(1, steps / samples);
  rep.pde = run_pde(spec, opt, t_end, every, V);

  std::optional<HartreePotential> pot = V;
  if (spec.lambda.model == Model::hartree && !pot) pot = HartreePotential::constant(1.0);
  const auto H = build_resonant_hamiltonian(spec.lambda, pot, opt.sign);
  ResonantOptions ro;
  ro.sample_dt = spec.delta * spec.delta * rep.pde.dt * static_cast<double>(every);
  rep.resonant = evolve_resonant(spec.a0, H, tau_end, ro);
  if (!rep.resonant.ok()) throw std::runtime_error("shadowing_run: resonant integration failed");

  std::size_t k = 0;
  for (std::size_t i = 0; i < rep.pde.tau.size(); ++i) {
    const double tau = rep.pde.tau[i];
    while (k < rep.resonant.t.size() && rep.resonant.t[k] < tau - 1e-9 * std::max(1.0, tau)) ++k;
    if (k == rep.resonant.t.size() || std::abs(rep.resonant.t[k] - tau) > 1e-9 * std::max(1.0, tau))
      throw std::logic_error("shadowing_run: resonant samples do not align with the PDE grid");
    for (std::size_t m = 0; m < rep.pde.modes.size(); ++m)
      rep.intensity_sup =
          std::max(rep.intensity_sup, std::abs(rep.pde.intensity[i][m] - std::norm(rep.resonant.states[k][m])));
    rep.remainder_h2_sup = std::max(rep.remainder_h2_sup, rep.pde.remainder[i][2]);
  }
  return rep;
}

}  // namespace reslab
