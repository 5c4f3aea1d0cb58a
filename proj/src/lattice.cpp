#include "reslab/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace reslab {

std::string_view to_string(Model m) {
  switch (m) {
    case Model::wave: return "wave";
    case Model::beam: return "beam";
    case Model::hartree: return "hartree";
  }
  return "unknown";
}

Model model_from_string(std::string_view name) {
  if (name == "wave") return Model::wave;
  if (name == "beam") return Model::beam;
  if (name == "hartree") return Model::hartree;
  throw std::invalid_argument("unknown model '" + std::string(name) + "'");
}

std::int64_t ModeVector::sup_norm() const { return std::max(j1 < 0 ? -j1 : j1, j2 < 0 ? -j2 : j2); }

std::string to_string(const ModeVector& v) {
  std::ostringstream os;
  os << "(" << v.j1 << "," << v.j2 << ")";
  return os.str();
}

Frequency frequency(const ModeVector& j, Model model) {
  Frequency f;
  if (model == Model::wave) {
    f.exact = SqrtSum::sqrt_of(j.norm2());
    f.approx = std::sqrt(static_cast<double>(j.norm2()));
  } else {
    f.exact = SqrtSum::integer(j.norm2());
    f.approx = static_cast<double>(j.norm2());
  }
  return f;
}

double frequency_value(const ModeVector& j, Model model) {
  const auto n2 = static_cast<double>(j.norm2());
  return model == Model::wave ? std::sqrt(n2) : n2;
}

bool in_ambient_set(const ModeVector& j, Model model) {
  return model == Model::hartree || j.is_odd();
}

namespace {

SqrtSum signed_frequency_sum(const Quad& q, const std::array<int, 4>& signs, Model model) {
  if (model == Model::wave) {
    SqrtSum s;
    for (int i = 0; i < 4; ++i) s += SqrtSum::sqrt_of(q[i].norm2()).scaled(signs[i]);
    return s;
  }
  std::int64_t s = 0;
  for (int i = 0; i < 4; ++i) s += signs[i] * q[i].norm2();
  return SqrtSum::integer(s);
}

constexpr std::array<int, 4> kAlternating{+1, -1, +1, -1};

std::int64_t cross(const ModeVector& a, const ModeVector& b) { return a.j1 * b.j2 - a.j2 * b.j1; }

}  // namespace

bool momentum_resonant(const Quad& q) { return q[0] - q[1] + q[2] - q[3] == ModeVector{}; }

bool frequency_resonant(const Quad& q, Model model) {
  return signed_frequency_sum(q, kAlternating, model).is_zero();
}

bool pairwise_distinct(const Quad& q) {
  for (int i = 0; i < 4; ++i)
    for (int k = i + 1; k < 4; ++k)
      if (q[i] == q[k]) return false;
  return true;
}

bool is_degenerate(const Quad& q) {
  const bool collinear = cross(q[1] - q[0], q[2] - q[0]) == 0 && cross(q[3] - q[0], q[2] - q[0]) == 0;
  auto a = std::minmax(q[0], q[2]);
  auto b = std::minmax(q[1], q[3]);
  return collinear || a == b;
}

Quad normalize_tuple(const Quad& q) {
  static constexpr std::array<std::array<int, 4>, 8> kImages{{
      {0, 1, 2, 3}, {1, 2, 3, 0}, {2, 3, 0, 1}, {3, 0, 1, 2},
      {0, 3, 2, 1}, {1, 0, 3, 2}, {2, 1, 0, 3}, {3, 2, 1, 0},
  }};
  Quad best = q;
  for (const auto& perm : kImages) {
    Quad img{q[perm[0]], q[perm[1]], q[perm[2]], q[perm[3]]};
    if (img < best) best = img;
  }
  return best;
}

ResonantTuple make_resonant_tuple(const Quad& q, Model model) {
  if (!momentum_resonant(q))
    throw std::invalid_argument("tuple violates momentum condition n1-n2+n3-n4=0");
  if (!frequency_resonant(q, model))
    throw std::invalid_argument("tuple is not frequency resonant for model " + std::string(to_string(model)));
  return ResonantTuple{q, model, is_degenerate(q)};
}

Ellipse wave_ellipse(const ResonantTuple& t) {
  Ellipse e;
  e.focus1 = ModeVector{};
  e.focus2 = t[0] + t[2];
  e.major_axis = SqrtSum::sqrt_of(t[0].norm2()) + SqrtSum::sqrt_of(t[2].norm2());
  e.semi_major = 0.5 * e.major_axis.value();
  return e;
}

bool Annulus::contains(const ModeVector& n) const {
  const double r = std::sqrt(static_cast<double>(n.norm2()));
  return radius * (1.0 - eps) <= r && r <= radius * (1.0 + eps);
}

namespace {

std::vector<ModeVector> box_points(Model model, int box, const std::optional<Annulus>& annulus) {
  std::vector<ModeVector> pts;
  for (std::int64_t a = -box; a <= box; ++a)
    for (std::int64_t b = -box; b <= box; ++b) {
      ModeVector j{a, b};
      if (!in_ambient_set(j, model)) continue;
      if (annulus && !annulus->contains(j)) continue;
      pts.push_back(j);
    }
  return pts;
}

struct DiagonalKey {
  ModeVector sum;
  SqrtSum freq;
  auto operator<=>(const DiagonalKey&) const = default;
};

}  // namespace

std::vector<ResonantTuple> enumerate_tuples(Model model, int box, std::optional<Annulus> annulus,
                                            int threads) {
  if (box < 1) throw std::invalid_argument("enumerate_tuples: box must be >= 1");
  const auto pts = box_points(model, box, annulus);

  // Opposite vertices (n1,n3) and (n2,n4) share the vector sum and the frequency sum.
  std::vector<SqrtSum> freq;
  freq.reserve(pts.size());
  for (const auto& p : pts) freq.push_back(frequency(p, model).exact);
  std::map<DiagonalKey, std::vector<std::pair<ModeVector, ModeVector>>> groups;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t k = i + 1; k < pts.size(); ++k)
      groups[{pts[i] + pts[k], freq[i] + freq[k]}].emplace_back(pts[i], pts[k]);

  std::vector<const std::vector<std::pair<ModeVector, ModeVector>>*> buckets;
  for (const auto& [key, pairs] : groups)
    if (pairs.size() > 1) buckets.push_back(&pairs);

  const int workers = std::max(1, threads);
  std::vector<std::set<Quad>> partial(workers);
  auto work = [&](int w) {
    for (std::size_t b = w; b < buckets.size(); b += workers) {
      const auto& pairs = *buckets[b];
      for (std::size_t i = 0; i < pairs.size(); ++i)
        for (std::size_t k = i + 1; k < pairs.size(); ++k) {
          Quad q{pairs[i].first, pairs[k].first, pairs[i].second, pairs[k].second};
          if (is_degenerate(q)) continue;
          partial[w].insert(normalize_tuple(q));
        }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }

  std::set<Quad> merged;
  for (auto& s : partial) merged.merge(s);
  std::vector<ResonantTuple> out;
  out.reserve(merged.size());
  for (const auto& q : merged) out.push_back(ResonantTuple{q, model, false});
  return out;
}

std::vector<ResonantTuple> enumerate_beam_tuples(int box, std::optional<Annulus> annulus) {
  return enumerate_tuples(Model::beam, box, annulus);
}
std::vector<ResonantTuple> enumerate_wave_tuples(int box, std::optional<Annulus> annulus) {
  return enumerate_tuples(Model::wave, box, annulus);
}
std::vector<ResonantTuple> enumerate_hartree_tuples(int box, std::optional<Annulus> annulus) {
  return enumerate_tuples(Model::hartree, box, annulus);
}

std::vector<H41Violation> check_h41(std::span<const ModeVector> lambda_modes, Model model) {
  const std::set<ModeVector> in_lambda(lambda_modes.begin(), lambda_modes.end());
  std::vector<H41Violation> out;
  for (const auto& j1 : lambda_modes)
    for (const auto& j2 : lambda_modes)
      for (const auto& j3 : lambda_modes)
        for (int mask = 0; mask < 16; ++mask) {
          std::array<int, 4> s{};
          for (int b = 0; b < 4; ++b) s[b] = (mask >> b) & 1 ? -1 : +1;
          const ModeVector partial = j1 * s[0] + j2 * s[1] + j3 * s[2];
          const ModeVector j4 = partial * (-s[3]);
          if (in_lambda.contains(j4) || !in_ambient_set(j4, model)) continue;
          const Quad q{j1, j2, j3, j4};
          if (signed_frequency_sum(q, s, model).is_zero()) out.push_back({q, s});
        }
  return out;
}

std::vector<ModeVector> LambdaSet::modes() const {
  std::vector<ModeVector> out;
  out.reserve(4 * tuples.size());
  for (const auto& t : tuples) out.insert(out.end(), t.modes.begin(), t.modes.end());
  return out;
}

bool LambdaSet::certificate_passed() const {
  return std::all_of(certificate.begin(), certificate.end(), [](const CheckResult& c) { return c.passed; });
}

const CheckResult* LambdaSet::check(std::string_view name) const {
  for (const auto& c : certificate)
    if (c.name == name) return &c;
  return nullptr;
}

std::vector<Quad> cross_tuple_exchanges(const LambdaSet& lambda) {
  const auto modes = lambda.modes();
  const std::size_t n = modes.size();
  std::set<Quad> found;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t c = 0; c < n; ++c)
        for (std::size_t d = 0; d < n; ++d) {
          const Quad q{modes[a], modes[b], modes[c], modes[d]};
          if (a / 4 == b / 4 && b / 4 == c / 4 && c / 4 == d / 4) continue;
          if (std::minmax(q[0], q[2]) == std::minmax(q[1], q[3])) continue;
          if (!momentum_resonant(q) || !frequency_resonant(q, lambda.model)) continue;
          found.insert(normalize_tuple(q));
        }
  return {found.begin(), found.end()};
}

LambdaSet validate_lambda(std::vector<ResonantTuple> tuples, std::optional<Annulus> annulus,
                          std::span<const ExtraCheck> extra_checks) {
  if (tuples.empty()) throw std::invalid_argument("validate_lambda: need at least one tuple");
  const Model model = tuples.front().model;
  for (auto& t : tuples) {
    if (t.model != model) throw std::invalid_argument("validate_lambda: tuples of mixed models");
    t = make_resonant_tuple(t.modes, model);
  }

  LambdaSet out;
  out.tuples = std::move(tuples);
  out.model = model;
  out.annulus = annulus;
  const auto modes = out.modes();

  {
    std::set<ModeVector> seen;
    std::vector<std::string> dup;
    for (const auto& m : modes)
      if (!seen.insert(m).second) dup.push_back(to_string(m));
    std::string detail = dup.empty() ? "all modes distinct" : "repeated modes:";
    for (const auto& d : dup) detail += " " + d;
    out.certificate.push_back({"pairwise_disjoint", dup.empty(), detail});
  }
  {
    std::string detail = model == Model::hartree ? "hartree: no parity restriction" : "all modes in Z^2_odd";
    bool ok = true;
    for (const auto& m : modes)
      if (!in_ambient_set(m, model)) {
        if (ok) detail = "outside Z^2_odd:";
        ok = false;
        detail += " " + to_string(m);
      }
    out.certificate.push_back({"parity", ok, detail});
  }
  if (annulus) {
    bool ok = true;
    std::string detail = "all modes inside annulus";
    for (const auto& m : modes)
      if (!annulus->contains(m)) {
        if (ok) detail = "outside annulus:";
        ok = false;
        detail += " " + to_string(m);
      }
    out.certificate.push_back({"annulus", ok, detail});
  }
  {
    bool ok = true;
    std::string detail = "no degenerate tuple";
    for (std::size_t r = 0; r < out.tuples.size(); ++r)
      if (out.tuples[r].degenerate || !pairwise_distinct(out.tuples[r].modes)) {
        if (ok) detail = "degenerate tuples:";
        ok = false;
        detail += " " + std::to_string(r);
      }
    out.certificate.push_back({"non_degenerate", ok, detail});
  }
  out.h41_violations = check_h41(modes, model);
  out.certificate.push_back({"h41", out.h41_violations.empty(),
                             std::to_string(out.h41_violations.size()) + " resonant monomials with one mode outside"});
  {
    const auto cross = cross_tuple_exchanges(out);
    out.certificate.push_back({"no_cross_tuple_exchange", cross.empty(),
                               std::to_string(cross.size()) + " resonant exchanges between tuples"});
  }
  for (const auto& check : extra_checks) out.certificate.push_back(check(out));
  return out;
}

}  // namespace reslab
