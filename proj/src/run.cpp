#include "reslab/run.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include "reslab/rng.hpp"

namespace fs = std::filesystem;

namespace reslab {

namespace {

// Reads fields from one JSON object and rejects whatever was not consumed.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  const Json* raw(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <class T>
  void get(const char* key, T& out) {
    const Json* v = raw(key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v->is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>)
          if (v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v->is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v->is_string()) throw ConfigError("");
      }
      out = v->get<T>();
    } catch (const std::exception&) {
      throw ConfigError(where() + "." + key + " has the wrong type");
    }
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config key " + where() + "." + k);
  }

  std::string where() const { return path_.empty() ? "<root>" : path_; }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

ModeVector mode_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
    throw ConfigError("a mode must be [j1, j2] with integer entries");
  return {j[0].get<std::int64_t>(), j[1].get<std::int64_t>()};
}

Json mode_to_json(const ModeVector& m) { return Json::array({m.j1, m.j2}); }

Quad quad_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw ConfigError("a tuple must list four modes");
  Quad q;
  for (int k = 0; k < 4; ++k) q[k] = mode_from_json(j[k]);
  return q;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

const std::set<std::string> kStages{"lattice", "validate", "resonant", "pde", "shadow", "analyze"};

void check_config(const RunConfig& c) {
  require(c.threads >= 1, "threads must be >= 1");
  require(!c.out_dir.empty(), "out_dir must not be empty");
  for (const auto& s : c.stages) require(kStages.count(s) == 1, "unknown stage '" + s + "'");
  require(c.lattice.box >= 1, "lattice.box must be >= 1");
  require(c.lattice.count >= 1, "lattice.count must be >= 1");
  require(c.init.preset == "random" || c.init.preset == "tuple" || c.init.preset == "explicit",
          "init.preset must be random, tuple or explicit");
  require(c.init.mass > 0 && c.init.mass <= 2, "init.mass must lie in (0, 2]");
  require(c.init.K >= 0 && c.init.K <= 1, "init.K must lie in [0, 1]");
  require(c.resonant.t_end > 0, "resonant.t_end must be positive");
  require(c.resonant.sample_dt >= 0, "resonant.sample_dt must be >= 0");
  require(c.resonant.tol > 0, "resonant.tol must be positive");
  require(c.resonant.sign == 1 || c.resonant.sign == -1, "resonant.sign must be +1 or -1");
  require(c.pde.delta > 0, "pde.delta must be positive");
  require(c.pde.J >= 0 && c.pde.dt >= 0, "pde.J and pde.dt must be >= 0");
  require(c.pde.tau_end > 0 || c.pde.t_end > 0, "pde needs a positive tau_end or t_end");
  require(c.pde.sample_every >= 0, "pde.sample_every must be >= 0");
  require(c.pde.sign == 1 || c.pde.sign == -1, "pde.sign must be +1 or -1");
  require(c.pde.background >= 0, "pde.background must be >= 0");
  require(c.potential.eps >= 0, "potential.eps must be >= 0");
  require(c.analyze.source == "resonant" || c.analyze.source == "pde", "analyze.source must be resonant or pde");
  require(c.analyze.eps > 0 && c.analyze.eps < 0.5, "analyze.eps must lie in (0, 1/2)");
  require(c.analyze.tuple >= 1, "analyze.tuple must be >= 1");
  if (c.sweep)
    for (double v : c.sweep->values) require(std::isfinite(v), "sweep values must be finite");
}

std::string model_name(Model m) { return std::string(to_string(m)); }

void write_json_file(const fs::path& p, const Json& j) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + p.string() + "' for writing");
  f << j.dump(2) << '\n';
}

}  // namespace

RunConfig config_from_json(const Json& j) {
  RunConfig c;
  Section root(j, "");
  if (const Json* m = root.raw("model")) {
    if (!m->is_string()) throw ConfigError("model must be a string");
    try {
      c.model = model_from_string(m->get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  root.get("seed", c.seed);
  root.get("threads", c.threads);
  root.get("out_dir", c.out_dir);
  if (const Json* st = root.raw("stages")) {
    if (!st->is_array()) throw ConfigError("stages must be an array of names");
    c.stages.clear();
    for (const auto& s : *st) {
      if (!s.is_string()) throw ConfigError("stages must be an array of names");
      c.stages.push_back(s.get<std::string>());
    }
  }
  if (const Json* l = root.raw("lattice")) {
    Section s(*l, "lattice");
    s.get("box", c.lattice.box);
    s.get("count", c.lattice.count);
    s.get("lambda_file", c.lattice.lambda_file);
    if (const Json* a = s.raw("annulus")) {
      if (!a->is_array() || a->size() != 2 || !(*a)[0].is_number() || !(*a)[1].is_number())
        throw ConfigError("lattice.annulus must be [radius, eps]");
      c.lattice.annulus = Annulus{(*a)[0].get<double>(), (*a)[1].get<double>()};
    }
    if (const Json* t = s.raw("tuples")) {
      if (!t->is_array()) throw ConfigError("lattice.tuples must be an array");
      for (const auto& q : *t) c.lattice.tuples.push_back(quad_from_json(q));
    }
    s.finish();
  }
  if (const Json* i = root.raw("init")) {
    Section s(*i, "init");
    s.get("preset", c.init.preset);
    s.get("psi", c.init.psi);
    s.get("K", c.init.K);
    s.get("mass", c.init.mass);
    if (const Json* a = s.raw("amplitudes")) {
      if (!a->is_array()) throw ConfigError("init.amplitudes must be an array of [re, im]");
      for (const auto& z : *a) {
        if (!z.is_array() || z.size() != 2 || !z[0].is_number() || !z[1].is_number())
          throw ConfigError("init.amplitudes must be an array of [re, im]");
        c.init.amplitudes.emplace_back(z[0].get<double>(), z[1].get<double>());
      }
    }
    s.finish();
  }
  if (const Json* r = root.raw("resonant")) {
    Section s(*r, "resonant");
    s.get("t_end", c.resonant.t_end);
    s.get("sample_dt", c.resonant.sample_dt);
    s.get("sign", c.resonant.sign);
    s.get("rotating_frame", c.resonant.rotating_frame);
    s.get("tol", c.resonant.tol);
    s.finish();
  }
  if (const Json* p = root.raw("pde")) {
    Section s(*p, "pde");
    s.get("delta", c.pde.delta);
    s.get("J", c.pde.J);
    s.get("dt", c.pde.dt);
    s.get("tau_end", c.pde.tau_end);
    s.get("t_end", c.pde.t_end);
    s.get("sample_every", c.pde.sample_every);
    s.get("sign", c.pde.sign);
    s.get("hartree_literal", c.pde.hartree_literal);
    s.get("background", c.pde.background);
    s.finish();
  }
  if (const Json* p = root.raw("potential")) {
    Section s(*p, "potential");
    s.get("eps", c.potential.eps);
    s.get("background", c.potential.background);
    s.get("file", c.potential.file);
    s.finish();
  }
  if (const Json* a = root.raw("analyze")) {
    Section s(*a, "analyze");
    s.get("source", c.analyze.source);
    s.get("eps", c.analyze.eps);
    s.get("tuple", c.analyze.tuple);
    if (const Json* T = s.raw("T_hint")) {
      if (!T->is_null()) {
        if (!T->is_number()) throw ConfigError("analyze.T_hint must be a number");
        c.analyze.T_hint = T->get<double>();
      }
    }
    s.get("min_length_factor", c.analyze.min_length_factor);
    s.finish();
  }
  if (const Json* w = root.raw("sweep")) {
    Section s(*w, "sweep");
    SweepAxis ax;
    s.get("key", ax.key);
    if (const Json* v = s.raw("values")) {
      if (!v->is_array()) throw ConfigError("sweep.values must be an array of numbers");
      for (const auto& x : *v) {
        if (!x.is_number()) throw ConfigError("sweep.values must be an array of numbers");
        ax.values.push_back(x.get<double>());
      }
    }
    s.finish();
    c.sweep = ax;
  }
  root.finish();
  check_config(c);
  return c;
}

Json config_to_json(const RunConfig& c) {
  Json j;
  j["model"] = model_name(c.model);
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["out_dir"] = c.out_dir;
  j["stages"] = c.stages;
  Json l;
  l["box"] = c.lattice.box;
  l["count"] = c.lattice.count;
  l["lambda_file"] = c.lattice.lambda_file;
  if (c.lattice.annulus) l["annulus"] = Json::array({c.lattice.annulus->radius, c.lattice.annulus->eps});
  l["tuples"] = Json::array();
  for (const auto& q : c.lattice.tuples) {
    Json t = Json::array();
    for (const auto& m : q) t.push_back(mode_to_json(m));
    l["tuples"].push_back(t);
  }
  j["lattice"] = l;
  Json i;
  i["preset"] = c.init.preset;
  i["psi"] = c.init.psi;
  i["K"] = c.init.K;
  i["mass"] = c.init.mass;
  i["amplitudes"] = Json::array();
  for (const auto& z : c.init.amplitudes) i["amplitudes"].push_back(Json::array({z.real(), z.imag()}));
  j["init"] = i;
  j["resonant"] = {{"t_end", c.resonant.t_end},
                   {"sample_dt", c.resonant.sample_dt},
                   {"sign", c.resonant.sign},
                   {"rotating_frame", c.resonant.rotating_frame},
                   {"tol", c.resonant.tol}};
  j["pde"] = {{"delta", c.pde.delta},          {"J", c.pde.J},
              {"dt", c.pde.dt},                {"tau_end", c.pde.tau_end},
              {"t_end", c.pde.t_end},          {"sample_every", c.pde.sample_every},
              {"sign", c.pde.sign},            {"hartree_literal", c.pde.hartree_literal},
              {"background", c.pde.background}};
  j["potential"] = {{"eps", c.potential.eps}, {"background", c.potential.background}, {"file", c.potential.file}};
  Json a{{"source", c.analyze.source},
         {"eps", c.analyze.eps},
         {"tuple", c.analyze.tuple},
         {"min_length_factor", c.analyze.min_length_factor}};
  a["T_hint"] = c.analyze.T_hint ? Json(*c.analyze.T_hint) : Json(nullptr);
  j["analyze"] = a;
  if (c.sweep) j["sweep"] = {{"key", c.sweep->key}, {"values", c.sweep->values}};
  return j;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(f);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const RunConfig& c) {
  Json j = config_to_json(c);
  j.erase("out_dir");
  return hex64(fnv1a64(j.dump()));
}

RunConfig with_value(const RunConfig& c, const std::string& key, double value) {
  Json j = config_to_json(c);
  Json* node = &j;
  std::string rest = key;
  for (;;) {
    const auto dot = rest.find('.');
    const std::string part = rest.substr(0, dot);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("sweep key '" + key + "' does not exist");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    rest = rest.substr(dot + 1);
  }
  if (node->is_number_integer()) {
    if (value != std::floor(value)) throw ConfigError("sweep key '" + key + "' takes integer values");
    if (node->is_number_unsigned()) *node = static_cast<std::uint64_t>(value);
    else *node = static_cast<std::int64_t>(value);
  } else if (node->is_number() || node->is_null()) {
    *node = value;
  } else {
    throw ConfigError("sweep key '" + key + "' is not numeric");
  }
  return config_from_json(j);
}

Json tuple_to_json(const ResonantTuple& t, bool with_certificate) {
  Json j;
  j["model"] = model_name(t.model);
  j["degenerate"] = t.degenerate;
  j["modes"] = Json::array();
  j["frequencies"] = Json::array();
  for (const auto& m : t.modes) {
    j["modes"].push_back(mode_to_json(m));
    const auto f = frequency(m, t.model);
    Json fr{{"exact", f.exact.to_string()}, {"value", f.approx}};
    if (t.model == Model::wave) {
      const auto [root, sqf] = squarefree_decompose(m.norm2());
      fr["squarefree"] = {{"norm2", m.norm2()}, {"root", root}, {"radicand", sqf}};
    }
    j["frequencies"].push_back(fr);
  }
  if (t.model == Model::wave) {
    const auto e = wave_ellipse(t);
    j["ellipse"] = {{"focus1", mode_to_json(e.focus1)},
                    {"focus2", mode_to_json(e.focus2)},
                    {"major_axis", e.major_axis.to_string()},
                    {"semi_major", e.semi_major}};
  } else {
    // rectangles: circumscribed circle centred at (n1 + n3) / 2
    const auto s = t.modes[0] + t.modes[2];
    const auto d = t.modes[0] - t.modes[2];
    j["ellipse"] = {{"center", Json::array({0.5 * static_cast<double>(s.j1), 0.5 * static_cast<double>(s.j2)})},
                    {"radius", 0.5 * std::sqrt(static_cast<double>(d.norm2()))}};
  }
  if (with_certificate) j["certificate"] = certificate_to_json(validate_lambda({t}));
  return j;
}

Json lambda_to_json(const LambdaSet& lambda) {
  Json j;
  j["model"] = model_name(lambda.model);
  j["tuples"] = Json::array();
  for (const auto& t : lambda.tuples) j["tuples"].push_back(tuple_to_json(t, false));
  if (lambda.annulus) j["annulus"] = Json::array({lambda.annulus->radius, lambda.annulus->eps});
  j["certificate"] = certificate_to_json(lambda);
  return j;
}

LambdaSet lambda_from_json(const Json& j) {
  const Json* arr = &j;
  std::optional<Model> model;
  if (j.is_object()) {
    if (!j.contains("tuples")) throw ConfigError("lambda JSON object needs a \"tuples\" array");
    arr = &j["tuples"];
    if (j.contains("model")) model = model_from_string(j["model"].get<std::string>());
  }
  if (!arr->is_array() || arr->empty()) throw ConfigError("lambda JSON holds no tuples");
  std::vector<ResonantTuple> tuples;
  for (const auto& t : *arr) {
    if (!t.is_object() || !t.contains("modes")) throw ConfigError("each lambda tuple needs \"modes\"");
    Model m = model.value_or(Model::beam);
    if (t.contains("model")) m = model_from_string(t["model"].get<std::string>());
    else if (!model) throw ConfigError("lambda tuple without a model");
    try {
      tuples.push_back(make_resonant_tuple(quad_from_json(t["modes"]), m));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("lambda tuple rejected: ") + e.what());
    }
  }
  try {
    return validate_lambda(std::move(tuples));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("lambda rejected: ") + e.what());
  }
}

LambdaSet load_lambda(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("lambda file '" + path + "' does not exist");
  try {
    return lambda_from_json(Json::parse(f));
  } catch (const Json::exception& e) {
    throw ConfigError("lambda file '" + path + "': " + e.what());
  }
}

Json certificate_to_json(const LambdaSet& lambda) {
  Json j;
  j["passed"] = lambda.certificate_passed();
  j["checks"] = Json::array();
  for (const auto& c : lambda.certificate)
    j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  j["h41_violations"] = Json::array();
  for (const auto& v : lambda.h41_violations) {
    Json m = Json::array();
    for (const auto& x : v.modes) m.push_back(mode_to_json(x));
    j["h41_violations"].push_back({{"modes", m}, {"signs", v.signs}});
  }
  return j;
}

Json potential_to_json(const HartreePotential& V) {
  Json g = Json::array();
  for (const auto& [k, v] : V.gamma()) g.push_back(Json::array({k.j1, k.j2, v}));
  return {{"eps", V.eps()}, {"background", V.background()}, {"gamma", g}};
}

HartreePotential potential_from_json(const Json& j) {
  Section s(j, "potential");
  double eps = 0.0, background = 1.0;
  s.get("eps", eps);
  s.get("background", background);
  std::map<ModeVector, double> gamma;
  if (const Json* g = s.raw("gamma")) {
    if (!g->is_array()) throw ConfigError("potential.gamma must be an array of [j1, j2, value]");
    for (const auto& e : *g) {
      if (!e.is_array() || e.size() != 3 || !e[0].is_number_integer() || !e[1].is_number_integer() || !e[2].is_number())
        throw ConfigError("potential.gamma must be an array of [j1, j2, value]");
      gamma[{e[0].get<std::int64_t>(), e[1].get<std::int64_t>()}] = e[2].get<double>();
    }
  }
  s.finish();
  try {
    return HartreePotential(eps, std::move(gamma), background);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("potential rejected: ") + e.what());
  }
}

LambdaSet build_lambda(const RunConfig& c) {
  if (!c.lattice.lambda_file.empty()) {
    auto lam = load_lambda(c.lattice.lambda_file);
    if (lam.model != c.model) throw ConfigError("lambda file model differs from the configured model");
    return lam;
  }
  std::vector<ResonantTuple> tuples;
  if (!c.lattice.tuples.empty()) {
    for (const auto& q : c.lattice.tuples) {
      try {
        tuples.push_back(make_resonant_tuple(q, c.model));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("lattice.tuples: ") + e.what());
      }
    }
  } else {
    std::set<ModeVector> used;
    for (const auto& t : enumerate_tuples(c.model, c.lattice.box, c.lattice.annulus, c.threads)) {
      if (static_cast<int>(tuples.size()) == c.lattice.count) break;
      bool disjoint = true;
      for (const auto& m : t.modes) disjoint = disjoint && !used.count(m);
      if (!disjoint) continue;
      for (const auto& m : t.modes) used.insert(m);
      tuples.push_back(t);
    }
    if (tuples.empty()) throw ConfigError("lattice: no resonant tuples in the requested box");
  }
  return validate_lambda(std::move(tuples), c.lattice.annulus);
}

ComplexModeState initial_amplitudes(const RunConfig& c, const LambdaSet& lambda) {
  const std::size_t n = lambda.modes().size();
  if (c.init.preset == "explicit") {
    if (c.init.amplitudes.size() != n)
      throw ConfigError("init.amplitudes has " + std::to_string(c.init.amplitudes.size()) + " entries, Lambda has " +
                        std::to_string(n) + " modes");
    return {c.init.amplitudes.begin(), c.init.amplitudes.end()};
  }
  ComplexModeState a(n);
  SplitMix64 rng(c.seed);
  for (std::size_t r = 0; r < lambda.size(); ++r) {
    double K = c.init.K;
    double ph[4] = {c.init.psi, 0.0, 0.0, 0.0};
    if (c.init.preset == "random") {
      K = rng.uniform(0.1, 0.9);
      for (double& p : ph) p = rng.uniform(0.0, 2 * std::numbers::pi);
    }
    const double M = c.init.mass;
    const double I[4] = {(1 - K) * M / 2, K * M / 2, (1 - K) * M / 2, K * M / 2};
    for (int k = 0; k < 4; ++k) a[4 * r + k] = std::polar(std::sqrt(I[k]), ph[k]);
  }
  return a;
}

std::optional<HartreePotential> build_potential(const RunConfig& c, const LambdaSet& lambda) {
  if (c.model != Model::hartree) return std::nullopt;
  if (!c.potential.file.empty()) {
    std::ifstream f(c.potential.file);
    if (!f) throw ConfigError("potential file '" + c.potential.file + "' does not exist");
    try {
      return potential_from_json(Json::parse(f));
    } catch (const Json::exception& e) {
      throw ConfigError("potential file '" + c.potential.file + "': " + e.what());
    }
  }
  return HartreePotential::sampled(lambda, c.potential.eps, c.seed, c.potential.background);
}

CsvTable resonant_table(const ResonantTrajectory& tr, const ResonantHamiltonian& H) {
  CsvTable t;
  const int n = H.size(), N = H.tuples;
  t.columns.push_back("t");
  for (int k = 1; k <= n; ++k) {
    t.columns.push_back("re_" + std::to_string(k));
    t.columns.push_back("im_" + std::to_string(k));
  }
  t.columns.push_back("H");
  for (int r = 1; r <= N; ++r) t.columns.push_back("M_" + std::to_string(r));
  t.columns.push_back("P_x");
  t.columns.push_back("P_y");
  for (int r = 1; r <= N; ++r) t.columns.push_back("psi_" + std::to_string(r));
  for (int r = 1; r <= N; ++r) t.columns.push_back("K_" + std::to_string(r));
  for (int r = 1; r <= N; ++r) t.columns.push_back("y_" + std::to_string(r));
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < tr.t.size(); ++i) {
    const auto& a = tr.states[i];
    std::vector<double> row{tr.t[i]};
    for (const auto& z : a) {
      row.push_back(z.real());
      row.push_back(z.imag());
    }
    for (double v : first_integrals(a, H, !tr.rotating_frame)) row.push_back(v);
    std::vector<double> psi(N, nan), K(N, nan), y(N, nan);
    for (int r = 0; r < N; ++r) {
      double M = 0.0;
      for (int k = 0; k < 4; ++k) M += std::norm(a[4 * r + k]);
      if (M > 0) y[r] = 2 * std::norm(a[4 * r]) / M;
      try {
        const auto aa = reduce_to_action_angle(a, r);
        psi[r] = aa.psi;
        K[r] = aa.K;
      } catch (const std::domain_error&) {
      }
    }
    row.insert(row.end(), psi.begin(), psi.end());
    row.insert(row.end(), K.begin(), K.end());
    row.insert(row.end(), y.begin(), y.end());
    t.add_row(std::move(row));
  }
  return t;
}

CsvTable pde_table(const PdeSeries& s, int tuples) {
  CsvTable t;
  const std::size_t n = s.modes.size();
  t.columns = {"t", "tau"};
  for (std::size_t k = 1; k <= n; ++k) t.columns.push_back("I_" + std::to_string(k));
  for (int r = 1; r <= tuples; ++r) t.columns.push_back("y_" + std::to_string(r));
  for (const char* c : {"energy", "mass", "rem_H0", "rem_H1", "rem_H2", "odd_violation"}) t.columns.push_back(c);
  std::vector<double> half_mass(tuples, 0.0);
  if (!s.intensity.empty())
    for (int r = 0; r < tuples; ++r)
      for (int k = 0; k < 4; ++k) half_mass[r] += 0.5 * s.intensity.front()[4 * r + k];
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    std::vector<double> row{s.t[i], s.tau[i]};
    row.insert(row.end(), s.intensity[i].begin(), s.intensity[i].end());
    for (int r = 0; r < tuples; ++r)
      row.push_back(half_mass[r] > 0 ? s.intensity[i][4 * r] / half_mass[r] : std::numeric_limits<double>::quiet_NaN());
    row.push_back(s.energy[i]);
    row.push_back(s.mass[i]);
    for (double v : s.remainder[i]) row.push_back(v);
    row.push_back(s.odd_violation[i]);
    t.add_row(std::move(row));
  }
  return t;
}

CsvTable reduced_table(const Trajectory& tr) {
  CsvTable t;
  const int N = tr.states.empty() ? 0 : tr.states.front().size();
  t.columns.push_back("t");
  for (int j = 1; j <= N; ++j) t.columns.push_back("psi_" + std::to_string(j));
  for (int j = 1; j <= N; ++j) t.columns.push_back("K_" + std::to_string(j));
  t.columns.push_back("H");
  for (std::size_t i = 0; i < tr.t.size(); ++i) {
    std::vector<double> row{tr.t[i]};
    row.insert(row.end(), tr.states[i].psi.begin(), tr.states[i].psi.end());
    row.insert(row.end(), tr.states[i].K.begin(), tr.states[i].K.end());
    row.push_back(tr.H[i]);
    t.add_row(std::move(row));
  }
  return t;
}

void stamp(CsvTable& t, const RunConfig& c, const std::string& stage, const Normalization& norm) {
  t.set_meta("config_hash", config_hash(c));
  t.set_meta("seed", std::to_string(c.seed));
  t.set_meta("model", model_name(c.model));
  t.set_meta("stage", stage);
  t.set_meta("delta", format_double(norm.delta));
  t.set_meta("kappa", std::to_string(norm.kappa));
  t.set_meta("mass", format_double(norm.mass));
  t.set_meta("time", stage == "pde" ? "t physical, tau = delta^2 t" : "tau (normalized, rotating frame)");
}

namespace {

Normalization normalization_of(const CsvTable& t) {
  Normalization n;
  try {
    if (auto v = t.meta_value("delta")) n.delta = std::stod(*v);
    if (auto v = t.meta_value("kappa")) n.kappa = std::stoi(*v);
    if (auto v = t.meta_value("mass")) n.mass = std::stod(*v);
  } catch (const std::exception&) {
    throw AnalysisError("malformed normalization metadata");
  }
  return n;
}

int kappa_of(Model m) { return m == Model::wave ? 1 : m == Model::beam ? 2 : 0; }

}  // namespace

IntensitySeries series_from_table(const CsvTable& t, const std::string& column) {
  IntensitySeries s;
  s.t = t.column("t");
  if (t.has_column(column)) {
    s.y = t.column(column);
  } else if (column.rfind("y_", 0) == 0 && t.has_column("K_" + column.substr(2))) {
    for (double K : t.column("K_" + column.substr(2))) s.y.push_back(1 - K);
  } else {
    throw AnalysisError("no column '" + column + "' in the input");
  }
  s.norm = normalization_of(t);
  s.validate();
  return s;
}

std::vector<IntensitySeries> tuple_series(const CsvTable& t) {
  std::vector<IntensitySeries> out;
  for (int r = 1;; ++r) {
    const std::string y = "y_" + std::to_string(r), K = "K_" + std::to_string(r);
    if (!t.has_column(y) && !t.has_column(K)) break;
    out.push_back(series_from_table(t, y));
  }
  if (out.empty()) throw AnalysisError("input has no y_r or K_r columns");
  return out;
}

namespace {

Json q_json(const QProfile& q) {
  return {{"period", q.period},   {"phase_origin", q.phase_origin}, {"residual", q.residual},
          {"q_min", q.q_min},     {"q_max", q.q_max},               {"periods", q.periods},
          {"phase", q.phase},     {"Q", q.Q}};
}

Json crossings_json(const Crossings& c) { return {{"up", c.up}, {"down", c.down}, {"starts_high", c.starts_high}}; }

Json bumps_json(const BumpReport& r) {
  Json b = Json::array(), g = Json::array();
  for (const auto& x : r.bumps) b.push_back({{"t_up", x.t_up}, {"t_down", x.t_down}, {"sup", x.sup}, {"sup_ok", x.sup_ok}});
  for (const auto& x : r.gaps) g.push_back({{"t_down", x.t_down}, {"t_up", x.t_up}, {"inf", x.inf}, {"inf_ok", x.inf_ok}});
  return {{"passed", r.passed}, {"bumps", b}, {"gaps", g}};
}

Json itinerary_json(const Itinerary& it) {
  Json b = Json::array(), tr = Json::array();
  for (const auto& x : it.beating)
    b.push_back({{"alpha", x.alpha},
                 {"beta", x.beta},
                 {"tuple", x.tuple},
                 {"length_ratio", x.length_ratio},
                 {"long_enough", x.long_enough}});
  for (const auto& x : it.transitions)
    tr.push_back({{"start", x.start},
                  {"end", x.end},
                  {"from", x.from},
                  {"to", x.to},
                  {"outgoing_peak", x.outgoing_peak},
                  {"outgoing_saturated", x.outgoing_saturated},
                  {"others_peak", x.others_peak},
                  {"others_saturated", x.others_saturated}});
  return {{"sequence", it.sequence()}, {"beating", b},   {"transitions", tr},
          {"valid", it.valid},         {"diagnostics", it.diagnostics}};
}

Json run_task(const std::vector<CsvTable>& tables, const AnalyzeRequest& req, const std::string& task) {
  const std::string column = req.column.empty() ? (task == "scaling" ? "metric" : "y_1") : req.column;
  if (task == "scaling") {
    std::vector<std::pair<double, double>> pairs;
    for (const auto& t : tables) {
      const auto d = t.column("delta"), m = t.column(column);
      for (std::size_t i = 0; i < d.size(); ++i) pairs.emplace_back(d[i], m[i]);
    }
    const auto f = scaling_fit(pairs);
    return {{"exponent", f.exponent},
            {"intercept", f.intercept},
            {"std_error", f.std_error},
            {"half_width", f.half_width},
            {"max_residual", f.max_residual},
            {"points", pairs.size()}};
  }
  if (task == "itinerary") {
    std::vector<IntensitySeries> series;
    if (tables.size() == 1) series = tuple_series(tables.front());
    else
      for (const auto& t : tables) series.push_back(series_from_table(t, column));
    return itinerary_json(activation_itinerary(series, {req.eps, req.min_length_factor}));
  }
  if (tables.size() != 1) throw AnalysisError("task '" + task + "' reads exactly one input");
  const auto s = series_from_table(tables.front(), column);
  if (task == "q") {
    QOptions o;
    o.T_hint = req.T;
    return q_json(extract_Q(s, o));
  }
  const auto c = half_crossings(s);
  if (task == "crossings") return crossings_json(c);
  if (task == "bumps") return bumps_json(bump_check(s, c, req.eps));
  if (task == "symbols") {
    // T is in normalized time; a period measured on the series is physical
    const double delta = req.delta.value_or(s.norm.delta);
    const double T = req.T ? *req.T : extract_Q(s).period * delta * delta;
    const auto sym = symbol_times(c.up, T, delta);
    return {{"T", T}, {"delta", delta}, {"m", sym.m}, {"theta", sym.theta}};
  }
  throw AnalysisError("unknown analysis task '" + task + "'");
}

}  // namespace

Json analyze_tables(const std::vector<CsvTable>& tables, const AnalyzeRequest& req) {
  if (tables.empty()) throw AnalysisError("no input tables");
  const auto norm = normalization_of(tables.front());
  for (const auto& t : tables)
    if (!(normalization_of(t) == norm)) throw AnalysisError("inputs carry mismatched normalization metadata");
  Json out;
  out["task"] = req.task;
  out["eps"] = req.eps;
  if (auto h = tables.front().meta_value("config_hash")) out["config_hash"] = *h;
  if (auto s = tables.front().meta_value("seed")) out["seed"] = *s;
  out["normalization"] = {{"delta", norm.delta}, {"kappa", norm.kappa}, {"mass", norm.mass}};
  if (req.task != "all") {
    out["result"] = run_task(tables, req, req.task);
    return out;
  }
  for (const char* task : {"q", "crossings", "bumps", "symbols", "itinerary"}) {
    try {
      out["results"][task] = run_task(tables, req, task);
    } catch (const AnalysisError& e) {
      out["results"][task] = {{"error", e.what()}};
    }
  }
  return out;
}

namespace {

bool wants(const RunConfig& c, const char* stage) {
  return std::find(c.stages.begin(), c.stages.end(), stage) != c.stages.end();
}

struct RunState {
  std::optional<LambdaSet> lambda;
  std::optional<CsvTable> resonant;
  std::optional<CsvTable> pde;
  std::optional<ShadowingReport> shadow;
};

InitialDataSpec pde_spec(const RunConfig& c, const LambdaSet& lam) {
  InitialDataSpec s;
  s.lambda = lam;
  s.delta = c.pde.delta;
  s.a0 = initial_amplitudes(c, lam);
  s.background = c.pde.background;
  s.background_seed = c.seed;
  return s;
}

PdeOptions pde_options(const RunConfig& c) {
  PdeOptions o;
  o.J = c.pde.J;
  o.dt = c.pde.dt;
  o.sign = c.pde.sign;
  o.hartree_literal = c.pde.hartree_literal;
  return o;
}

Json conventions(const RunConfig& c) {
  return {{"measure", "normalized dx/(4 pi^2) on [0, 2pi)^2"},
          {"normal_variable",
           c.model == Model::hartree ? "a_n = u_n / delta" : "a_n = (omega^1/2 u_n + i omega^-1/2 v_n) / (sqrt2 delta)"},
          {"normalized_time", "tau = delta^2 t"},
          {"hartree_linear_sign", c.pde.hartree_literal ? "i u_t = Lap u + N" : "i u_t = -Lap u + N"},
          {"rng", "SplitMix64"}};
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& c) {
  PipelineResult res;
  res.out_dir = c.out_dir;
  try {
    check_config(c);
    if (!c.lattice.lambda_file.empty() && !fs::exists(c.lattice.lambda_file))
      throw ConfigError("lambda file '" + c.lattice.lambda_file + "' does not exist");
    if (!c.potential.file.empty() && !fs::exists(c.potential.file))
      throw ConfigError("potential file '" + c.potential.file + "' does not exist");
    res.config_hash = config_hash(c);
  } catch (const ConfigError& e) {
    res.exit_code = 2;
    res.stages.push_back({"config", false, e.what(), {}});
    return res;
  }
  const fs::path dir(c.out_dir);
  fs::create_directories(dir);
  fs::remove(dir / "PARTIAL");

  RunState st;
  const auto lambda = [&]() -> const LambdaSet& {
    if (!st.lambda) st.lambda = build_lambda(c);
    return *st.lambda;
  };
  const Normalization res_norm{1.0, kappa_of(c.model), c.init.mass};
  const Normalization pde_norm{c.pde.delta, kappa_of(c.model), c.init.mass};

  for (const auto& stage : c.stages) {
    StageResult sr{stage, true, "", {}};
    try {
      if (stage == "lattice") {
        write_json_file(dir / "lambda.json", lambda_to_json(lambda()));
        sr.artifacts.push_back("lambda.json");
      } else if (stage == "validate") {
        const auto& lam = lambda();
        Json cert = certificate_to_json(lam);
        cert["cross_tuple_exchanges"] = cross_tuple_exchanges(lam).size();
        write_json_file(dir / "certificate.json", cert);
        sr.artifacts.push_back("certificate.json");
        sr.message = lam.certificate_passed() ? "certificate passed" : "certificate has soft failures";
      } else if (stage == "resonant") {
        const auto& lam = lambda();
        const auto H = build_resonant_hamiltonian(lam, build_potential(c, lam), c.resonant.sign);
        ResonantOptions o;
        o.tol = c.resonant.tol;
        o.rotating_frame = c.resonant.rotating_frame;
        o.sample_dt = c.resonant.sample_dt;
        const auto tr = evolve_resonant(initial_amplitudes(c, lam), H, c.resonant.t_end, o);
        if (!tr.ok()) throw std::runtime_error(std::string("resonant integration ") + std::string(ode::to_string(tr.status)));
        auto t = resonant_table(tr, H);
        stamp(t, c, "resonant", res_norm);
        t.set_meta("convention", H.convention);
        write_csv_file((dir / "resonant.csv").string(), t);
        st.resonant = std::move(t);
        sr.artifacts.push_back("resonant.csv");
      } else if (stage == "pde" || stage == "shadow") {
        const auto& lam = lambda();
        const auto spec = pde_spec(c, lam);
        const auto V = build_potential(c, lam);
        if (stage == "pde" && !st.pde) {
          PdeSeries series;
          if (wants(c, "shadow")) {
            const double tau_end = c.pde.t_end > 0 ? c.pde.t_end * c.pde.delta * c.pde.delta : c.pde.tau_end;
            st.shadow = shadowing_run(spec, pde_options(c), tau_end, 200, V);
            series = st.shadow->pde;
          } else {
            const double t_end = c.pde.t_end > 0 ? c.pde.t_end : c.pde.tau_end / (c.pde.delta * c.pde.delta);
            std::int64_t every = c.pde.sample_every;
            if (every == 0) {
              const int J = c.pde.J > 0 ? c.pde.J : default_truncation(lam);
              const double dt = c.pde.dt > 0 ? c.pde.dt : default_time_step(c.model, J);
              every = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(t_end / dt - 1e-9)) / 200);
            }
            series = run_pde(spec, pde_options(c), t_end, every, V);
          }
          auto t = pde_table(series, static_cast<int>(lam.size()));
          stamp(t, c, "pde", pde_norm);
          t.set_meta("J", std::to_string(series.J));
          t.set_meta("dt", format_double(series.dt));
          t.set_meta("steps", std::to_string(series.steps));
          write_csv_file((dir / "pde.csv").string(), t);
          st.pde = std::move(t);
          sr.artifacts.push_back("pde.csv");
        }
        if (stage == "shadow") {
          if (!st.shadow) {
            const double tau_end = c.pde.t_end > 0 ? c.pde.t_end * c.pde.delta * c.pde.delta : c.pde.tau_end;
            st.shadow = shadowing_run(spec, pde_options(c), tau_end, 200, V);
          }
          const auto& sh = *st.shadow;
          res.metrics = {{"delta", sh.delta},
                         {"tau_end", sh.tau_end},
                         {"intensity_sup", sh.intensity_sup},
                         {"remainder_h2_sup", sh.remainder_h2_sup},
                         {"steps", sh.pde.steps},
                         {"dt", sh.pde.dt},
                         {"J", sh.pde.J}};
          Json out = res.metrics;
          out["config_hash"] = res.config_hash;
          write_json_file(dir / "shadow.json", out);
          sr.artifacts.push_back("shadow.json");
        }
      } else if (stage == "analyze") {
        const auto& src = c.analyze.source == "pde" ? st.pde : st.resonant;
        if (!src) throw std::runtime_error("analyze needs the " + c.analyze.source + " stage earlier in the run");
        AnalyzeRequest req;
        req.task = "all";
        req.column = "y_" + std::to_string(c.analyze.tuple);
        req.eps = c.analyze.eps;
        req.T = c.analyze.T_hint;
        req.min_length_factor = c.analyze.min_length_factor;
        write_json_file(dir / "analysis.json", analyze_tables({*src}, req));
        sr.artifacts.push_back("analysis.json");
      }
    } catch (const std::exception& e) {
      sr.ok = false;
      sr.message = e.what();
    }
    res.stages.push_back(sr);
    if (!sr.ok) {
      res.exit_code = 1;
      std::ofstream(dir / "PARTIAL") << "failed stage: " << stage << "\n" << sr.message << "\n";
      break;
    }
  }

  Json run;
  run["config"] = config_to_json(c);
  run["config"].erase("out_dir");
  run["config_hash"] = res.config_hash;
  run["seed"] = c.seed;
  run["threads"] = c.threads;
  run["conventions"] = conventions(c);
  run["status"] = res.exit_code == 0 ? "ok" : "failed";
  run["stages"] = Json::array();
  for (const auto& s : res.stages)
    run["stages"].push_back({{"stage", s.stage}, {"ok", s.ok}, {"message", s.message}, {"artifacts", s.artifacts}});
  if (!res.metrics.empty()) run["metrics"] = res.metrics;
  write_json_file(dir / "run.json", run);
  return res;
}

SweepResult sweep(const RunConfig& c, const SweepAxis& axis) {
  SweepResult out;
  const std::size_t n = axis.values.size();
  std::vector<RunConfig> cfgs(n, c);
  std::vector<PipelineResult> results(n);
  std::vector<bool> runnable(n, true);
  for (std::size_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "run_%03zu", i);
    const std::string sub = (fs::path(c.out_dir) / name).string();
    try {
      cfgs[i] = with_value(c, axis.key, axis.values[i]);
    } catch (const ConfigError& e) {
      runnable[i] = false;
      results[i].exit_code = 2;
      results[i].stages.push_back({"config", false, e.what(), {}});
    }
    cfgs[i].out_dir = sub;
    cfgs[i].threads = 1;
    cfgs[i].sweep.reset();
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;)
      if (runnable[i]) results[i] = run_pipeline(cfgs[i]);
  };
  const int workers = std::max(1, std::min<int>(c.threads, static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  Json runs = Json::array();
  CsvTable table;
  table.columns = {"value", "ok", "intensity_sup", "remainder_h2_sup"};
  table.set_meta("config_hash", config_hash(c));
  table.set_meta("seed", std::to_string(c.seed));
  table.set_meta("axis", axis.key);
  std::size_t failed = 0;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = results[i];
    Json e{{"index", i},
           {"value", axis.values[i]},
           {"out_dir", fs::path(cfgs[i].out_dir).filename().string()},
           {"exit_code", r.exit_code},
           {"status", r.exit_code == 0 ? "ok" : "failed"},
           {"config_hash", r.config_hash}};
    Json arts = Json::array();
    for (const auto& s : r.stages) {
      for (const auto& a : s.artifacts) arts.push_back(e["out_dir"].get<std::string>() + "/" + a);
      if (!s.ok) {
        e["failed_stage"] = s.stage;
        e["message"] = s.message;
      }
    }
    e["artifacts"] = arts;
    if (!r.metrics.empty()) e["metrics"] = r.metrics;
    if (r.exit_code != 0) ++failed;
    runs.push_back(e);
    const auto metric = [&](const char* k) { return r.metrics.contains(k) ? r.metrics[k].get<double>() : nan; };
    table.add_row({axis.values[i], r.exit_code == 0 ? 1.0 : 0.0, metric("intensity_sup"), metric("remainder_h2_sup")});
  }
  out.manifest = {{"axis", {{"key", axis.key}, {"values", axis.values}}},
                  {"config_hash", config_hash(c)},
                  {"runs", runs},
                  {"failed", failed},
                  {"status", n == 0 ? "empty" : failed == 0 ? "ok" : failed == n ? "failed" : "partial"}};
  out.exit_code = failed == 0 ? 0 : 3;
  fs::create_directories(c.out_dir);
  write_json_file(fs::path(c.out_dir) / "manifest.json", out.manifest);
  write_csv_file((fs::path(c.out_dir) / "sweep.csv").string(), table);
  return out;
}

}  // namespace reslab
