#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include "CLI11.hpp"
#include "reslab/run.hpp"

using namespace reslab;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out_dir;
};

RunConfig base_config(const Globals& g) {
  RunConfig c = g.config.empty() ? RunConfig{} : load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (g.threads) c.threads = *g.threads;
  if (!g.out_dir.empty()) c.out_dir = g.out_dir;
  return c;
}

std::string output_path(const RunConfig& c, const std::string& out, const std::string& fallback) {
  const fs::path p = out.empty() ? fs::path(c.out_dir) / fallback : fs::path(out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p.string();
}

void write_json(const std::string& path, const Json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << j.dump(2) << '\n';
}

Json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  try {
    return Json::parse(f);
  } catch (const Json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ConfigError("bad number '" + item + "' in list '" + s + "'");
    out.push_back(v);
  }
  return out;
}

// {"N", "eps", "a", "b", "c", "d"} or {"N", "eps", "seed"}
ModelCoefficients load_coefficients(const std::string& path) {
  const Json j = read_json(path);
  if (!j.is_object()) throw ConfigError("coefficients file must hold a JSON object");
  for (const auto& [k, v] : j.items())
    if (k != "N" && k != "eps" && k != "a" && k != "b" && k != "c" && k != "d" && k != "seed")
      throw ConfigError("unknown coefficients key '" + k + "'");
  try {
    const int N = j.at("N").get<int>();
    const double eps = j.value("eps", 0.0);
    ModelCoefficients c;
    if (j.contains("seed")) {
      c = sample_coefficients(N, eps, j["seed"].get<std::uint64_t>());
    } else {
      c = ModelCoefficients::zero(N, eps);
      if (j.contains("a")) c.a = j["a"].get<std::vector<double>>();
      if (j.contains("b")) c.b = j["b"].get<std::vector<double>>();
      if (j.contains("c")) c.c = j["c"].get<std::vector<double>>();
      if (j.contains("d")) c.d = j["d"].get<std::vector<std::vector<double>>>();
    }
    c.validate();
    return c;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("coefficients: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("coefficients: ") + e.what());
  }
}

Json state_json(const ReducedState& s) { return {{"psi", s.psi}, {"K", s.K}}; }

int run_lattice(const Globals& g, const std::string& model, int box, const std::string& annulus, const std::string& out) {
  auto c = base_config(g);
  if (!model.empty()) c.model = model_from_string(model);
  std::optional<Annulus> ann;
  if (!annulus.empty()) {
    const auto v = parse_list(annulus);
    if (v.size() != 2) throw ConfigError("--annulus takes R,EPS");
    ann = Annulus{v[0], v[1]};
  }
  Json arr = Json::array();
  for (const auto& t : enumerate_tuples(c.model, box, ann, c.threads)) arr.push_back(tuple_to_json(t));
  const auto path = output_path(c, out, "lattice.json");
  write_json(path, arr);
  std::cout << arr.size() << " tuples -> " << path << '\n';
  return 0;
}

struct ReducedArgs {
  std::string coeffs, task = "integrate", out, psi0, K0, itinerary = "1,2";
  double t_end = 100.0, sample_dt = 0.1, nbhd = 0.1, section_value = 0.5, quantum = 1.0, arc = 3.0;
  int section_index = 0, direction = 1, max_crossings = 10;
  std::string section_coordinate = "K";
};

int run_reduced(const Globals& g, const ReducedArgs& a) {
  const auto c = base_config(g);
  const auto coeffs = load_coefficients(a.coeffs);
  const int N = coeffs.N;
  ReducedState s0{std::vector<double>(N, std::numbers::pi + 0.25), std::vector<double>(N, 1e-3)};
  if (!a.psi0.empty()) s0.psi = parse_list(a.psi0);
  if (!a.K0.empty()) s0.K = parse_list(a.K0);
  if (static_cast<int>(s0.psi.size()) != N || static_cast<int>(s0.K.size()) != N)
    throw ConfigError("--psi0/--K0 need N entries");
  SectionSpec sec;
  sec.index = a.section_index;
  sec.coordinate = a.section_coordinate == "psi" ? SectionCoordinate::psi : SectionCoordinate::K;
  sec.value = a.section_value;
  sec.direction = a.direction;

  if (a.task == "integrate") {
    IntegrateOptions o;
    o.sample_dt = a.sample_dt;
    const auto tr = integrate(s0, coeffs, a.t_end, o);
    auto t = reduced_table(tr);
    stamp(t, c, "reduced", {1.0, 0, 1.0});
    t.set_meta("energy_drift", format_double(tr.energy_drift));
    write_csv_file(output_path(c, a.out, "reduced.csv"), t);
    return tr.ok() ? 0 : 1;
  }
  if (a.task == "fixed-points") {
    Json arr = Json::array();
    for (const auto& fp : fixed_points(coeffs)) {
      Json labels = Json::array(), ev = Json::array();
      for (auto l : fp.labels) labels.push_back(std::string(to_string(l)));
      for (auto z : fp.eigenvalues) ev.push_back(Json::array({z.real(), z.imag()}));
      arr.push_back({{"labels", labels},
                     {"state", state_json(fp.state)},
                     {"eigenvalues", ev},
                     {"converged", fp.converged},
                     {"residual", fp.residual}});
    }
    write_json(output_path(c, a.out, "fixed_points.json"), arr);
    return 0;
  }
  if (a.task == "manifolds") {
    CsvTable t;
    t.columns = {"dof", "branch", "arc"};
    for (int j = 1; j <= N; ++j) t.columns.push_back("psi_" + std::to_string(j));
    for (int j = 1; j <= N; ++j) t.columns.push_back("K_" + std::to_string(j));
    t.columns.push_back("energy_deviation");
    for (int dof = 0; dof < N; ++dof) {
      std::vector<DofEquilibrium> labels(N, DofEquilibrium::center_zero);
      labels[dof] = DofEquilibrium::saddle_low_rise;
      const auto saddle = continue_fixed_point(labels, coeffs);
      int b = 0;
      for (auto br : {Branch::unstable_plus, Branch::unstable_minus, Branch::stable_plus, Branch::stable_minus}) {
        for (const auto& p : manifold_trace(saddle, dof, coeffs, br, a.arc)) {
          std::vector<double> row{static_cast<double>(dof + 1), static_cast<double>(b), p.arc};
          row.insert(row.end(), p.state.psi.begin(), p.state.psi.end());
          row.insert(row.end(), p.state.K.begin(), p.state.K.end());
          row.push_back(p.energy_deviation);
          t.add_row(std::move(row));
        }
        ++b;
      }
    }
    stamp(t, c, "reduced", {1.0, 0, 1.0});
    t.set_meta("branches", "0 unstable+, 1 unstable-, 2 stable+, 3 stable-");
    write_csv_file(output_path(c, a.out, "manifolds.csv"), t);
    return 0;
  }
  if (a.task == "splitting") {
    Json arr = Json::array();
    for (int dof = 0; dof < N; ++dof) {
      SectionSpec s{dof, SectionCoordinate::K, 0.5, 0};
      arr.push_back({{"dof", dof + 1},
                     {"rising", splitting_distance(coeffs, s, Column::rising)},
                     {"falling", splitting_distance(coeffs, s, Column::falling)}});
    }
    write_json(output_path(c, a.out, "splitting.json"), {{"eps", coeffs.eps}, {"section_K", 0.5}, {"splitting", arr}});
    return 0;
  }
  if (a.task == "poincare" || a.task == "symbols") {
    const auto cross = poincare_map(s0, coeffs, sec, a.max_crossings);
    if (a.task == "symbols") {
      std::vector<double> times;
      for (const auto& x : cross) times.push_back(x.t);
      write_json(output_path(c, a.out, "symbols.json"),
                 {{"crossing_times", times},
                  {"T_quantum", a.quantum},
                  {"symbols", return_time_symbols(cross, a.quantum)}});
      return 0;
    }
    CsvTable t;
    t.columns = {"t"};
    for (int j = 1; j <= N; ++j) t.columns.push_back("psi_" + std::to_string(j));
    for (int j = 1; j <= N; ++j) t.columns.push_back("K_" + std::to_string(j));
    for (const auto& x : cross) {
      std::vector<double> row{x.t};
      row.insert(row.end(), x.state.psi.begin(), x.state.psi.end());
      row.insert(row.end(), x.state.K.begin(), x.state.K.end());
      t.add_row(std::move(row));
    }
    stamp(t, c, "reduced", {1.0, 0, 1.0});
    write_csv_file(output_path(c, a.out, "poincare.csv"), t);
    return 0;
  }
  if (a.task == "chain") {
    std::vector<int> itin;
    for (double v : parse_list(a.itinerary)) itin.push_back(static_cast<int>(v));
    const auto r = chain_shadowing_run(coeffs, itin, a.nbhd);
    auto t = reduced_table(r.trajectory);
    stamp(t, c, "reduced", {1.0, 0, 1.0});
    const auto path = output_path(c, a.out, "chain.csv");
    write_csv_file(path, t);
    write_json(path + ".json", {{"success", r.success},
                                {"itinerary", itin},
                                {"nbhd", a.nbhd},
                                {"visit_times", r.visit_times},
                                {"visit_distances", r.visit_distances},
                                {"shooting_parameter", r.shooting_parameter},
                                {"message", r.message}});
    if (!r.success) std::cerr << "chain: " << r.message << '\n';
    return r.success ? 0 : 1;
  }
  throw ConfigError("unknown reduced task '" + a.task + "'");
}

struct ModelArgs {
  std::string model, lambda, potential, init, out;
};

RunConfig model_config(const Globals& g, const ModelArgs& m) {
  auto c = base_config(g);
  if (!m.model.empty()) c.model = model_from_string(m.model);
  if (!m.lambda.empty()) {
    c.lattice.lambda_file = m.lambda;
    const auto lam = load_lambda(m.lambda);
    if (m.model.empty()) c.model = lam.model;
  }
  if (!m.potential.empty()) c.potential.file = m.potential;
  if (!m.init.empty()) {
    if (m.init == "random" || m.init == "tuple") {
      c.init.preset = m.init;
    } else {
      const Json j = read_json(m.init);
      Json full = config_to_json(c);
      full["init"] = j;
      c = config_from_json(full);
    }
  }
  return c;
}

int run_resonant(const Globals& g, const ModelArgs& m, double t_end, double sample_dt) {
  auto c = model_config(g, m);
  if (t_end > 0) c.resonant.t_end = t_end;
  if (sample_dt >= 0) c.resonant.sample_dt = sample_dt;
  const auto lam = build_lambda(c);
  const auto H = build_resonant_hamiltonian(lam, build_potential(c, lam), c.resonant.sign);
  ResonantOptions o;
  o.tol = c.resonant.tol;
  o.rotating_frame = c.resonant.rotating_frame;
  o.sample_dt = c.resonant.sample_dt;
  const auto tr = evolve_resonant(initial_amplitudes(c, lam), H, c.resonant.t_end, o);
  auto t = resonant_table(tr, H);
  stamp(t, c, "resonant", {1.0, c.model == Model::wave ? 1 : c.model == Model::beam ? 2 : 0, c.init.mass});
  t.set_meta("convention", H.convention);
  write_csv_file(output_path(c, m.out, "resonant.csv"), t);
  return tr.ok() ? 0 : 1;
}

struct PdeArgs {
  double delta = 0, dt = -1, t_end = 0, tau_end = 0;
  int J = -1;
  std::int64_t sample_every = 0;
  int kappa = -1;
};

int run_pde_cmd(const Globals& g, const ModelArgs& m, const PdeArgs& p) {
  auto c = model_config(g, m);
  if (p.delta > 0) c.pde.delta = p.delta;
  if (p.J >= 0) c.pde.J = p.J;
  if (p.dt >= 0) c.pde.dt = p.dt;
  if (p.t_end > 0) c.pde.t_end = p.t_end;
  if (p.tau_end > 0) {
    c.pde.tau_end = p.tau_end;
    c.pde.t_end = 0;
  }
  if (p.sample_every > 0) c.pde.sample_every = p.sample_every;
  const int kappa = c.model == Model::wave ? 1 : c.model == Model::beam ? 2 : 0;
  if (p.kappa >= 0 && p.kappa != kappa)
    throw ConfigError("--kappa " + std::to_string(p.kappa) + " contradicts model " + std::string(to_string(c.model)));
  const auto out = output_path(c, m.out, "pde.csv");
  auto run = c;
  run.out_dir = (fs::path(out).parent_path() / (fs::path(out).stem().string() + "_run")).string();
  run.stages = {"lattice", "pde"};
  const auto r = run_pipeline(run);
  if (r.exit_code != 0) {
    for (const auto& s : r.stages)
      if (!s.ok) std::cerr << "pde: " << s.stage << ": " << s.message << '\n';
    return r.exit_code;
  }
  fs::copy_file(fs::path(run.out_dir) / "pde.csv", out, fs::copy_options::overwrite_existing);
  fs::copy_file(fs::path(run.out_dir) / "run.json", out + ".json", fs::copy_options::overwrite_existing);
  return 0;
}

int run_analyze(const Globals& g, const std::vector<std::string>& inputs, AnalyzeRequest req, const std::string& out) {
  const auto c = base_config(g);
  std::vector<CsvTable> tables;
  for (const auto& in : inputs) tables.push_back(read_csv_file(in));
  const auto path = output_path(c, out, "analysis_" + req.task + ".json");
  try {
    write_json(path, analyze_tables(tables, req));
    return 0;
  } catch (const AnalysisError& e) {
    write_json(path, {{"task", req.task}, {"error", e.what()}});
    std::cerr << "analyze: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reslab: resonant energy exchange on the 2-torus"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "RNG seed (overrides the config)");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "directory for default output paths");

  std::string lat_model, lat_annulus, lat_out;
  int lat_box = 4;
  auto* lat = app.add_subcommand("lattice", "enumerate resonant tuples");
  lat->add_option("--model", lat_model)->check(CLI::IsMember({"wave", "beam", "hartree"}));
  lat->add_option("--box", lat_box)->check(CLI::PositiveNumber);
  lat->add_option("--annulus", lat_annulus, "R,EPS");
  lat->add_option("--out", lat_out);

  ReducedArgs ra;
  auto* red = app.add_subcommand("reduced", "reduced action-angle model");
  red->add_option("--coeffs", ra.coeffs)->required()->check(CLI::ExistingFile);
  red->add_option("--task", ra.task)
      ->check(CLI::IsMember({"integrate", "fixed-points", "manifolds", "splitting", "poincare", "symbols", "chain"}));
  red->add_option("--out", ra.out);
  red->add_option("--psi0", ra.psi0, "comma separated, one per dof");
  red->add_option("--K0", ra.K0, "comma separated, one per dof");
  red->add_option("--t-end", ra.t_end);
  red->add_option("--sample-dt", ra.sample_dt);
  red->add_option("--itinerary", ra.itinerary);
  red->add_option("--nbhd", ra.nbhd);
  red->add_option("--section-index", ra.section_index);
  red->add_option("--section-coordinate", ra.section_coordinate)->check(CLI::IsMember({"psi", "K"}));
  red->add_option("--section-value", ra.section_value);
  red->add_option("--direction", ra.direction);
  red->add_option("--max-crossings", ra.max_crossings);
  red->add_option("--quantum", ra.quantum);
  red->add_option("--arc", ra.arc);

  ModelArgs rm;
  double res_t_end = 0, res_sample_dt = -1;
  auto* res = app.add_subcommand("resonant", "resonant normal-form model on Lambda");
  res->add_option("--lambda", rm.lambda)->check(CLI::ExistingFile);
  res->add_option("--model", rm.model)->check(CLI::IsMember({"wave", "beam", "hartree"}));
  res->add_option("--potential", rm.potential)->check(CLI::ExistingFile);
  res->add_option("--init", rm.init, "random | tuple | FILE");
  res->add_option("--t-end", res_t_end);
  res->add_option("--sample-dt", res_sample_dt);
  res->add_option("--out", rm.out);

  ModelArgs pm;
  PdeArgs pa;
  auto* pde = app.add_subcommand("pde", "pseudo-spectral PDE run");
  pde->add_option("--model", pm.model)->check(CLI::IsMember({"wave", "beam", "hartree"}));
  pde->add_option("--lambda", pm.lambda)->check(CLI::ExistingFile);
  pde->add_option("--potential", pm.potential)->check(CLI::ExistingFile);
  pde->add_option("--init", pm.init, "random | tuple | FILE");
  pde->add_option("--delta", pa.delta);
  pde->add_option("--kappa", pa.kappa, "must agree with the model");
  pde->add_option("--J", pa.J);
  pde->add_option("--dt", pa.dt);
  auto* te = pde->add_option("--t-end", pa.t_end, "physical horizon");
  pde->add_option("--tau-end", pa.tau_end, "normalized horizon delta^2 t")->excludes(te);
  pde->add_option("--sample-every", pa.sample_every);
  pde->add_option("--out", pm.out);

  std::vector<std::string> an_inputs;
  AnalyzeRequest areq;
  areq.task = "q";
  double an_T = 0, an_delta = 0;
  std::string an_out;
  auto* an = app.add_subcommand("analyze", "time-series analytics on emitted CSV");
  an->add_option("--input", an_inputs)->required()->check(CLI::ExistingFile);
  an->add_option("--task", areq.task)
      ->check(CLI::IsMember({"q", "crossings", "bumps", "symbols", "itinerary", "scaling", "all"}));
  an->add_option("--eps", areq.eps);
  an->add_option("--T", an_T);
  an->add_option("--delta", an_delta);
  an->add_option("--column", areq.column);
  an->add_option("--min-length", areq.min_length_factor);
  an->add_option("--out", an_out);

  std::string sw_key, sw_values;
  auto* sw = app.add_subcommand("sweep", "pipeline over one parameter axis");
  sw->add_option("--key", sw_key, "dotted config key, e.g. pde.delta");
  sw->add_option("--values", sw_values, "comma separated");

  auto* pl = app.add_subcommand("pipeline", "run the configured stages");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*lat) return run_lattice(g, lat_model, lat_box, lat_annulus, lat_out);
    if (*red) return run_reduced(g, ra);
    if (*res) return run_resonant(g, rm, res_t_end, res_sample_dt);
    if (*pde) return run_pde_cmd(g, pm, pa);
    if (*an) {
      if (an_T > 0) areq.T = an_T;
      if (an_delta > 0) areq.delta = an_delta;
      return run_analyze(g, an_inputs, areq, an_out);
    }
    if (*sw) {
      const auto c = base_config(g);
      SweepAxis axis = c.sweep.value_or(SweepAxis{});
      if (!sw_key.empty()) axis.key = sw_key;
      if (!sw_values.empty()) axis.values = parse_list(sw_values);
      if (axis.key.empty() && !axis.values.empty()) throw ConfigError("sweep needs --key or a config sweep section");
      const auto r = sweep(c, axis);
      std::cout << "sweep " << r.manifest["status"].get<std::string>() << ": " << r.manifest["runs"].size()
                << " runs, manifest in " << (fs::path(c.out_dir) / "manifest.json").string() << '\n';
      return r.exit_code;
    }
    if (*pl) {
      const auto c = base_config(g);
      const auto r = run_pipeline(c);
      for (const auto& s : r.stages) {
        std::cout << (s.ok ? "ok     " : "FAILED ") << s.stage;
        if (!s.message.empty()) std::cout << ": " << s.message;
        std::cout << '\n';
      }
      return r.exit_code;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
