#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "reslab/analysis.hpp"
#include "reslab/csv.hpp"
#include "reslab/hartree_potential.hpp"
#include "reslab/lattice.hpp"
#include "reslab/reduced_model.hpp"
#include "reslab/resonant_model.hpp"
#include "reslab/spectral_pde.hpp"

namespace reslab {

/// nlohmann::json keeps object keys sorted, which gives a stable key order in every artifact.
using Json = nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LatticeConfig {
  int box = 4;
  std::optional<Annulus> annulus;
  std::vector<Quad> tuples;  // explicit tuples win over enumeration
  std::string lambda_file;   // lattice JSON; wins over everything
  int count = 1;             // enumerated tuples kept (pairwise disjoint, in enumeration order)
};

struct InitConfig {
  /// "random": per tuple K ~ U[0.1, 0.9] and uniform phases from the run seed;
  /// "tuple": every tuple at (psi, K); "explicit": `amplitudes` in mode order.
  std::string preset = "random";
  double psi = 1.0;
  double K = 0.3;
  double mass = 1.0;  // per tuple
  std::vector<std::complex<double>> amplitudes;
};

struct ResonantConfig {
  double t_end = 50.0;
  double sample_dt = 0.05;
  double sign = 1.0;
  bool rotating_frame = true;
  double tol = 1e-12;
};

struct PdeConfig {
  double delta = 0.05;
  int J = 0;
  double dt = 0.0;
  double tau_end = 1.0;  // normalized horizon, used unless t_end > 0
  double t_end = 0.0;
  std::int64_t sample_every = 0;  // 0 aims at about 200 samples
  double sign = 1.0;
  bool hartree_literal = true;
  double background = 0.0;
};

struct PotentialConfig {
  double eps = 0.1;
  double background = 1.0;
  std::string file;  // JSON {eps, background, gamma: [[j1, j2, value], ...]}
};

struct AnalyzeConfig {
  std::string source = "resonant";  // or "pde"
  double eps = 0.05;
  int tuple = 1;
  std::optional<double> T_hint;
  double min_length_factor = 1.0;
};

struct SweepAxis {
  std::string key;  // dotted config key, e.g. "pde.delta"
  std::vector<double> values;
};

struct RunConfig {
  Model model = Model::beam;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_dir = "out";
  std::vector<std::string> stages{"lattice", "validate", "resonant", "analyze"};
  LatticeConfig lattice;
  InitConfig init;
  ResonantConfig resonant;
  PdeConfig pde;
  PotentialConfig potential;
  AnalyzeConfig analyze;
  std::optional<SweepAxis> sweep;
};

/// Strict: unknown keys, wrong types and out-of-range values throw ConfigError.
RunConfig config_from_json(const Json& j);
Json config_to_json(const RunConfig& c);
RunConfig load_config(const std::string& path);
/// FNV-1a of the canonical JSON dump of the config with out_dir removed.
std::string config_hash(const RunConfig& c);
/// Sets a dotted numeric key ("pde.delta", "seed", ...) through the JSON schema.
RunConfig with_value(const RunConfig& c, const std::string& key, double value);

Json tuple_to_json(const ResonantTuple& t, bool with_certificate = true);
Json lambda_to_json(const LambdaSet& lambda);
/// Accepts a lattice JSON array, or an object with a "tuples" array.
LambdaSet lambda_from_json(const Json& j);
LambdaSet load_lambda(const std::string& path);
Json certificate_to_json(const LambdaSet& lambda);

Json potential_to_json(const HartreePotential& V);
HartreePotential potential_from_json(const Json& j);

/// Lambda named by the lattice section: file, explicit tuples, or enumeration.
LambdaSet build_lambda(const RunConfig& c);
ComplexModeState initial_amplitudes(const RunConfig& c, const LambdaSet& lambda);
std::optional<HartreePotential> build_potential(const RunConfig& c, const LambdaSet& lambda);

CsvTable resonant_table(const ResonantTrajectory& tr, const ResonantHamiltonian& H);
/// y_r columns hold |a_{n1}|^2 of tuple r divided by half the tuple's initial mass.
CsvTable pde_table(const PdeSeries& s, int tuples);
CsvTable reduced_table(const Trajectory& tr);
/// Stamps the run metadata (config hash, seed, model, conventions, normalization).
void stamp(CsvTable& t, const RunConfig& c, const std::string& stage, const Normalization& norm);

/// Intensity series of one column; normalization read from the metadata.
IntensitySeries series_from_table(const CsvTable& t, const std::string& column);
/// y_1..y_N columns, or 1 - K_r for reduced trajectories.
std::vector<IntensitySeries> tuple_series(const CsvTable& t);

struct AnalyzeRequest {
  std::string task;  // q | crossings | bumps | symbols | itinerary | scaling | all
  std::string column;  // empty: y_1, or "metric" for scaling
  double eps = 0.05;
  std::optional<double> T;
  std::optional<double> delta;
  double min_length_factor = 1.0;
};

/// JSON report over one or more tables; mismatched normalization metadata throws AnalysisError.
Json analyze_tables(const std::vector<CsvTable>& tables, const AnalyzeRequest& req);

struct StageResult {
  std::string stage;
  bool ok = false;
  std::string message;
  std::vector<std::string> artifacts;
};

struct PipelineResult {
  int exit_code = 0;  // 0 ok, 1 a stage failed, 2 invalid configuration
  std::string out_dir;
  std::string config_hash;
  std::vector<StageResult> stages;
  Json metrics = Json::object();  // shadowing metrics when the shadow stage ran
};

/// Runs the configured stages in order, writing artifacts plus run.json into out_dir. A failing
/// stage stops the run and leaves a PARTIAL marker naming it.
PipelineResult run_pipeline(const RunConfig& c);

struct SweepResult {
  int exit_code = 0;  // 0 all runs ok, 3 partial success
  Json manifest;
};

/// One pipeline per axis value in out_dir/run_XXX, run in parallel on c.threads workers;
/// writes manifest.json and sweep.csv (value, status, shadowing metrics when available).
SweepResult sweep(const RunConfig& c, const SweepAxis& axis);

}  // namespace reslab
