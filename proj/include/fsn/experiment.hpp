#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fsn/data_io.hpp"
#include "fsn/solvers.hpp"

namespace fsn {

struct ProblemSpec {
  enum class Source { synthetic, libsvm };
  Source source = Source::synthetic;
  Index n = 1000;
  Index d = 20;
  std::uint64_t seed = 1;
  double margin_scale = 1.0;
  std::filesystem::path path;  // libsvm; relative paths resolve against the data dir
  bool intercept = true;
  LossKind loss = LossKind::logistic;
  RegKind reg = RegKind::l2;
  std::optional<double> lambda;  // default 1/n
  double delta = 1.0;
};

struct SolverSpec {
  std::string label;  // defaults to the solver name; names the trace files
  SolverKind kind = SolverKind::san;
  std::optional<double> gamma;
  std::optional<double> gamma_over_lmax;  // gamma = c / L_max; sag/svrg default c = 1
  std::optional<double> p;
  std::optional<std::size_t> svrg_inner;
  bool ridge_fast_path = false;
};

struct GridSpec {
  std::string solver = "san";
  std::vector<double> p_times_n;   // p = c / n
  std::vector<double> p;           // absolute values; overrides p_times_n
  std::vector<double> gammas;      // newton family: gamma; baselines: multiples of 1/L_max
  double threshold = 1e-4;
  int repeats = 5;
};

struct RateSpec {
  std::vector<double> diag;           // A = diag(...)
  std::optional<Index> random_dim;    // or a seeded random SPD matrix
  std::uint64_t random_seed = 0;
  std::string sketch = "coordinate";  // coordinate | full
  int steps = 20;
  int trials = 2000;
  std::uint64_t seed = 0;
  double slack = 0.05;       // on the fitted rate
  double fhat_slack = 0.02;  // relative, on each step of the mean surrogate
  double gamma = 1.0;
};

struct ExperimentConfig {
  ProblemSpec problem;
  std::vector<SolverSpec> solvers;
  std::vector<std::uint64_t> explicit_seeds;
  int seed_count = 10;
  std::uint64_t seed_base = 0;
  StopRule stop;
  RunOptions run;
  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "out";
  int jobs = 1;
  GridSpec grid;
  RateSpec rate;

  std::vector<std::uint64_t> seeds() const;
};

/// Parses the JSON experiment manifest; throws ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct Overrides {
  std::optional<std::filesystem::path> data_dir;
  std::optional<std::filesystem::path> out_dir;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed_base;
};

inline constexpr const char* kDataDirEnv = "FSN_DATA_DIR";

/// Flags win over the environment, which wins over the file.
void apply_overrides(ExperimentConfig& cfg, const Overrides& overrides);

Problem load_problem(const ProblemSpec& spec, const std::filesystem::path& data_dir);
SolverConfig resolve_solver(const SolverSpec& spec, const Problem& problem, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Output

/// Shortest round-trip decimal form.
std::string format_number(double v);

inline constexpr const char* kTraceHeader = "solver,seed,pass,grad_norm,fval,wall_s";

void write_trace_csv(std::ostream& out, const std::string& label, const Trace& trace);

/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

struct AggregateRow {
  std::string solver;
  std::size_t checkpoint = 0;
  double pass = 0.0;  // median over runs
  double median_grad_norm = 0.0;
  double min_grad_norm = 0.0;
  double max_grad_norm = 0.0;
  std::size_t runs = 0;
};

/// Per checkpoint ordinal, over the runs that reached it.
std::vector<AggregateRow> aggregate(const std::vector<std::string>& labels,
                                    const std::vector<Trace>& traces);

double median(std::vector<double> values);

// ---------------------------------------------------------------------------
// Commands. Each writes its files under cfg.out_dir and returns the data.

struct RunReport {
  std::vector<std::string> labels;
  std::vector<Trace> traces;
  bool numerical_failure = false;
};

RunReport cmd_run(const ExperimentConfig& cfg);

struct GridReport {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  // Mean passes; nullopt when a repeat missed the threshold, NaN when the
  // cell is not a valid configuration.
  std::vector<std::vector<std::optional<double>>> cells;
};

GridReport cmd_grid(const ExperimentConfig& cfg);

struct RateReport {
  Index dim = 0;
  double rho = 0.0;
  double bound = 1.0;
  double empirical_rate = 1.0;
  double max_step_ratio = 1.0;
  double max_fhat_ratio = 1.0;
  int fit_steps = 0;
  std::vector<double> mean_error;
  std::vector<double> mean_fhat;
  bool rate_ok = false;
  bool fhat_monotone = false;
  bool pass = false;
};

RateReport cmd_rate(const ExperimentConfig& cfg);

Matrix random_spd(Index dim, std::uint64_t seed);

}  // namespace fsn
