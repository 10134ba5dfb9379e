#include "fsn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fsn/snrvm.hpp"

namespace fsn {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::uint64_t> ExperimentConfig::seeds() const {
  if (!explicit_seeds.empty()) return explicit_seeds;
  std::vector<std::uint64_t> out;
  for (int i = 0; i < seed_count; ++i) out.push_back(seed_base + static_cast<std::uint64_t>(i));
  return out;
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; }))
      throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <typename T>
void maybe(const json& j, const char* key, const std::string& where, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = get<T>(j, key, where);
}

template <typename T>
void maybe(const json& j, const char* key, const std::string& where, std::optional<T>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = get<T>(j, key, where);
}

ProblemSpec parse_problem(const json& j) {
  const std::string where = "problem";
  check_keys(j, where, {"source", "n", "d", "seed", "margin_scale", "path", "intercept", "loss",
                        "regularizer", "lambda", "delta"});
  ProblemSpec spec;
  std::string source = "synthetic";
  maybe(j, "source", where, source);
  if (source == "synthetic") {
    spec.source = ProblemSpec::Source::synthetic;
  } else if (source == "libsvm") {
    spec.source = ProblemSpec::Source::libsvm;
    spec.path = get<std::string>(j, "path", where);
  } else {
    throw ConfigError("problem.source must be 'synthetic' or 'libsvm'");
  }
  std::int64_t n = spec.n, d = spec.d;
  maybe(j, "n", where, n);
  maybe(j, "d", where, d);
  spec.n = n;
  spec.d = d;
  maybe(j, "seed", where, spec.seed);
  maybe(j, "margin_scale", where, spec.margin_scale);
  maybe(j, "intercept", where, spec.intercept);
  std::string loss = "logistic", reg = "l2";
  maybe(j, "loss", where, loss);
  maybe(j, "regularizer", where, reg);
  if (loss == "logistic") spec.loss = LossKind::logistic;
  else if (loss == "squared") spec.loss = LossKind::squared;
  else throw ConfigError("problem.loss must be 'logistic' or 'squared'");
  if (reg == "l2") spec.reg = RegKind::l2;
  else if (reg == "pseudo_huber") spec.reg = RegKind::pseudo_huber;
  else throw ConfigError("problem.regularizer must be 'l2' or 'pseudo_huber'");
  maybe(j, "lambda", where, spec.lambda);
  maybe(j, "delta", where, spec.delta);
  if (spec.lambda && !(*spec.lambda >= 0.0)) throw ConfigError("problem.lambda must be >= 0");
  if (!(spec.delta > 0.0)) throw ConfigError("problem.delta must be positive");
  if (spec.source == ProblemSpec::Source::synthetic && (spec.n < 2 || spec.d < 1))
    throw ConfigError("synthetic problem needs n >= 2 and d >= 1");
  return spec;
}

SolverSpec parse_solver(const json& j) {
  SolverSpec spec;
  if (j.is_string()) {
    spec.kind = parse_solver_kind(j.get<std::string>());
    spec.label = to_string(spec.kind);
    return spec;
  }
  const std::string where = "solvers[]";
  check_keys(j, where, {"name", "label", "gamma", "gamma_over_lmax", "p", "svrg_inner",
                        "ridge_fast_path"});
  spec.kind = parse_solver_kind(get<std::string>(j, "name", where));
  spec.label = to_string(spec.kind);
  maybe(j, "label", where, spec.label);
  maybe(j, "gamma", where, spec.gamma);
  maybe(j, "gamma_over_lmax", where, spec.gamma_over_lmax);
  maybe(j, "p", where, spec.p);
  maybe(j, "svrg_inner", where, spec.svrg_inner);
  maybe(j, "ridge_fast_path", where, spec.ridge_fast_path);
  if (spec.gamma && spec.gamma_over_lmax)
    throw ConfigError("solver '" + spec.label + "': give gamma or gamma_over_lmax, not both");
  if (spec.label.empty() || spec.label.find_first_of("/\\,") != std::string::npos)
    throw ConfigError("solver label must be nonempty without '/', '\\' or ','");
  return spec;
}

GridSpec parse_grid(const json& j) {
  const std::string where = "grid";
  check_keys(j, where, {"solver", "p_times_n", "p", "gammas", "threshold", "repeats"});
  GridSpec spec;
  maybe(j, "solver", where, spec.solver);
  maybe(j, "p_times_n", where, spec.p_times_n);
  maybe(j, "p", where, spec.p);
  maybe(j, "gammas", where, spec.gammas);
  maybe(j, "threshold", where, spec.threshold);
  maybe(j, "repeats", where, spec.repeats);
  if (!(spec.threshold > 0.0)) throw ConfigError("grid.threshold must be positive");
  if (spec.repeats < 1) throw ConfigError("grid.repeats must be >= 1");
  return spec;
}

RateSpec parse_rate(const json& j) {
  const std::string where = "rate";
  check_keys(j, where, {"diag", "random_dim", "random_seed", "sketch", "steps", "trials", "seed",
                        "slack", "fhat_slack", "gamma"});
  RateSpec spec;
  maybe(j, "diag", where, spec.diag);
  std::optional<std::int64_t> dim;
  maybe(j, "random_dim", where, dim);
  if (dim) spec.random_dim = *dim;
  maybe(j, "random_seed", where, spec.random_seed);
  maybe(j, "sketch", where, spec.sketch);
  maybe(j, "steps", where, spec.steps);
  maybe(j, "trials", where, spec.trials);
  maybe(j, "seed", where, spec.seed);
  maybe(j, "slack", where, spec.slack);
  maybe(j, "fhat_slack", where, spec.fhat_slack);
  maybe(j, "gamma", where, spec.gamma);
  if (spec.diag.empty() == !spec.random_dim.has_value())
    throw ConfigError("rate: give exactly one of diag or random_dim");
  if (spec.random_dim && *spec.random_dim < 1) throw ConfigError("rate.random_dim must be >= 1");
  if (spec.sketch != "coordinate" && spec.sketch != "full")
    throw ConfigError("rate.sketch must be 'coordinate' or 'full'");
  return spec;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  const std::string where = "config";
  check_keys(root, where, {"problem", "solvers", "seeds", "seed_base", "stop", "checkpoint_every",
                           "count_checkpoints", "data_dir", "out_dir", "jobs", "grid", "rate"});
  ExperimentConfig cfg;
  if (root.contains("problem")) cfg.problem = parse_problem(root.at("problem"));
  if (root.contains("solvers")) {
    const auto& list = root.at("solvers");
    if (!list.is_array()) throw ConfigError("solvers must be an array");
    for (const auto& s : list) cfg.solvers.push_back(parse_solver(s));
  }
  std::set<std::string> labels;
  for (const auto& s : cfg.solvers)
    if (!labels.insert(s.label).second) throw ConfigError("duplicate solver label '" + s.label + "'");

  if (root.contains("seeds")) {
    const auto& seeds = root.at("seeds");
    if (seeds.is_number_integer()) {
      cfg.seed_count = seeds.get<int>();
      if (cfg.seed_count < 1) throw ConfigError("seeds must be >= 1");
    } else if (seeds.is_array() && !seeds.empty()) {
      cfg.explicit_seeds = get<std::vector<std::uint64_t>>(root, "seeds", where);
    } else {
      throw ConfigError("seeds must be a positive count or a nonempty list");
    }
  }
  maybe(root, "seed_base", where, cfg.seed_base);
  if (root.contains("stop")) {
    const auto& stop = root.at("stop");
    check_keys(stop, "stop", {"grad_tol", "max_passes"});
    maybe(stop, "grad_tol", "stop", cfg.stop.grad_tol);
    maybe(stop, "max_passes", "stop", cfg.stop.max_passes);
    if (!(cfg.stop.grad_tol > 0.0) || !(cfg.stop.max_passes >= 0.0))
      throw ConfigError("stop.grad_tol must be positive and stop.max_passes nonnegative");
  }
  maybe(root, "checkpoint_every", where, cfg.run.checkpoint_every);
  maybe(root, "count_checkpoints", where, cfg.run.count_checkpoints);
  if (!(cfg.run.checkpoint_every > 0.0)) throw ConfigError("checkpoint_every must be positive");
  if (root.contains("data_dir")) cfg.data_dir = get<std::string>(root, "data_dir", where);
  if (root.contains("out_dir")) cfg.out_dir = get<std::string>(root, "out_dir", where);
  maybe(root, "jobs", where, cfg.jobs);
  if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");
  if (root.contains("grid")) cfg.grid = parse_grid(root.at("grid"));
  if (root.contains("rate")) cfg.rate = parse_rate(root.at("rate"));
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

void apply_overrides(ExperimentConfig& cfg, const Overrides& overrides) {
  if (const char* env = std::getenv(kDataDirEnv); env && *env) cfg.data_dir = env;
  if (overrides.data_dir) cfg.data_dir = *overrides.data_dir;
  if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;
  if (overrides.jobs) {
    if (*overrides.jobs < 1) throw ConfigError("--jobs must be >= 1");
    cfg.jobs = *overrides.jobs;
  }
  if (overrides.seed_base) cfg.seed_base = *overrides.seed_base;
}

Problem load_problem(const ProblemSpec& spec, const fs::path& data_dir) {
  SparseRows<double> rows;
  VectorX<double> labels;
  if (spec.source == ProblemSpec::Source::synthetic) {
    auto synth = synth_logistic(spec.n, spec.d, spec.seed, spec.margin_scale);
    rows = synth.rows();
    labels = synth.labels();
  } else {
    const fs::path path = spec.path.is_absolute() ? spec.path : data_dir / spec.path;
    if (!fs::exists(path)) throw DataError("dataset not found: '" + path.string() + "'");
    PreprocessOptions opts;
    opts.add_intercept = spec.intercept;
    auto data = preprocess(read_libsvm_file(path), opts);
    rows = std::move(data.rows);
    labels = std::move(data.labels);
  }
  const double lambda = spec.lambda ? *spec.lambda : 1.0 / static_cast<double>(rows.rows());
  const Regularizer<double> reg = spec.reg == RegKind::l2
                                      ? Regularizer<double>::l2(lambda)
                                      : Regularizer<double>::pseudo_huber(lambda, spec.delta);
  return Problem(std::move(rows), std::move(labels), Loss{spec.loss}, reg);
}

SolverConfig resolve_solver(const SolverSpec& spec, const Problem& problem, std::uint64_t seed) {
  SolverConfig cfg;
  cfg.kind = spec.kind;
  cfg.seed = seed;
  cfg.p = spec.p;
  cfg.svrg_inner = spec.svrg_inner;
  cfg.ridge_fast_path = spec.ridge_fast_path;
  if (spec.kind == SolverKind::snm) {
    if (spec.gamma || spec.gamma_over_lmax) throw ConfigError("snm takes no step size");
  } else if (spec.gamma) {
    cfg.gamma = *spec.gamma;
  } else if (spec.gamma_over_lmax || !is_newton_family(spec.kind)) {
    cfg.gamma = spec.gamma_over_lmax.value_or(1.0) / lmax(problem);
  }
  cfg.validate(problem);
  return cfg;
}

// ---------------------------------------------------------------------------
// Output helpers

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_trace_csv(std::ostream& out, const std::string& label, const Trace& trace) {
  out << kTraceHeader << '\n';
  for (const auto& r : trace.records)
    out << label << ',' << trace.seed << ',' << format_number(r.pass) << ','
        << format_number(r.grad_norm) << ',' << format_number(r.fval) << ','
        << format_number(r.wall_s) << '\n';
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw DataError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

std::vector<AggregateRow> aggregate(const std::vector<std::string>& labels,
                                    const std::vector<Trace>& traces) {
  if (labels.size() != traces.size()) throw ConfigError("aggregate: size mismatch");
  std::vector<std::string> order;
  std::map<std::string, std::vector<const Trace*>> groups;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (!groups.count(labels[i])) order.push_back(labels[i]);
    groups[labels[i]].push_back(&traces[i]);
  }
  std::vector<AggregateRow> rows;
  for (const auto& label : order) {
    const auto& group = groups[label];
    std::size_t longest = 0;
    for (const auto* t : group) longest = std::max(longest, t->records.size());
    for (std::size_t k = 0; k < longest; ++k) {
      std::vector<double> passes, norms;
      for (const auto* t : group) {
        if (k < t->records.size()) {
          passes.push_back(t->records[k].pass);
          norms.push_back(t->records[k].grad_norm);
        }
      }
      AggregateRow row;
      row.solver = label;
      row.checkpoint = k;
      row.pass = median(passes);
      row.median_grad_norm = median(norms);
      row.min_grad_norm = *std::min_element(norms.begin(), norms.end());
      row.max_grad_norm = *std::max_element(norms.begin(), norms.end());
      row.runs = norms.size();
      rows.push_back(row);
    }
  }
  return rows;
}

namespace {

/// Runs tasks on up to `jobs` threads; rethrows the first task exception.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& task) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first) first = std::current_exception();
      }
    }
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first) std::rethrow_exception(first);
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands

RunReport cmd_run(const ExperimentConfig& cfg) {
  if (cfg.solvers.empty()) throw ConfigError("run: config lists no solvers");
  const Problem problem = load_problem(cfg.problem, cfg.data_dir);
  const auto seeds = cfg.seeds();

  struct Job {
    std::string label;
    SolverConfig solver;
  };
  std::vector<Job> jobs;
  for (const auto& spec : cfg.solvers)
    for (const auto seed : seeds) jobs.push_back({spec.label, resolve_solver(spec, problem, seed)});

  RunReport report;
  report.traces.resize(jobs.size());
  parallel_for(jobs.size(), cfg.jobs, [&](std::size_t i) {
    const auto& job = jobs[i];
    report.traces[i] = run(problem, job.solver, cfg.stop, cfg.run);
    std::ostringstream csv;
    write_trace_csv(csv, job.label, report.traces[i]);
    write_file_atomic(cfg.out_dir / (job.label + "_seed" + std::to_string(job.solver.seed) + ".csv"),
                      csv.str());
  });
  for (const auto& job : jobs) report.labels.push_back(job.label);

  std::ostringstream agg;
  agg << "solver,checkpoint,pass,median_grad_norm,min_grad_norm,max_grad_norm,runs\n";
  for (const auto& row : aggregate(report.labels, report.traces))
    agg << row.solver << ',' << row.checkpoint << ',' << format_number(row.pass) << ','
        << format_number(row.median_grad_norm) << ',' << format_number(row.min_grad_norm) << ','
        << format_number(row.max_grad_norm) << ',' << row.runs << '\n';
  write_file_atomic(cfg.out_dir / "aggregate.csv", agg.str());

  std::ostringstream summary;
  summary << "solver,seed,status,passes,grad_norm,message\n";
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& t = report.traces[i];
    const auto& last = t.records.back();
    summary << report.labels[i] << ',' << t.seed << ',' << to_string(t.status) << ','
            << format_number(last.pass) << ',' << format_number(last.grad_norm) << ','
            << '"' << t.message << '"' << '\n';
    if (t.status == StopStatus::numerical_failure) report.numerical_failure = true;
  }
  write_file_atomic(cfg.out_dir / "summary.csv", summary.str());
  return report;
}

GridReport cmd_grid(const ExperimentConfig& cfg) {
  const auto& grid = cfg.grid;
  const Problem problem = load_problem(cfg.problem, cfg.data_dir);
  const Index n = problem.n();
  const SolverKind kind = parse_solver_kind(grid.solver);
  if (kind == SolverKind::snm) throw ConfigError("grid: snm has no hyperparameters to sweep");
  const bool newton = is_newton_family(kind);
  const bool uses_p = kind == SolverKind::san || kind == SolverKind::san_id;
  const double l_max = lmax(problem);

  std::vector<double> gammas = grid.gammas;
  if (gammas.empty())
    gammas = newton ? std::vector<double>{0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3}
                    : std::vector<double>{0.1, 0.2, 1.0 / 3.0, 0.5, 1.0, 2.0, 5.0};
  std::vector<double> ps;
  std::vector<std::string> row_labels;
  if (uses_p) {
    if (!grid.p.empty()) {
      ps = grid.p;
      for (double p : ps) row_labels.push_back(format_number(p));
    } else {
      const auto mult = grid.p_times_n.empty()
                            ? std::vector<double>{0.5, 1.0, 10.0, 100.0, 1000.0}
                            : grid.p_times_n;
      for (double c : mult) {
        ps.push_back(c / static_cast<double>(n));
        row_labels.push_back(format_number(c) + "/n");
      }
    }
  } else {
    ps.push_back(std::numeric_limits<double>::quiet_NaN());
    row_labels.push_back("-");
  }

  GridReport report;
  report.row_labels = row_labels;
  for (double g : gammas)
    report.col_labels.push_back(newton ? format_number(g) : format_number(g) + "/L_max");

  // Every (cell, repeat) is one task; invalid cells are marked up front.
  const std::size_t rows = ps.size(), cols = gammas.size();
  const auto repeats = static_cast<std::size_t>(grid.repeats);
  std::vector<std::optional<double>> passes(rows * cols * repeats);
  std::vector<bool> valid(rows * cols, true);
  std::vector<SolverConfig> configs(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      SolverConfig sc;
      sc.kind = kind;
      sc.gamma = newton ? gammas[c] : gammas[c] / l_max;
      sc.allow_overrelaxation = true;
      if (uses_p) sc.p = ps[r];
      try {
        sc.validate(problem);
      } catch (const ConfigError&) {
        valid[r * cols + c] = false;
      }
      configs[r * cols + c] = sc;
    }
  }
  const StopRule stop{grid.threshold, cfg.stop.max_passes};
  parallel_for(passes.size(), cfg.jobs, [&](std::size_t task) {
    const std::size_t cell = task / repeats;
    if (!valid[cell]) return;
    SolverConfig sc = configs[cell];
    sc.seed = cfg.seed_base + task % repeats;
    const Trace t = run(problem, sc, stop, cfg.run);
    if (t.status == StopStatus::grad_tol) passes[task] = t.records.back().pass;
  });

  std::ostringstream csv;
  csv << "p";
  for (const auto& label : report.col_labels) csv << ',' << label;
  csv << '\n';
  report.cells.assign(rows, std::vector<std::optional<double>>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    csv << row_labels[r];
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t cell = r * cols + c;
      std::optional<double> value;
      if (!valid[cell]) {
        value = std::numeric_limits<double>::quiet_NaN();
      } else {
        double sum = 0.0;
        bool all = true;
        for (std::size_t k = 0; k < repeats; ++k) {
          const auto& p = passes[cell * repeats + k];
          if (!p) all = false;
          else sum += *p;
        }
        if (all) value = sum / static_cast<double>(repeats);
      }
      report.cells[r][c] = value;
      csv << ',' << (!value ? std::string("X") : std::isnan(*value) ? "NA" : format_number(*value));
    }
    csv << '\n';
  }
  write_file_atomic(cfg.out_dir / "grid.csv", csv.str());
  return report;
}

Matrix random_spd(Index dim, std::uint64_t seed) {
  if (dim < 1) throw ConfigError("random_spd: dimension must be positive");
  Rng rng(seed);
  Matrix b(dim, dim);
  for (Index i = 0; i < b.size(); ++i) b.data()[i] = standard_normal(rng);
  Matrix a = b * b.transpose() / static_cast<double>(dim);
  a.diagonal().array() += 0.5;
  return a;
}

RateReport cmd_rate(const ExperimentConfig& cfg) {
  const auto& spec = cfg.rate;
  Matrix a;
  if (!spec.diag.empty()) {
    a = Eigen::Map<const Vector>(spec.diag.data(), static_cast<Index>(spec.diag.size()))
            .asDiagonal();
  } else {
    a = random_spd(*spec.random_dim, spec.random_seed);
  }
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) throw ConfigError("rate: matrix is not positive definite");

  const Index dim = a.rows();
  // x* = 1, start from 0.
  const Vector x_star = Vector::Ones(dim);
  NonlinearSystem sys = make_linear_system(a, a * x_star);
  const SketchDistribution dist =
      spec.sketch == "full" ? SketchDistribution::full(dim) : SketchDistribution::coordinate(a);
  const auto result = contraction_experiment(sys, dist, Vector::Zero(dim), spec.steps,
                                             spec.trials, spec.seed, spec.gamma);

  RateReport report;
  report.dim = dim;
  report.rho = result.rho;
  report.bound = result.bound;
  report.empirical_rate = result.empirical_rate;
  report.max_step_ratio = result.max_step_ratio;
  report.max_fhat_ratio = result.max_fhat_ratio;
  report.fit_steps = result.fit_steps;
  report.mean_error = result.mean_error;
  report.mean_fhat = result.mean_fhat;
  report.rate_ok = result.empirical_rate <= result.bound + spec.slack;
  report.fhat_monotone = result.max_fhat_ratio <= 1.0 + spec.fhat_slack;
  report.pass = report.rate_ok && report.fhat_monotone;

  std::ostringstream csv;
  csv << "sketch,dim,gamma,rho,bound,empirical_rate,fit_steps,slack,max_fhat_ratio,"
         "fhat_slack,pass\n"
      << spec.sketch << ',' << dim << ',' << format_number(spec.gamma) << ','
      << format_number(report.rho) << ',' << format_number(report.bound) << ','
      << format_number(report.empirical_rate) << ',' << report.fit_steps << ','
      << format_number(spec.slack) << ',' << format_number(report.max_fhat_ratio) << ','
      << format_number(spec.fhat_slack) << ',' << (report.pass ? "PASS" : "FAIL") << '\n';
  write_file_atomic(cfg.out_dir / "rate.csv", csv.str());

  std::ostringstream trace;
  trace << "step,mean_error,mean_fhat\n";
  for (std::size_t k = 0; k < report.mean_error.size(); ++k)
    trace << k << ',' << format_number(report.mean_error[k]) << ','
          << format_number(report.mean_fhat[k]) << '\n';
  write_file_atomic(cfg.out_dir / "rate_trace.csv", trace.str());
  return report;
}

}  // namespace fsn
