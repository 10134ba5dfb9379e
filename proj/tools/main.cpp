#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fetch.hpp"
#include "fsn/experiment.hpp"

namespace {

constexpr const char* kDefaultUrlBase =
    "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/binary";

struct CommonFlags {
  std::string config;
  std::optional<std::string> data_dir;
  std::optional<std::string> out;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed_base;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool needs_config) {
  auto* opt = cmd->add_option("--config", flags.config, "JSON experiment manifest");
  if (needs_config) opt->required();
  cmd->add_option("--data-dir", flags.data_dir,
                  std::string("dataset directory (overrides $") + fsn::kDataDirEnv + ")");
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_option("--jobs", flags.jobs, "parallel runs");
  cmd->add_option("--seed-base", flags.seed_base, "first seed of the seed range");
}

fsn::ExperimentConfig resolve(const CommonFlags& flags) {
  fsn::ExperimentConfig cfg = fsn::load_config(flags.config);
  fsn::Overrides o;
  if (flags.data_dir) o.data_dir = *flags.data_dir;
  if (flags.out) o.out_dir = *flags.out;
  o.jobs = flags.jobs;
  o.seed_base = flags.seed_base;
  fsn::apply_overrides(cfg, o);
  return cfg;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Stochastic Newton and variance-reduced solvers for regularized GLMs"};
  app.require_subcommand(1);

  CommonFlags run_flags, grid_flags, rate_flags;
  auto* run = app.add_subcommand("run", "run solvers over seeds and write trace CSVs");
  add_common(run, run_flags, true);
  auto* grid = app.add_subcommand("grid", "grid search over (p, gamma) or baseline step sizes");
  add_common(grid, grid_flags, true);
  auto* rate = app.add_subcommand("rate", "empirical contraction rate on a quadratic");
  add_common(rate, rate_flags, true);

  auto* fetch = app.add_subcommand("fetch-data", "download LibSVM datasets");
  std::optional<std::string> fetch_dir;
  std::vector<std::string> names{"mushrooms", "phishing"};
  std::string url_base = kDefaultUrlBase;
  bool force = false;
  fetch->add_option("--data-dir", fetch_dir, "target directory");
  fetch->add_option("--datasets", names, "dataset file names")->capture_default_str();
  fetch->add_option("--url-base", url_base, "mirror URL")->capture_default_str();
  fetch->add_flag("--force", force, "download even if present");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (run->parsed()) {
    const auto report = fsn::cmd_run(resolve(run_flags));
    for (std::size_t i = 0; i < report.traces.size(); ++i) {
      const auto& t = report.traces[i];
      std::cout << report.labels[i] << " seed " << t.seed << ": " << fsn::to_string(t.status)
                << " after " << t.records.back().pass << " passes, ||grad|| "
                << t.records.back().grad_norm << '\n';
    }
    return report.numerical_failure ? 3 : 0;
  }
  if (grid->parsed()) {
    const auto cfg = resolve(grid_flags);
    fsn::cmd_grid(cfg);
    std::cout << "wrote " << (cfg.out_dir / "grid.csv").string() << '\n';
    return 0;
  }
  if (rate->parsed()) {
    const auto cfg = resolve(rate_flags);
    const auto report = fsn::cmd_rate(cfg);
    std::cout << "rho " << report.rho << ", bound " << report.bound << ", empirical "
              << report.empirical_rate << " over " << report.fit_steps << " steps, max surrogate ratio "
              << report.max_fhat_ratio << ": "
              << (report.pass ? "PASS" : "FAIL") << '\n';
    return 0;
  }
  std::string dir = "data";
  if (const char* env = std::getenv(fsn::kDataDirEnv); env && *env) dir = env;
  if (fetch_dir) dir = *fetch_dir;
  fsn::fetch_datasets(names, dir, url_base, force);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const fsn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const fsn::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const fsn::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
