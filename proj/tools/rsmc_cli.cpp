#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rsmc/config.hpp"
#include "rsmc/csv_io.hpp"
#include "rsmc/errors.hpp"
#include "rsmc/experiment.hpp"
#include "rsmc/metrics.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kRuntime = 2 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> data_seed;
  std::optional<std::size_t> runs;
  std::optional<std::size_t> threads;
  std::optional<std::string> output;
};

void add_common(CLI::App* app, Common& c, bool config_required) {
  auto* opt = app->add_option("-c,--config", c.config, "YAML experiment configuration");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  app->add_option("-s,--seed", c.seed, "override base_seed");
  app->add_option("--data-seed", c.data_seed, "override data_seed");
  app->add_option("-r,--runs", c.runs, "override runs");
  app->add_option("-j,--threads", c.threads, "worker threads (0 = all cores)");
  app->add_option("-o,--output", c.output, "override output_dir");
}

rsmc::ExperimentConfig load(const Common& c) {
  rsmc::ExperimentConfig cfg = rsmc::load_config(c.config);
  if (c.seed) cfg.base_seed = *c.seed;
  if (c.data_seed) cfg.data_seed = *c.data_seed;
  if (c.runs) cfg.runs = *c.runs;
  if (c.threads) cfg.threads = *c.threads;
  if (c.output) cfg.output_dir = *c.output;
  cfg.validate();
  return cfg;
}

void print_summary(const rsmc::ExperimentResult& res) {
  std::cout << "filter,completed,failed,nmse_median,nmse_iqr,coverage_median,medae_mean\n";
  for (const auto& s : res.summaries) {
    std::cout << s.filter << ',' << s.completed << ',' << s.failed << ','
              << rsmc::format_double(s.nmse_median) << ',' << rsmc::format_double(s.nmse_iqr) << ','
              << rsmc::format_double(s.coverage_median) << ','
              << rsmc::format_double(s.medae_mean) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust generalised-Bayes particle filtering experiments"};
  app.require_subcommand(0, 1);
  bool show_version = false;
  app.add_flag("--version", show_version, "print version information as JSON");

  Common sim_opts, run_opts, sel_opts, gp_opts, inf_opts;
  auto* simulate = app.add_subcommand("simulate", "write simulated states and observations");
  add_common(simulate, sim_opts, true);
  auto* run = app.add_subcommand("run", "run every configured filter over every run");
  add_common(run, run_opts, true);
  auto* select = app.add_subcommand("select-beta", "choose beta by predictive grid search");
  add_common(select, sel_opts, true);

  auto* gp = app.add_subcommand("gp-smooth", "GP regression with filtering and smoothing");
  add_common(gp, gp_opts, true);
  std::string data_path, time_col = "t", value_col = "value", truth_col;
  gp->add_option("--data", data_path, "sensor CSV replacing the simulated draw")->check(CLI::ExistingFile);
  gp->add_option("--time-column", time_col);
  gp->add_option("--value-column", value_col);
  gp->add_option("--truth-column", truth_col);

  auto* influence = app.add_subcommand("influence", "influence profile of a 1-D likelihood");
  add_common(influence, inf_opts, false);
  double sigma = 1.0, d_max = 10.0;
  std::size_t points = 201;
  std::vector<double> betas{0.01, 0.1, 0.2, 0.5};
  influence->add_option("--sigma", sigma, "noise standard deviation (default: from config or 1)");
  influence->add_option("--betas", betas, "beta values; 0 selects the standard rule")->delimiter(',');
  influence->add_option("--d-max", d_max, "largest standardised residual");
  influence->add_option("--points", points, "grid size")->check(CLI::Range(2, 1000000));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  if (show_version) {
    std::cout << "{\"name\":\"rsmc\",\"version\":\"" << rsmc::library_version()
              << "\",\"config_schema\":" << rsmc::kConfigSchemaVersion << "}\n";
    return kOk;
  }

  try {
    if (*simulate) {
      rsmc::ExperimentConfig cfg = load(sim_opts);
      if (sim_opts.seed && !sim_opts.data_seed) cfg.data_seed = *sim_opts.seed;
      rsmc::write_dataset(cfg, rsmc::make_dataset(cfg));
      std::cout << "wrote " << cfg.runs << " dataset(s) to " << cfg.output_dir.string() << '\n';
    } else if (*run) {
      const rsmc::ExperimentConfig cfg = load(run_opts);
      const rsmc::ExperimentResult res = rsmc::run_experiment(cfg);
      rsmc::write_outputs(cfg, res);
      print_summary(res);
      for (const auto& s : res.summaries) {
        if (s.completed == 0) return kRuntime;
      }
    } else if (*select) {
      const rsmc::ExperimentConfig cfg = load(sel_opts);
      const rsmc::BetaSelectionResult res = rsmc::run_beta_selection(cfg);
      rsmc::write_selection(cfg, res);
      std::cout << "selected_beta," << rsmc::format_double(res.selected_beta) << "\nmode_count,"
                << res.mode_count << '\n';
    } else if (*gp) {
      rsmc::ExperimentConfig cfg = load(gp_opts);
      if (cfg.experiment != rsmc::ExperimentKind::GPRegression) {
        throw rsmc::ConfigError(gp_opts.config + ": gp-smooth needs experiment: gp_regression");
      }
      if (!data_path.empty()) {
        cfg.simulator.data = rsmc::DataSource{data_path, time_col, value_col, truth_col};
      }
      cfg.write_trajectories = true;
      cfg.validate();
      const rsmc::ExperimentResult res = rsmc::run_experiment(cfg);
      rsmc::write_outputs(cfg, res);
      print_summary(res);
      for (const auto& s : res.summaries) {
        if (s.completed == 0) return kRuntime;
      }
    } else if (*influence) {
      double s = sigma;
      if (!inf_opts.config.empty() && influence->count("--sigma") == 0) {
        s = std::sqrt(rsmc::load_config(inf_opts.config).simulator.obs_variance);
      }
      if (!(s > 0.0)) throw rsmc::ConfigError("--sigma must be positive");
      const auto family = rsmc::LikelihoodFamily::gaussian(
          rsmc::ObservationMap::linear(rsmc::Matrix::Identity(1, 1)), rsmc::Matrix::Constant(1, 1, s * s));
      std::vector<double> ds(points);
      for (std::size_t i = 0; i < points; ++i) {
        ds[i] = d_max * static_cast<double>(i) / static_cast<double>(points - 1);
      }
      std::ofstream file;
      if (inf_opts.output) {
        file.open(*inf_opts.output);
        if (!file) throw std::runtime_error("cannot write " + *inf_opts.output);
      }
      std::ostream& os = inf_opts.output ? file : std::cout;
      rsmc::CsvWriter w(os);
      w.field(std::string("rule")).field(std::string("beta")).field(std::string("d")).field(std::string("influence"));
      w.end_row();
      for (double b : betas) {
        if (b < 0.0) throw rsmc::ConfigError("--betas must be non-negative");
        const auto gl = b > 0.0 ? rsmc::GeneralisedLikelihood::beta(family, b)
                                : rsmc::GeneralisedLikelihood::standard(family);
        for (const auto& p : rsmc::influence_profile(gl, ds)) {
          w.field(std::string(b > 0.0 ? "beta" : "standard")).field(b).field(p.d).field(p.influence);
          w.end_row();
        }
      }
    } else {
      std::cout << app.help();
    }
  } catch (const rsmc::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
