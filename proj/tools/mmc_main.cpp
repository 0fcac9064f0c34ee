#include "mmc/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

int main(int argc, char** argv) {
  CLI::App app{"Multimodal MCMC experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> budget;
  std::optional<long> chains;
  auto* run = app.add_subcommand("run", "run an experiment from a config file");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--seed", seed, "override experiment.seed");
  run->add_option("--out", out, "override experiment.out");
  run->add_option("--budget-seconds", budget, "override sampler.budget_seconds");
  run->add_option("--chains", chains, "override sampler.chains");

  app.add_subcommand("presets", "list preset targets");

  std::string registry_path;
  auto* audit = app.add_subcommand("audit", "re-run BFGS from every registered mode");
  audit->add_option("registry", registry_path, "registry file")->required();

  app.add_subcommand("explain-defaults", "list every config key with its default");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("presets")) {
      std::cout << mmc::list_presets();
    } else if (app.got_subcommand("explain-defaults")) {
      std::cout << mmc::explain_defaults();
    } else if (app.got_subcommand("audit")) {
      const double total = mmc::audit_registry_file(registry_path, std::cout);
      std::cerr << "cumulative displacement " << total << '\n';
    } else {
      std::ifstream in(config_path);
      if (!in) throw std::runtime_error("cannot open config '" + config_path + "'");
      std::stringstream text;
      text << in.rdbuf();
      auto cfg = mmc::parse_config(text.str());
      if (seed) cfg.seed = *seed;
      if (out) cfg.out = *out;
      if (budget) cfg.budget_seconds = *budget;
      if (chains) cfg.chains = *chains;
      cfg.validate();
      const auto outcome = mmc::run_experiment(cfg);
      std::cout << "final REM " << outcome.final_rem << ", RECOV "
                << outcome.final_recov << ", N_BFGS "
                << outcome.result.registry.n_bfgs << ", modes "
                << outcome.result.registry.size() << "\noutputs " << outcome.stem
                << "-*\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
