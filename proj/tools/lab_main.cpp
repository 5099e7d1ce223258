#include <exception>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "optlab/config.hpp"
#include "optlab/errors.hpp"
#include "optlab/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Numerical optimization lab: iterated local models against "
               "global surrogates on swingup tasks."};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;

  const std::pair<const char*, const char*> subcommands[] = {
      {"swingup",
       "solve the configured trajectory task and store the solution"},
      {"surrogate-bench",
       "fit local and global models around the stored solution and score "
       "their open-loop predictions"},
      {"conditioning",
       "Gram spectra of the model classes and condition growth with order"},
      {"variance",
       "refit each surrogate across data seeds and measure the spread"},
      {"control-bench",
       "optimize controls through each model class and compare true costs"},
      {"plots", "render SVG charts from a previous run's manifest"},
      {"all", "run every study, then render plots"}};

  for (const auto& [name, help] : subcommands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path,
                    "JSON config file; built-in defaults when omitted");
    sub->add_option("--set", overrides,
                    "override one config value as key.path=value; repeatable");
    sub->add_option("--out", out_dir,
                    "output directory, overriding the config's out_dir");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    const optlab::ExperimentConfig cfg =
        optlab::load_experiment_config(config_path, overrides, out_dir);
    return optlab::run_subcommand(name, cfg);
  } catch (const optlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
