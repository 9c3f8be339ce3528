// Command-line front end.
//
//   jsde run <config.json> [--output-dir DIR]
//   jsde list-models
//
// Exit codes: 0 pass / estimate-only, 1 a checked property failed,
// 2 usage or config error.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "jsde/jsde.hpp"

int main(int argc, char** argv) {
  CLI::App app{"jump-SDE simulation and invariant-measure toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  CLI::App* run = app.add_subcommand("run", "execute one experiment config");
  run->add_option("config", config_path, "JSON experiment config")->required();
  run->add_option("--output-dir", output_dir, "override the config's output directory");

  CLI::App* list = app.add_subcommand("list-models", "list registered coefficient fields");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (list->parsed()) {
    std::cout << jsde::list_models_text();
    return 0;
  }

  try {
    jsde::Experiment exp = jsde::parse_config(config_path);
    if (!output_dir.empty()) exp.output_dir = output_dir;
    return jsde::run_task(exp);
  } catch (const jsde::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
