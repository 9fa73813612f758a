#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mose/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Online continual learning experiments (MOSE, ER, SCR)"};
  app.require_subcommand(1);

  std::string run_config;
  auto* run = app.add_subcommand("run", "Run every seed of a config");
  run->add_option("config", run_config, "Config file")->required();

  std::string sweep_config, axis, values;
  auto* sweep = app.add_subcommand("sweep", "Run a config across values of one axis");
  sweep->add_option("config", sweep_config, "Config file")->required();
  sweep->add_option("--axis", axis, "epochs|n_experts|memory|augment|rsd|direction|student")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();

  std::string run_dir;
  auto* plot = app.add_subcommand("plot-data", "Emit tidy plot CSV for a run directory");
  plot->add_option("run_dir", run_dir, "Run directory or output root")->required();

  CLI11_PARSE(app, argc, argv);

  if (*run) return mose::cli::run(run_config, std::cout, std::cerr);
  if (*sweep) {
    std::vector<std::string> list;
    std::string item;
    for (char c : values + ",") {
      if (c == ',') {
        if (!item.empty()) list.push_back(item);
        item.clear();
      } else if (c != ' ') {
        item += c;
      }
    }
    return mose::cli::sweep(sweep_config, axis, list, std::cout, std::cerr);
  }
  return mose::cli::plot_data(run_dir, std::cout, std::cerr);
}
