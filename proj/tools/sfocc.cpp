#include <iostream>

#include "CLI11.hpp"
#include "sfocc/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Spatial factor multi-species occupancy models"};
  app.require_subcommand(1, 1);
  sfocc::CommandArgs args;
  for (const char* name : {"simulate", "fit", "predict", "compare", "simstudy"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", args.config, "JSON config or manifest")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", args.out, "Output directory")->required();
    sub->add_option("--seed", args.seed, "Overrides the config seed");
    sub->add_option("--workers", args.workers, "Worker threads")->check(CLI::PositiveNumber);
  }
  CLI11_PARSE(app, argc, argv);
  args.command = app.get_subcommands().front()->get_name();
  return sfocc::run_command(args, std::cerr);
}
