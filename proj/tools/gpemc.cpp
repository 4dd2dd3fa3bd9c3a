#include "gpemc/runner.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

// Exit codes per failure class.
enum Exit { ok = 0, config_error = 2, io_error = 3, numeric_error = 4, other_error = 5 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-process emulated geometric MCMC"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> chains;
  std::optional<std::string> out_dir;
  bool quiet = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the global seed");
    sub->add_option("--chains", chains, "Independent chains run in parallel")->check(CLI::PositiveNumber);
    sub->add_option("--output-dir", out_dir, "Override the output directory");
    sub->add_flag("-q,--quiet", quiet, "Suppress progress output");
  };
  CLI::App* run_cmd = app.add_subcommand("run", "Run the configured sampler");
  add_common(run_cmd);
  CLI::App* design = app.add_subcommand("design", "Build an emulator design offline");
  add_common(design);

  std::vector<std::string> chain_files;
  std::optional<std::string> baseline;
  CLI::App* diag = app.add_subcommand("diagnose", "Summarize chain files");
  diag->add_option("chains", chain_files, "chain.csv files")->required()->check(CLI::ExistingFile);
  diag->add_option("--baseline", baseline, "Chain for the speedup column")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (diag->parsed()) {
      std::vector<std::filesystem::path> files(chain_files.begin(), chain_files.end());
      std::optional<std::filesystem::path> base;
      if (baseline) base = *baseline;
      std::cout << gpemc::diagnose(files, base);
      return ok;
    }
    gpemc::RunConfig cfg = gpemc::load_config(config_path);
    gpemc::RunOverrides ov;
    ov.seed = seed;
    ov.chains = chains;
    if (out_dir) ov.output_dir = *out_dir;
    gpemc::apply_overrides(cfg, ov);
    std::ostream* log = quiet ? nullptr : &std::cerr;
    if (run_cmd->parsed()) {
      gpemc::run(cfg, log);
    } else {
      gpemc::design_cmd(cfg, log);
    }
  } catch (const gpemc::ConfigError& e) {
    std::cerr << "config error at " << e.pointer() << ": " << e.what() << '\n';
    return config_error;
  } catch (const gpemc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return numeric_error;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return io_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return other_error;
  }
  return ok;
}
