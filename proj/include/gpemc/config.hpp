#pragma once

#include "gpemc/adaptive.hpp"
#include "gpemc/elliptic.hpp"
#include "gpemc/samplers.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace gpemc {

struct TargetConfig {
  std::string type = "banana";  // banana, bbd, elliptic, gaussian
  Index dim = 2;
  // banana / bbd
  Index n_data = 100;
  double mu_true = 1.0;
  double sigma_y = 2.0;
  double sigma_theta = 1.0;
  // elliptic
  EllipticTarget::Options elliptic;
  // gaussian
  Vector mean;
  Matrix cov;
};

struct InitialDesignConfig {
  std::string source = "pilot";  // pilot (exact RWM run) or prior
  Index size = 20;
  Index candidates = 200;
  int pilot_iters = 2000;
  double pilot_scale = 0.5;
};

struct GeometryConfig {
  std::string mode = "exact";  // exact or emulated
  std::optional<std::filesystem::path> design_path;
  InitialDesignConfig initial;
  bool adaptive = false;
  AdaptiveConfig adaptation;
};

struct DesignCmdConfig {
  std::string candidates = "prior";  // "prior" or a chain.csv path
  Index n_candidates = 50;
  Index size = 20;
  std::optional<std::filesystem::path> initial_design;
  std::string output = "design.json";
};

struct RunConfig {
  TargetConfig target;
  SamplerConfig sampler;
  bool adapt_step = true;
  GeometryConfig geometry;
  DesignCmdConfig design;
  std::uint64_t seed = 1;
  long long iters = 2000;
  long long burnin = 500;
  int chains = 1;
  std::filesystem::path output_dir = "out";
  /// "wall" records elapsed nanoseconds; "none" writes 0 so outputs are byte-stable.
  std::string timing = "wall";
};

/// Parses and validates; errors are ConfigError with a JSON pointer.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
/// JSON echo of a parsed config (all defaults filled in).
std::string config_to_json(const RunConfig& cfg);

}  // namespace gpemc
