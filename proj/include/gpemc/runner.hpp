#pragma once

#include "gpemc/config.hpp"
#include "gpemc/diagnostics.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace gpemc {

struct BuiltTarget {
  std::shared_ptr<const TargetModel> model;
  /// One row per datum, for data.csv.
  std::vector<std::string> data_columns;
  Matrix data;
  /// Parameter that generated synthetic data, when there is one.
  std::optional<Vector> theta_true;
};
BuiltTarget build_target(const TargetConfig& cfg, std::uint64_t seed);

/// Exact evaluation at each row: potentials, gradients, and per-datum terms
/// when the target has data.
DesignSet evaluate_design(const TargetModel& target, const Matrix& points);

/// Exact candidates from prior draws.
std::vector<Candidate> prior_candidates(const TargetModel& target, Index n, Rng& rng);
/// Distinct states of an exact-potential chain (logpost = -U), thinned to at most n rows.
std::vector<Candidate> chain_candidates(const std::filesystem::path& chain_csv, Index n);
/// Distinct states of a pilot RWM run, thinned to at most n rows.
std::vector<Candidate> pilot_candidates(std::shared_ptr<const TargetModel> target, const InitialDesignConfig& cfg,
                                        std::uint64_t seed);

struct DesignBuild {
  DesignSet design;
  Hyperparameters hyper;
  int target_evaluations = 0;
  std::string warning;
};
/// Offline design: a farthest-point seed from the candidates (or `initial`),
/// hyperparameters by maximum likelihood, then MICE up to `size` points.
DesignBuild build_design(const TargetModel& target, const std::vector<Candidate>& candidates, Index size,
                         const std::optional<std::pair<DesignSet, Hyperparameters>>& initial,
                         const AdaptiveConfig& acfg, std::uint64_t seed);

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> chains;
  std::optional<std::filesystem::path> output_dir;
};
void apply_overrides(RunConfig& cfg, const RunOverrides& ov);

struct ChainOutcome {
  ChainSummary summary;
  SamplerCounters counters;
  long long regenerations = 0;
  int adaptations = 0;
  int design_evaluations = 0;
  double wall_seconds = 0.0;
  std::filesystem::path chain_csv;
};

/// Runs every chain and writes chain.csv, events.csv, summary.csv,
/// design.json (emulated geometry), data.csv and meta.json into the output
/// directory. Files get a `_c<k>` suffix when more than one chain runs.
std::vector<ChainOutcome> run(const RunConfig& cfg, std::ostream* log = nullptr);

/// Builds a design offline and writes it to output_dir / design.output.
DesignBuild design_cmd(const RunConfig& cfg, std::ostream* log = nullptr);

/// Summary table of chain files; the first baseline row feeds the speedup column.
std::string diagnose(const std::vector<std::filesystem::path>& chains,
                     const std::optional<std::filesystem::path>& baseline);

}  // namespace gpemc
