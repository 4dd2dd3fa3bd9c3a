#pragma once

#include "gpemc/adaptation.hpp"
#include "gpemc/samplers.hpp"

#include <memory>
#include <string>
#include <vector>

namespace gpemc {

struct AdaptiveConfig {
  /// Regeneration is tested on accepted independence moves at iterations
  /// that are multiples of test_interval.
  int test_interval = 20;
  bool active = true;
  int max_adaptations = 10;
  Index holdout_size = 20;
  int q_max_tries = 1000;
  double metric_reg = 1e-6;
  MiceConfig mice;
  MleOptions mle;
  void validate() const;
};

struct AdaptEvent {
  long long iter = 0;
  std::string kind;  // regen, adapt_start, adapt_done, q_exhausted
  Index design_size = 0;
  double holdout_mspe = std::numeric_limits<double>::quiet_NaN();
};

struct AdaptiveIteration {
  StepResult kernel1;
  bool kernel2_accepted = false;
  bool regenerated = false;
  bool adapted = false;
};

/// Alternates an emulated-geometry sampler with an independence sampler on a
/// Gaussian mixture over the design, detecting regenerations on the latter
/// and refreshing design, emulator and mixture at regeneration times.
class AdaptiveChain {
 public:
  AdaptiveChain(std::shared_ptr<const TargetModel> target, DesignSet design, Hyperparameters hyper,
                SamplerConfig sampler, AdaptiveConfig cfg, std::uint64_t seed);

  ChainState init(const Vector& theta, Rng rng) { return sampler_.init(theta, std::move(rng)); }
  AdaptiveIteration iterate(ChainState& s);

  Sampler& sampler() { return sampler_; }
  const DesignSet& design() const { return emulator_->design(); }
  const Emulator& emulator() const { return *emulator_; }
  std::shared_ptr<const Emulator> emulator_ptr() const { return emulator_; }
  const IndependenceProposal& proposal() const { return *proposal_; }
  const std::vector<AdaptEvent>& events() const { return events_; }
  bool adaptation_active() const { return active_; }

  long long iterations() const { return iter_; }
  long long regenerations() const { return regenerations_; }
  long long rebuilds() const { return rebuilds_; }
  int adaptations() const { return adaptations_; }
  long long independence_accepts() const { return k2_accepts_; }

 private:
  void rebuild(const DesignSet& design, const Hyperparameters& hyper);
  void refresh_log_c();
  void adapt();
  double exact_u(const Vector& theta);

  std::shared_ptr<const TargetModel> target_;
  AdaptiveConfig cfg_;
  std::shared_ptr<const Emulator> emulator_;
  std::unique_ptr<IndependenceProposal> proposal_;
  Sampler sampler_;
  Rng rng_;
  bool active_;

  // Current tour: visited states and their exact potentials.
  std::vector<Vector> tour_theta_;
  std::vector<double> tour_u_;
  std::vector<double> tour_lw_;  // log pi - log q under the current proposal

  std::vector<AdaptEvent> events_;
  long long iter_ = 0, regenerations_ = 0, rebuilds_ = 0, k2_accepts_ = 0;
  int adaptations_ = 0;
};

}  // namespace gpemc
