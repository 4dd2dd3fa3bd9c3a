#pragma once

#include "gpemc/gp.hpp"
#include "gpemc/mle.hpp"
#include "gpemc/rng.hpp"
#include "gpemc/targets.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace gpemc {

// ---------------------------------------------------------------- proposal

/// Gaussian mixture q(theta) = sum_i w_i N(theta; center_i, precision_i^{-1}).
class IndependenceProposal {
 public:
  /// log_weights need not be normalized.
  IndependenceProposal(Matrix centers, std::vector<Matrix> precisions, const Vector& log_weights);

  /// Centers at the design points, weights exp(-U), precisions
  /// eFI(point) + prior_precision + lambda I with lambda = reg * tr(eFI) / D.
  /// eFI comes from the design's per-datum gradients (zero when absent).
  static IndependenceProposal from_design(const DesignSet& design, const Matrix& prior_precision, double reg = 1e-6);

  Index size() const { return centers_.rows(); }
  Index dim() const { return centers_.cols(); }
  const Matrix& centers() const { return centers_; }
  const std::vector<Matrix>& precisions() const { return precisions_; }
  /// Normalized: logsumexp(log_weights()) == 0.
  const Vector& log_weights() const { return log_weights_; }

  double log_density(const Vector& theta) const;
  Vector sample(Rng& rng) const;

  /// log c of the regeneration construction.
  double log_c() const { return log_c_; }
  void set_log_c(double v) { log_c_ = v; }

 private:
  Matrix centers_;
  std::vector<Matrix> precisions_;
  std::vector<Matrix> chol_upper_;  // U_i with precision_i = U_i^T U_i
  Vector log_weights_, log_norm_;
  std::vector<double> cumulative_;
  double log_c_ = 0.0;
};

double log_sum_exp(const Vector& v);

// ---------------------------------------------------------------- regeneration

/// Log of the retrospective regeneration probability for an accepted
/// independence move theta_t -> theta_next, with w = pi / q:
///   log r = min(0, log c - log w_t) + min(0, log w_next - log c) - min(0, log w_next - log w_t).
/// Returns -inf (r = 0) if any input is non-finite.
double log_regen_prob(double log_w_t, double log_w_next, double log_c);
inline double regen_prob(double log_w_t, double log_w_next, double log_c) {
  return std::exp(log_regen_prob(log_w_t, log_w_next, log_c));
}

/// Transition density pieces of the split kernel, in logs. Exposed for tests.
struct SplitKernelLogs {
  double log_T, log_S, log_Q;
};
SplitKernelLogs split_kernel_logs(double log_q_next, double log_w_t, double log_w_next, double log_c);

struct QDraw {
  Vector theta;
  double potential = 0.0;  // exact U(theta)
  int tries = 0;
};
/// Rejection sampler for Q: theta ~ q accepted with min(1, pi / (c q)).
/// `potential` returns exact U. Throws RejectionBudgetExhausted after max_tries.
QDraw sample_Q(Rng& rng, const std::function<double(const Vector&)>& potential, const IndependenceProposal& q,
               int max_tries);

// ---------------------------------------------------------------- MICE

/// Rows of `candidates` kept by a greedy pass: a row survives iff its
/// distance to every kept row and every row of `existing` exceeds radius.
std::vector<Index> maxmin_filter(const Matrix& candidates, double radius, const Matrix& existing = Matrix());

enum class KeepRule { recent, spread };

struct MiceConfig {
  double nugget = 1e-8;
  double candidate_nugget = 1e-4;
  Index init_keep = 5;
  double maxmin_radius = 0.05;
  /// Stop when holdout MSPE < mspe_rel_threshold * var(holdout potentials).
  double mspe_rel_threshold = 1e-2;
  Index max_size = 40;
  Index max_candidates = 200;
  KeepRule keep_rule = KeepRule::recent;
  bool rerun_mle = true;
  void validate() const;
};

struct MiceChoice {
  Index index = -1;
  double value = 0.0;
};

/// Criterion of every candidate: numerator is the emulator's predictive
/// correlation at the candidate; denominator the leave-one-out kriging
/// variance of the candidate given the other candidates (values only,
/// nugget candidate_nugget, emulator hyperparameters). Non-positive
/// denominators give -inf.
Vector mice_criteria(const Emulator& em, const Matrix& candidates, const MiceConfig& cfg);
/// Argmax of mice_criteria, lowest index among ties. Throws AllDegenerate.
MiceChoice mice_select(const Emulator& em, const Matrix& candidates, const MiceConfig& cfg);

/// A candidate design point with whatever exact information is already known.
struct Candidate {
  Vector theta;
  double potential = 0.0;
  std::optional<Vector> gradient;
  std::optional<Vector> pd_values;
  std::optional<Matrix> pd_gradients;  // D x N
};

/// Points with exact potentials used to score an emulator.
struct Holdout {
  Matrix points;
  Vector potentials;
  Index size() const { return points.rows(); }
};
double holdout_mspe(const Emulator& em, const Holdout& h);
/// mspe_rel_threshold * sample variance of the holdout potentials.
double mspe_threshold(const Holdout& h, double rel);

struct MiceResult {
  DesignSet design;
  Hyperparameters hyper;
  bool changed = false;
  /// Indices into the candidate list that were added, in order.
  std::vector<Index> added;
  int target_evaluations = 0;
  double holdout_mspe = std::numeric_limits<double>::quiet_NaN();
  std::string warning;
};

/// Design refresh: keep init_keep points of `design`, pool the rest with
/// `candidates`, filter by max-min distance, then add MICE winners until the
/// holdout MSPE threshold or max_size. Only chosen points lacking derivative
/// data are evaluated on `target`. Returns the input unchanged if
/// design.size() >= max_size, the holdout threshold is already met, or no
/// candidate is new.
MiceResult mice_refine(const DesignSet& design, const Hyperparameters& hyper, const std::vector<Candidate>& candidates,
                       const Holdout& holdout, const TargetModel& target, const MiceConfig& cfg,
                       const MleOptions& mle = {});

}  // namespace gpemc
