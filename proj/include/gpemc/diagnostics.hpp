#pragma once

#include "gpemc/core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gpemc {

struct EssResult {
  Vector ess;                  // one per column, clamped to [1, B]
  std::vector<bool> zero_variance;
  bool any_flag() const;
};

/// Geyer initial monotone sequence estimator per column of a B x D chain.
/// Throws TooFewPoints when B < 10.
EssResult ess(const Matrix& chain);

/// Autocovariance at lags 0..B-1 (biased, divided by B) via FFT.
Vector autocovariance(const Vector& x);

struct ErrorCurve {
  std::vector<double> times;
  std::vector<double> rem;  // |mean(t) - truth| / |truth|
  std::vector<double> rec;  // |cov(t) - truth|_F / |truth|_F
};

/// Cumulative relative errors of mean and covariance at each distinct
/// timestamp (the last row with that timestamp closes the group).
/// wall_times must be non-decreasing.
ErrorCurve error_curves(const Matrix& chain, const std::vector<double>& wall_times, const Vector& truth_mean,
                        const Matrix& truth_cov);

struct ChainSummary {
  std::string label;
  Index samples = 0;
  Vector ess_per_dim;
  double ess_min = 0.0, ess_med = 0.0, ess_max = 0.0;
  double acceptance = 0.0;
  double wall_seconds = 0.0;
  double seconds_per_iter = 0.0;
  double min_ess_per_sec = 0.0;
  std::optional<double> speedup;
  bool ess_flag = false;  // fewer than 10 samples or a constant coordinate
};

/// `accepted` may be empty. `baseline` supplies minESS/s for the speedup column.
ChainSummary summarize(const Matrix& chain, const std::vector<int>& accepted, double wall_seconds,
                       const ChainSummary* baseline = nullptr, std::string label = {});

/// Fixed-width table with columns AP, s/iter, ESS (min,med,max), minESS/s, spdup.
std::string format_table(const std::vector<ChainSummary>& rows);
std::string summary_csv_header();
std::string summary_csv_row(const ChainSummary& s);

}  // namespace gpemc
