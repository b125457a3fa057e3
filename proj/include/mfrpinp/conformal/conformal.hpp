#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <optional>
#include <vector>

#include "mfrpinp/np/model.hpp"

namespace mfrpinp::conformal {

using np::GaussianPrediction;
using physics::StateVector;

/// Smallest calibration set a fit accepts.
inline constexpr std::size_t kMinScores = 10;
/// Multiplier on the largest score when the conformal rank exceeds n.
inline constexpr double kInflation = 10.0;

/// |y - mu| / sigma per dimension. Headings must already be on mu's branch.
/// Throws InvalidArgument on a non-positive variance.
StateVector score(const StateVector& y, const GaussianPrediction& pred);

/// ceil((n + 1)(1 - alpha)), at least 1.
std::size_t conformal_rank(std::size_t n, double alpha);

struct ScalarQuantile {
  double q = 1.0;
  bool inflated = false;  // rank > n, max score times kInflation
};

/// Split-conformal quantile of one score list. Throws InvalidArgument when
/// fewer than kMinScores scores are given or alpha is outside [0, 1].
ScalarQuantile fit_scalar(std::vector<double> scores, double alpha);

struct QuantileVector {
  StateVector q{1, 1, 1, 1, 1, 1};
  std::array<bool, 6> inflated{};
  std::size_t count = 0;  // scores used; 0 for the unit default
  double fit_time = 0.0;

  static QuantileVector unit() { return {}; }
};

/// Sliding window of the most recent score vectors.
class CalibrationSet {
 public:
  CalibrationSet(std::size_t window, double alpha);

  void add(const StateVector& s);
  std::size_t size() const noexcept { return scores_.size(); }
  std::size_t window() const noexcept { return window_; }
  double alpha() const noexcept { return alpha_; }
  const std::deque<StateVector>& scores() const noexcept { return scores_; }

 private:
  std::size_t window_;
  double alpha_;
  std::deque<StateVector> scores_;
};

/// Per-dimension quantiles; nullopt while the set holds fewer than kMinScores.
std::optional<QuantileVector> fit_quantile(const CalibrationSet& cal, double fit_time = 0.0);

/// sigma_j <- sigma_j * q_j (variance scaled by q_j^2); mu untouched.
GaussianPrediction apply(const GaussianPrediction& pred, const QuantileVector& q);

/// Fraction of |y - mu| <= sigma per dimension, with sigma = sqrt(var).
StateVector coverage_eval(const std::vector<StateVector>& labels,
                          const std::vector<GaussianPrediction>& preds);

/// Score accumulation plus a refit every `refit_period` observations. The
/// fitted vector is replaced as a whole; a refused fit keeps the previous one.
class Calibrator {
 public:
  Calibrator(std::size_t window, double alpha, std::size_t refit_period);

  /// Adds one score vector; returns true when this call refitted.
  bool observe(const StateVector& s, double t);
  const QuantileVector& current() const noexcept { return current_; }
  const CalibrationSet& set() const noexcept { return set_; }

 private:
  CalibrationSet set_;
  std::size_t refit_period_;
  std::size_t seen_ = 0;
  QuantileVector current_;
};

}  // namespace mfrpinp::conformal
