#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mfrpinp/learn/loop.hpp"
#include "mfrpinp/physics/kinematics.hpp"

namespace mfrpinp::eval {

using physics::StateVector;

/// sqrt of the per-sample squared error summed over the six states, averaged
/// over samples. Heading errors are wrapped to (-pi, pi]. Throws ShapeError on
/// length mismatch and InvalidArgument on empty input.
double rmse(std::span<const StateVector> y, std::span<const StateVector> y_hat);

/// Mean over samples of the six-dimensional diagonal Gaussian NLL, heading
/// residuals wrapped. Shares its arithmetic with the training loss; throws
/// NumericError on a non-positive variance.
double nll(std::span<const StateVector> y, std::span<const StateVector> mu,
           std::span<const StateVector> var);

/// Fraction of samples with |y - mu| <= sigma, per dimension.
StateVector coverage(std::span<const StateVector> y, std::span<const StateVector> mu,
                     std::span<const StateVector> sigma);

/// Nearest-rank percentile, p in (0, 100].
double percentile(std::vector<double> values, double p);

struct Latency {
  double p50 = 0.0, p95 = 0.0, p99 = 0.0, max = 0.0;
};
Latency latency_summary(const std::vector<double>& ms);

struct MetricsReport {
  std::size_t samples = 0;  // rows scored
  std::size_t skipped = 0;  // leading rows outside the tail
  double rmse = 0.0;
  // NaN when the predictions carry no sigma columns.
  double nll = 0.0;      // calibrated sigma
  double nll_raw = 0.0;  // sigma before calibration
  StateVector coverage{};
  bool has_latency = false;
  Latency latency;
  std::string dataset_hash;
  std::string config_hash;

  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
};

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

/// Scores the last `tail` fraction of prediction rows against labels matched
/// by timestamp. Throws ParseError when a prediction time has no label.
MetricsReport evaluate(const learn::PredictionLog& predictions, std::span<const double> label_t,
                       std::span<const physics::RobotState> labels, double tail = 1.0);

struct Comparison {
  std::vector<std::string> metric;
  std::vector<double> a, b;
  double delta(std::size_t i) const { return b[i] - a[i]; }
};

/// Side-by-side metrics, delta = b - a. Throws InvalidArgument when the
/// reports were computed on different datasets.
Comparison compare(const MetricsReport& a, const MetricsReport& b);
void write_comparison_csv(const Comparison& c, std::ostream& out);
void write_comparison_text(const Comparison& c, std::ostream& out);

}  // namespace mfrpinp::eval
