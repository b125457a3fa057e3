#include "mfrpinp/conformal/conformal.hpp"

#include <algorithm>
#include <cmath>

#include "mfrpinp/error.hpp"

namespace mfrpinp::conformal {

namespace {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
}

}  // namespace

StateVector score(const StateVector& y, const GaussianPrediction& pred) {
  StateVector s{};
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (!(pred.var[j] > 0.0)) throw InvalidArgument("score needs a positive variance");
    s[j] = std::abs(y[j] - pred.mu[j]) / std::sqrt(pred.var[j]);
  }
  return s;
}

std::size_t conformal_rank(std::size_t n, double alpha) {
  check_alpha(alpha);
  // the tolerance keeps products like 10 * 0.9 from rounding up a rank
  const double r = std::ceil(static_cast<double>(n + 1) * (1.0 - alpha) - 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(r));
}

ScalarQuantile fit_scalar(std::vector<double> scores, double alpha) {
  if (scores.size() < kMinScores)
    throw InvalidArgument("need at least " + std::to_string(kMinScores) + " scores");
  const std::size_t rank = conformal_rank(scores.size(), alpha);
  if (rank > scores.size()) {
    return {*std::max_element(scores.begin(), scores.end()) * kInflation, true};
  }
  std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(rank - 1),
                   scores.end());
  return {scores[rank - 1], false};
}

CalibrationSet::CalibrationSet(std::size_t window, double alpha) : window_(window), alpha_(alpha) {
  if (window < kMinScores) throw InvalidArgument("calibration window must hold at least 10 scores");
  check_alpha(alpha);
}

void CalibrationSet::add(const StateVector& s) {
  for (double v : s)
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("scores must be finite and >= 0");
  scores_.push_back(s);
  if (scores_.size() > window_) scores_.pop_front();
}

std::optional<QuantileVector> fit_quantile(const CalibrationSet& cal, double fit_time) {
  if (cal.size() < kMinScores) return std::nullopt;
  QuantileVector out;
  std::vector<double> column(cal.size());
  for (std::size_t j = 0; j < out.q.size(); ++j) {
    for (std::size_t i = 0; i < cal.size(); ++i) column[i] = cal.scores()[i][j];
    const ScalarQuantile s = fit_scalar(column, cal.alpha());
    out.q[j] = s.q;
    out.inflated[j] = s.inflated;
  }
  out.count = cal.size();
  out.fit_time = fit_time;
  return out;
}

GaussianPrediction apply(const GaussianPrediction& pred, const QuantileVector& q) {
  GaussianPrediction out = pred;
  for (std::size_t j = 0; j < out.var.size(); ++j) out.var[j] *= q.q[j] * q.q[j];
  return out;
}

StateVector coverage_eval(const std::vector<StateVector>& labels,
                          const std::vector<GaussianPrediction>& preds) {
  if (labels.size() != preds.size()) throw ShapeError("labels and predictions are not aligned");
  StateVector hits{};
  if (labels.empty()) return hits;
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = 0; j < hits.size(); ++j)
      if (std::abs(labels[i][j] - preds[i].mu[j]) <= std::sqrt(preds[i].var[j])) hits[j] += 1.0;
  for (double& h : hits) h /= static_cast<double>(labels.size());
  return hits;
}

Calibrator::Calibrator(std::size_t window, double alpha, std::size_t refit_period)
    : set_(window, alpha), refit_period_(refit_period) {
  if (refit_period == 0) throw InvalidArgument("refit period must be positive");
}

bool Calibrator::observe(const StateVector& s, double t) {
  set_.add(s);
  ++seen_;
  if (seen_ % refit_period_ != 0) return false;
  if (auto q = fit_quantile(set_, t)) {
    current_ = *q;
    return true;
  }
  return false;
}

}  // namespace mfrpinp::conformal
