#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace mfrpinp::ukf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct GaussianBelief {
  Vec mean;
  Mat covariance;
};

/// Scaled unscented transform parameters.
struct UtParams {
  double alpha = 0.1;
  double beta = 2.0;
  double kappa = 0.0;

  void validate() const;
};

/// 2n+1 points stored as columns, with mean and covariance weights.
struct SigmaSet {
  Mat points;
  Vec wm, wc;
};

/// Indices of state or measurement components that are angles in (-pi, pi].
using AngleDims = std::vector<int>;

using ProcessFn = std::function<Vec(const Vec&)>;
using MeasurementFn = std::function<Vec(const Vec&)>;

/// Square root of a PSD matrix (S S^T = P). Adds 1e-9 I once if the
/// factorisation fails, then throws NumericError.
Mat matrix_sqrt(const Mat& p);

SigmaSet sigma_points(const GaussianBelief& b, const UtParams& ut);

/// Weighted mean of the columns, circular on `angles`.
Vec weighted_mean(const Mat& pts, const Vec& wm, const AngleDims& angles);

/// Propagates through `f` and adds `q` (already scaled to the step).
GaussianBelief unscented_predict(const GaussianBelief& b, const ProcessFn& f, const Mat& q,
                                 const UtParams& ut, const AngleDims& state_angles);

/// Standard UT measurement update. Innovations on `meas_angles` are wrapped;
/// a singular innovation covariance is jittered once before failing.
GaussianBelief unscented_update(const GaussianBelief& b, const Vec& z, const MeasurementFn& h,
                                const Mat& r, const UtParams& ut, const AngleDims& state_angles,
                                const AngleDims& meas_angles);

/// Symmetrises in place.
void symmetrize(Mat& p);

}  // namespace mfrpinp::ukf
