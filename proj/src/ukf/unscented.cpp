#include "mfrpinp/ukf/unscented.hpp"

#include <cmath>

#include "mfrpinp/error.hpp"
#include "mfrpinp/physics/kinematics.hpp"

namespace mfrpinp::ukf {

using physics::wrap_angle;

void UtParams::validate() const {
  if (!(alpha > 0) || !(alpha <= 1)) throw InvalidArgument("UT alpha must lie in (0, 1]");
  if (!std::isfinite(beta) || !std::isfinite(kappa)) {
    throw InvalidArgument("UT beta and kappa must be finite");
  }
}

void symmetrize(Mat& p) { p = 0.5 * (p + p.transpose()).eval(); }

namespace {

bool try_sqrt(const Mat& p, Mat& out) {
  // LDL^T tolerates the semidefinite case (e.g. an all-zero covariance).
  Eigen::LDLT<Mat> ldlt(p);
  if (ldlt.info() != Eigen::Success) return false;
  Vec d = ldlt.vectorD();
  const double tol = 1e-12 * std::max(1.0, p.diagonal().cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i]) || d[i] < -tol) return false;
    d[i] = std::sqrt(std::max(d[i], 0.0));
  }
  const Mat l = ldlt.matrixL();
  out = ldlt.transpositionsP().transpose() * (l * d.asDiagonal());
  return true;
}

Vec residual(const Vec& a, const Vec& b, const AngleDims& angles) {
  Vec d = a - b;
  for (int i : angles) d[i] = wrap_angle(d[i]);
  return d;
}

}  // namespace

Mat matrix_sqrt(const Mat& p) {
  if (!p.allFinite()) throw NumericError("covariance contains non-finite entries");
  Mat s;
  if (try_sqrt(p, s)) return s;
  if (try_sqrt(p + 1e-9 * Mat::Identity(p.rows(), p.cols()), s)) return s;
  throw NumericError("covariance is not positive semidefinite");
}

SigmaSet sigma_points(const GaussianBelief& b, const UtParams& ut) {
  const auto n = b.mean.size();
  if (b.covariance.rows() != n || b.covariance.cols() != n) {
    throw ShapeError("covariance does not match the state dimension");
  }
  const double nd = static_cast<double>(n);
  const double lambda = ut.alpha * ut.alpha * (nd + ut.kappa) - nd;
  const double c = nd + lambda;
  const Mat s = matrix_sqrt(b.covariance) * std::sqrt(c);

  SigmaSet out;
  out.points.resize(n, 2 * n + 1);
  out.points.col(0) = b.mean;
  for (Eigen::Index i = 0; i < n; ++i) {
    out.points.col(1 + i) = b.mean + s.col(i);
    out.points.col(1 + n + i) = b.mean - s.col(i);
  }
  out.wm = Vec::Constant(2 * n + 1, 0.5 / c);
  out.wc = out.wm;
  out.wm[0] = lambda / c;
  out.wc[0] = lambda / c + (1.0 - ut.alpha * ut.alpha + ut.beta);
  return out;
}

Vec weighted_mean(const Mat& pts, const Vec& wm, const AngleDims& angles) {
  Vec m = pts * wm;
  for (int a : angles) {
    double s = 0.0, c = 0.0;
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
      s += wm[j] * std::sin(pts(a, j));
      c += wm[j] * std::cos(pts(a, j));
    }
    m[a] = wrap_angle(std::atan2(s, c));
  }
  return m;
}

GaussianBelief unscented_predict(const GaussianBelief& b, const ProcessFn& f, const Mat& q,
                                 const UtParams& ut, const AngleDims& state_angles) {
  const SigmaSet sp = sigma_points(b, ut);
  Mat prop(b.mean.size(), sp.points.cols());
  for (Eigen::Index j = 0; j < sp.points.cols(); ++j) prop.col(j) = f(sp.points.col(j));
  GaussianBelief out;
  out.mean = weighted_mean(prop, sp.wm, state_angles);
  out.covariance = q;
  for (Eigen::Index j = 0; j < prop.cols(); ++j) {
    const Vec d = residual(prop.col(j), out.mean, state_angles);
    out.covariance.noalias() += sp.wc[j] * d * d.transpose();
  }
  symmetrize(out.covariance);
  return out;
}

GaussianBelief unscented_update(const GaussianBelief& b, const Vec& z, const MeasurementFn& h,
                                const Mat& r, const UtParams& ut, const AngleDims& state_angles,
                                const AngleDims& meas_angles) {
  const SigmaSet sp = sigma_points(b, ut);
  const Eigen::Index m = z.size();
  Mat zs(m, sp.points.cols());
  for (Eigen::Index j = 0; j < sp.points.cols(); ++j) {
    Vec zj = h(sp.points.col(j));
    if (zj.size() != m) throw ShapeError("measurement model output does not match measurement");
    zs.col(j) = zj;
  }
  if (r.rows() != m || r.cols() != m) throw ShapeError("R block does not match measurement");
  const Vec zbar = weighted_mean(zs, sp.wm, meas_angles);

  Mat s = r;
  Mat c = Mat::Zero(b.mean.size(), m);
  for (Eigen::Index j = 0; j < sp.points.cols(); ++j) {
    const Vec dz = residual(zs.col(j), zbar, meas_angles);
    const Vec dx = residual(sp.points.col(j), b.mean, state_angles);
    s.noalias() += sp.wc[j] * dz * dz.transpose();
    c.noalias() += sp.wc[j] * dx * dz.transpose();
  }
  symmetrize(s);
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success) {
    s += 1e-9 * Mat::Identity(m, m);
    llt.compute(s);
    if (llt.info() != Eigen::Success) throw NumericError("innovation covariance is singular");
  }
  // K = C S^-1, solved without forming the inverse
  const Mat k = llt.solve(c.transpose()).transpose();
  GaussianBelief out;
  out.mean = b.mean + k * residual(z, zbar, meas_angles);
  for (int a : state_angles) out.mean[a] = wrap_angle(out.mean[a]);
  out.covariance = b.covariance - k * s * k.transpose();
  symmetrize(out.covariance);
  return out;
}

}  // namespace mfrpinp::ukf
