#include "mfrpinp/ukf/robot_filter.hpp"

#include <cmath>
#include <fstream>

#include "mfrpinp/error.hpp"
#include "mfrpinp/io/csv.hpp"

namespace mfrpinp::ukf {
namespace {

const AngleDims kStateAngles{2};

Mat diag_sq(std::initializer_list<double> sigmas) {
  Vec d(static_cast<Eigen::Index>(sigmas.size()));
  Eigen::Index i = 0;
  for (double s : sigmas) d[i++] = s * s;
  return d.asDiagonal();
}

Mat diag_sq(const StateVector& sigmas) {
  Vec d(6);
  for (int i = 0; i < 6; ++i) d[i] = sigmas[i] * sigmas[i];
  return d.asDiagonal();
}

}  // namespace

UkfConfig UkfConfig::from_noise(const sim::SensorNoiseSpec& n, const KinematicParams& p) {
  UkfConfig c;
  // each body rate mixes two independent wheel readings
  const double pair = std::sqrt(2.0) * n.encoder;
  c.wheel_speed_sigma = p.wheel_radius / 2.0 * pair;
  c.wheel_yaw_sigma = p.wheel_radius / p.track * pair;
  c.imu_yaw_sigma = n.imu_yaw_rate;
  c.hifi_sigma = {n.hifi_position, n.hifi_position, n.hifi_heading,
                  n.hifi_velocity, n.hifi_velocity, n.hifi_yaw_rate};
  return c;
}

void UkfConfig::validate() const {
  ut.validate();
  for (int i = 0; i < 6; ++i) {
    if (!(process_noise[i] > 0)) throw InvalidArgument("process noise must be positive");
    if (!(hifi_sigma[i] > 0)) throw InvalidArgument("hi-fi measurement sigma must be positive");
    if (!(initial_sigma[i] >= 0)) throw InvalidArgument("initial sigma must be >= 0");
  }
  if (!(wheel_speed_sigma > 0) || !(wheel_lateral_sigma > 0) || !(wheel_yaw_sigma > 0) ||
      !(imu_yaw_sigma > 0)) {
    throw InvalidArgument("measurement sigmas must be positive");
  }
}

Vec to_vec(const RobotState& s) {
  Vec v(6);
  v << s.x, s.y, s.theta, s.vx, s.vy, s.omega;
  return v;
}

RobotState to_state(const Vec& v) { return {v[0], v[1], v[2], v[3], v[4], v[5]}; }

GaussianBelief predict(const GaussianBelief& b, WheelCmd cmd, double dk,
                       const KinematicParams& p, const UkfConfig& c) {
  if (!(dk > 0)) throw InvalidArgument("predict needs a positive time step");
  Vec q(6);
  for (int i = 0; i < 6; ++i) q[i] = c.process_noise[i] * dk;
  const ProcessFn f = [&](const Vec& x) {
    return to_vec(physics::g2_step(to_state(x), cmd, p, dk));
  };
  return unscented_predict(b, f, q.asDiagonal(), c.ut, kStateAngles);
}

GaussianBelief update_wheel_odometry(const GaussianBelief& b, WheelCmd e,
                                     const KinematicParams& p, const UkfConfig& c) {
  Vec z(3);
  z << p.wheel_radius / 2.0 * (e.right + e.left), 0.0,
      p.wheel_radius / p.track * (e.right - e.left);
  const MeasurementFn h = [](const Vec& x) {
    const double cs = std::cos(x[2]), sn = std::sin(x[2]);
    Vec out(3);
    out << cs * x[3] + sn * x[4], -sn * x[3] + cs * x[4], x[5];
    return out;
  };
  return unscented_update(b, z, h,
                          diag_sq({c.wheel_speed_sigma, c.wheel_lateral_sigma, c.wheel_yaw_sigma}),
                          c.ut, kStateAngles, {});
}

GaussianBelief update_imu(const GaussianBelief& b, double yaw_rate, const UkfConfig& c) {
  Vec z(1);
  z << yaw_rate;
  const MeasurementFn h = [](const Vec& x) {
    Vec out(1);
    out << x[5];
    return out;
  };
  return unscented_update(b, z, h, diag_sq({c.imu_yaw_sigma}), c.ut, kStateAngles, {});
}

GaussianBelief update_hifi(const GaussianBelief& b, const RobotState& z, const UkfConfig& c) {
  const MeasurementFn h = [](const Vec& x) { return x; };
  return unscented_update(b, to_vec(z), h, diag_sq(c.hifi_sigma), c.ut, kStateAngles,
                          kStateAngles);
}

FusionResult run_fusion(const std::vector<sim::SensorFrame>& frames, const KinematicParams& p,
                        const UkfConfig& c) {
  c.validate();
  FusionResult out;
  if (frames.empty()) return out;
  out.t.reserve(frames.size());
  out.states.reserve(frames.size());
  out.beliefs.reserve(frames.size());

  GaussianBelief b;
  const auto& first = frames.front();
  if (first.hifi && c.use_hifi) {
    b.mean = to_vec(*first.hifi);
    b.covariance = diag_sq(c.hifi_sigma);
  } else {
    b.mean = Vec::Zero(6);
    b.covariance = diag_sq(c.initial_sigma);
  }
  auto emit = [&](double t) {
    out.t.push_back(t);
    out.states.push_back(to_state(b.mean));
    out.beliefs.push_back(b);
  };
  emit(first.t);
  for (std::size_t k = 1; k < frames.size(); ++k) {
    const auto& f = frames[k];
    b = predict(b, f.encoder, f.dk, p, c);
    if (c.use_wheel) b = update_wheel_odometry(b, f.encoder, p, c);
    if (c.use_imu) b = update_imu(b, f.imu_yaw_rate, c);
    if (c.use_hifi && f.hifi) b = update_hifi(b, *f.hifi, c);
    emit(f.t);
  }
  return out;
}

void write_fused(const FusionResult& r, std::ostream& out) {
  out << kFusedHeader << '\n';
  for (std::size_t k = 0; k < r.states.size(); ++k) {
    std::vector<std::string> row{io::format_double(r.t[k])};
    for (double v : r.states[k].to_array()) row.push_back(io::format_double(v));
    io::write_row(out, row);
  }
}

void write_fused(const FusionResult& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  write_fused(r, f);
}

FusionResult read_fused(std::istream& in) {
  io::CsvReader r(in);
  const char* names[] = {"t", "x", "y", "th", "vx", "vy", "w"};
  std::size_t col[7];
  for (int i = 0; i < 7; ++i) col[i] = r.column(names[i]);
  FusionResult out;
  while (r.next()) {
    out.t.push_back(r.number(col[0]));
    StateVector s;
    for (int i = 0; i < 6; ++i) s[i] = r.number(col[i + 1]);
    out.states.push_back(RobotState::from_array(s));
  }
  return out;
}

FusionResult read_fused(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open '" + path + "'");
  return read_fused(f);
}

}  // namespace mfrpinp::ukf
