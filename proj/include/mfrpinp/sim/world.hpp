#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mfrpinp/physics/kinematics.hpp"
#include "mfrpinp/sim/profiles.hpp"

namespace mfrpinp::sim {

using physics::RobotState;
using physics::StateVector;

struct SensorNoiseSpec {
  double encoder = 0.05;        // rad/s
  double imu_yaw_rate = 0.01;   // rad/s
  double imu_bias_walk = 1e-3;  // rad/s per sqrt(s)
  double hifi_position = 0.01;  // m
  double hifi_heading = 5e-3;   // rad
  double hifi_velocity = 0.02;  // m/s, inertial vx and vy
  double hifi_yaw_rate = 0.02;  // rad/s

  static SensorNoiseSpec zero() { return {0, 0, 0, 0, 0, 0, 0}; }
  void validate() const;
};

enum class DisturbanceKind { none, ornstein_uhlenbeck };

/// Unmodeled dynamics added to the truth integrator. Components are ordered
/// (x, y, theta, u_b, v_b, omega) and act on the time derivatives.
struct DisturbanceSpec {
  DisturbanceKind kind = DisturbanceKind::ornstein_uhlenbeck;
  StateVector rate{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};       // 1/s
  StateVector sigma{0.02, 0.02, 0.02, 0.5, 0.5, 0.5};  // per sqrt(s)
  // Linear damping of the body velocities. The Newton-Euler prior has none,
  // so without it the simulated robot would accelerate without bound.
  double longitudinal_damping = 45.8;  // 1/s
  double lateral_damping = 20.0;       // 1/s
  double yaw_damping = 12.0;           // 1/s

  /// No OU term and no damping: the truth is the bare g2 rollout.
  static DisturbanceSpec none();
  bool is_none() const;
  void validate() const;
};

struct RateSpec {
  double low_hz = 50.0;
  double high_hz = 10.0;
  double jitter = 0.2;  // fraction of the nominal period, uniform +-

  void validate() const;
};

struct SimSettings {
  DisturbanceSpec disturbance;
  SensorNoiseSpec noise;
  RateSpec rates;
  RobotState initial;
};

/// One low-fidelity tick. `encoder` holds the wheel rates measured over the
/// interval (t - dk, t].
struct SensorFrame {
  double t = 0.0;
  double dk = 0.0;
  physics::WheelCmd encoder;
  double imu_yaw_rate = 0.0;
  std::optional<RobotState> hifi;  // present on high-fidelity ticks only
};

struct GroundTruthFrame {
  double t = 0.0;
  RobotState state;
  double u_b = 0.0, v_b = 0.0;
  StateVector disturbance{};  // OU values applied over the preceding interval
};

struct Dataset {
  std::vector<SensorFrame> sensors;
  std::vector<GroundTruthFrame> truth;

  std::size_t size() const { return sensors.size(); }
};

/// Exactly discretised Ornstein-Uhlenbeck process dx = -r x dt + s dW.
class OuProcess {
 public:
  OuProcess(double rate, double sigma, double x0 = 0.0) : rate_(rate), sigma_(sigma), x_(x0) {}
  /// Advances by dt using one standard-normal draw.
  double step(double dt, double standard_normal);
  double value() const { return x_; }
  /// s / sqrt(2r); infinite when r = 0.
  double stationary_std() const;

 private:
  double rate_, sigma_, x_;
};

/// Integrates the truth and samples every sensor. Fully determined by `seed`.
Dataset simulate(const TrajectoryProfile& profile, const KinematicParams& params,
                 const SimSettings& settings, std::uint64_t seed);

/// Chains g1_step over the encoder readings. Element 0 is `initial`.
std::vector<RobotState> dead_reckon(const std::vector<SensorFrame>& frames,
                                    const KinematicParams& params, const RobotState& initial);

inline constexpr const char* kDatasetHeader =
    "t,dk,enc_wr,enc_wl,imu_yawrate,hifi_flag,hifi_x,hifi_y,hifi_th,hifi_vx,hifi_vy,hifi_w,"
    "true_x,true_y,true_th,true_vx,true_vy,true_w";

void record(const Dataset& d, std::ostream& out);
void record(const Dataset& d, const std::string& path);
/// Parses a recorded dataset. Truth body velocities are recovered by rotation;
/// disturbance values are not stored and load as zero.
Dataset load(std::istream& in);
Dataset load(const std::string& path);

}  // namespace mfrpinp::sim
