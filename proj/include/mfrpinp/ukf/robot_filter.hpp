#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mfrpinp/physics/kinematics.hpp"
#include "mfrpinp/sim/world.hpp"
#include "mfrpinp/ukf/unscented.hpp"

namespace mfrpinp::ukf {

using physics::KinematicParams;
using physics::RobotState;
using physics::StateVector;
using physics::WheelCmd;

/// Six-state robot filter settings. State order follows RobotState.
struct UkfConfig {
  UtParams ut;
  /// Diagonal process-noise intensity; the per-step Q is this times dk.
  /// The velocity terms are large because the g2 prior has no drag.
  StateVector process_noise{1e-4, 1e-4, 1e-4, 0.1, 0.1, 0.1};
  // Wheel odometry is expressed in the body frame as (u_b, v_b, omega).
  double wheel_speed_sigma = 1.2e-3;   // m/s
  double wheel_lateral_sigma = 0.05;   // m/s, no-side-slip pseudo-measurement
  double wheel_yaw_sigma = 8.3e-3;     // rad/s
  double imu_yaw_sigma = 0.01;         // rad/s
  StateVector hifi_sigma{0.01, 0.01, 5e-3, 0.02, 0.02, 0.02};
  /// Initial standard deviation when the first frame carries no hi-fi fix.
  StateVector initial_sigma{0.1, 0.1, 0.1, 0.1, 0.1, 0.1};
  bool use_wheel = true;
  bool use_imu = true;
  bool use_hifi = true;

  /// R blocks taken from the simulator's sensor noise. Wheel sigmas follow
  /// from propagating encoder noise through the differential-drive model.
  static UkfConfig from_noise(const sim::SensorNoiseSpec& noise, const KinematicParams& p);
  void validate() const;
};

Vec to_vec(const RobotState& s);
RobotState to_state(const Vec& v);

/// Propagates with g2_step over dk and adds process_noise * dk.
GaussianBelief predict(const GaussianBelief& b, WheelCmd cmd, double dk,
                       const KinematicParams& p, const UkfConfig& c);
GaussianBelief update_wheel_odometry(const GaussianBelief& b, WheelCmd encoder,
                                     const KinematicParams& p, const UkfConfig& c);
GaussianBelief update_imu(const GaussianBelief& b, double yaw_rate, const UkfConfig& c);
GaussianBelief update_hifi(const GaussianBelief& b, const RobotState& z, const UkfConfig& c);

struct FusionResult {
  std::vector<double> t;
  std::vector<RobotState> states;  // posterior means, one per sensor frame
  std::vector<GaussianBelief> beliefs;
};

/// Per frame: predict over dk with the encoder rates, update with wheel
/// odometry and IMU, then with the hi-fi fix when present.
FusionResult run_fusion(const std::vector<sim::SensorFrame>& frames, const KinematicParams& p,
                        const UkfConfig& c);

inline constexpr const char* kFusedHeader = "t,x,y,th,vx,vy,w";
void write_fused(const FusionResult& r, std::ostream& out);
void write_fused(const FusionResult& r, const std::string& path);
/// Reads t and the state columns back; covariance is not stored.
FusionResult read_fused(std::istream& in);
FusionResult read_fused(const std::string& path);

}  // namespace mfrpinp::ukf
