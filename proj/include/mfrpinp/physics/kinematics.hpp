#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace mfrpinp::physics {

inline constexpr std::size_t kStateDim = 6;
using StateVector = std::array<double, kStateDim>;

/// Planar pose and inertial-frame rates: (x, y, theta, xdot, ydot, thetadot).
struct RobotState {
  double x = 0.0;      // m
  double y = 0.0;      // m
  double theta = 0.0;  // rad, kept in (-pi, pi]
  double vx = 0.0;     // m/s
  double vy = 0.0;     // m/s
  double omega = 0.0;  // rad/s

  StateVector to_array() const { return {x, y, theta, vx, vy, omega}; }
  static RobotState from_array(const StateVector& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5]};
  }
  bool finite() const;
  friend bool operator==(const RobotState&, const RobotState&) = default;
};

/// Wheel angular rates. `right` drives positive yaw.
struct WheelCmd {
  double right = 0.0;  // rad/s
  double left = 0.0;   // rad/s
  friend bool operator==(const WheelCmd&, const WheelCmd&) = default;
};

/// Platform constants; defaults are the measured values of the reference robot.
struct KinematicParams {
  double mass = 10.7;           // kg
  double wheel_radius = 0.034;  // m
  double track = 0.288;         // m, wheel-to-wheel
  double inertia = 4.35;        // kg m^2, yaw
  double traction = 15.0;       // longitudinal traction gain C_t
  double lateral = 11.5;        // lateral slip gain C_alpha
  double actuator_limit = 25.0; // rad/s

  void validate() const;
};

/// Forces acting on the chassis for a given command and body-frame velocity.
struct BodyForces {
  double fx = 0.0;  // N, longitudinal
  double fy = 0.0;  // N, lateral slip, always -C_alpha * v
  double mz = 0.0;  // N m, yaw moment
  double u = 0.0;   // m/s, body longitudinal velocity used
  double v = 0.0;   // m/s, body lateral velocity used
};

/// State carried by the Newton-Euler integrator: pose plus body-frame velocities.
struct DynamicState {
  double x = 0.0, y = 0.0, theta = 0.0;
  double u = 0.0;      // body longitudinal, m/s
  double v = 0.0;      // body lateral, m/s
  double omega = 0.0;  // yaw rate, rad/s
  friend bool operator==(const DynamicState&, const DynamicState&) = default;
};

struct PoseRate {
  double xdot = 0.0, ydot = 0.0, thetadot = 0.0;
};

/// Time derivative of a DynamicState.
struct DynamicRate {
  double udot = 0.0, vdot = 0.0, omegadot = 0.0;
  double xdot = 0.0, ydot = 0.0, thetadot = 0.0;
};

/// Wraps to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::remainder(a, two_pi);  // [-pi, pi]
  if (w <= -std::numbers::pi) w += two_pi;
  return w;
}

WheelCmd clamp(WheelCmd cmd, const KinematicParams& p);

// Differential-drive kinematics (low-fidelity prior).
PoseRate g1_derivative(const RobotState& s, WheelCmd cmd, const KinematicParams& p);
/// Explicit Euler step. Velocity fields of the result hold the derivative
/// evaluated at the start of the step.
RobotState g1_step(const RobotState& s, WheelCmd cmd, const KinematicParams& p, double dk);

// Planar Newton-Euler skid-steer dynamics (higher-fidelity prior).
BodyForces body_forces(double u, double v, WheelCmd cmd, const KinematicParams& p);
DynamicRate g2_derivative(const DynamicState& s, WheelCmd cmd, const KinematicParams& p);
/// Classical RK4 over one step; heading wrapped afterwards.
DynamicState g2_step(const DynamicState& s, WheelCmd cmd, const KinematicParams& p, double dk);
/// Same, seeded from a RobotState whose body velocities are recovered by rotation.
RobotState g2_step(const RobotState& s, WheelCmd cmd, const KinematicParams& p, double dk);

DynamicState to_dynamic(const RobotState& s);
RobotState to_robot(const DynamicState& s);

/// One RK4 step of an arbitrary right-hand side over DynamicState. Used by
/// g2_step and by the simulator, which adds unmodeled terms.
template <class Rhs>
DynamicState rk4_step(const DynamicState& s, double dk, Rhs&& rhs) {
  auto axpy = [](const DynamicState& a, const DynamicRate& k, double h) {
    return DynamicState{a.x + h * k.xdot,  a.y + h * k.ydot,  a.theta + h * k.thetadot,
                        a.u + h * k.udot,  a.v + h * k.vdot,  a.omega + h * k.omegadot};
  };
  const DynamicRate k1 = rhs(s);
  const DynamicRate k2 = rhs(axpy(s, k1, 0.5 * dk));
  const DynamicRate k3 = rhs(axpy(s, k2, 0.5 * dk));
  const DynamicRate k4 = rhs(axpy(s, k3, dk));
  const double w = dk / 6.0;
  DynamicState out{
      s.x + w * (k1.xdot + 2 * k2.xdot + 2 * k3.xdot + k4.xdot),
      s.y + w * (k1.ydot + 2 * k2.ydot + 2 * k3.ydot + k4.ydot),
      s.theta + w * (k1.thetadot + 2 * k2.thetadot + 2 * k3.thetadot + k4.thetadot),
      s.u + w * (k1.udot + 2 * k2.udot + 2 * k3.udot + k4.udot),
      s.v + w * (k1.vdot + 2 * k2.vdot + 2 * k3.vdot + k4.vdot),
      s.omega + w * (k1.omegadot + 2 * k2.omegadot + 2 * k3.omegadot + k4.omegadot)};
  out.theta = wrap_angle(out.theta);
  return out;
}

}  // namespace mfrpinp::physics
