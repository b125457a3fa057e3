#include "mfrpinp/physics/kinematics.hpp"

#include <algorithm>

#include "mfrpinp/error.hpp"

namespace mfrpinp::physics {
namespace {

void require_step(double dk) {
  if (!(dk > 0) || !std::isfinite(dk)) {
    throw InvalidArgument("time step must be positive, got " + std::to_string(dk));
  }
}

}  // namespace

bool RobotState::finite() const {
  for (double v : to_array())
    if (!std::isfinite(v)) return false;
  return true;
}

void KinematicParams::validate() const {
  if (!(mass > 0) || !(wheel_radius > 0) || !(track > 0) || !(inertia > 0) ||
      !(traction > 0) || !(lateral > 0) || !(actuator_limit > 0)) {
    throw InvalidArgument("kinematic parameters must all be strictly positive");
  }
}

WheelCmd clamp(WheelCmd cmd, const KinematicParams& p) {
  return {std::clamp(cmd.right, -p.actuator_limit, p.actuator_limit),
          std::clamp(cmd.left, -p.actuator_limit, p.actuator_limit)};
}

PoseRate g1_derivative(const RobotState& s, WheelCmd cmd, const KinematicParams& p) {
  const double half = p.wheel_radius / 2.0;
  const double sum = cmd.right + cmd.left;
  return {half * std::cos(s.theta) * sum, half * std::sin(s.theta) * sum,
          p.wheel_radius / p.track * (cmd.right - cmd.left)};
}

RobotState g1_step(const RobotState& s, WheelCmd cmd, const KinematicParams& p, double dk) {
  require_step(dk);
  const PoseRate d = g1_derivative(s, cmd, p);
  return {s.x + dk * d.xdot,      s.y + dk * d.ydot, wrap_angle(s.theta + dk * d.thetadot),
          d.xdot,                 d.ydot,            d.thetadot};
}

BodyForces body_forces(double u, double v, WheelCmd cmd, const KinematicParams& p) {
  return {p.traction / 2.0 * (cmd.right + cmd.left), -p.lateral * v,
          p.track * p.traction * (cmd.right - cmd.left), u, v};
}

DynamicRate g2_derivative(const DynamicState& s, WheelCmd cmd, const KinematicParams& p) {
  const BodyForces f = body_forces(s.u, s.v, cmd, p);
  const double c = std::cos(s.theta), sn = std::sin(s.theta);
  return {(f.fx - p.mass * s.v * s.omega) / p.mass,
          (f.fy - p.mass * s.u * s.omega) / p.mass,
          f.mz / p.inertia,
          c * s.u - sn * s.v,
          sn * s.u + c * s.v,
          s.omega};
}

DynamicState g2_step(const DynamicState& s, WheelCmd cmd, const KinematicParams& p, double dk) {
  require_step(dk);
  return rk4_step(s, dk, [&](const DynamicState& q) { return g2_derivative(q, cmd, p); });
}

DynamicState to_dynamic(const RobotState& s) {
  const double c = std::cos(s.theta), sn = std::sin(s.theta);
  return {s.x, s.y, s.theta, c * s.vx + sn * s.vy, -sn * s.vx + c * s.vy, s.omega};
}

RobotState to_robot(const DynamicState& s) {
  const double c = std::cos(s.theta), sn = std::sin(s.theta);
  return {s.x, s.y, s.theta, c * s.u - sn * s.v, sn * s.u + c * s.v, s.omega};
}

RobotState g2_step(const RobotState& s, WheelCmd cmd, const KinematicParams& p, double dk) {
  return to_robot(g2_step(to_dynamic(s), cmd, p, dk));
}

}  // namespace mfrpinp::physics
