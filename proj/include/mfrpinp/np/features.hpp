#pragma once

#include <array>
#include <vector>

#include "mfrpinp/ad/tensor.hpp"
#include "mfrpinp/physics/kinematics.hpp"

namespace mfrpinp::np {

using physics::BodyForces;
using physics::RobotState;
using physics::StateVector;
using physics::WheelCmd;

/// One low-fidelity context pair: wheel rates and the dead-reckoned state.
struct LowElement {
  WheelCmd cmd;
  RobotState state;
};

/// One residual context pair: wheel rates, chassis forces and the low-fidelity
/// decoder mean recorded for that transition.
struct ResElement {
  WheelCmd cmd;
  BodyForces forces;
  RobotState state;
};

// Fixed input normalisation. Network inputs are O(1) under these scales for
// the default platform and speeds.
inline constexpr std::size_t kStateFeatures = 7;  // x, y, sin th, cos th, vx, vy, w
inline constexpr std::size_t kLowFeatures = 2 + kStateFeatures;
inline constexpr std::size_t kResFeatures = 5 + kStateFeatures;
inline constexpr std::size_t kStepFeatures = 1;
inline constexpr std::size_t kResidualFeatures = 6;

inline constexpr double kWheelScale = 10.0;        // rad/s
inline constexpr double kPositionScale = 5.0;      // m
inline constexpr double kVelocityScale = 0.5;      // m/s and rad/s
inline constexpr double kNominalStep = 0.02;       // s
inline constexpr double kStepSpread = 0.004;       // s
inline constexpr std::array<double, 3> kForceScale{150.0, 5.0, 20.0};  // N, N, N m
inline constexpr StateVector kResidualScale{2.0, 2.0, 1.0, 0.5, 0.5, 0.5};

void append_state(std::vector<double>& out, const RobotState& s);
std::vector<double> low_features(const LowElement& e);
std::vector<double> res_features(const ResElement& e);
double step_feature(double dk);
std::vector<double> residual_features(const StateVector& r);

/// Stacks per-task element features into [tasks, elements, F]. Every task
/// must hold the same number of elements.
ad::Tensor stack_low(const std::vector<std::vector<LowElement>>& tasks);
ad::Tensor stack_res(const std::vector<std::vector<ResElement>>& tasks);

}  // namespace mfrpinp::np
