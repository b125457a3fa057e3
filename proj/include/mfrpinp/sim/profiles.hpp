#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfrpinp/physics/kinematics.hpp"

namespace mfrpinp::sim {

using physics::KinematicParams;
using physics::WheelCmd;

struct Segment {
  double duration = 0.0;  // s
  WheelCmd cmd;
};

/// Piecewise-constant wheel-rate schedule.
struct TrajectoryProfile {
  std::string name;
  std::vector<Segment> schedule;

  double total_duration() const;
  /// Command active at time t; the last segment holds past the end.
  WheelCmd command_at(double t) const;
  /// Throws InvalidArgument on empty schedules or non-positive durations.
  void validate() const;
};

TrajectoryProfile straight_profile(double duration = 20.0, double rate = 10.0);
TrajectoryProfile arc_profile(double duration = 20.0, double right = 11.0, double left = 9.0);
/// Alternating left and right loops of (base +- delta). Each loop lasts one
/// full g1 revolution, so the schedule closes on itself under g1.
TrajectoryProfile figure_eight_profile(const KinematicParams& p, int cycles = 4, double base = 10.0,
                                       double delta = 2.0);
/// Seeded piecewise-constant commands held for 1-3 s, clamped to the actuator limit.
TrajectoryProfile random_teleop_profile(const KinematicParams& p, double duration,
                                        std::uint64_t seed);

/// straight, arc, figure-eight and random-teleop with default settings.
std::vector<TrajectoryProfile> builtin_profiles(const KinematicParams& p = {},
                                                std::uint64_t seed = 1);

/// Looks a profile up by name. `duration` applies to straight, arc and
/// random-teleop; `cycles` to figure-eight.
TrajectoryProfile profile_by_name(const std::string& name, const KinematicParams& p,
                                  double duration, int cycles, std::uint64_t seed);

}  // namespace mfrpinp::sim
