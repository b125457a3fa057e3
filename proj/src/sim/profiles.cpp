#include "mfrpinp/sim/profiles.hpp"

#include <numbers>

#include "mfrpinp/error.hpp"
#include "mfrpinp/rng.hpp"

namespace mfrpinp::sim {

double TrajectoryProfile::total_duration() const {
  double t = 0.0;
  for (const auto& s : schedule) t += s.duration;
  return t;
}

WheelCmd TrajectoryProfile::command_at(double t) const {
  double end = 0.0;
  for (const auto& s : schedule) {
    end += s.duration;
    if (t < end) return s.cmd;
  }
  return schedule.empty() ? WheelCmd{} : schedule.back().cmd;
}

void TrajectoryProfile::validate() const {
  if (schedule.empty()) throw InvalidArgument("profile '" + name + "' has no segments");
  for (const auto& s : schedule) {
    if (!(s.duration > 0) || !std::isfinite(s.duration)) {
      throw InvalidArgument("profile '" + name + "' has a non-positive segment duration");
    }
  }
}

TrajectoryProfile straight_profile(double duration, double rate) {
  return {"straight", {{duration, {rate, rate}}}};
}

TrajectoryProfile arc_profile(double duration, double right, double left) {
  return {"arc", {{duration, {right, left}}}};
}

TrajectoryProfile figure_eight_profile(const KinematicParams& p, int cycles, double base,
                                       double delta) {
  if (cycles < 1) throw InvalidArgument("figure-eight needs at least one cycle");
  if (!(delta > 0)) throw InvalidArgument("figure-eight needs a positive wheel-rate difference");
  const double yaw_rate = p.wheel_radius / p.track * 2.0 * delta;
  const double loop = 2.0 * std::numbers::pi / yaw_rate;
  TrajectoryProfile prof{"figure-eight", {}};
  for (int c = 0; c < cycles; ++c) {
    prof.schedule.push_back({loop, {base + delta, base - delta}});
    prof.schedule.push_back({loop, {base - delta, base + delta}});
  }
  return prof;
}

TrajectoryProfile random_teleop_profile(const KinematicParams& p, double duration,
                                        std::uint64_t seed) {
  if (!(duration > 0)) throw InvalidArgument("random-teleop duration must be positive");
  Rng rng(seed);
  TrajectoryProfile prof{"random-teleop", {}};
  double t = 0.0;
  while (t < duration) {
    const double d = std::min(rng.uniform(1.0, 3.0), duration - t);
    const double fwd = rng.uniform(-4.0, 20.0);
    const double turn = rng.uniform(-6.0, 6.0);
    prof.schedule.push_back({d, physics::clamp({fwd + turn, fwd - turn}, p)});
    t += d;
  }
  return prof;
}

std::vector<TrajectoryProfile> builtin_profiles(const KinematicParams& p, std::uint64_t seed) {
  return {straight_profile(), arc_profile(), figure_eight_profile(p),
          random_teleop_profile(p, 60.0, seed)};
}

TrajectoryProfile profile_by_name(const std::string& name, const KinematicParams& p,
                                  double duration, int cycles, std::uint64_t seed) {
  if (name == "straight") return straight_profile(duration);
  if (name == "arc") return arc_profile(duration);
  if (name == "figure-eight") return figure_eight_profile(p, cycles);
  if (name == "random-teleop") return random_teleop_profile(p, duration, seed);
  throw InvalidArgument("unknown profile '" + name +
                        "' (expected straight, arc, figure-eight or random-teleop)");
}

}  // namespace mfrpinp::sim
