#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mfrpinp/learn/loop.hpp"
#include "mfrpinp/sim/profiles.hpp"
#include "mfrpinp/sim/world.hpp"
#include "mfrpinp/ukf/robot_filter.hpp"

namespace mfrpinp::eval {

inline constexpr const char* kVersion = "0.1.0";

/// Every tunable of a run. Text form is one `section.key = value` per line;
/// `#` starts a comment, lists are comma separated, booleans are true/false.
/// Keys not given keep their defaults; unknown keys are a ConfigError.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string scenario = "figure-eight";
  std::string output = "run";
  double duration = 60.0;  // straight, arc and random-teleop
  int cycles = 4;          // figure-eight

  physics::KinematicParams physics;
  sim::SimSettings sim;
  // Filter measurement noise always follows sim.noise; these are the rest.
  ukf::UtParams ut;
  physics::StateVector process_noise = ukf::UkfConfig{}.process_noise;
  physics::StateVector initial_sigma = ukf::UkfConfig{}.initial_sigma;
  bool use_wheel = true, use_imu = true, use_hifi = true;
  learn::LoopConfig loop;

  /// Applies one key. Throws ConfigError on unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  /// Applies `key=value` lines from a stream; errors name the line.
  void apply(std::istream& in);
  void apply_file(const std::filesystem::path& path);

  /// All keys in canonical order, every value written out.
  std::string to_text() const;
  /// SHA-256 of to_text().
  std::string hash() const;
  void validate() const;

  sim::TrajectoryProfile profile() const;
  ukf::UkfConfig filter() const;
  /// `loop` with the warmup simulator and filter taken from this config.
  learn::LoopConfig loop_config() const;

  static std::vector<std::string> keys();
};

/// Writes config.txt and manifest.json into `dir`. `inputs` maps input
/// names to content hashes.
void write_manifest(const std::filesystem::path& dir, const RunConfig& config,
                    const std::map<std::string, std::string>& inputs,
                    const std::vector<std::string>& command);

}  // namespace mfrpinp::eval
