#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mfrpinp/eval/config.hpp"
#include "mfrpinp/learn/loop.hpp"

namespace mfrpinp::eval {

sim::Dataset simulate_dataset(const RunConfig& c);

/// Filter labels come from `labels` when given, else from running the filter.
learn::Scenario scenario_for(const RunConfig& c, const std::vector<sim::SensorFrame>& sensors,
                             const std::optional<std::vector<physics::RobotState>>& labels);

/// Runs the online loop and writes predictions.csv, timing.csv, losses.csv,
/// checkpoints/, config.txt and manifest.json under `dir`.
learn::RunResult run_experiment(const RunConfig& c, const learn::Scenario& s,
                                const std::filesystem::path& dir,
                                const std::map<std::string, std::string>& inputs,
                                const std::vector<std::string>& command);

/// Wall-clock milliseconds of `iterations` infer_step calls with full
/// context windows cut from the scenario.
std::vector<double> infer_latencies(const np::MfrPinpModel& model, const learn::Scenario& s,
                                    const physics::KinematicParams& p, std::size_t iterations);

/// Split-conformal coverage trials on exchangeable heavy-tailed residuals:
/// each trial calibrates on n_cal scores and reports coverage on n_test.
std::vector<double> coverage_trials(double alpha, std::size_t trials, std::size_t n_cal,
                                    std::size_t n_test, std::uint64_t seed);

}  // namespace mfrpinp::eval
