#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mfrpinp/conformal/conformal.hpp"
#include "mfrpinp/learn/elbo.hpp"
#include "mfrpinp/sim/profiles.hpp"
#include "mfrpinp/sim/world.hpp"
#include "mfrpinp/ukf/robot_filter.hpp"

namespace mfrpinp::learn {

/// A sensor stream with its filter labels and dead-reckoned chain. Dead
/// reckoning starts from the first label.
struct Scenario {
  std::vector<sim::SensorFrame> sensors;
  std::vector<RobotState> labels;
  std::vector<RobotState> dead_reckoning;

  std::size_t size() const { return sensors.size(); }
};

Scenario make_scenario(const std::vector<sim::SensorFrame>& sensors, const KinematicParams& p,
                       const ukf::UkfConfig& filter);
/// Labels read from a file instead of running the filter.
Scenario make_scenario(const std::vector<sim::SensorFrame>& sensors,
                       std::vector<RobotState> labels, const KinematicParams& p);

struct LoopConfig {
  np::NpConfig model;
  TrainConfig train;
  double alpha = 0.1;
  std::size_t conformal_window = 500;
  std::size_t refit_period = 100;
  /// Frames of a seeded random-teleop rollout used to pre-fill the buffers.
  std::size_t warmup_frames = 1000;
  sim::SimSettings warmup_sim;
  ukf::UkfConfig warmup_filter;
  /// Iterations between a frame's arrival and its label becoming usable.
  std::size_t label_delay = 0;
  /// Capped at the number of frames minus one; 0 runs the whole stream.
  std::size_t iterations = 5000;
  /// Iterations between checkpoints; 0 writes only the final one.
  std::size_t checkpoint_period = 0;
  /// Learner on its own thread publishing parameter snapshots.
  bool concurrent = false;

  void validate() const;
};

struct PredictionRow {
  double t = 0.0;
  StateVector mu{};
  StateVector sigma{};      // calibrated
  StateVector sigma_raw{};  // before calibration
  StateVector q{};
  bool fallback = false;
  double latency_ms = 0.0;
};

struct RunResult {
  std::vector<PredictionRow> predictions;
  std::vector<RobotState> labels;          // label of each predicted frame
  std::vector<RobotState> dead_reckoning;  // dead-reckoned state of each predicted frame
  std::vector<LossRecord> losses;
  std::size_t skipped = 0;
  std::size_t syncs = 0;
  std::size_t high_pushes = 0;
  std::vector<std::string> errors;
  std::optional<MfrPinpModel> model;
};

/// The hybrid loop. Iteration i predicts frame i + 1 from frame i's state:
/// infer, log, update the context window and buffers, score arrived labels,
/// then train every `train_period` iterations and sync the frozen decoder
/// every `sync_period` training phases. Errors skip the iteration.
RunResult run_loop(const Scenario& scenario, const KinematicParams& p, const LoopConfig& config,
                   std::uint64_t seed,
                   const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

/// Seeded warmup transitions (low every frame, high every hifi_period frames).
void prefill(Buffers& buffers, const KinematicParams& p, const LoopConfig& config,
             std::uint64_t seed);

inline constexpr const char* kStateColumns[] = {"x", "y", "th", "vx", "vy", "w"};

std::string predictions_header();
void write_predictions(const std::vector<PredictionRow>& rows, std::ostream& out);
void write_timing(const std::vector<PredictionRow>& rows, std::ostream& out);
void write_losses(const std::vector<LossRecord>& rows, std::ostream& out);

/// Rows of a predictions file. Sigma, raw sigma and quantile columns are
/// optional; absent ones leave `has_sigma` false.
struct PredictionLog {
  std::vector<double> t;
  std::vector<StateVector> mu;
  std::vector<StateVector> sigma;
  std::vector<StateVector> sigma_raw;
  bool has_sigma = false;
};
PredictionLog read_predictions(std::istream& in);

/// Dead-reckoning predictions in the predictions schema without sigma columns.
void write_baseline(const Scenario& s, std::size_t iterations, std::ostream& out);

}  // namespace mfrpinp::learn
