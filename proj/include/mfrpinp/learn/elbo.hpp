#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mfrpinp/ad/adam.hpp"
#include "mfrpinp/learn/buffer.hpp"
#include "mfrpinp/np/model.hpp"

namespace mfrpinp::learn {

using ad::Var;
using np::Graph;
using np::MfrPinpModel;
using physics::BodyForces;
using physics::KinematicParams;
using physics::RobotState;
using physics::StateVector;
using physics::WheelCmd;

/// Dead-reckoning step k -> k+1 driven by the wheel rates over the interval.
struct TransitionLow {
  WheelCmd cmd;
  RobotState x_low;
  double dk = 0.0;
  RobotState x_low_next;

  np::LowElement element() const { return {cmd, x_low_next}; }
};

/// Labelled step k -> k+1. The low-fidelity fields let a window of these act
/// as its own low context; `mu_low` is the live decoder mean recorded when
/// the step was predicted and serves as the residual context output.
struct TransitionHigh {
  WheelCmd cmd;
  BodyForces forces;
  double dk = 0.0;
  RobotState x_low;
  RobotState x_low_next;
  RobotState x_high_next;  // filter label
  RobotState x_g2_next;    // g2 step from the label at k
  RobotState mu_low;

  np::LowElement low_element() const { return {cmd, x_low_next}; }
  np::ResElement res_element() const { return {cmd, forces, mu_low}; }
};

/// Windows of consecutive transitions; the last one of each is the target.
struct LowBatch {
  ad::Tensor context;         // [B, C, 9]
  ad::Tensor posterior;       // [B, C + 1, 9], context plus the labelled target
  ad::Tensor step;            // [B, 1, 1]
  ad::Tensor prior_features;  // [B, 1, 7]
  ad::Tensor prior;           // [B, 1, 6], g1 step
  ad::Tensor label;           // [B, 1, 6], heading on the prior's branch
  std::size_t tasks = 0;
};

struct HighBatch {
  ad::Tensor low_context;     // [B, C, 9]
  ad::Tensor res_context;     // [B, C, 12]
  ad::Tensor step;
  ad::Tensor prior_features;  // g1 step of the target, as in inference
  ad::Tensor prior;
  std::vector<std::vector<np::ResElement>> res_windows;  // context part, for the posterior set
  std::vector<TransitionHigh> targets;
  std::size_t tasks = 0;
};

/// Throws InvalidArgument when no window is given or a window is shorter
/// than min_context + 1, and ShapeError when window lengths differ.
LowBatch make_low_batch(const std::vector<std::vector<TransitionLow>>& windows,
                        const KinematicParams& p, std::size_t min_context);
HighBatch make_high_batch(const std::vector<std::vector<TransitionHigh>>& windows,
                          const KinematicParams& p, std::size_t min_context);

struct ElboTerms {
  Var loss;   // recon + kl, per task
  Var recon;  // Gaussian NLL per task
  Var kl;     // KL per task
};

/// Negative low-fidelity ELBO with one reparameterized latent sample.
ElboTerms elbo_low(Graph& g, const LowBatch& b, Rng& rng);

/// Frozen low-decoder means for the batch targets (latent means, no tape kept).
std::vector<RobotState> frozen_low_means(const MfrPinpModel& model, const HighBatch& b);

struct ResidualLabels {
  std::vector<StateVector> r;      // label - frozen mean
  std::vector<StateVector> r_hat;  // g2 step - frozen mean
};
ResidualLabels residual_labels(const HighBatch& b, const std::vector<RobotState>& frozen_means);

/// Negative residual ELBO. z_low is drawn from the context-conditioned low
/// posterior, so the hierarchy passes gradient into the low encoder.
ElboTerms elbo_res(Graph& g, const HighBatch& b, const std::vector<RobotState>& frozen_means,
                   Rng& rng);

struct TrainConfig {
  std::size_t low_batch = 32;
  std::size_t high_batch = 32;
  std::size_t low_capacity = 10000;
  std::size_t high_capacity = 10000;
  std::size_t train_period = 10;  // iterations between training phases, 0 disables
  std::size_t sync_period = 100;  // training phases between frozen syncs
  std::size_t hifi_period = 5;    // iterations between high-fidelity pushes
  ad::AdamConfig adam;

  void validate() const;
};

struct Buffers {
  explicit Buffers(const TrainConfig& c) : low(c.low_capacity), high(c.high_capacity) {}
  ReplayBuffer<TransitionLow> low;
  ReplayBuffer<TransitionHigh> high;
};

struct LossRecord {
  std::size_t iteration = 0;
  double loss = 0.0;  // -(L_low + L_res)
  double elbo_low = 0.0;
  double elbo_res = 0.0;
  double kl_low = 0.0;
  double kl_res = 0.0;
};

struct TrainingWindows {
  std::vector<std::vector<TransitionLow>> low;
  std::vector<std::vector<TransitionHigh>> high;
};

/// Uniformly placed windows of `context + 1` consecutive transitions, or
/// nullopt while either buffer is shorter than one window.
std::optional<TrainingWindows> sample_windows(const Buffers& buffers, const TrainConfig& config,
                                              std::size_t context, Rng& rng);

/// One Adam step on the joint loss over the live parameters.
LossRecord train_on(MfrPinpModel& model, const TrainingWindows& windows, ad::AdamState& adam,
                    const KinematicParams& p, Rng& rng);

/// Random consecutive windows of `context + 1` transitions from each buffer,
/// one Adam step on the joint loss over the live parameters. Returns nullopt
/// (parameters untouched) while either buffer is too short for a window.
std::optional<LossRecord> train_phase(MfrPinpModel& model, const Buffers& buffers,
                                      const TrainConfig& config, ad::AdamState& adam,
                                      const KinematicParams& p, Rng& rng);

/// Adds the low transition. A labelled high transition is added only when
/// the iteration it belongs to is a multiple of the high-fidelity period.
/// Returns whether the high transition was stored.
bool buffer_update(Buffers& buffers, const TrainConfig& config, const TransitionLow& low,
                   const std::optional<TransitionHigh>& high, std::size_t high_iteration);

}  // namespace mfrpinp::learn
