#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfrpinp/ad/ops.hpp"
#include "mfrpinp/ad/params.hpp"
#include "mfrpinp/np/features.hpp"

namespace mfrpinp::np {

using ad::Var;

struct NpConfig {
  std::size_t width = 64;   // embedding and hidden width
  std::size_t depth = 2;    // layers per MLP
  std::size_t latent = 16;
  std::size_t key_dim = 32;
  double latent_floor = 1e-6;
  double variance_floor = 1e-6;
  std::size_t context_size = 32;
  std::size_t min_context = 4;
  /// Use latent means instead of samples at inference.
  bool deterministic = true;
  // Per-dimension output scales of the two residual-around-prior heads.
  StateVector low_scale{0.01, 0.01, 0.01, 0.05, 0.05, 0.05};
  StateVector res_scale{0.01, 0.01, 0.01, 0.1, 0.1, 0.05};
  /// Standard deviation reported by the cold-start physics fallback.
  StateVector fallback_sigma{0.05, 0.05, 0.05, 0.2, 0.2, 0.2};
  std::uint64_t init_seed = 7;

  void validate() const;
};

/// Diagonal Gaussian over the six-state vector.
struct GaussianPrediction {
  StateVector mu{};
  StateVector var{};
};

/// Mean sum and variance sum, elementwise.
GaussianPrediction fuse(const GaussianPrediction& low, const GaussianPrediction& res);

/// Parameters of both branches plus the frozen low-fidelity decoder copy.
/// Live names are prefixed `low/` and `res/`; the frozen copy holds the
/// `low/dec/` entries under their original names.
class MfrPinpModel {
 public:
  explicit MfrPinpModel(NpConfig config = {});

  const NpConfig& config() const { return config_; }
  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }
  const ad::ParameterSet& frozen() const { return frozen_; }
  /// Live parameter version at the last sync.
  std::uint64_t frozen_version() const { return frozen_.version(); }

  /// Copies the live low-fidelity decoder into the frozen slot.
  void sync_frozen();

  void save(const std::string& path) const;
  /// Restores parameters saved by `save` into a model built with the same config.
  void load(const std::string& path);
  ad::ParameterSet to_checkpoint() const;
  void from_checkpoint(const ad::ParameterSet& ckpt);

 private:
  NpConfig config_;
  ad::ParameterSet params_;
  ad::ParameterSet frozen_;
};

/// Posterior parameters of a latent Gaussian, [tasks, latent].
struct Latent {
  Var mu;
  Var var;
};

/// Per-target Gaussian, [tasks, targets, 6].
struct PredictionVars {
  Var mu;
  Var var;
};

/// Binds a model onto a tape. The frozen binder never produces gradients.
class Graph {
 public:
  Graph(ad::Tape& tape, const MfrPinpModel& model, bool trainable);

  ad::Tape& tape() { return tape_; }
  const NpConfig& config() const { return cfg_; }
  ad::ParamBinder& live() { return live_; }
  ad::ParamBinder& frozen() { return frozen_; }
  Var constant(ad::Tensor t) { return tape_.constant(std::move(t)); }

  /// tanh between layers; the last layer is linear unless `activate_last`.
  Var mlp(ad::ParamBinder& p, const std::string& prefix, Var x, std::size_t layers,
          bool activate_last = false);

  struct Encoded {
    Var elements;  // [B, C, W] after self-attention
    Var pooled;    // [B, W]
  };
  /// Embedding MLP, self-attention across elements, mean pooling.
  Encoded encode_low(Var features);
  Latent latent_low(Var pooled);
  /// Projects raw wheel rates [B, C, 2] to attention keys.
  Var keys(Var wheel_features);
  /// Embeds dk [B, T, 1] for the low branch (also the cross-attention query).
  Var low_query(Var step);
  Var res_query(Var step);
  /// Cross-attention of target queries over the context elements.
  Var cross_attention(Var queries, Var keys, Var values);
  /// `dec` selects the live or frozen decoder parameters.
  PredictionVars decode_low(ad::ParamBinder& dec, Var query, Var z, Var attended,
                            Var prior_features, Var prior);

  Var encode_res(Var features);
  Latent latent_high(Var pooled, Var z_low);
  PredictionVars decode_res(Var query, Var z_high, Var residual_features, Var residual);

  /// Latent sample; the posterior mean when `rng` is null.
  Var sample(const Latent& q, Rng* rng);

 private:
  ad::Tape& tape_;
  const NpConfig& cfg_;
  ad::ParamBinder live_;
  ad::ParamBinder frozen_;
};

/// Scaled dot-product attention: softmax(q k^T * scale) v, batched over axis 0.
Var scaled_dot_attention(Var q, Var k, Var v, double scale);

/// Wheel-rate columns of low-branch features, [B, C, 2].
Var wheel_columns(Var low_features);

struct InferenceInput {
  std::span<const LowElement> low_context;
  std::span<const ResElement> res_context;  // aligned with low_context
  WheelCmd cmd;                             // wheel rates over the coming interval
  double dk = 0.0;
  RobotState x_low;   // dead-reckoned state at k
  RobotState x_high;  // label at k, seeds the g2 prior
};

struct InferenceOutput {
  GaussianPrediction low;
  GaussianPrediction res;
  GaussianPrediction high;        // fused, before calibration
  StateVector sigma_calibrated{};  // sqrt(var_high) * q
  RobotState g1_prior;
  RobotState g2_prior;
  bool fallback = false;
};

/// One pass of the inference phase. `quantiles` scales the fused standard
/// deviation per dimension. With fewer than min_context elements the g1 prior
/// is returned with the configured fallback sigma and `fallback` set.
InferenceOutput infer_step(const MfrPinpModel& model, const InferenceInput& in,
                           const physics::KinematicParams& params, const StateVector& quantiles,
                           Rng* rng = nullptr);

/// Unwraps a heading label onto the branch of `reference`.
RobotState align_heading(const RobotState& label, double reference);

/// a - b with the heading difference wrapped.
StateVector state_diff(const RobotState& a, const RobotState& b);

ad::Tensor state_tensor(const std::vector<RobotState>& rows, std::size_t tasks,
                        std::size_t targets);
ad::Tensor vector_tensor(const std::vector<StateVector>& rows, std::size_t tasks,
                         std::size_t targets);

}  // namespace mfrpinp::np
