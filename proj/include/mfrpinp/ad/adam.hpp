#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mfrpinp/ad/params.hpp"

namespace mfrpinp::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double weight_decay = 5e-7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Moment estimates for Adam with decoupled weight decay.
struct AdamState {
  explicit AdamState(AdamConfig cfg = {}) : config(cfg) { config.validate(); }

  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

struct StepStatus {
  bool applied = true;
  std::string skipped_reason;
};

/// One Adam update over every parameter that has an entry in `grads`.
///
/// Weight decay is applied first as p <- p - lr*lambda*p, then the bias-corrected
/// update p <- p - lr * m_hat / (sqrt(v_hat) + eps). A non-finite gradient skips
/// the whole step and leaves parameters, moments and counters untouched.
StepStatus adam_step(ParameterSet& params, const GradMap& grads, AdamState& state);

}  // namespace mfrpinp::ad
