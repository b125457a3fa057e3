#include "mfrpinp/ad/adam.hpp"

#include <cmath>

#include "mfrpinp/error.hpp"

namespace mfrpinp::ad {

void AdamConfig::validate() const {
  if (!(learning_rate > 0) || !(beta1 > 0) || !(beta2 > 0) || !(epsilon > 0) ||
      !(beta1 < 1) || !(beta2 < 1)) {
    throw InvalidArgument("Adam hyperparameters must be positive with betas < 1");
  }
  if (!(weight_decay >= 0)) throw InvalidArgument("Adam weight decay must be >= 0");
}

StepStatus adam_step(ParameterSet& params, const GradMap& grads, AdamState& state) {
  for (const auto& [name, g] : grads) {
    const Tensor& p = params.at(name);
    if (g.shape() != p.shape()) {
      throw ShapeError("gradient for '" + name + "' has shape " + shape_string(g.shape()) +
                       ", parameter has " + shape_string(p.shape()));
    }
    if (!g.all_finite()) return {false, "non-finite gradient for '" + name + "'"};
  }

  const AdamConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);

  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    auto& m = state.first_moment.try_emplace(name, Tensor(p.shape(), 0.0)).first->second;
    auto& v = state.second_moment.try_emplace(name, Tensor(p.shape(), 0.0)).first->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] -= c.learning_rate * c.weight_decay * p[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
  params.bump_version();
  return {};
}

}  // namespace mfrpinp::ad
