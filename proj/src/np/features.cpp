#include "mfrpinp/np/features.hpp"

#include <cmath>

#include "mfrpinp/error.hpp"

namespace mfrpinp::np {

void append_state(std::vector<double>& out, const RobotState& s) {
  out.insert(out.end(), {s.x / kPositionScale, s.y / kPositionScale, std::sin(s.theta),
                         std::cos(s.theta), s.vx / kVelocityScale, s.vy / kVelocityScale,
                         s.omega / kVelocityScale});
}

std::vector<double> low_features(const LowElement& e) {
  std::vector<double> f{e.cmd.right / kWheelScale, e.cmd.left / kWheelScale};
  append_state(f, e.state);
  return f;
}

std::vector<double> res_features(const ResElement& e) {
  std::vector<double> f{e.cmd.right / kWheelScale, e.cmd.left / kWheelScale,
                        e.forces.fx / kForceScale[0], e.forces.fy / kForceScale[1],
                        e.forces.mz / kForceScale[2]};
  append_state(f, e.state);
  return f;
}

double step_feature(double dk) { return (dk - kNominalStep) / kStepSpread; }

std::vector<double> residual_features(const StateVector& r) {
  std::vector<double> f(6);
  for (int i = 0; i < 6; ++i) f[i] = r[i] / kResidualScale[i];
  return f;
}

namespace {

template <class Elem, class Fn>
ad::Tensor stack(const std::vector<std::vector<Elem>>& tasks, std::size_t width, Fn features) {
  if (tasks.empty() || tasks.front().empty()) throw ShapeError("context stack needs elements");
  const std::size_t n = tasks.front().size();
  std::vector<double> data;
  data.reserve(tasks.size() * n * width);
  for (const auto& t : tasks) {
    if (t.size() != n) throw ShapeError("all tasks must hold the same number of elements");
    for (const auto& e : t) {
      const auto f = features(e);
      data.insert(data.end(), f.begin(), f.end());
    }
  }
  return ad::Tensor({tasks.size(), n, width}, std::move(data));
}

}  // namespace

ad::Tensor stack_low(const std::vector<std::vector<LowElement>>& tasks) {
  return stack(tasks, kLowFeatures, low_features);
}

ad::Tensor stack_res(const std::vector<std::vector<ResElement>>& tasks) {
  return stack(tasks, kResFeatures, res_features);
}

}  // namespace mfrpinp::np
