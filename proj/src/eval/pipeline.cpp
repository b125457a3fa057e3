#include "mfrpinp/eval/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "mfrpinp/conformal/conformal.hpp"
#include "mfrpinp/error.hpp"

namespace mfrpinp::eval {

namespace {

void write_file(const std::filesystem::path& path, const auto& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  writer(out);
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace

sim::Dataset simulate_dataset(const RunConfig& c) {
  c.validate();
  return sim::simulate(c.profile(), c.physics, c.sim, c.seed);
}

learn::Scenario scenario_for(const RunConfig& c, const std::vector<sim::SensorFrame>& sensors,
                             const std::optional<std::vector<physics::RobotState>>& labels) {
  if (labels) return learn::make_scenario(sensors, *labels, c.physics);
  return learn::make_scenario(sensors, c.physics, c.filter());
}

learn::RunResult run_experiment(const RunConfig& c, const learn::Scenario& s,
                                const std::filesystem::path& dir,
                                const std::map<std::string, std::string>& inputs,
                                const std::vector<std::string>& command) {
  c.validate();
  std::filesystem::create_directories(dir);
  write_manifest(dir, c, inputs, command);
  learn::RunResult r = learn::run_loop(s, c.physics, c.loop_config(), c.seed, dir / "checkpoints");
  write_file(dir / "predictions.csv", [&](std::ostream& o) { learn::write_predictions(r.predictions, o); });
  write_file(dir / "timing.csv", [&](std::ostream& o) { learn::write_timing(r.predictions, o); });
  write_file(dir / "losses.csv", [&](std::ostream& o) { learn::write_losses(r.losses, o); });
  return r;
}

std::vector<double> infer_latencies(const np::MfrPinpModel& model, const learn::Scenario& s,
                                    const physics::KinematicParams& p, std::size_t iterations) {
  const std::size_t C = model.config().context_size;
  if (s.size() < C + 2) throw InvalidArgument("scenario too short for a full context window");
  std::vector<np::LowElement> low;
  std::vector<np::ResElement> res;
  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    const auto& f = s.sensors[k + 1];
    low.push_back({f.encoder, s.dead_reckoning[k + 1]});
    const physics::DynamicState d = physics::to_dynamic(s.labels[k]);
    res.push_back({f.encoder, physics::body_forces(d.u, d.v, f.encoder, p),
                   physics::g1_step(s.dead_reckoning[k], f.encoder, p, f.dk)});
  }
  const std::size_t span = low.size() - C;
  const physics::StateVector q{1, 1, 1, 1, 1, 1};
  std::vector<double> ms;
  ms.reserve(iterations);
  for (std::size_t i = 0; i < iterations; ++i) {
    const std::size_t k = C + i % span;
    const auto& f = s.sensors[k + 1];
    np::InferenceInput in;
    in.low_context = std::span(low).subspan(k - C, C);
    in.res_context = std::span(res).subspan(k - C, C);
    in.cmd = f.encoder;
    in.dk = f.dk;
    in.x_low = s.dead_reckoning[k];
    in.x_high = s.labels[k];
    const auto t0 = std::chrono::steady_clock::now();
    const np::InferenceOutput o = np::infer_step(model, in, p, q);
    const auto t1 = std::chrono::steady_clock::now();
    if (o.fallback) throw Error("bench context fell back to the physics prior");
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return ms;
}

std::vector<double> coverage_trials(double alpha, std::size_t trials, std::size_t n_cal,
                                    std::size_t n_test, std::uint64_t seed) {
  if (n_test == 0) throw InvalidArgument("coverage trials need test points");
  std::vector<double> out;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(seed + t);
    // Gaussian scale mixture, so the reported sigma is wrong in both directions
    auto residual = [&] {
      const double sigma = rng.uniform(0.2, 2.0);
      const double e = sigma * std::exp(0.5 * rng.normal()) * rng.normal();
      return std::abs(e) / sigma;
    };
    std::vector<double> scores(n_cal);
    for (double& v : scores) v = residual();
    const double q = conformal::fit_scalar(std::move(scores), alpha).q;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n_test; ++i) hits += residual() <= q;
    out.push_back(static_cast<double>(hits) / static_cast<double>(n_test));
  }
  return out;
}

}  // namespace mfrpinp::eval
