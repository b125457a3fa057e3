#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "mfrpinp/ad/checkpoint.hpp"
#include "mfrpinp/ad/losses.hpp"
#include "mfrpinp/error.hpp"
#include "mfrpinp/np/model.hpp"

using namespace mfrpinp;
using namespace mfrpinp::np;
using ad::Tape;
using ad::Tensor;

namespace {

const physics::KinematicParams kP{};
const StateVector kUnit{1, 1, 1, 1, 1, 1};

NpConfig small_config() {
  NpConfig c;
  c.width = 8;
  c.latent = 4;
  c.key_dim = 4;
  return c;
}

RobotState random_state(Rng& rng) {
  return {rng.uniform(-2, 2),     rng.uniform(-2, 2),     rng.uniform(-3, 3),
          rng.uniform(-0.3, 0.3), rng.uniform(-0.1, 0.1), rng.uniform(-0.5, 0.5)};
}

struct Context {
  std::vector<LowElement> low;
  std::vector<ResElement> res;
};

Context random_context(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Context c;
  for (std::size_t i = 0; i < n; ++i) {
    const WheelCmd cmd{rng.uniform(-5, 20), rng.uniform(-5, 20)};
    const RobotState s = random_state(rng);
    c.low.push_back({cmd, s});
    c.res.push_back({cmd, physics::body_forces(s.vx, s.vy, cmd, kP), random_state(rng)});
  }
  return c;
}

// Heads start at zero; give them weight so every path carries signal.
void perturb(MfrPinpModel& m, std::uint64_t seed, double amp = 0.3) {
  Rng rng(seed);
  for (auto& [name, t] : m.params()) {
    if (name.find("/head/") == std::string::npos) continue;
    for (double& v : t.storage()) v = rng.uniform(-amp, amp);
  }
}

InferenceInput make_input(const Context& c, std::uint64_t seed = 5) {
  Rng rng(seed);
  InferenceInput in;
  in.low_context = c.low;
  in.res_context = c.res;
  in.cmd = {12.0, 9.0};
  in.dk = 0.021;
  in.x_low = random_state(rng);
  in.x_high = random_state(rng);
  return in;
}

double max_diff(const StateVector& a, const StateVector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double output_diff(const InferenceOutput& a, const InferenceOutput& b) {
  return std::max({max_diff(a.high.mu, b.high.mu), max_diff(a.high.var, b.high.var),
                   max_diff(a.low.mu, b.low.mu), max_diff(a.res.var, b.res.var)});
}

}  // namespace

TEST_CASE("context permutation and duplication invariance") {
  MfrPinpModel m;
  perturb(m, 3);
  const Context c = random_context(12, 1);
  const InferenceOutput base = infer_step(m, make_input(c), kP, kUnit);
  REQUIRE_FALSE(base.fallback);

  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::size_t> idx(c.low.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), gen);
    Context p;
    for (std::size_t i : idx) {
      p.low.push_back(c.low[i]);
      p.res.push_back(c.res[i]);
    }
    CHECK(output_diff(base, infer_step(m, make_input(p), kP, kUnit)) < 1e-10);
  }

  Context d = c;
  d.low.insert(d.low.end(), c.low.begin(), c.low.end());
  d.res.insert(d.res.end(), c.res.begin(), c.res.end());
  CHECK(output_diff(base, infer_step(m, make_input(d), kP, kUnit)) < 1e-10);
}

TEST_CASE("singleton pooling returns the element representation") {
  MfrPinpModel m(small_config());
  const Context c = random_context(1, 2);
  Tape t;
  Graph g(t, m, false);
  const Var x = g.constant(stack_low({c.low}));
  const auto enc = g.encode_low(x);
  // a single key gets all the attention weight, so h = e + v
  const Var e = g.mlp(g.live(), "low/embed", x, m.config().depth);
  const Var h = e + ad::matmul(e, g.live()("low/attn/v"));
  CHECK(max_diff(enc.pooled.value(), ad::reshape(h, {1, m.config().width}).value()) < 1e-12);
  const Var r = g.constant(stack_res({c.res}));
  CHECK(max_diff(g.encode_res(r).value(),
                 ad::reshape(g.mlp(g.live(), "res/embed", r, m.config().depth),
                             {1, m.config().width})
                     .value()) < 1e-12);
}

TEST_CASE("cross-attention limits") {
  Tape t;
  SUBCASE("one context element") {
    const Var q = t.constant(Tensor({1, 2, 3}, {0.3, -1, 2, 0.5, 0.5, -0.1}));
    const Var k = t.constant(Tensor({1, 1, 3}, {1, 2, 3}));
    const Var v = t.constant(Tensor({1, 1, 2}, {4, -7}));
    const Tensor out = scaled_dot_attention(q, k, v, 0.5).value();
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(out.at(i, 0) == doctest::Approx(4).epsilon(1e-15));
      CHECK(out.at(i, 1) == doctest::Approx(-7).epsilon(1e-15));
    }
  }
  SUBCASE("sharp scores select the best key") {
    const Var q = t.constant(Tensor({1, 1, 2}, {1, 0}));
    const Var k = t.constant(Tensor({1, 3, 2}, {1, 0, 0.2, 0, -0.5, 1}));
    const Var v = t.constant(Tensor({1, 3, 2}, {1, 2, 5, 5, -3, 9}));
    const Tensor soft = scaled_dot_attention(q, k, v, 1.0).value();
    const Tensor sharp = scaled_dot_attention(q, k, v, 10.0).value();
    CHECK(std::abs(sharp[0] - 1.0) < 0.01 * 1.0);
    CHECK(std::abs(sharp[1] - 2.0) < 0.01 * 2.0);
    CHECK(std::abs(soft[1] - 2.0) > std::abs(sharp[1] - 2.0));
  }
}

TEST_CASE("zero heads reproduce the physics priors") {
  const MfrPinpModel m;
  const Context c = random_context(8, 4);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const InferenceInput in = make_input(c, s);
    const InferenceOutput out = infer_step(m, in, kP, kUnit);
    const RobotState g1 = physics::g1_step(in.x_low, in.cmd, kP, in.dk);
    const RobotState g2 = physics::g2_step(in.x_high, in.cmd, kP, in.dk);
    CHECK(out.low.mu == g1.to_array());
    CHECK(max_diff(state_diff(RobotState::from_array(out.high.mu), g2), StateVector{}) < 1e-12);
    for (std::size_t i = 0; i < 6; ++i) {
      const double s2 = m.config().low_scale[i] * m.config().low_scale[i];
      CHECK(out.low.var[i] == doctest::Approx(s2 * std::log(2.0) + 1e-6).epsilon(1e-12));
    }
  }
}

TEST_CASE("fusion sums means and variances") {
  GaussianPrediction a, b;
  a.mu.fill(1.0);
  a.var.fill(1.0);
  b.mu.fill(2.0);
  b.var.fill(3.0);
  const GaussianPrediction f = fuse(a, b);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(f.mu[i] == 3.0);
    CHECK(f.var[i] == 4.0);
  }
  Rng rng(1);
  for (auto& v : a.mu) v = rng.normal();
  for (auto& v : b.var) v = rng.uniform(0, 1);
  CHECK(fuse(a, b).mu == fuse(b, a).mu);
  CHECK(fuse(a, b).var == fuse(b, a).var);
}

TEST_CASE("frozen decoder sync") {
  MfrPinpModel m(small_config());
  CHECK(m.frozen().size() == 2 * m.config().depth + 2);
  for (const auto& [name, t] : m.frozen()) CHECK(m.params().at(name) == t);

  perturb(m, 8);
  m.params().at("low/dec/l0/W")[0] += 1.0;
  m.params().bump_version();
  CHECK(m.frozen().at("low/dec/l0/W") != m.params().at("low/dec/l0/W"));
  CHECK(m.frozen_version() != m.params().version());

  const Context c = random_context(6, 3);
  auto decode = [&](bool frozen) {
    Tape t;
    Graph g(t, m, false);
    const Var x = g.constant(stack_low({c.low}));
    const auto enc = g.encode_low(x);
    const Var z = g.latent_low(enc.pooled).mu;
    const Var q = g.low_query(g.constant(Tensor({1, 1, 1}, {0.2})));
    const Var a = g.cross_attention(q, g.keys(wheel_columns(x)), enc.elements);
    std::vector<double> pf;
    append_state(pf, c.low[0].state);
    const auto out = g.decode_low(frozen ? g.frozen() : g.live(), q, z, a,
                                  g.constant(Tensor({1, 1, kStateFeatures}, pf)),
                                  g.constant(state_tensor({c.low[0].state}, 1, 1)));
    return std::make_pair(out.mu.value(), out.var.value());
  };
  CHECK(max_diff(decode(true).first, decode(false).first) > 1e-6);

  m.sync_frozen();
  CHECK(m.frozen_version() == m.params().version());
  for (const auto& [name, t] : m.frozen()) CHECK(m.params().at(name) == t);
  const ad::ParameterSet once = m.frozen();
  m.sync_frozen();
  CHECK(m.frozen() == once);
  CHECK(decode(true).first == decode(false).first);
  CHECK(decode(true).second == decode(false).second);
}

TEST_CASE("latent posteriors") {
  MfrPinpModel m;
  const Context c = random_context(10, 6);
  Tape t;
  Graph g(t, m, false);
  const Latent a = g.latent_low(g.encode_low(g.constant(stack_low({c.low}))).pooled);
  const Latent b = g.latent_low(g.encode_low(g.constant(stack_low({c.low}))).pooled);
  CHECK(ad::diag_gaussian_kl(a.mu, a.var, b.mu, b.var).value().item() == 0.0);
  for (double v : a.var.value().data()) CHECK(v > 0.0);

  const Latent h = g.latent_high(g.encode_res(g.constant(stack_res({c.res}))), a.mu);
  CHECK(h.mu.shape() == ad::Shape{1, m.config().latent});
  for (double v : h.var.value().data()) CHECK(v >= m.config().latent_floor);
}

TEST_CASE("inference determinism and sampling") {
  MfrPinpModel m;
  perturb(m, 11);
  const Context c = random_context(16, 7);
  const InferenceInput in = make_input(c);
  Rng r1(3), r2(3);
  CHECK(output_diff(infer_step(m, in, kP, kUnit, &r1), infer_step(m, in, kP, kUnit)) == 0.0);

  NpConfig sc;
  sc.deterministic = false;
  MfrPinpModel s(sc);
  perturb(s, 11);
  Rng a(3), b(3), other(4);
  const InferenceOutput oa = infer_step(s, in, kP, kUnit, &a);
  CHECK(output_diff(oa, infer_step(s, in, kP, kUnit, &b)) == 0.0);
  CHECK(output_diff(oa, infer_step(s, in, kP, kUnit, &other)) > 0.0);
}

TEST_CASE("calibration quantiles scale the reported sigma") {
  MfrPinpModel m;
  perturb(m, 12);
  const Context c = random_context(8, 8);
  const InferenceInput in = make_input(c);
  const InferenceOutput one = infer_step(m, in, kP, kUnit);
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(one.sigma_calibrated[i] == std::sqrt(one.high.var[i]));
  StateVector q{};
  for (std::size_t i = 0; i < 6; ++i) q[i] = 0.5 + static_cast<double>(i);
  const InferenceOutput scaled = infer_step(m, in, kP, q);
  CHECK(scaled.high.mu == one.high.mu);
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(scaled.sigma_calibrated[i] == doctest::Approx(q[i] * one.sigma_calibrated[i]));
}

TEST_CASE("cold start falls back to the kinematic prior") {
  MfrPinpModel m;
  perturb(m, 13);
  const Context c = random_context(3, 9);
  const InferenceInput in = make_input(c);
  const InferenceOutput out = infer_step(m, in, kP, kUnit);
  CHECK(out.fallback);
  CHECK(out.high.mu == physics::g1_step(in.x_low, in.cmd, kP, in.dk).to_array());
  CHECK(out.sigma_calibrated == m.config().fallback_sigma);
  const Context four = random_context(4, 9);
  CHECK_FALSE(infer_step(m, make_input(four), kP, kUnit).fallback);

  InferenceInput bad = in;
  bad.res_context = bad.res_context.subspan(1);
  CHECK_THROWS_AS(infer_step(m, bad, kP, kUnit), ShapeError);
}

TEST_CASE("decoder gradients with respect to the latents") {
  MfrPinpModel m(small_config());
  perturb(m, 14, 1.0);
  const Context c = random_context(5, 10);
  const std::size_t L = m.config().latent;
  std::mt19937_64 gen(2);

  SUBCASE("low decoder mean and variance depend on z") {
    fd::LossFn f = [&](Tape& t, const std::vector<Var>& v) {
      Graph g(t, m, false);
      const Var x = g.constant(stack_low({c.low}));
      const auto enc = g.encode_low(x);
      const Var q = g.low_query(g.constant(Tensor({1, 1, 1}, {0.4})));
      const Var a = g.cross_attention(q, g.keys(wheel_columns(x)), enc.elements);
      std::vector<double> pf;
      append_state(pf, c.low[1].state);
      const auto out = g.decode_low(g.live(), q, v[0], a,
                                    g.constant(Tensor({1, 1, kStateFeatures}, pf)),
                                    g.constant(state_tensor({c.low[1].state}, 1, 1)));
      return ad::sum_all(ad::square(out.mu)) + ad::sum_all(ad::log(out.var));
    };
    const std::vector<Tensor> z{fd::random_tensor({1, L}, gen)};
    CHECK(fd::max_relative_error(f, z) < 1e-5);
    double norm = 0.0;
    for (double g : fd::reverse_gradients(f, z)[0].data()) norm += g * g;
    CHECK(norm > 1e-8);
  }
  SUBCASE("high latent and residual decoder depend on z_low") {
    fd::LossFn f = [&](Tape& t, const std::vector<Var>& v) {
      Graph g(t, m, false);
      const Latent h = g.latent_high(g.encode_res(g.constant(stack_res({c.res}))), v[0]);
      const Var q = g.res_query(g.constant(Tensor({1, 1, 1}, {-0.3})));
      const StateVector r{0.01, -0.02, 0.003, 0.05, 0.0, -0.04};
      const auto out = g.decode_res(q, h.mu, g.constant(Tensor({1, 1, 6}, residual_features(r))),
                                    g.constant(vector_tensor({r}, 1, 1)));
      return ad::sum_all(ad::square(out.mu)) + ad::sum_all(ad::log(out.var)) +
             ad::sum_all(ad::log(h.var));
    };
    const std::vector<Tensor> z{fd::random_tensor({1, L}, gen)};
    CHECK(fd::max_relative_error(f, z) < 1e-5);
  }
}

TEST_CASE("model checkpoint round trip") {
  MfrPinpModel m(small_config());
  perturb(m, 15);
  m.params().set_version(42);
  m.sync_frozen();
  m.params().at("low/dec/head/b")[0] = 0.7;
  m.params().set_version(50);
  std::stringstream ss;
  ad::write_checkpoint(ss, m.to_checkpoint());

  MfrPinpModel r(small_config());
  r.from_checkpoint(ad::read_checkpoint(ss));
  CHECK(r.params() == m.params());
  CHECK(r.frozen() == m.frozen());
  CHECK(r.frozen_version() == 42);
  CHECK(r.params().version() == 50);
  const Context c = random_context(6, 11);
  const InferenceInput in = make_input(c);
  CHECK(output_diff(infer_step(r, in, kP, kUnit), infer_step(m, in, kP, kUnit)) == 0.0);

  MfrPinpModel wide;
  CHECK_THROWS_AS(wide.from_checkpoint(m.to_checkpoint()), ConfigError);
}

TEST_CASE("config validation") {
  NpConfig c;
  CHECK_NOTHROW(c.validate());
  c.min_context = 40;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = NpConfig{};
  c.res_scale[3] = 0.0;
  CHECK_THROWS_AS(MfrPinpModel{c}, InvalidArgument);
}

TEST_CASE("heading helpers") {
  RobotState a{0, 0, 3.1, 0, 0, 0}, b{0, 0, -3.1, 0, 0, 0};
  CHECK(state_diff(a, b)[2] == doctest::Approx(6.2 - 2 * std::numbers::pi));
  CHECK(align_heading(b, 3.1).theta == doctest::Approx(2 * std::numbers::pi - 3.1));
  CHECK(align_heading(a, 3.0).theta == a.theta);
  CHECK_THROWS_AS(vector_tensor({StateVector{}}, 2, 1), ShapeError);
}
