#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "mfrpinp/error.hpp"
#include "mfrpinp/rng.hpp"
#include "mfrpinp/sim/world.hpp"

using namespace mfrpinp;
using namespace mfrpinp::sim;
using physics::DynamicState;

namespace {

const KinematicParams kP{};

SimSettings quiet() {
  SimSettings s;
  s.disturbance = DisturbanceSpec::none();
  s.noise = SensorNoiseSpec::zero();
  return s;
}

double position_error(const RobotState& a, const RobotState& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

}  // namespace

TEST_CASE("noiseless straight run is the bare g2 rollout") {
  const Dataset d = simulate(straight_profile(5.0), kP, quiet(), 3);
  REQUIRE(d.size() > 200);
  DynamicState ref;
  for (std::size_t k = 0; k < d.size(); ++k) {
    CHECK(d.sensors[k].encoder.right == 10.0);
    CHECK(d.sensors[k].encoder.left == 10.0);
    if (k > 0) ref = physics::g2_step(ref, {10, 10}, kP, d.sensors[k].dk);
    const RobotState r = physics::to_robot(ref);
    REQUIRE(d.truth[k].state == r);
  }
}

TEST_CASE("simulation is reproducible from its seed") {
  SimSettings s;
  const auto prof = figure_eight_profile(kP, 1);
  const Dataset a = simulate(prof, kP, s, 77), b = simulate(prof, kP, s, 77);
  std::ostringstream oa, ob;
  record(a, oa);
  record(b, ob);
  CHECK(oa.str() == ob.str());
  const Dataset c = simulate(prof, kP, s, 78);
  std::ostringstream oc;
  record(c, oc);
  CHECK(oc.str() != oa.str());
}

TEST_CASE("encoder noise has the configured spread") {
  SimSettings s = quiet();
  s.noise.encoder = 0.05;
  const Dataset d = simulate(straight_profile(210.0), kP, s, 5);
  REQUIRE(d.size() >= 10000);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& f : d.sensors) {
    for (double e : {f.encoder.right - 10.0, f.encoder.left - 10.0}) {
      sum += e;
      sq += e * e;
      ++n;
    }
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(sd - 0.05) < 0.05 * 0.05);
}

TEST_CASE("ou process stationary spread") {
  for (auto [rate, sigma] : {std::pair{1.0, 0.5}, std::pair{4.0, 0.2}}) {
    OuProcess p(rate, sigma);
    Rng rng(19);
    const int n = 100000;
    const double dt = 0.02;
    for (int i = 0; i < 2000; ++i) p.step(dt, rng.normal());  // burn-in
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = p.step(dt, rng.normal());
      sum += x;
      sq += x * x;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    CAPTURE(rate);
    CHECK(std::abs(sd - sigma / std::sqrt(2.0 * rate)) < 0.1 * p.stationary_std());
  }
}

TEST_CASE("frame timing") {
  SimSettings s;
  const Dataset d = simulate(figure_eight_profile(kP, 1), kP, s, 9);
  std::size_t hifi = 0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    const auto& f = d.sensors[k];
    CHECK(f.dk > 0);
    if (k > 0) {
      CHECK(f.t > d.sensors[k - 1].t);
      CHECK(std::abs(f.t - d.sensors[k - 1].t - f.dk) < 1e-12);
      CHECK(f.dk >= 0.02 * 0.8 - 1e-12);
      CHECK(f.dk <= 0.02 * 1.2 + 1e-12);
    }
    CHECK(d.truth[k].t == f.t);
    if (f.hifi) ++hifi;
  }
  CHECK(d.sensors.front().hifi.has_value());
  const double ratio = static_cast<double>(d.size()) / static_cast<double>(hifi);
  CHECK(ratio > 4.5);
  CHECK(ratio < 5.5);
  CHECK(hifi < d.size());
}

TEST_CASE("invalid settings are rejected") {
  SimSettings s;
  s.rates.jitter = 0.5;
  CHECK_THROWS_AS(simulate(straight_profile(1.0), kP, s, 1), InvalidArgument);
  s = SimSettings{};
  s.rates.low_hz = 0.0;
  CHECK_THROWS_AS(simulate(straight_profile(1.0), kP, s, 1), InvalidArgument);
  s = SimSettings{};
  s.noise.encoder = -1.0;
  CHECK_THROWS_AS(simulate(straight_profile(1.0), kP, s, 1), InvalidArgument);
  CHECK_THROWS_AS(simulate(TrajectoryProfile{"empty", {}}, kP, SimSettings{}, 1),
                  InvalidArgument);
}

TEST_CASE("dead reckoning") {
  SUBCASE("noiseless straight run is the g1 rollout of the commands") {
    const Dataset d = simulate(straight_profile(4.0), kP, quiet(), 2);
    const auto dr = dead_reckon(d.sensors, kP, {});
    double x = 0.0;
    for (std::size_t k = 1; k < d.size(); ++k) {
      x += 0.34 * d.sensors[k].dk;
      CHECK(std::abs(dr[k].x - x) < 1e-12);
      CHECK(dr[k].y == 0.0);
    }
  }
  SUBCASE("zero wheel readings keep the state constant") {
    const Dataset d = simulate(straight_profile(2.0, 0.0), kP, quiet(), 2);
    const RobotState start{1.0, -2.0, 0.7, 0, 0, 0};
    for (const auto& s : dead_reckon(d.sensors, kP, start)) {
      CHECK(s.x == start.x);
      CHECK(s.y == start.y);
      CHECK(s.theta == start.theta);
    }
  }
  SUBCASE("drift grows with distance travelled") {
    // dead reckoning closes the loop at every cycle end; the truth does not
    const auto prof = figure_eight_profile(kP, 4);
    const double cycle = prof.schedule[0].duration * 2.0;
    std::vector<double> checkpoints = {cycle, 2 * cycle, 3 * cycle, 4 * cycle - 0.1};
    std::vector<double> err(checkpoints.size(), 0.0);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Dataset d = simulate(prof, kP, SimSettings{}, seed);
      const auto dr = dead_reckon(d.sensors, kP, {});
      std::size_t c = 0;
      for (std::size_t k = 0; k < d.size() && c < checkpoints.size(); ++k) {
        if (d.sensors[k].t >= checkpoints[c]) err[c++] += position_error(dr[k], d.truth[k].state);
      }
    }
    for (std::size_t c = 1; c < err.size(); ++c) CHECK(err[c] > err[c - 1]);
  }
  CHECK_THROWS_AS(dead_reckon({}, kP, {}), InvalidArgument);
}

TEST_CASE("dataset csv round trip") {
  const Dataset d = simulate(figure_eight_profile(kP, 1), kP, SimSettings{}, 4);
  std::stringstream ss;
  record(d, ss);
  CHECK(ss.str().substr(0, ss.str().find('\n')) == kDatasetHeader);
  const Dataset e = load(ss);
  REQUIRE(e.size() == d.size());
  for (std::size_t k = 0; k < d.size(); ++k) {
    CHECK(std::abs(e.sensors[k].t - d.sensors[k].t) <= 1e-12);
    CHECK(std::abs(e.sensors[k].dk - d.sensors[k].dk) <= 1e-12);
    CHECK(e.sensors[k].encoder == d.sensors[k].encoder);
    CHECK(e.sensors[k].imu_yaw_rate == d.sensors[k].imu_yaw_rate);
    REQUIRE(e.sensors[k].hifi.has_value() == d.sensors[k].hifi.has_value());
    if (d.sensors[k].hifi) CHECK(*e.sensors[k].hifi == *d.sensors[k].hifi);
    CHECK(e.truth[k].state == d.truth[k].state);
    CHECK(std::abs(e.truth[k].u_b - d.truth[k].u_b) < 1e-12);
    CHECK(std::abs(e.truth[k].v_b - d.truth[k].v_b) < 1e-12);
  }
}

TEST_CASE("dataset csv validation") {
  const std::string header = kDatasetHeader;
  const std::string row0 = "0,0.02,10,10,0,1,0,0,0,0,0,0,0,0,0,0,0,0";
  const std::string row1 = "0.02,0.02,10,10,0,0,,,,,,,0.1,0,0,0,0,0";
  const std::string row2 = "0.04,0.02,10,10,0,0,,,,,,,0.2,0,0,0,0,0";
  {
    std::stringstream ss(header + "\n" + row0 + "\n" + row1 + "\n" + row2 + "\n");
    const Dataset d = load(ss);
    CHECK(d.size() == 3);
    CHECK(d.sensors[0].hifi.has_value());
    CHECK_FALSE(d.sensors[1].hifi.has_value());
  }
  {
    std::string h = header;
    h.replace(h.find("imu_yawrate"), 11, "imu_rate");
    std::stringstream ss(h + "\n" + row0 + "\n");
    try {
      (void)load(ss);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("imu_yawrate") != std::string::npos);
    }
  }
  {
    std::string bad = row2;
    bad.replace(bad.find("0.2"), 3, "abc");
    std::stringstream ss(header + "\n" + row0 + "\n" + row1 + "\n" + bad + "\n");
    try {
      (void)load(ss);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 4);
    }
  }
  {
    std::stringstream ss(header + "\n" + row0 + "\n" + "1,2,3\n");
    CHECK_THROWS_AS(load(ss), ParseError);
  }
  {
    std::stringstream ss(header + "\n" + row1 + "\n" + row0 + "\n");
    CHECK_THROWS_AS(load(ss), ParseError);
  }
}

TEST_CASE("builtin profiles") {
  const auto all = builtin_profiles(kP, 3);
  REQUIRE(all.size() == 4);
  CHECK(all[0].name == "straight");
  CHECK(all[1].name == "arc");
  CHECK(all[2].name == "figure-eight");
  CHECK(all[3].name == "random-teleop");
  for (const auto& s : all[0].schedule) CHECK(s.cmd.right == s.cmd.left);

  const auto tele = random_teleop_profile(kP, 500.0, 11);
  CHECK(std::abs(tele.total_duration() - 500.0) < 1e-9);
  for (const auto& s : tele.schedule) {
    CHECK(std::abs(s.cmd.right) <= kP.actuator_limit);
    CHECK(std::abs(s.cmd.left) <= kP.actuator_limit);
  }

  // one full cycle of the figure-eight closes under g1
  const auto fig = figure_eight_profile(kP, 1);
  RobotState s;
  const double h = 1e-4;
  for (double t = 0.0; t < fig.total_duration() - h / 2; t += h) {
    s = physics::g1_step(s, fig.command_at(t + h / 2), kP, h);
  }
  CHECK(std::hypot(s.x, s.y) < 0.05);

  CHECK(profile_by_name("arc", kP, 5.0, 1, 0).total_duration() == 5.0);
  CHECK_THROWS_AS(profile_by_name("spiral", kP, 5.0, 1, 0), InvalidArgument);
}
