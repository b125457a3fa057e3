#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "mfrpinp/error.hpp"
#include "mfrpinp/physics/kinematics.hpp"

using namespace mfrpinp;
using namespace mfrpinp::physics;

namespace {

const KinematicParams kP{};

double state_distance(const DynamicState& a, const DynamicState& b) {
  const double d[] = {a.x - b.x, a.y - b.y, wrap_angle(a.theta - b.theta),
                      a.u - b.u, a.v - b.v, a.omega - b.omega};
  double s = 0.0;
  for (double v : d) s += v * v;
  return std::sqrt(s);
}

DynamicState integrate(DynamicState s, WheelCmd cmd, double horizon, int steps) {
  const double h = horizon / steps;
  for (int i = 0; i < steps; ++i) s = g2_step(s, cmd, kP, h);
  return s;
}

}  // namespace

TEST_CASE("g1 derivative hand values") {
  RobotState s;
  PoseRate d = g1_derivative(s, {10, 10}, kP);
  // (0.034/2) * 20
  CHECK(std::abs(d.xdot - 0.34) < 1e-12);
  CHECK(d.ydot == 0.0);
  CHECK(d.thetadot == 0.0);

  d = g1_derivative(s, {0, 0}, kP);
  CHECK(d.xdot == 0.0);
  CHECK(d.ydot == 0.0);
  CHECK(d.thetadot == 0.0);

  d = g1_derivative(s, {5, -5}, kP);
  CHECK(d.xdot == 0.0);
  CHECK(d.ydot == 0.0);
  // right wheel forward turns left (positive yaw)
  CHECK(std::abs(d.thetadot - 0.034 / 0.288 * 10.0) < 1e-12);
}

TEST_CASE("g1 step") {
  RobotState s;
  RobotState n = g1_step(s, {10, 10}, kP, 1.0);
  CHECK(std::abs(n.x - 0.34) < 1e-12);
  CHECK(n.y == 0.0);
  CHECK(std::abs(n.vx - 0.34) < 1e-12);
  CHECK_THROWS_AS(g1_step(s, {10, 10}, kP, 0.0), InvalidArgument);
  CHECK_THROWS_AS(g1_step(s, {10, 10}, kP, -0.1), InvalidArgument);

  RobotState two = g1_step(g1_step(s, {10, 10}, kP, 0.5), {10, 10}, kP, 0.5);
  CHECK(std::abs(two.x - n.x) < 1e-12);
  CHECK(two.y == n.y);
}

TEST_CASE("g1 heading equivariance") {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> ang(-4.0, 4.0), w(-25.0, 25.0);
  for (int k = 0; k < 500; ++k) {
    const double th = ang(gen), phi = ang(gen);
    const WheelCmd c{w(gen), w(gen)};
    RobotState a;
    a.theta = th;
    RobotState b = a;
    b.theta = th + phi;
    const PoseRate da = g1_derivative(a, c, kP), db = g1_derivative(b, c, kP);
    const double rx = std::cos(phi) * da.xdot - std::sin(phi) * da.ydot;
    const double ry = std::sin(phi) * da.xdot + std::cos(phi) * da.ydot;
    CHECK(std::abs(db.xdot - rx) < 1e-12);
    CHECK(std::abs(db.ydot - ry) < 1e-12);
    CHECK(db.thetadot == da.thetadot);
  }
}

TEST_CASE("g2 derivative hand values") {
  DynamicState s;
  const BodyForces f = body_forces(0.0, 0.0, {10, 10}, kP);
  CHECK(std::abs(f.fx - 150.0) < 1e-12);
  CHECK(f.fy == 0.0);
  CHECK(f.mz == 0.0);
  DynamicRate d = g2_derivative(s, {10, 10}, kP);
  CHECK(std::abs(d.udot - 150.0 / 10.7) < 1e-12);
  CHECK(std::abs(d.udot - 14.0187) < 1e-4);
  CHECK(d.vdot == 0.0);
  CHECK(d.omegadot == 0.0);

  d = g2_derivative(s, {0, 0}, kP);
  CHECK(d.udot == 0.0);
  CHECK(d.vdot == 0.0);
  CHECK(d.omegadot == 0.0);
  CHECK(d.xdot == 0.0);
  CHECK(d.ydot == 0.0);

  DynamicState r;
  r.theta = std::numbers::pi / 2;
  r.u = 1.0;
  d = g2_derivative(r, {0, 0}, kP);
  CHECK(std::abs(d.xdot) < 1e-12);
  CHECK(std::abs(d.ydot - 1.0) < 1e-12);

  // lateral force is exactly -C_alpha * v
  const BodyForces g = body_forces(0.3, -0.7, {3, 1}, kP);
  CHECK(g.fy == -kP.lateral * -0.7);
  CHECK(std::abs(g.mz - 0.288 * 15.0 * 2.0) < 1e-12);

  // coupling terms
  DynamicState c;
  c.u = 2.0;
  c.v = 0.5;
  c.omega = 0.4;
  d = g2_derivative(c, {0, 0}, kP);
  CHECK(std::abs(d.udot - (-0.5 * 0.4)) < 1e-12);
  CHECK(std::abs(d.vdot - (-11.5 * 0.5 / 10.7 - 2.0 * 0.4)) < 1e-12);
}

TEST_CASE("g2 from rest grows linearly without drag") {
  DynamicState s;
  for (int i = 0; i < 10; ++i) s = g2_step(s, {10, 10}, kP, 0.01);
  CHECK(std::abs(s.u - 150.0 / 10.7 * 0.1) < 1e-12);
  CHECK(std::abs(s.x - 0.5 * 150.0 / 10.7 * 0.01) < 1e-12);
  CHECK(s.theta == 0.0);
  CHECK(s.y == 0.0);
  CHECK_THROWS_AS(g2_step(s, {1, 1}, kP, 0.0), InvalidArgument);
}

TEST_CASE("g2 straight-line invariance") {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> w(-25.0, 25.0), dt(0.005, 0.05);
  for (int trial = 0; trial < 20; ++trial) {
    DynamicState s;
    s.u = w(gen) / 10.0;
    for (int i = 0; i < 200; ++i) {
      const double a = w(gen);
      s = g2_step(s, {a, a}, kP, dt(gen));
      REQUIRE(s.v == 0.0);
      REQUIRE(s.omega == 0.0);
      REQUIRE(s.y == 0.0);
      REQUIRE(s.theta == 0.0);
    }
  }
}

TEST_CASE("g2 step halving agrees") {
  DynamicState s{0.1, -0.2, 0.3, 1.0, 0.1, 0.5};
  const WheelCmd c{12, 8};
  const DynamicState one = g2_step(s, c, kP, 0.02);
  const DynamicState two = g2_step(g2_step(s, c, kP, 0.01), c, kP, 0.01);
  CHECK(state_distance(one, two) < 1e-8);
}

TEST_CASE("g2 rk4 convergence order on a curved trajectory") {
  const DynamicState s{0.0, 0.0, 0.2, 0.8, 0.05, 0.3};
  const WheelCmd c{12, 8};
  const double T = 0.5;
  const DynamicState ref = integrate(s, c, T, 4096);
  double prev = -1.0;
  for (int n : {8, 16, 32}) {
    const double e = state_distance(integrate(s, c, T, n), ref);
    if (prev > 0) {
      const double order = std::log2(prev / e);
      CAPTURE(n);
      CHECK(order >= 3.9);
    }
    prev = e;
  }
}

TEST_CASE("body velocity round trip through inertial frame") {
  const DynamicState d{1.0, 2.0, 2.5, 0.7, -0.2, 0.1};
  const DynamicState back = to_dynamic(to_robot(d));
  CHECK(std::abs(back.u - d.u) < 1e-12);
  CHECK(std::abs(back.v - d.v) < 1e-12);
}

TEST_CASE("wrap angle lands in (-pi, pi]") {
  CHECK(wrap_angle(std::numbers::pi) == std::numbers::pi);
  CHECK(wrap_angle(-std::numbers::pi) == std::numbers::pi);
  CHECK(std::abs(wrap_angle(3 * std::numbers::pi / 2) + std::numbers::pi / 2) < 1e-12);
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> a(-1e4, 1e4);
  for (int i = 0; i < 10000; ++i) {
    const double w = wrap_angle(a(gen));
    REQUIRE(w > -std::numbers::pi);
    REQUIRE(w <= std::numbers::pi);
  }
  RobotState s;
  s.theta = 3.1;
  CHECK(g1_step(s, {25, -25}, kP, 0.5).theta <= std::numbers::pi);
}

TEST_CASE("params validation") {
  KinematicParams p;
  CHECK_NOTHROW(p.validate());
  p.inertia = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  const WheelCmd c = clamp({40, -30}, kP);
  CHECK(c.right == 25.0);
  CHECK(c.left == -25.0);
}
