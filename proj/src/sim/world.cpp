#include "mfrpinp/sim/world.hpp"

#include <cmath>
#include <fstream>

#include "mfrpinp/error.hpp"
#include "mfrpinp/io/csv.hpp"
#include "mfrpinp/rng.hpp"

namespace mfrpinp::sim {

using physics::DynamicRate;
using physics::DynamicState;
using physics::wrap_angle;

void SensorNoiseSpec::validate() const {
  for (double v : {encoder, imu_yaw_rate, imu_bias_walk, hifi_position, hifi_heading,
                   hifi_velocity, hifi_yaw_rate}) {
    if (!(v >= 0) || !std::isfinite(v)) throw InvalidArgument("sensor noise must be >= 0");
  }
}

DisturbanceSpec DisturbanceSpec::none() {
  DisturbanceSpec d;
  d.kind = DisturbanceKind::none;
  d.rate.fill(0.0);
  d.sigma.fill(0.0);
  d.longitudinal_damping = d.lateral_damping = d.yaw_damping = 0.0;
  return d;
}

bool DisturbanceSpec::is_none() const {
  return kind == DisturbanceKind::none && longitudinal_damping == 0.0 &&
         lateral_damping == 0.0 && yaw_damping == 0.0;
}

void DisturbanceSpec::validate() const {
  for (std::size_t i = 0; i < rate.size(); ++i) {
    if (!(rate[i] >= 0) || !(sigma[i] >= 0)) {
      throw InvalidArgument("disturbance rate and sigma must be >= 0");
    }
  }
  if (!(longitudinal_damping >= 0) || !(lateral_damping >= 0) || !(yaw_damping >= 0)) {
    throw InvalidArgument("damping coefficients must be >= 0");
  }
}

void RateSpec::validate() const {
  if (!(low_hz > 0) || !(high_hz > 0) || !std::isfinite(low_hz) || !std::isfinite(high_hz)) {
    throw InvalidArgument("sensor rates must be positive");
  }
  if (high_hz > low_hz) throw InvalidArgument("high-fidelity rate cannot exceed the low rate");
  if (!(jitter >= 0) || !(jitter < 0.5)) throw InvalidArgument("jitter must lie in [0, 0.5)");
}

double OuProcess::step(double dt, double z) {
  if (rate_ == 0.0) {
    x_ += sigma_ * std::sqrt(dt) * z;
  } else {
    const double decay = std::exp(-rate_ * dt);
    x_ = x_ * decay + sigma_ * std::sqrt((1.0 - decay * decay) / (2.0 * rate_)) * z;
  }
  return x_;
}

double OuProcess::stationary_std() const {
  return rate_ == 0.0 ? INFINITY : sigma_ / std::sqrt(2.0 * rate_);
}

namespace {

DynamicState truth_step(const DynamicState& s, WheelCmd cmd, const KinematicParams& p,
                        const DisturbanceSpec& d, const StateVector& ou, double dk) {
  if (d.is_none()) return physics::g2_step(s, cmd, p, dk);
  return physics::rk4_step(s, dk, [&](const DynamicState& q) {
    DynamicRate r = physics::g2_derivative(q, cmd, p);
    r.xdot += ou[0];
    r.ydot += ou[1];
    r.thetadot += ou[2];
    r.udot += ou[3] - d.longitudinal_damping * q.u;
    r.vdot += ou[4] - d.lateral_damping * q.v;
    r.omegadot += ou[5] - d.yaw_damping * q.omega;
    return r;
  });
}

double jittered(Rng& rng, double period, double jitter) {
  return jitter > 0 ? period * (1.0 + rng.uniform(-jitter, jitter)) : period;
}

}  // namespace

Dataset simulate(const TrajectoryProfile& profile, const KinematicParams& params,
                 const SimSettings& settings, std::uint64_t seed) {
  profile.validate();
  params.validate();
  settings.rates.validate();
  settings.noise.validate();
  settings.disturbance.validate();
  if (!settings.initial.finite()) throw InvalidArgument("initial state must be finite");

  Rng master(seed);
  Rng timing(master.next_seed()), sensors(master.next_seed()), process(master.next_seed());

  const auto& n = settings.noise;
  const auto& dist = settings.disturbance;
  const double low_period = 1.0 / settings.rates.low_hz;
  const double high_period = 1.0 / settings.rates.high_hz;
  const double horizon = profile.total_duration();
  const bool ou_on = dist.kind == DisturbanceKind::ornstein_uhlenbeck;

  std::vector<OuProcess> ou;
  for (std::size_t i = 0; i < 6; ++i) ou.emplace_back(dist.rate[i], dist.sigma[i]);

  auto noisy_hifi = [&](const RobotState& s) {
    RobotState h = s;
    h.x += n.hifi_position * sensors.normal();
    h.y += n.hifi_position * sensors.normal();
    h.theta = wrap_angle(h.theta + n.hifi_heading * sensors.normal());
    h.vx += n.hifi_velocity * sensors.normal();
    h.vy += n.hifi_velocity * sensors.normal();
    h.omega += n.hifi_yaw_rate * sensors.normal();
    return h;
  };
  auto noisy_encoder = [&](WheelCmd c) {
    return WheelCmd{c.right + n.encoder * sensors.normal(), c.left + n.encoder * sensors.normal()};
  };

  Dataset out;
  DynamicState dyn = physics::to_dynamic(settings.initial);
  dyn.theta = wrap_angle(dyn.theta);
  double bias = 0.0;
  double t = 0.0;
  double hifi_due = 0.0;

  auto emit = [&](double dk, WheelCmd cmd, const StateVector& applied) {
    const RobotState truth = physics::to_robot(dyn);
    out.truth.push_back({t, truth, dyn.u, dyn.v, applied});
    SensorFrame f;
    f.t = t;
    f.dk = dk;
    f.encoder = noisy_encoder(cmd);
    bias += n.imu_bias_walk * std::sqrt(dk) * sensors.normal();
    f.imu_yaw_rate = truth.omega + bias + n.imu_yaw_rate * sensors.normal();
    if (t >= hifi_due) {
      f.hifi = noisy_hifi(truth);
      while (hifi_due <= t) hifi_due += jittered(timing, high_period, settings.rates.jitter);
    }
    out.sensors.push_back(f);
  };

  emit(low_period, profile.command_at(0.0), StateVector{});
  while (true) {
    const double dk = jittered(timing, low_period, settings.rates.jitter);
    if (t + dk > horizon + 1e-9) break;
    const WheelCmd cmd = profile.command_at(t);
    StateVector applied{};
    for (std::size_t i = 0; i < 6; ++i) applied[i] = ou_on ? ou[i].value() : 0.0;
    dyn = truth_step(dyn, cmd, params, dist, applied, dk);
    if (ou_on)
      for (auto& p : ou) p.step(dk, process.normal());
    t += dk;
    emit(dk, cmd, applied);
  }
  return out;
}

std::vector<RobotState> dead_reckon(const std::vector<SensorFrame>& frames,
                                    const KinematicParams& params, const RobotState& initial) {
  if (frames.empty()) throw InvalidArgument("dead reckoning needs at least one frame");
  std::vector<RobotState> out;
  out.reserve(frames.size());
  out.push_back(initial);
  for (std::size_t k = 1; k < frames.size(); ++k) {
    out.push_back(physics::g1_step(out.back(), frames[k].encoder, params, frames[k].dk));
  }
  return out;
}

void record(const Dataset& d, std::ostream& out) {
  if (d.sensors.size() != d.truth.size()) {
    throw InvalidArgument("sensor and truth streams differ in length");
  }
  out << kDatasetHeader << '\n';
  using io::format_double;
  std::vector<std::string> row;
  for (std::size_t k = 0; k < d.size(); ++k) {
    const SensorFrame& s = d.sensors[k];
    const RobotState& g = d.truth[k].state;
    row = {format_double(s.t), format_double(s.dk), format_double(s.encoder.right),
           format_double(s.encoder.left), format_double(s.imu_yaw_rate), s.hifi ? "1" : "0"};
    if (s.hifi) {
      for (double v : s.hifi->to_array()) row.push_back(format_double(v));
    } else {
      row.insert(row.end(), 6, "");
    }
    for (double v : g.to_array()) row.push_back(format_double(v));
    io::write_row(out, row);
  }
}

void record(const Dataset& d, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  record(d, f);
  if (!f) throw Error("write to '" + path + "' failed");
}

Dataset load(std::istream& in) {
  io::CsvReader r(in);
  const std::size_t t = r.column("t"), dk = r.column("dk"), wr = r.column("enc_wr"),
                    wl = r.column("enc_wl"), imu = r.column("imu_yawrate"),
                    flag = r.column("hifi_flag");
  const char* hifi_names[] = {"hifi_x", "hifi_y", "hifi_th", "hifi_vx", "hifi_vy", "hifi_w"};
  const char* true_names[] = {"true_x", "true_y", "true_th", "true_vx", "true_vy", "true_w"};
  std::size_t hc[6], tc[6];
  for (int i = 0; i < 6; ++i) {
    hc[i] = r.column(hifi_names[i]);
    tc[i] = r.column(true_names[i]);
  }
  Dataset d;
  while (r.next()) {
    SensorFrame s;
    s.t = r.number(t);
    s.dk = r.number(dk);
    if (!(s.dk > 0)) throw ParseError("dk must be positive", r.line());
    if (!d.sensors.empty() && !(s.t > d.sensors.back().t)) {
      throw ParseError("timestamps must be strictly increasing", r.line());
    }
    s.encoder = {r.number(wr), r.number(wl)};
    s.imu_yaw_rate = r.number(imu);
    const long long f = r.integer(flag);
    if (f != 0 && f != 1) throw ParseError("hifi_flag must be 0 or 1", r.line());
    if (f == 1) {
      StateVector h;
      for (int i = 0; i < 6; ++i) h[i] = r.number(hc[i]);
      s.hifi = RobotState::from_array(h);
    }
    StateVector g;
    for (int i = 0; i < 6; ++i) g[i] = r.number(tc[i]);
    GroundTruthFrame gt;
    gt.t = s.t;
    gt.state = RobotState::from_array(g);
    const DynamicState dyn = physics::to_dynamic(gt.state);
    gt.u_b = dyn.u;
    gt.v_b = dyn.v;
    d.sensors.push_back(s);
    d.truth.push_back(gt);
  }
  return d;
}

Dataset load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open '" + path + "'");
  return load(f);
}

}  // namespace mfrpinp::sim
