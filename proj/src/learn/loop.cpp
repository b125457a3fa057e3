#include "mfrpinp/learn/loop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <istream>
#include <memory>
#include <mutex>
#include <ostream>
#include <thread>

#include "mfrpinp/error.hpp"
#include "mfrpinp/io/csv.hpp"

namespace mfrpinp::learn {

namespace {

using io::format_double;
using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kWarmupSalt = 0x9e3779b97f4a7c15ULL;

BodyForces forces_at(const RobotState& s, WheelCmd cmd, const KinematicParams& p) {
  const physics::DynamicState d = physics::to_dynamic(s);
  return physics::body_forces(d.u, d.v, cmd, p);
}

struct Pending {
  std::size_t iteration = 0;
  WheelCmd cmd;
  double dk = 0.0;
  BodyForces forces;
  RobotState mu_low;
  np::GaussianPrediction high;
  double t = 0.0;
};

// Everything the inference side owns; training reaches it through `train`.
class LoopState {
 public:
  LoopState(const Scenario& s, const KinematicParams& p, const LoopConfig& c)
      : s_(s),
        p_(p),
        c_(c),
        cal_(c.conformal_window, c.alpha, c.refit_period) {}

  std::size_t iterations() const {
    const std::size_t avail = s_.size() - 1;
    return c_.iterations == 0 ? avail : std::min(c_.iterations, avail);
  }

  /// Inference plus bookkeeping for iteration i. Buffer writes go through
  /// `push`, which the caller may guard.
  template <class Push>
  void step(std::size_t i, const MfrPinpModel& model, RunResult& out, Push&& push) {
    const std::size_t k = i;
    const sim::SensorFrame& frame = s_.sensors[k + 1];
    const std::size_t d = c_.label_delay;
    const std::size_t seed_index = k >= d ? k - d : 0;
    RobotState x_high = s_.labels[seed_index];
    for (std::size_t j = seed_index + 1; j <= k; ++j)
      x_high = physics::g2_step(x_high, s_.sensors[j].encoder, p_, s_.sensors[j].dk);

    const std::vector<np::LowElement> low(low_window_.begin(), low_window_.end());
    const std::vector<np::ResElement> res(res_window_.begin(), res_window_.end());
    np::InferenceInput in;
    in.low_context = low;
    in.res_context = res;
    in.cmd = frame.encoder;
    in.dk = frame.dk;
    in.x_low = s_.dead_reckoning[k];
    in.x_high = x_high;

    const auto t0 = Clock::now();
    const np::InferenceOutput o = np::infer_step(model, in, p_, cal_.current().q);
    const double latency = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();

    PredictionRow row;
    row.t = frame.t;
    row.mu = o.high.mu;
    row.q = cal_.current().q;
    for (std::size_t j = 0; j < kStateDim; ++j) {
      row.sigma_raw[j] = std::sqrt(o.high.var[j]);
      if (!std::isfinite(row.mu[j]) || !std::isfinite(row.sigma_raw[j]))
        throw NumericError("non-finite prediction");
    }
    row.sigma = o.sigma_calibrated;
    row.fallback = o.fallback;
    row.latency_ms = latency;
    out.predictions.push_back(row);
    out.labels.push_back(s_.labels[k + 1]);
    out.dead_reckoning.push_back(s_.dead_reckoning[k + 1]);

    const BodyForces forces = forces_at(x_high, frame.encoder, p_);
    const RobotState mu_low = RobotState::from_array(o.low.mu);
    low_window_.push_back({frame.encoder, s_.dead_reckoning[k + 1]});
    res_window_.push_back({frame.encoder, forces, mu_low});
    if (low_window_.size() > c_.model.context_size) {
      low_window_.pop_front();
      res_window_.pop_front();
    }
    pending_.push_back({i, frame.encoder, frame.dk, forces, mu_low, o.high, frame.t});

    const TransitionLow tl{frame.encoder, s_.dead_reckoning[k], frame.dk,
                           s_.dead_reckoning[k + 1]};
    std::optional<TransitionHigh> th;
    std::size_t labelled = 0;
    if (k + 1 >= d + 1) {
      // the label of frame k + 1 - d closes prediction k - d
      labelled = k - d;
      while (!pending_.empty() && pending_.front().iteration < labelled) pending_.pop_front();
      if (!pending_.empty() && pending_.front().iteration == labelled) {
        const Pending pd = pending_.front();
        pending_.pop_front();
        const RobotState& label = s_.labels[labelled + 1];
        const RobotState& before = s_.labels[labelled];
        StateVector y = np::align_heading(label, pd.high.mu[2]).to_array();
        cal_.observe(conformal::score(y, pd.high), pd.t);
        th = TransitionHigh{pd.cmd,
                            pd.forces,
                            pd.dk,
                            s_.dead_reckoning[labelled],
                            s_.dead_reckoning[labelled + 1],
                            label,
                            physics::g2_step(before, pd.cmd, p_, pd.dk),
                            pd.mu_low};
      }
    }
    if (push(tl, th, labelled)) ++out.high_pushes;
  }

 private:
  static constexpr std::size_t kStateDim = physics::kStateDim;
  const Scenario& s_;
  const KinematicParams& p_;
  const LoopConfig& c_;
  conformal::Calibrator cal_;
  std::deque<np::LowElement> low_window_;
  std::deque<np::ResElement> res_window_;
  std::deque<Pending> pending_;
};

void save_checkpoint(const MfrPinpModel& m, const std::optional<std::filesystem::path>& dir,
                     const std::string& name) {
  if (!dir) return;
  std::filesystem::create_directories(*dir);
  m.save((*dir / name).string());
}

std::string iteration_name(std::size_t i) {
  std::string n = std::to_string(i);
  return "iter_" + std::string(n.size() < 6 ? 6 - n.size() : 0, '0') + n + ".ckpt";
}

RunResult run_serial(const Scenario& s, const KinematicParams& p, const LoopConfig& c,
                     std::uint64_t seed, const std::optional<std::filesystem::path>& dir) {
  RunResult out;
  MfrPinpModel model(c.model);
  Buffers buffers(c.train);
  prefill(buffers, p, c, seed ^ kWarmupSalt);
  Rng rng(seed);
  ad::AdamState adam(c.train.adam);
  LoopState state(s, p, c);
  std::size_t phases = 0;
  auto push = [&](const TransitionLow& tl, const std::optional<TransitionHigh>& th,
                  std::size_t hi) { return buffer_update(buffers, c.train, tl, th, hi); };

  const std::size_t n = state.iterations();
  for (std::size_t i = 0; i < n; ++i) {
    try {
      state.step(i, model, out, push);
      if (c.train.train_period != 0 && (i + 1) % c.train.train_period == 0) {
        if (auto rec = train_phase(model, buffers, c.train, adam, p, rng)) {
          rec->iteration = i;
          out.losses.push_back(*rec);
          if (++phases % c.train.sync_period == 0) {
            model.sync_frozen();
            ++out.syncs;
          }
        }
      }
      if (c.checkpoint_period != 0 && (i + 1) % c.checkpoint_period == 0)
        save_checkpoint(model, dir, iteration_name(i + 1));
    } catch (const Error& e) {
      ++out.skipped;
      out.errors.push_back("iteration " + std::to_string(i) + ": " + e.what());
    }
  }
  save_checkpoint(model, dir, "final.ckpt");
  out.model = std::move(model);
  return out;
}

RunResult run_concurrent(const Scenario& s, const KinematicParams& p, const LoopConfig& c,
                         std::uint64_t seed, const std::optional<std::filesystem::path>& dir) {
  RunResult out;
  Buffers buffers(c.train);
  prefill(buffers, p, c, seed ^ kWarmupSalt);
  auto published = std::make_shared<const MfrPinpModel>(c.model);
  std::mutex mu;
  std::condition_variable cv;
  std::size_t served = 0;  // inference iterations completed
  bool done = false;
  std::vector<LossRecord> losses;
  std::size_t syncs = 0;

  // the learner trains its own copy and publishes whole snapshots
  std::thread learner([&] {
    MfrPinpModel model(c.model);
    Rng rng(seed);
    ad::AdamState adam(c.train.adam);
    std::size_t phases = 0;
    if (c.train.train_period == 0) return;
    while (true) {
      std::optional<TrainingWindows> w;
      std::size_t at = 0;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return done || served >= (phases + 1) * c.train.train_period; });
        if (done && served < (phases + 1) * c.train.train_period) return;
        w = sample_windows(buffers, c.train, model.config().context_size, rng);
        at = served;
      }
      ++phases;
      if (!w) continue;
      try {
        LossRecord rec = train_on(model, *w, adam, p, rng);
        rec.iteration = at - 1;
        bool synced = false;
        if (phases % c.train.sync_period == 0) {
          model.sync_frozen();
          synced = true;
        }
        auto snap = std::make_shared<const MfrPinpModel>(model);
        std::lock_guard lock(mu);
        losses.push_back(rec);
        syncs += synced;
        published = std::move(snap);
      } catch (const Error&) {
      }
    }
  });

  LoopState state(s, p, c);
  auto push = [&](const TransitionLow& tl, const std::optional<TransitionHigh>& th,
                  std::size_t hi) {
    std::lock_guard lock(mu);
    return buffer_update(buffers, c.train, tl, th, hi);
  };
  const std::size_t n = state.iterations();
  for (std::size_t i = 0; i < n; ++i) {
    std::shared_ptr<const MfrPinpModel> snap;
    {
      std::lock_guard lock(mu);
      snap = published;
    }
    try {
      state.step(i, *snap, out, push);
      if (c.checkpoint_period != 0 && (i + 1) % c.checkpoint_period == 0)
        save_checkpoint(*snap, dir, iteration_name(i + 1));
    } catch (const Error& e) {
      ++out.skipped;
      out.errors.push_back("iteration " + std::to_string(i) + ": " + e.what());
    }
    {
      std::lock_guard lock(mu);
      served = i + 1;
    }
    cv.notify_all();
  }
  {
    std::lock_guard lock(mu);
    done = true;
  }
  cv.notify_all();
  learner.join();
  out.losses = std::move(losses);
  out.syncs = syncs;
  save_checkpoint(*published, dir, "final.ckpt");
  out.model = *published;
  return out;
}

StateVector parse_state(const io::CsvReader& r, const std::array<std::size_t, 6>& cols) {
  StateVector s{};
  for (std::size_t j = 0; j < s.size(); ++j) s[j] = r.number(cols[j]);
  return s;
}

std::array<std::size_t, 6> columns(const io::CsvReader& r, const std::string& prefix) {
  std::array<std::size_t, 6> c{};
  for (std::size_t j = 0; j < c.size(); ++j) c[j] = r.column(prefix + kStateColumns[j]);
  return c;
}

bool has_columns(const io::CsvReader& r, const std::string& prefix) {
  return std::all_of(std::begin(kStateColumns), std::end(kStateColumns),
                     [&](const char* n) { return r.has_column(prefix + n); });
}

}  // namespace

Scenario make_scenario(const std::vector<sim::SensorFrame>& sensors, const KinematicParams& p,
                       const ukf::UkfConfig& filter) {
  return make_scenario(sensors, ukf::run_fusion(sensors, p, filter).states, p);
}

Scenario make_scenario(const std::vector<sim::SensorFrame>& sensors,
                       std::vector<RobotState> labels, const KinematicParams& p) {
  if (sensors.empty()) throw InvalidArgument("scenario needs frames");
  if (labels.size() != sensors.size())
    throw InvalidArgument("label count " + std::to_string(labels.size()) +
                          " does not match frame count " + std::to_string(sensors.size()));
  Scenario s;
  s.sensors = sensors;
  s.dead_reckoning = sim::dead_reckon(sensors, p, labels.front());
  s.labels = std::move(labels);
  return s;
}

void LoopConfig::validate() const {
  model.validate();
  train.validate();
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
  if (conformal_window < conformal::kMinScores)
    throw InvalidArgument("conformal window must hold at least 10 scores");
  if (refit_period == 0) throw InvalidArgument("refit period must be positive");
  warmup_sim.noise.validate();
  warmup_sim.disturbance.validate();
  warmup_sim.rates.validate();
  warmup_filter.validate();
}

void prefill(Buffers& buffers, const KinematicParams& p, const LoopConfig& config,
             std::uint64_t seed) {
  if (config.warmup_frames == 0) return;
  const double duration =
      static_cast<double>(config.warmup_frames + 1) / config.warmup_sim.rates.low_hz + 2.0;
  sim::Dataset d =
      sim::simulate(sim::random_teleop_profile(p, duration, seed), p, config.warmup_sim, seed);
  d.sensors.resize(std::min(d.sensors.size(), config.warmup_frames + 1));
  const Scenario s = make_scenario(d.sensors, p, config.warmup_filter);
  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    const sim::SensorFrame& f = s.sensors[k + 1];
    const TransitionLow tl{f.encoder, s.dead_reckoning[k], f.dk, s.dead_reckoning[k + 1]};
    // before any training the low decoder mean is the g1 step itself
    const TransitionHigh th{f.encoder,
                            forces_at(s.labels[k], f.encoder, p),
                            f.dk,
                            s.dead_reckoning[k],
                            s.dead_reckoning[k + 1],
                            s.labels[k + 1],
                            physics::g2_step(s.labels[k], f.encoder, p, f.dk),
                            physics::g1_step(s.dead_reckoning[k], f.encoder, p, f.dk)};
    buffer_update(buffers, config.train, tl, th, k);
  }
}

RunResult run_loop(const Scenario& scenario, const KinematicParams& p, const LoopConfig& config,
                   std::uint64_t seed, const std::optional<std::filesystem::path>& checkpoint_dir) {
  config.validate();
  if (scenario.size() < 2) throw InvalidArgument("scenario needs at least two frames");
  if (scenario.labels.size() != scenario.size() || scenario.dead_reckoning.size() != scenario.size())
    throw InvalidArgument("scenario streams are not aligned");
  return config.concurrent ? run_concurrent(scenario, p, config, seed, checkpoint_dir)
                           : run_serial(scenario, p, config, seed, checkpoint_dir);
}

std::string predictions_header() {
  std::string h = "t";
  for (const char* prefix : {"", "sig_", "raw_", "q_"})
    for (const char* c : kStateColumns) h += std::string(",") + prefix + c;
  return h + ",fallback";
}

void write_predictions(const std::vector<PredictionRow>& rows, std::ostream& out) {
  out << predictions_header() << '\n';
  std::vector<std::string> f;
  for (const auto& r : rows) {
    f.clear();
    f.push_back(format_double(r.t));
    for (const StateVector* v : {&r.mu, &r.sigma, &r.sigma_raw, &r.q})
      for (double x : *v) f.push_back(format_double(x));
    f.push_back(r.fallback ? "1" : "0");
    io::write_row(out, f);
  }
}

void write_timing(const std::vector<PredictionRow>& rows, std::ostream& out) {
  out << "t,latency_ms\n";
  for (const auto& r : rows) io::write_row(out, {format_double(r.t), format_double(r.latency_ms)});
}

void write_losses(const std::vector<LossRecord>& rows, std::ostream& out) {
  out << "iter,loss,elbo_low,elbo_res,kl_low,kl_res\n";
  for (const auto& r : rows)
    io::write_row(out, {std::to_string(r.iteration), format_double(r.loss),
                        format_double(r.elbo_low), format_double(r.elbo_res),
                        format_double(r.kl_low), format_double(r.kl_res)});
}

PredictionLog read_predictions(std::istream& in) {
  io::CsvReader r(in);
  const std::size_t tc = r.column("t");
  const auto mc = columns(r, "");
  PredictionLog log;
  log.has_sigma = has_columns(r, "sig_");
  const bool raw = has_columns(r, "raw_");
  std::array<std::size_t, 6> sc{}, rc{};
  if (log.has_sigma) sc = columns(r, "sig_");
  if (raw) rc = columns(r, "raw_");
  while (r.next()) {
    log.t.push_back(r.number(tc));
    log.mu.push_back(parse_state(r, mc));
    if (log.has_sigma) log.sigma.push_back(parse_state(r, sc));
    if (raw) log.sigma_raw.push_back(parse_state(r, rc));
  }
  if (!raw) log.sigma_raw = log.sigma;
  return log;
}

void write_baseline(const Scenario& s, std::size_t iterations, std::ostream& out) {
  out << "t,x,y,th,vx,vy,w\n";
  const std::size_t n = iterations == 0 ? s.size() - 1 : std::min(iterations, s.size() - 1);
  std::vector<std::string> f;
  for (std::size_t k = 0; k < n; ++k) {
    f.assign(1, format_double(s.sensors[k + 1].t));
    for (double x : s.dead_reckoning[k + 1].to_array()) f.push_back(format_double(x));
    io::write_row(out, f);
  }
}

}  // namespace mfrpinp::learn
