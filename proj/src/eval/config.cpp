#include "mfrpinp/eval/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"
#include "mfrpinp/error.hpp"
#include "mfrpinp/eval/metrics.hpp"
#include "mfrpinp/io/csv.hpp"

namespace mfrpinp::eval {

namespace {

using physics::StateVector;

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(std::string_view s) {
  s = trim(s);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ConfigError("expected a number, got '" + std::string(s) + "'");
  return v;
}

template <class T>
T to_integer(std::string_view s) {
  s = trim(s);
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ConfigError("expected a non-negative integer, got '" + std::string(s) + "'");
  return v;
}

bool to_bool(std::string_view s) {
  s = trim(s);
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("expected true or false, got '" + std::string(s) + "'");
}

StateVector to_vector(std::string_view s) {
  StateVector v{};
  std::size_t i = 0;
  while (true) {
    const auto comma = s.find(',');
    if (i == v.size()) throw ConfigError("expected six comma-separated numbers");
    v[i++] = to_double(s.substr(0, comma));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  if (i != v.size()) throw ConfigError("expected six comma-separated numbers");
  return v;
}

std::string text(double v) { return io::format_double(v); }
std::string text(bool v) { return v ? "true" : "false"; }
std::string text(const StateVector& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + io::format_double(v[i]);
  return s;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Accessors are generic lambdas returning a member reference.
template <class Ref>
Field real(std::string key, Ref ref) {
  return {std::move(key), [ref](RunConfig& c, std::string_view v) { ref(c) = to_double(v); },
          [ref](const RunConfig& c) { return text(ref(c)); }};
}
template <class Ref>
Field count(std::string key, Ref ref) {
  return {std::move(key),
          [ref](RunConfig& c, std::string_view v) {
            using T = std::remove_cvref_t<decltype(ref(c))>;
            ref(c) = to_integer<T>(v);
          },
          [ref](const RunConfig& c) { return std::to_string(ref(c)); }};
}
template <class Ref>
Field flag(std::string key, Ref ref) {
  return {std::move(key), [ref](RunConfig& c, std::string_view v) { ref(c) = to_bool(v); },
          [ref](const RunConfig& c) { return text(ref(c)); }};
}
template <class Ref>
Field vec(std::string key, Ref ref) {
  return {std::move(key), [ref](RunConfig& c, std::string_view v) { ref(c) = to_vector(v); },
          [ref](const RunConfig& c) { return text(ref(c)); }};
}
template <class Ref>
Field word(std::string key, Ref ref) {
  return {std::move(key),
          [ref](RunConfig& c, std::string_view v) { ref(c) = std::string(trim(v)); },
          [ref](const RunConfig& c) { return ref(c); }};
}

#define M(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      count("run.seed", M(seed)),
      word("run.scenario", M(scenario)),
      word("run.output", M(output)),
      real("run.duration", M(duration)),
      count("run.cycles", M(cycles)),

      real("physics.mass", M(physics.mass)),
      real("physics.wheel_radius", M(physics.wheel_radius)),
      real("physics.track", M(physics.track)),
      real("physics.inertia", M(physics.inertia)),
      real("physics.traction", M(physics.traction)),
      real("physics.lateral", M(physics.lateral)),
      real("physics.actuator_limit", M(physics.actuator_limit)),

      real("sim.low_hz", M(sim.rates.low_hz)),
      real("sim.high_hz", M(sim.rates.high_hz)),
      real("sim.jitter", M(sim.rates.jitter)),
      real("sim.noise_encoder", M(sim.noise.encoder)),
      real("sim.noise_imu_yaw_rate", M(sim.noise.imu_yaw_rate)),
      real("sim.noise_imu_bias_walk", M(sim.noise.imu_bias_walk)),
      real("sim.noise_hifi_position", M(sim.noise.hifi_position)),
      real("sim.noise_hifi_heading", M(sim.noise.hifi_heading)),
      real("sim.noise_hifi_velocity", M(sim.noise.hifi_velocity)),
      real("sim.noise_hifi_yaw_rate", M(sim.noise.hifi_yaw_rate)),
      {"sim.disturbance",
       [](RunConfig& c, std::string_view v) {
         c.sim.disturbance.kind =
             to_bool(v) ? sim::DisturbanceKind::ornstein_uhlenbeck : sim::DisturbanceKind::none;
       },
       [](const RunConfig& c) {
         return text(c.sim.disturbance.kind == sim::DisturbanceKind::ornstein_uhlenbeck);
       }},
      vec("sim.disturbance_rate", M(sim.disturbance.rate)),
      vec("sim.disturbance_sigma", M(sim.disturbance.sigma)),
      real("sim.longitudinal_damping", M(sim.disturbance.longitudinal_damping)),
      real("sim.lateral_damping", M(sim.disturbance.lateral_damping)),
      real("sim.yaw_damping", M(sim.disturbance.yaw_damping)),

      real("ukf.alpha", M(ut.alpha)),
      real("ukf.beta", M(ut.beta)),
      real("ukf.kappa", M(ut.kappa)),
      vec("ukf.process_noise", M(process_noise)),
      vec("ukf.initial_sigma", M(initial_sigma)),
      flag("ukf.use_wheel", M(use_wheel)),
      flag("ukf.use_imu", M(use_imu)),
      flag("ukf.use_hifi", M(use_hifi)),

      count("model.width", M(loop.model.width)),
      count("model.depth", M(loop.model.depth)),
      count("model.latent", M(loop.model.latent)),
      count("model.key_dim", M(loop.model.key_dim)),
      real("model.latent_floor", M(loop.model.latent_floor)),
      real("model.variance_floor", M(loop.model.variance_floor)),
      count("model.context_size", M(loop.model.context_size)),
      count("model.min_context", M(loop.model.min_context)),
      flag("model.deterministic", M(loop.model.deterministic)),
      vec("model.low_scale", M(loop.model.low_scale)),
      vec("model.res_scale", M(loop.model.res_scale)),
      vec("model.fallback_sigma", M(loop.model.fallback_sigma)),
      count("model.init_seed", M(loop.model.init_seed)),

      count("train.low_batch", M(loop.train.low_batch)),
      count("train.high_batch", M(loop.train.high_batch)),
      count("train.low_capacity", M(loop.train.low_capacity)),
      count("train.high_capacity", M(loop.train.high_capacity)),
      count("train.train_period", M(loop.train.train_period)),
      count("train.sync_period", M(loop.train.sync_period)),
      count("train.hifi_period", M(loop.train.hifi_period)),
      real("train.learning_rate", M(loop.train.adam.learning_rate)),
      real("train.weight_decay", M(loop.train.adam.weight_decay)),
      real("train.beta1", M(loop.train.adam.beta1)),
      real("train.beta2", M(loop.train.adam.beta2)),
      real("train.epsilon", M(loop.train.adam.epsilon)),

      real("loop.alpha", M(loop.alpha)),
      count("loop.conformal_window", M(loop.conformal_window)),
      count("loop.refit_period", M(loop.refit_period)),
      count("loop.warmup_frames", M(loop.warmup_frames)),
      count("loop.label_delay", M(loop.label_delay)),
      count("loop.iterations", M(loop.iterations)),
      count("loop.checkpoint_period", M(loop.checkpoint_period)),
      flag("loop.concurrent", M(loop.concurrent)),
  };
  return f;
}

#undef M

const Field& find(std::string_view key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  key = trim(key);
  const Field& f = find(key);
  try {
    f.set(*this, value);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

void RunConfig::apply(std::istream& in) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(n) + ": expected 'key = value'");
    try {
      set(s.substr(0, eq), s.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(n) + ": " + e.what());
    }
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  apply(in);
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

std::string RunConfig::hash() const { return sha256_hex(to_text()); }

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> k;
  for (const auto& f : fields()) k.push_back(f.key);
  return k;
}

void RunConfig::validate() const {
  try {
    physics.validate();
    sim.noise.validate();
    sim.disturbance.validate();
    sim.rates.validate();
    filter().validate();
    loop_config().validate();
    if (!(duration > 0.0)) throw InvalidArgument("run.duration must be positive");
    if (cycles < 1) throw InvalidArgument("run.cycles must be at least 1");
    profile();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

sim::TrajectoryProfile RunConfig::profile() const {
  return sim::profile_by_name(scenario, physics, duration, cycles, seed);
}

ukf::UkfConfig RunConfig::filter() const {
  ukf::UkfConfig f = ukf::UkfConfig::from_noise(sim.noise, physics);
  f.ut = ut;
  f.process_noise = process_noise;
  f.initial_sigma = initial_sigma;
  f.use_wheel = use_wheel;
  f.use_imu = use_imu;
  f.use_hifi = use_hifi;
  return f;
}

learn::LoopConfig RunConfig::loop_config() const {
  learn::LoopConfig c = loop;
  c.warmup_sim = sim;
  c.warmup_sim.initial = {};
  c.warmup_filter = filter();
  return c;
}

void write_manifest(const std::filesystem::path& dir, const RunConfig& config,
                    const std::map<std::string, std::string>& inputs,
                    const std::vector<std::string>& command) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "config.txt");
    out << config.to_text();
  }
  nlohmann::ordered_json j;
  j["version"] = kVersion;
  j["compiler"] = std::string("g++ ") + __VERSION__;
  j["seed"] = config.seed;
  j["config_hash"] = config.hash();
  j["config_file"] = "config.txt";
  j["inputs"] = inputs;
  j["command"] = command;
  std::ofstream out(dir / "manifest.json");
  out << j.dump(2) << '\n';
  if (!out) throw Error("cannot write manifest in " + dir.string());
}

}  // namespace mfrpinp::eval
