#include "mfrpinp/np/model.hpp"

#include <algorithm>
#include <cmath>

#include "mfrpinp/ad/checkpoint.hpp"
#include "mfrpinp/ad/losses.hpp"
#include "mfrpinp/error.hpp"

namespace mfrpinp::np {

using physics::kStateDim;
using physics::wrap_angle;

namespace {

constexpr std::size_t kHeadWidth = 2 * kResidualFeatures;
const std::string kFrozenPrefix = "frozen/";
const std::string kFrozenVersionKey = "meta/frozen_version";

std::string layer(const std::string& prefix, std::size_t i) {
  return prefix + "/l" + std::to_string(i);
}

ad::Tensor xavier(std::size_t in, std::size_t out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  ad::Tensor w({in, out});
  for (double& v : w.storage()) v = rng.uniform(-a, a);
  return w;
}

void add_mlp(ad::ParameterSet& p, const std::string& prefix, std::size_t in, std::size_t hidden,
             std::size_t out, std::size_t layers, Rng& rng) {
  for (std::size_t i = 0; i < layers; ++i) {
    const std::size_t a = i == 0 ? in : hidden;
    const std::size_t b = i + 1 == layers ? out : hidden;
    p.add(layer(prefix, i) + "/W", xavier(a, b, rng));
    p.add(layer(prefix, i) + "/b", ad::Tensor({b}));
  }
}

void add_head(ad::ParameterSet& p, const std::string& prefix, std::size_t in) {
  p.add(prefix + "/head/W", ad::Tensor({in, kHeadWidth}));
  p.add(prefix + "/head/b", ad::Tensor({kHeadWidth}));
}

ad::Tensor row(const StateVector& v) { return ad::Tensor::vector({v.begin(), v.end()}); }

ad::Tensor squared_row(const StateVector& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * v[i];
  return ad::Tensor::vector(std::move(out));
}

StateVector first_row(const Var& v) {
  StateVector out{};
  std::copy_n(v.value().data().begin(), kStateDim, out.begin());
  return out;
}

}  // namespace

void NpConfig::validate() const {
  if (width == 0 || depth == 0 || latent == 0 || key_dim == 0)
    throw InvalidArgument("network sizes must be positive");
  if (!(latent_floor > 0.0) || !(variance_floor > 0.0))
    throw InvalidArgument("variance floors must be positive");
  if (context_size == 0 || min_context == 0 || min_context > context_size)
    throw InvalidArgument("need 0 < min_context <= context_size");
  for (std::size_t i = 0; i < kStateDim; ++i) {
    if (!(low_scale[i] > 0.0) || !(res_scale[i] > 0.0) || !(fallback_sigma[i] > 0.0))
      throw InvalidArgument("output scales must be positive");
  }
}

GaussianPrediction fuse(const GaussianPrediction& low, const GaussianPrediction& res) {
  GaussianPrediction out;
  for (std::size_t i = 0; i < kStateDim; ++i) {
    out.mu[i] = low.mu[i] + res.mu[i];
    out.var[i] = low.var[i] + res.var[i];
  }
  return out;
}

MfrPinpModel::MfrPinpModel(NpConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t W = config_.width, D = config_.depth, L = config_.latent,
                    K = config_.key_dim;
  Rng rng(config_.init_seed);
  add_mlp(params_, "low/embed", kLowFeatures, W, W, D, rng);
  params_.add("low/attn/q", xavier(W, K, rng));
  params_.add("low/attn/k", xavier(W, K, rng));
  params_.add("low/attn/v", xavier(W, W, rng));
  add_mlp(params_, "low/latent", W, W, 2 * L, D, rng);
  add_mlp(params_, "low/key", 2, K, K, D, rng);
  add_mlp(params_, "low/query", kStepFeatures, K, K, D, rng);
  add_mlp(params_, "low/dec", K + L + W + kStateFeatures, W, W, D, rng);
  add_head(params_, "low/dec", W);

  add_mlp(params_, "res/embed", kResFeatures, W, W, D, rng);
  add_mlp(params_, "res/latent", W + L, W, 2 * L, D, rng);
  add_mlp(params_, "res/query", kStepFeatures, K, K, D, rng);
  add_mlp(params_, "res/dec", K + L + kResidualFeatures, W, W, D, rng);
  add_head(params_, "res/dec", W);
  sync_frozen();
}

void MfrPinpModel::sync_frozen() {
  frozen_.copy_prefix_from(params_, "low/dec/");
  frozen_.set_version(params_.version());
}

ad::ParameterSet MfrPinpModel::to_checkpoint() const {
  ad::ParameterSet out = params_;
  for (const auto& [name, t] : frozen_) out.add(kFrozenPrefix + name, t);
  out.add(kFrozenVersionKey, ad::Tensor::scalar(static_cast<double>(frozen_.version())));
  out.set_version(params_.version());
  return out;
}

void MfrPinpModel::from_checkpoint(const ad::ParameterSet& ckpt) {
  ad::ParameterSet live, frozen;
  for (const auto& [name, t] : ckpt) {
    if (name == kFrozenVersionKey) continue;
    const bool is_frozen = name.compare(0, kFrozenPrefix.size(), kFrozenPrefix) == 0;
    const std::string key = is_frozen ? name.substr(kFrozenPrefix.size()) : name;
    const ad::ParameterSet& ref = is_frozen ? frozen_ : params_;
    if (!ref.contains(key)) throw ConfigError("checkpoint has unknown parameter '" + name + "'");
    if (ref.at(key).shape() != t.shape())
      throw ConfigError("checkpoint shape mismatch for '" + name + "'");
    (is_frozen ? frozen : live).add(key, t);
  }
  if (live.size() != params_.size() || frozen.size() != frozen_.size() ||
      !ckpt.contains(kFrozenVersionKey))
    throw ConfigError("checkpoint is missing parameters");
  live.set_version(ckpt.version());
  frozen.set_version(static_cast<std::uint64_t>(ckpt.at(kFrozenVersionKey).item()));
  params_ = std::move(live);
  frozen_ = std::move(frozen);
}

void MfrPinpModel::save(const std::string& path) const {
  ad::save_checkpoint(path, to_checkpoint());
}

void MfrPinpModel::load(const std::string& path) { from_checkpoint(ad::load_checkpoint(path)); }

Graph::Graph(ad::Tape& tape, const MfrPinpModel& model, bool trainable)
    : tape_(tape),
      cfg_(model.config()),
      live_(tape, model.params(), trainable),
      frozen_(tape, model.frozen(), false) {}

Var Graph::mlp(ad::ParamBinder& p, const std::string& prefix, Var x, std::size_t layers,
               bool activate_last) {
  for (std::size_t i = 0; i < layers; ++i) {
    x = ad::add_bias(ad::matmul(x, p(layer(prefix, i) + "/W")), p(layer(prefix, i) + "/b"));
    if (i + 1 < layers || activate_last) x = ad::tanh(x);
  }
  return x;
}

Var scaled_dot_attention(Var q, Var k, Var v, double scale) {
  const Var w = ad::softmax(ad::scale(ad::matmul(q, ad::transpose(k)), scale));
  return ad::matmul(w, v);
}

Var wheel_columns(Var low_features) { return ad::slice(low_features, 2, 0, 2); }

Graph::Encoded Graph::encode_low(Var features) {
  const Var e = mlp(live_, "low/embed", features, cfg_.depth);
  const Var q = ad::matmul(e, live_("low/attn/q"));
  const Var k = ad::matmul(e, live_("low/attn/k"));
  const Var v = ad::matmul(e, live_("low/attn/v"));
  const Var h =
      e + scaled_dot_attention(q, k, v, 1.0 / std::sqrt(static_cast<double>(cfg_.key_dim)));
  return {h, ad::mean(h, 1)};
}

Latent Graph::latent_low(Var pooled) {
  const Var out = mlp(live_, "low/latent", pooled, cfg_.depth);
  return {ad::slice(out, 1, 0, cfg_.latent),
          ad::add_scalar(ad::softplus(ad::slice(out, 1, cfg_.latent, cfg_.latent)),
                         cfg_.latent_floor)};
}

Var Graph::keys(Var wheel_features) { return mlp(live_, "low/key", wheel_features, cfg_.depth); }

Var Graph::low_query(Var step) { return mlp(live_, "low/query", step, cfg_.depth); }

Var Graph::res_query(Var step) { return mlp(live_, "res/query", step, cfg_.depth); }

Var Graph::cross_attention(Var queries, Var keys, Var values) {
  return scaled_dot_attention(queries, keys, values,
                              1.0 / std::sqrt(static_cast<double>(cfg_.key_dim)));
}

PredictionVars Graph::decode_low(ad::ParamBinder& dec, Var query, Var z, Var attended,
                                 Var prior_features, Var prior) {
  const std::size_t T = query.shape()[1];
  const Var in = ad::concat({query, ad::expand(z, 1, T), attended, prior_features});
  const Var h = mlp(dec, "low/dec", in, cfg_.depth, true);
  const Var head = ad::add_bias(ad::matmul(h, dec("low/dec/head/W")), dec("low/dec/head/b"));
  const Var offset = ad::slice(head, 2, 0, kStateDim);
  const Var raw = ad::slice(head, 2, kStateDim, kStateDim);
  const Var mu = prior + ad::mul_rows(offset, constant(row(cfg_.low_scale)));
  const Var var = ad::add_scalar(
      ad::mul_rows(ad::softplus(raw), constant(squared_row(cfg_.low_scale))), cfg_.variance_floor);
  return {mu, var};
}

Var Graph::encode_res(Var features) {
  return ad::mean(mlp(live_, "res/embed", features, cfg_.depth), 1);
}

Latent Graph::latent_high(Var pooled, Var z_low) {
  const Var out = mlp(live_, "res/latent", ad::concat({pooled, z_low}), cfg_.depth);
  return {ad::slice(out, 1, 0, cfg_.latent),
          ad::add_scalar(ad::softplus(ad::slice(out, 1, cfg_.latent, cfg_.latent)),
                         cfg_.latent_floor)};
}

PredictionVars Graph::decode_res(Var query, Var z_high, Var residual_features, Var residual) {
  const std::size_t T = query.shape()[1];
  const Var in = ad::concat({query, ad::expand(z_high, 1, T), residual_features});
  const Var h = mlp(live_, "res/dec", in, cfg_.depth, true);
  const Var head = ad::add_bias(ad::matmul(h, live_("res/dec/head/W")), live_("res/dec/head/b"));
  const Var offset = ad::slice(head, 2, 0, kStateDim);
  const Var raw = ad::slice(head, 2, kStateDim, kStateDim);
  const Var mu = residual + ad::mul_rows(offset, constant(row(cfg_.res_scale)));
  const Var var = ad::add_scalar(
      ad::mul_rows(ad::softplus(raw), constant(squared_row(cfg_.res_scale))), cfg_.variance_floor);
  return {mu, var};
}

Var Graph::sample(const Latent& q, Rng* rng) {
  if (rng == nullptr) return q.mu;
  return ad::reparameterized_sample(q.mu, q.var, *rng);
}

RobotState align_heading(const RobotState& label, double reference) {
  RobotState out = label;
  out.theta = reference + wrap_angle(label.theta - reference);
  return out;
}

StateVector state_diff(const RobotState& a, const RobotState& b) {
  const StateVector x = a.to_array(), y = b.to_array();
  StateVector d{};
  for (std::size_t i = 0; i < kStateDim; ++i) d[i] = x[i] - y[i];
  d[2] = wrap_angle(d[2]);
  return d;
}

ad::Tensor vector_tensor(const std::vector<StateVector>& rows, std::size_t tasks,
                         std::size_t targets) {
  if (rows.size() != tasks * targets) throw ShapeError("row count does not match tasks x targets");
  std::vector<double> data;
  data.reserve(rows.size() * kStateDim);
  for (const auto& r : rows) data.insert(data.end(), r.begin(), r.end());
  return ad::Tensor({tasks, targets, kStateDim}, std::move(data));
}

ad::Tensor state_tensor(const std::vector<RobotState>& rows, std::size_t tasks,
                        std::size_t targets) {
  std::vector<StateVector> v;
  v.reserve(rows.size());
  for (const auto& r : rows) v.push_back(r.to_array());
  return vector_tensor(v, tasks, targets);
}

InferenceOutput infer_step(const MfrPinpModel& model, const InferenceInput& in,
                           const physics::KinematicParams& params, const StateVector& quantiles,
                           Rng* rng) {
  const NpConfig& cfg = model.config();
  if (in.res_context.size() != in.low_context.size())
    throw ShapeError("low and residual contexts must be aligned");
  InferenceOutput out;
  out.g1_prior = physics::g1_step(in.x_low, in.cmd, params, in.dk);
  out.g2_prior = physics::g2_step(in.x_high, in.cmd, params, in.dk);

  const std::size_t n = std::min(in.low_context.size(), cfg.context_size);
  if (n < cfg.min_context) {
    out.fallback = true;
    out.low.mu = out.g1_prior.to_array();
    for (std::size_t i = 0; i < kStateDim; ++i) {
      out.low.var[i] = cfg.fallback_sigma[i] * cfg.fallback_sigma[i];
      out.sigma_calibrated[i] = cfg.fallback_sigma[i];
    }
    out.high = out.low;
    return out;
  }
  Rng* draw = cfg.deterministic ? nullptr : rng;
  const std::size_t skip = in.low_context.size() - n;
  const std::vector<LowElement> low_ctx(in.low_context.begin() + skip, in.low_context.end());
  const std::vector<ResElement> res_ctx(in.res_context.begin() + skip, in.res_context.end());

  ad::Tape tape;
  Graph g(tape, model, false);
  const Var low_x = g.constant(stack_low({low_ctx}));
  const auto enc = g.encode_low(low_x);
  const Var z = g.sample(g.latent_low(enc.pooled), draw);
  const Var step = g.constant(ad::Tensor({1, 1, 1}, std::vector<double>{step_feature(in.dk)}));
  const Var query = g.low_query(step);
  const Var attended = g.cross_attention(query, g.keys(wheel_columns(low_x)), enc.elements);
  std::vector<double> pf;
  append_state(pf, out.g1_prior);
  const PredictionVars low =
      g.decode_low(g.live(), query, z, attended,
                   g.constant(ad::Tensor({1, 1, kStateFeatures}, std::move(pf))),
                   g.constant(state_tensor({out.g1_prior}, 1, 1)));
  out.low = {first_row(low.mu), first_row(low.var)};

  const StateVector r_hat = state_diff(out.g2_prior, RobotState::from_array(out.low.mu));
  const auto rf = residual_features(r_hat);
  const Var zh = g.sample(g.latent_high(g.encode_res(g.constant(stack_res({res_ctx}))), z), draw);
  const PredictionVars res =
      g.decode_res(g.res_query(step), zh, g.constant(ad::Tensor({1, 1, kResidualFeatures}, rf)),
                   g.constant(vector_tensor({r_hat}, 1, 1)));
  out.res = {first_row(res.mu), first_row(res.var)};

  out.high = fuse(out.low, out.res);
  out.high.mu[2] = wrap_angle(out.high.mu[2]);
  for (std::size_t i = 0; i < kStateDim; ++i)
    out.sigma_calibrated[i] = std::sqrt(out.high.var[i]) * quantiles[i];
  return out;
}

}  // namespace mfrpinp::np
