#include "mfrpinp/learn/elbo.hpp"

#include "mfrpinp/ad/losses.hpp"
#include "mfrpinp/error.hpp"

namespace mfrpinp::learn {

namespace {

using ad::Tensor;
using physics::wrap_angle;

template <class T>
std::size_t check_windows(const std::vector<std::vector<T>>& windows, std::size_t min_context) {
  if (windows.empty()) throw InvalidArgument("batch needs at least one window");
  const std::size_t n = windows.front().size();
  if (n < min_context + 1)
    throw InvalidArgument("window of " + std::to_string(n) + " transitions has no context/target split");
  for (const auto& w : windows)
    if (w.size() != n) throw ShapeError("batch windows differ in length");
  return n - 1;
}

struct TargetTensors {
  Tensor step, prior_features, prior;
  std::vector<RobotState> priors;
};

TargetTensors target_tensors(const std::vector<WheelCmd>& cmds, const std::vector<double>& dks,
                             const std::vector<RobotState>& x_low, const KinematicParams& p) {
  const std::size_t B = cmds.size();
  TargetTensors t;
  std::vector<double> step, pf;
  for (std::size_t i = 0; i < B; ++i) {
    step.push_back(np::step_feature(dks[i]));
    t.priors.push_back(physics::g1_step(x_low[i], cmds[i], p, dks[i]));
    np::append_state(pf, t.priors.back());
  }
  t.step = Tensor({B, 1, 1}, std::move(step));
  t.prior_features = Tensor({B, 1, np::kStateFeatures}, std::move(pf));
  t.prior = np::state_tensor(t.priors, B, 1);
  return t;
}

Tensor residual_feature_tensor(const std::vector<StateVector>& r) {
  std::vector<double> f;
  for (const auto& v : r) {
    const auto x = np::residual_features(v);
    f.insert(f.end(), x.begin(), x.end());
  }
  return Tensor({r.size(), 1, np::kResidualFeatures}, std::move(f));
}

}  // namespace

LowBatch make_low_batch(const std::vector<std::vector<TransitionLow>>& windows,
                        const KinematicParams& p, std::size_t min_context) {
  const std::size_t C = check_windows(windows, min_context);
  std::vector<std::vector<np::LowElement>> ctx, post;
  std::vector<WheelCmd> cmds;
  std::vector<double> dks;
  std::vector<RobotState> x_low;
  for (const auto& w : windows) {
    std::vector<np::LowElement> e;
    for (std::size_t j = 0; j < C; ++j) e.push_back(w[j].element());
    ctx.push_back(e);
    e.push_back(w[C].element());
    post.push_back(std::move(e));
    cmds.push_back(w[C].cmd);
    dks.push_back(w[C].dk);
    x_low.push_back(w[C].x_low);
  }
  TargetTensors t = target_tensors(cmds, dks, x_low, p);
  std::vector<RobotState> labels;
  for (std::size_t i = 0; i < windows.size(); ++i)
    labels.push_back(np::align_heading(windows[i][C].x_low_next, t.priors[i].theta));

  LowBatch b;
  b.tasks = windows.size();
  b.context = np::stack_low(ctx);
  b.posterior = np::stack_low(post);
  b.step = std::move(t.step);
  b.prior_features = std::move(t.prior_features);
  b.prior = std::move(t.prior);
  b.label = np::state_tensor(labels, b.tasks, 1);
  return b;
}

HighBatch make_high_batch(const std::vector<std::vector<TransitionHigh>>& windows,
                          const KinematicParams& p, std::size_t min_context) {
  const std::size_t C = check_windows(windows, min_context);
  std::vector<std::vector<np::LowElement>> low;
  std::vector<WheelCmd> cmds;
  std::vector<double> dks;
  std::vector<RobotState> x_low;
  HighBatch b;
  for (const auto& w : windows) {
    std::vector<np::LowElement> l;
    std::vector<np::ResElement> r;
    for (std::size_t j = 0; j < C; ++j) {
      l.push_back(w[j].low_element());
      r.push_back(w[j].res_element());
    }
    low.push_back(std::move(l));
    b.res_windows.push_back(std::move(r));
    b.targets.push_back(w[C]);
    cmds.push_back(w[C].cmd);
    dks.push_back(w[C].dk);
    x_low.push_back(w[C].x_low);
  }
  TargetTensors t = target_tensors(cmds, dks, x_low, p);
  b.tasks = windows.size();
  b.low_context = np::stack_low(low);
  b.res_context = np::stack_res(b.res_windows);
  b.step = std::move(t.step);
  b.prior_features = std::move(t.prior_features);
  b.prior = std::move(t.prior);
  return b;
}

ElboTerms elbo_low(Graph& g, const LowBatch& b, Rng& rng) {
  const Var ctx = g.constant(b.context);
  const auto enc_c = g.encode_low(ctx);
  const auto enc_t = g.encode_low(g.constant(b.posterior));
  const np::Latent qc = g.latent_low(enc_c.pooled);
  const np::Latent qt = g.latent_low(enc_t.pooled);
  const Var z = g.sample(qt, &rng);
  const Var query = g.low_query(g.constant(b.step));
  const Var attended = g.cross_attention(query, g.keys(np::wheel_columns(ctx)), enc_c.elements);
  const np::PredictionVars pred = g.decode_low(g.live(), query, z, attended,
                                               g.constant(b.prior_features), g.constant(b.prior));
  const Var recon = ad::gaussian_nll(g.constant(b.label), pred.mu, pred.var);
  const Var kl = ad::scale(ad::diag_gaussian_kl(qt.mu, qt.var, qc.mu, qc.var),
                           1.0 / static_cast<double>(b.tasks));
  return {recon + kl, recon, kl};
}

std::vector<RobotState> frozen_low_means(const MfrPinpModel& model, const HighBatch& b) {
  ad::Tape tape;
  Graph g(tape, model, false);
  const Var ctx = g.constant(b.low_context);
  const auto enc = g.encode_low(ctx);
  const Var z = g.latent_low(enc.pooled).mu;
  const Var query = g.low_query(g.constant(b.step));
  const Var attended = g.cross_attention(query, g.keys(np::wheel_columns(ctx)), enc.elements);
  const np::PredictionVars pred = g.decode_low(g.frozen(), query, z, attended,
                                               g.constant(b.prior_features), g.constant(b.prior));
  std::vector<RobotState> out;
  const auto mu = pred.mu.value().data();
  for (std::size_t i = 0; i < b.tasks; ++i) {
    StateVector s{};
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = mu[i * s.size() + j];
    s[2] = wrap_angle(s[2]);
    out.push_back(RobotState::from_array(s));
  }
  return out;
}

ResidualLabels residual_labels(const HighBatch& b, const std::vector<RobotState>& frozen_means) {
  if (frozen_means.size() != b.tasks) throw ShapeError("one frozen mean per target expected");
  ResidualLabels out;
  for (std::size_t i = 0; i < b.tasks; ++i) {
    out.r.push_back(np::state_diff(b.targets[i].x_high_next, frozen_means[i]));
    out.r_hat.push_back(np::state_diff(b.targets[i].x_g2_next, frozen_means[i]));
  }
  return out;
}

ElboTerms elbo_res(Graph& g, const HighBatch& b, const std::vector<RobotState>& frozen_means,
                   Rng& rng) {
  const ResidualLabels labels = residual_labels(b, frozen_means);
  std::vector<std::vector<np::ResElement>> post = b.res_windows;
  for (std::size_t i = 0; i < b.tasks; ++i)
    post[i].push_back({b.targets[i].cmd, b.targets[i].forces, frozen_means[i]});

  const np::Latent ql = g.latent_low(g.encode_low(g.constant(b.low_context)).pooled);
  const Var z_low = g.sample(ql, &rng);
  const np::Latent qc = g.latent_high(g.encode_res(g.constant(b.res_context)), z_low);
  const np::Latent qt = g.latent_high(g.encode_res(g.constant(np::stack_res(post))), z_low);
  const Var z_high = g.sample(qt, &rng);
  const Var query = g.res_query(g.constant(b.step));
  const np::PredictionVars pred =
      g.decode_res(query, z_high, g.constant(residual_feature_tensor(labels.r_hat)),
                   g.constant(np::vector_tensor(labels.r_hat, b.tasks, 1)));
  const Var recon =
      ad::gaussian_nll(g.constant(np::vector_tensor(labels.r, b.tasks, 1)), pred.mu, pred.var);
  const Var kl = ad::scale(ad::diag_gaussian_kl(qt.mu, qt.var, qc.mu, qc.var),
                           1.0 / static_cast<double>(b.tasks));
  return {recon + kl, recon, kl};
}

void TrainConfig::validate() const {
  if (low_batch == 0 || high_batch == 0 || low_capacity == 0 || high_capacity == 0 ||
      sync_period == 0 || hifi_period == 0)
    throw InvalidArgument("training counts must be positive");
  adam.validate();
}

std::optional<TrainingWindows> sample_windows(const Buffers& buffers, const TrainConfig& config,
                                              std::size_t context, Rng& rng) {
  const std::size_t n = context + 1;
  if (buffers.low.size() < n || buffers.high.size() < n) return std::nullopt;
  TrainingWindows w;
  for (std::size_t i = 0; i < config.low_batch; ++i)
    w.low.push_back(buffers.low.window(rng.index(buffers.low.size() - n + 1), n));
  for (std::size_t i = 0; i < config.high_batch; ++i)
    w.high.push_back(buffers.high.window(rng.index(buffers.high.size() - n + 1), n));
  return w;
}

LossRecord train_on(MfrPinpModel& model, const TrainingWindows& windows, ad::AdamState& adam,
                    const KinematicParams& p, Rng& rng) {
  const std::size_t min_context = model.config().min_context;
  const LowBatch lb = make_low_batch(windows.low, p, min_context);
  const HighBatch hb = make_high_batch(windows.high, p, min_context);
  const std::vector<RobotState> means = frozen_low_means(model, hb);

  ad::Tape tape;
  Graph g(tape, model, true);
  const ElboTerms lo = elbo_low(g, lb, rng);
  const ElboTerms hi = elbo_res(g, hb, means, rng);
  const Var total = lo.loss + hi.loss;
  tape.backward(total);
  ad::adam_step(model.params(), g.live().gradients(), adam);

  LossRecord r;
  r.loss = total.value().item();
  r.elbo_low = -lo.loss.value().item();
  r.elbo_res = -hi.loss.value().item();
  r.kl_low = lo.kl.value().item();
  r.kl_res = hi.kl.value().item();
  return r;
}

std::optional<LossRecord> train_phase(MfrPinpModel& model, const Buffers& buffers,
                                      const TrainConfig& config, ad::AdamState& adam,
                                      const KinematicParams& p, Rng& rng) {
  auto w = sample_windows(buffers, config, model.config().context_size, rng);
  if (!w) return std::nullopt;
  return train_on(model, *w, adam, p, rng);
}

bool buffer_update(Buffers& buffers, const TrainConfig& config, const TransitionLow& low,
                   const std::optional<TransitionHigh>& high, std::size_t high_iteration) {
  buffers.low.push(low);
  if (!high || high_iteration % config.hifi_period != 0) return false;
  buffers.high.push(*high);
  return true;
}

}  // namespace mfrpinp::learn
