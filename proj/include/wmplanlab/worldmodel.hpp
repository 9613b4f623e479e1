#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "wmplanlab/encoder.hpp"
#include "wmplanlab/envs.hpp"
#include "wmplanlab/errors.hpp"
#include "wmplanlab/mlp.hpp"
#include "wmplanlab/optim.hpp"
#include "wmplanlab/rng.hpp"
#include "wmplanlab/tape.hpp"

namespace wmplan {

/// Action in model units: the env action divided by the env's a_max, so the
/// data range is [-1, 1] for every environment.
using Action = std::vector<double>;

inline EnvAction to_env_action(const EnvSpec& spec, std::span<const double> a) {
  require(a.size() == 2, "action must be 2-dimensional");
  return {a[0] * spec.a_max, a[1] * spec.a_max};
}

inline Action to_model_action(const EnvSpec& spec, const EnvAction& a) { return {a[0] / spec.a_max, a[1] / spec.a_max}; }

// ---------------------------------------------------------------------------
// Data

struct Trajectory {
  std::vector<Latent> latents;       // z_1 .. z_{T+1}
  std::vector<Action> actions;       // a_1 .. a_T
  std::vector<EnvState> env_states;  // s_1 .. s_{T+1}, empty when unknown

  std::size_t length() const { return actions.size(); }
  bool valid() const {
    return latents.size() == actions.size() + 1 && (env_states.empty() || env_states.size() == latents.size());
  }
};

enum class Provenance { expert, corrected, adversarial };

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::expert: return "expert";
    case Provenance::corrected: return "corrected";
    case Provenance::adversarial: return "adversarial";
  }
  return "?";
}

struct Dataset {
  std::vector<Trajectory> trajectories;
  Provenance provenance = Provenance::expert;

  std::size_t transitions() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.length();
    return n;
  }
};

inline Trajectory encode_episode(const EnvSpec& spec, const Encoder& enc, const Episode& ep) {
  Trajectory tr;
  tr.env_states = ep.states;
  for (const auto& s : ep.states) tr.latents.push_back(enc.encode(observe(spec, s)));
  for (const auto& a : ep.actions) tr.actions.push_back(to_model_action(spec, a));
  return tr;
}

inline Dataset encode_episodes(const EnvSpec& spec, const Encoder& enc, const std::vector<Episode>& eps) {
  Dataset d;
  d.trajectories.reserve(eps.size());
  for (const auto& ep : eps) d.trajectories.push_back(encode_episode(spec, enc, ep));
  return d;
}

// ---------------------------------------------------------------------------
// Model

/// Latent transition model f(z, a). With `residual` set the network predicts
/// the increment and f(z, a) = z + net([z, a]).
struct WorldModel {
  Mlp net;
  std::size_t latent_dim = 0;
  std::size_t action_dim = 0;
  bool residual = true;

  static WorldModel make(std::size_t latent_dim, std::size_t action_dim, std::vector<std::size_t> hidden,
                         bool residual, std::uint64_t seed, bool zero_last = true) {
    std::vector<std::size_t> sizes{latent_dim + action_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(latent_dim);
    return WorldModel{Mlp::init(std::move(sizes), seed, zero_last), latent_dim, action_dim, residual};
  }

  std::uint64_t hash() const { return net.hash(); }
};

/// Batched one-step prediction on a tape: z [B, d_z], a [B, d_a] -> [B, d_z].
inline Var predict(const WorldModel& f, std::span<const Var> params, Var z, Var a) {
  require(z.shape().size() == 2 && z.shape()[1] == f.latent_dim, "predict: latent dimension mismatch");
  require(a.shape().size() == 2 && a.shape()[1] == f.action_dim, "predict: action dimension mismatch");
  const Var out = mlp_forward(params, concat(z, a, 1));
  return f.residual ? add(z, out) : out;
}

inline Latent predict(const WorldModel& f, const Latent& z, const Action& a) {
  require(z.size() == f.latent_dim && a.size() == f.action_dim, "predict: dimension mismatch");
  Tape tape;
  const auto p = bind_params(tape, f.net.params, false);
  const Var out = predict(f, p, tape.constant(Tensor::row(z)), tape.constant(Tensor::row(a)));
  return out.value().vec();
}

/// Recursive rollout on one tape: returns z_2 .. z_{H+1}.
inline std::vector<Var> rollout_model(const WorldModel& f, std::span<const Var> params, Var z1,
                                      std::span<const Var> actions) {
  require(!actions.empty(), "rollout_model: horizon must be >= 1");
  std::vector<Var> out;
  out.reserve(actions.size());
  Var z = z1;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    z = predict(f, params, z, actions[t]);
    if (!z.value().all_finite())
      throw NumericError("rollout_model: non-finite latent at step " + std::to_string(t + 1));
    out.push_back(z);
  }
  return out;
}

/// Value-only rollout of a batch of action sequences. actions[t] is [B, d_a];
/// returns every predicted latent batch z_2 .. z_{H+1}.
inline std::vector<Tensor> rollout_model_values(const WorldModel& f, const Tensor& z1, const std::vector<Tensor>& actions) {
  Tape tape;
  const auto p = bind_params(tape, f.net.params, false);
  std::vector<Var> a;
  a.reserve(actions.size());
  for (const auto& t : actions) a.push_back(tape.constant(t));
  const auto zs = rollout_model(f, p, tape.constant(z1), a);
  std::vector<Tensor> out;
  out.reserve(zs.size());
  for (const auto& z : zs) out.push_back(z.value());
  return out;
}

inline std::vector<Latent> rollout_model(const WorldModel& f, const Latent& z1, const std::vector<Action>& actions) {
  std::vector<Tensor> a;
  for (const auto& x : actions) a.push_back(Tensor::row(x));
  std::vector<Latent> out;
  for (const auto& z : rollout_model_values(f, Tensor::row(z1), a)) out.push_back(z.vec());
  return out;
}

// ---------------------------------------------------------------------------
// Teacher-forcing training

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct TrainTrace {
  std::vector<double> epoch_loss;
  std::vector<std::uint64_t> step_hashes;  // parameter hash after every optimizer step
};

struct TransitionRef {
  std::uint32_t traj;
  std::uint32_t t;
};

inline std::vector<TransitionRef> flatten_transitions(const Dataset& data) {
  std::vector<TransitionRef> refs;
  for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
    require(data.trajectories[i].valid(), "dataset trajectory " + std::to_string(i) + " is malformed");
    for (std::size_t t = 0; t < data.trajectories[i].length(); ++t)
      refs.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(t)});
  }
  return refs;
}

/// A supervised minibatch of (z_t, a_t, z_{t+1}) rows.
struct Batch {
  Tensor z, a, z_next;
};

inline Batch gather_batch(const Dataset& data, std::span<const TransitionRef> refs) {
  const auto& first = data.trajectories[refs.front().traj];
  const std::size_t dz = first.latents.front().size(), da = first.actions.front().size();
  std::vector<double> z, a, zn;
  z.reserve(refs.size() * dz);
  a.reserve(refs.size() * da);
  zn.reserve(refs.size() * dz);
  for (const auto& r : refs) {
    const auto& tr = data.trajectories[r.traj];
    z.insert(z.end(), tr.latents[r.t].begin(), tr.latents[r.t].end());
    a.insert(a.end(), tr.actions[r.t].begin(), tr.actions[r.t].end());
    zn.insert(zn.end(), tr.latents[r.t + 1].begin(), tr.latents[r.t + 1].end());
  }
  return {Tensor::raw({refs.size(), dz}, std::move(z)), Tensor::raw({refs.size(), da}, std::move(a)),
          Tensor::raw({refs.size(), dz}, std::move(zn))};
}

/// Mean over rows of the squared prediction error, on a tape.
inline Var prediction_loss(const WorldModel& f, std::span<const Var> params, Var z, Var a, Var target) {
  const double rows = static_cast<double>(z.shape()[0]);
  return scale(sum(square(sub(predict(f, params, z, a), target))), 1.0 / rows);
}

/// One Adam step of next-state regression on `batch`; returns the batch loss.
inline double supervised_step(WorldModel& f, AdamOptimizer& opt, const Batch& batch) {
  Tape tape;
  const auto p = bind_params(tape, f.net.params, true);
  const Var loss = prediction_loss(f, p, tape.constant(batch.z), tape.constant(batch.a), tape.constant(batch.z_next));
  const double value = loss.value().item();
  if (!std::isfinite(value)) throw NumericError("training loss diverged (non-finite)");
  auto grads = tape.grad(loss, p);
  opt.step(f.net.params, grads);
  return value;
}

/// Shared epoch loop. `transform` may replace the batch inputs (adversarial
/// training); targets always stay the clean next latents.
template <class Transform>
TrainTrace run_training_epochs(WorldModel& f, const Dataset& data, const TrainConfig& cfg, AdamOptimizer& opt,
                               Transform&& transform) {
  require(!data.trajectories.empty(), "training: dataset is empty");
  require(cfg.batch_size >= 1 && cfg.epochs >= 1, "training: batch size and epochs must be >= 1");
  auto refs = flatten_transitions(data);
  require(!refs.empty(), "training: dataset has no transitions");
  CounterRng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  TrainTrace trace;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(refs, shuffle_rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < refs.size(); start += cfg.batch_size) {
      const auto n = std::min(cfg.batch_size, refs.size() - start);
      std::span<const TransitionRef> chunk(refs.data() + start, n);
      Batch batch = gather_batch(data, chunk);
      transform(f, batch, chunk);
      total += supervised_step(f, opt, batch);
      trace.step_hashes.push_back(f.hash());
      ++batches;
    }
    trace.epoch_loss.push_back(total / static_cast<double>(batches));
  }
  return trace;
}

struct TrainResult {
  WorldModel model;
  TrainTrace trace;
};

/// Minimizes mean ||f(z_t, a_t) - z_{t+1}||^2 over the model parameters with Adam.
inline TrainResult train_teacher_forcing(WorldModel f, const Dataset& data, const TrainConfig& cfg) {
  AdamOptimizer opt(f.net.params, cfg.lr);
  auto trace = run_training_epochs(f, data, cfg, opt, [](const WorldModel&, Batch&, std::span<const TransitionRef>) {});
  return {std::move(f), std::move(trace)};
}

// ---------------------------------------------------------------------------
// World-model error along true states

struct WmErrorSeries {
  std::vector<double> per_step;
  double mean = 0.0;
};

/// Delta_t = ||f(Phi(s_t), a_t) - Phi(h(s_t, a_t))||^2, teacher-forced along the true states.
inline WmErrorSeries wm_error(const WorldModel& f, const Encoder& enc, const EnvSpec& spec, const EnvState& s1,
                              const std::vector<Action>& actions) {
  WmErrorSeries out;
  if (actions.empty()) return out;
  std::vector<Latent> z, zn;
  std::vector<Action> a;
  EnvState s = s1;
  for (const auto& act : actions) {
    const EnvState next = step(spec, s, to_env_action(spec, act));
    z.push_back(enc.encode(observe(spec, s)));
    zn.push_back(enc.encode(observe(spec, next)));
    a.push_back(act);
    s = next;
  }
  Tape tape;
  const auto p = bind_params(tape, f.net.params, false);
  const Var pred = predict(f, p, tape.constant(Tensor::stack(z)), tape.constant(Tensor::stack(a)));
  const auto& pv = pred.value();
  const std::size_t dz = f.latent_dim;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    double e = 0.0;
    for (std::size_t k = 0; k < dz; ++k) {
      const double d = pv[t * dz + k] - zn[t][k];
      e += d * d;
    }
    out.per_step.push_back(e);
  }
  out.mean = std::accumulate(out.per_step.begin(), out.per_step.end(), 0.0) / static_cast<double>(out.per_step.size());
  return out;
}

}  // namespace wmplan
