#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wmplanlab/errors.hpp"
#include "wmplanlab/mlp.hpp"
#include "wmplanlab/optim.hpp"
#include "wmplanlab/rng.hpp"
#include "wmplanlab/worldmodel.hpp"

namespace wmplan {

/// Action-sequence initializer g(z_1, z_goal) -> a_1..a_H with outputs
/// bounded by `action_bound` through a final scaled tanh.
struct InitNet {
  Mlp net;
  std::size_t horizon = 1;
  std::size_t latent_dim = 0;
  std::size_t action_dim = 2;
  double action_bound = 1.0;

  static InitNet make(std::size_t latent_dim, std::size_t action_dim, std::size_t horizon,
                      std::vector<std::size_t> hidden, std::uint64_t seed, double action_bound = 1.0) {
    std::vector<std::size_t> sizes{2 * latent_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(horizon * action_dim);
    return InitNet{Mlp::init(std::move(sizes), seed), horizon, latent_dim, action_dim, action_bound};
  }
};

/// Batched forward: z1, zg [B, d_z] -> [B, H * d_a].
inline Var initnet_forward(const InitNet& g, std::span<const Var> params, Var z1, Var zg) {
  return scale(tanh(mlp_forward(params, concat(z1, zg, 1))), g.action_bound);
}

inline std::vector<Action> init_actions(const InitNet& g, const Latent& z1, const Latent& zg) {
  require(z1.size() == g.latent_dim && zg.size() == g.latent_dim, "init_actions: latent dimension mismatch");
  Tape tape;
  const auto p = bind_params(tape, g.net.params, false);
  const auto& out = initnet_forward(g, p, tape.constant(Tensor::row(z1)), tape.constant(Tensor::row(zg))).value();
  std::vector<Action> actions(g.horizon);
  for (std::size_t t = 0; t < g.horizon; ++t)
    actions[t].assign(out.data().begin() + static_cast<std::ptrdiff_t>(t * g.action_dim),
                      out.data().begin() + static_cast<std::ptrdiff_t>((t + 1) * g.action_dim));
  return actions;
}

enum class OptimizerKind { sgd, adam };

struct InitNetConfig {
  std::size_t horizon = 25;
  std::size_t epochs = 1;
  double lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::vector<std::size_t> hidden{128, 128};
  std::uint64_t seed = 0;
};

struct InitNetResult {
  InitNet net;
  std::vector<double> loss_trace;  // per update
};

/// Regression from (z_1, z_{H+1}) to the expert actions of every length-H window,
/// one window per update, loss = sum_t ||a_hat_t - a_t||^2.
inline InitNetResult train_initnet(const Dataset& data, const InitNetConfig& cfg) {
  require(cfg.horizon >= 1, "train_initnet: horizon must be >= 1");
  struct Window {
    std::uint32_t traj, offset;
  };
  std::vector<Window> windows;
  for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
    const auto& tr = data.trajectories[i];
    for (std::size_t o = 0; o + cfg.horizon <= tr.length(); ++o)
      windows.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(o)});
  }
  if (windows.empty())
    throw DatasetError("train_initnet: no trajectory has " + std::to_string(cfg.horizon + 1) + " states");

  const auto& first = data.trajectories[windows.front().traj];
  InitNet g = InitNet::make(first.latents.front().size(), first.actions.front().size(), cfg.horizon, cfg.hidden,
                            cfg.seed);
  AdamOptimizer adam(g.net.params, cfg.lr);
  CounterRng rng(derive_seed(cfg.seed, "initnet-shuffle"));
  InitNetResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(windows, rng);
    for (const auto& w : windows) {
      const auto& tr = data.trajectories[w.traj];
      std::vector<double> target;
      for (std::size_t t = 0; t < cfg.horizon; ++t)
        target.insert(target.end(), tr.actions[w.offset + t].begin(), tr.actions[w.offset + t].end());
      Tape tape;
      const auto p = bind_params(tape, g.net.params, true);
      const Var pred = initnet_forward(g, p, tape.constant(Tensor::row(tr.latents[w.offset])),
                                       tape.constant(Tensor::row(tr.latents[w.offset + cfg.horizon])));
      const Var loss = sum(square(sub(pred, tape.constant(Tensor::row(target)))));
      const double value = loss.value().item();
      if (!std::isfinite(value)) throw NumericError("train_initnet: loss diverged");
      result.loss_trace.push_back(value);
      auto grads = tape.grad(loss, p);
      if (cfg.optimizer == OptimizerKind::adam) {
        adam.step(g.net.params, grads);
      } else {
        for (std::size_t i = 0; i < grads.size(); ++i) g.net.params[i] = sgd_step(g.net.params[i], grads[i], cfg.lr);
      }
    }
  }
  result.net = std::move(g);
  return result;
}

}  // namespace wmplan
