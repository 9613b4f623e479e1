#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "wmplanlab/encoder.hpp"
#include "wmplanlab/envs.hpp"
#include "wmplanlab/errors.hpp"
#include "wmplanlab/optim.hpp"
#include "wmplanlab/planners.hpp"
#include "wmplanlab/rng.hpp"
#include "wmplanlab/tape.hpp"
#include "wmplanlab/worldmodel.hpp"

namespace wmplan {

inline void log_warning(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

// ---------------------------------------------------------------------------
// Adversarial perturbations

enum class AttackKind { fgsm, pgd };
enum class AttackInit { uniform, zero };
enum class RadiusMode { fixed, adaptive };

struct PerturbationConfig {
  double lambda_a = 0.2;
  double lambda_z = 0.2;
  double alpha_scale = 1.25;           // step size = alpha_scale * radius unless overridden
  std::optional<double> alpha_a;       // explicit step sizes
  std::optional<double> alpha_z;
  AttackKind attack = AttackKind::fgsm;
  std::size_t pgd_steps = 2;
  AttackInit init = AttackInit::uniform;
  RadiusMode radius_mode = RadiusMode::fixed;
  bool per_dimension_std = false;

  std::size_t steps() const { return attack == AttackKind::fgsm ? 1 : pgd_steps; }
};

struct Radii {
  double eps_a = 0.0;
  double eps_z = 0.0;
};

struct Perturbation {
  Tensor delta_a;  // [B, d_a]
  Tensor delta_z;  // [B, d_z]
};

namespace detail {

inline double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Spread of a stacked sequence of vectors: scalar std over all entries, or mean of per-dimension stds.
inline double sequence_std(const std::vector<std::vector<double>>& seq, bool per_dimension) {
  if (seq.empty()) return 0.0;
  if (!per_dimension) {
    std::vector<double> all;
    for (const auto& v : seq) all.insert(all.end(), v.begin(), v.end());
    return sample_std(all);
  }
  const std::size_t d = seq.front().size();
  double acc = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    std::vector<double> col;
    for (const auto& v : seq) col.push_back(v[k]);
    acc += sample_std(col);
  }
  return acc / static_cast<double>(d);
}

}  // namespace detail

/// eps_a = lambda_a * mean_j std(a^j_1..a^j_H), eps_z = lambda_z * mean_j std(z^j_1..z^j_{H+1}).
inline Radii compute_radii(std::span<const Trajectory* const> batch, double lambda_a, double lambda_z,
                           bool per_dimension = false) {
  require(!batch.empty(), "compute_radii: empty batch");
  double sa = 0.0, sz = 0.0;
  for (const auto* tr : batch) {
    sa += detail::sequence_std(tr->actions, per_dimension);
    sz += detail::sequence_std(tr->latents, per_dimension);
  }
  const double n = static_cast<double>(batch.size());
  Radii r{lambda_a * sa / n, lambda_z * sz / n};
  if ((lambda_a > 0.0 && sa == 0.0) || (lambda_z > 0.0 && sz == 0.0))
    log_warning("compute_radii: zero-variance batch, attack radius is zero");
  return r;
}

inline Radii compute_radii(std::span<const Trajectory> batch, double lambda_a, double lambda_z,
                           bool per_dimension = false) {
  std::vector<const Trajectory*> ptrs;
  for (const auto& t : batch) ptrs.push_back(&t);
  return compute_radii(std::span<const Trajectory* const>(ptrs), lambda_a, lambda_z, per_dimension);
}

/// Signed-gradient ascent on ||f(z + dz, a + da) - z_next||^2 inside the l_inf balls,
/// one row per transition. FGSM = one step from a uniform start; PGD(K) = K steps.
inline Perturbation attack_perturb(const WorldModel& f, const Tensor& z, const Tensor& a, const Tensor& z_next,
                                   const Radii& radii, const PerturbationConfig& cfg, CounterRng& rng) {
  require(radii.eps_a >= 0.0 && radii.eps_z >= 0.0, "attack_perturb: radii must be non-negative");
  const double alpha_a = cfg.alpha_a.value_or(cfg.alpha_scale * radii.eps_a);
  const double alpha_z = cfg.alpha_z.value_or(cfg.alpha_scale * radii.eps_z);
  auto init = [&](const Tensor& like, double eps) {
    std::vector<double> v(like.size(), 0.0);
    if (cfg.init == AttackInit::uniform)
      for (auto& x : v) x = rng.uniform(-eps, eps);
    return Tensor::raw(like.shape(), std::move(v));
  };
  Tensor da = init(a, radii.eps_a);
  Tensor dz = init(z, radii.eps_z);
  if (radii.eps_a == 0.0 && radii.eps_z == 0.0) return {Tensor::zeros(a.shape()), Tensor::zeros(z.shape())};

  auto ascend = [](const Tensor& d, const Tensor& g, double alpha, double eps) {
    std::vector<double> v(d.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
      v[i] = std::clamp(d[i] + alpha * s, -eps, eps);
    }
    return Tensor::raw(d.shape(), std::move(v));
  };

  for (std::size_t k = 0; k < cfg.steps(); ++k) {
    Tape tape;
    const auto p = bind_params(tape, f.net.params, false);
    const Var vda = tape.variable(da);
    const Var vdz = tape.variable(dz);
    const Var pred = predict(f, p, add(tape.constant(z), vdz), add(tape.constant(a), vda));
    const Var loss = sum(square(sub(pred, tape.constant(z_next))));
    const Var wrt[] = {vda, vdz};
    const auto g = tape.grad(loss, wrt);
    da = ascend(da, g[0], alpha_a, radii.eps_a);
    dz = ascend(dz, g[1], alpha_z, radii.eps_z);
  }
  return {std::move(da), std::move(dz)};
}

/// Single-transition convenience form.
inline std::pair<std::vector<double>, std::vector<double>> attack_perturb(const WorldModel& f, const Latent& z,
                                                                          const Action& a, const Latent& z_next,
                                                                          const Radii& radii,
                                                                          const PerturbationConfig& cfg,
                                                                          std::uint64_t seed) {
  CounterRng rng(seed);
  auto p = attack_perturb(f, Tensor::row(z), Tensor::row(a), Tensor::row(z_next), radii, cfg, rng);
  return {p.delta_a.vec(), p.delta_z.vec()};
}

struct AdversarialResult {
  WorldModel model;
  TrainTrace trace;
  std::vector<Radii> radii;  // radius used for each optimizer step
  Dataset perturbed;         // (z', a', z_next) triplets of the final epoch
};

/// Adversarial finetuning: per minibatch, perturb inputs inside the radius balls
/// and take one optimizer step toward the clean next latents.
inline AdversarialResult adversarial_wm(WorldModel f, const Dataset& data, const PerturbationConfig& pcfg,
                                        const TrainConfig& cfg) {
  require(!data.trajectories.empty(), "adversarial_wm: dataset is empty");
  AdamOptimizer opt(f.net.params, cfg.lr);
  CounterRng attack_rng(derive_seed(cfg.seed, "attack"));
  std::optional<Radii> fixed;
  AdversarialResult out;
  out.perturbed.provenance = Provenance::adversarial;
  std::size_t step_index = 0;
  const std::size_t steps_per_epoch = (data.transitions() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t last_epoch_start = (cfg.epochs - 1) * steps_per_epoch;

  auto transform = [&](const WorldModel& model, Batch& batch, std::span<const TransitionRef> refs) {
    Radii r;
    if (pcfg.radius_mode == RadiusMode::fixed && fixed) {
      r = *fixed;
    } else {
      std::set<std::uint32_t> ids;
      for (const auto& ref : refs) ids.insert(ref.traj);
      std::vector<const Trajectory*> trajs;
      for (auto id : ids) trajs.push_back(&data.trajectories[id]);
      r = compute_radii(std::span<const Trajectory* const>(trajs), pcfg.lambda_a, pcfg.lambda_z, pcfg.per_dimension_std);
      if (pcfg.radius_mode == RadiusMode::fixed) fixed = r;
    }
    out.radii.push_back(r);
    if (r.eps_a > 0.0 || r.eps_z > 0.0) {
      const auto p = attack_perturb(model, batch.z, batch.a, batch.z_next, r, pcfg, attack_rng);
      std::vector<double> z(batch.z.vec()), a(batch.a.vec());
      for (std::size_t i = 0; i < z.size(); ++i) z[i] += p.delta_z[i];
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += p.delta_a[i];
      batch.z = Tensor::raw(batch.z.shape(), std::move(z));
      batch.a = Tensor::raw(batch.a.shape(), std::move(a));
    }
    if (step_index++ >= last_epoch_start) {
      for (std::size_t row = 0; row < batch.z.rows(); ++row) {
        Trajectory tr;
        tr.latents = {batch.z.row_vec(row), batch.z_next.row_vec(row)};
        tr.actions = {batch.a.row_vec(row)};
        out.perturbed.trajectories.push_back(std::move(tr));
      }
    }
  };
  out.trace = run_training_epochs(f, data, cfg, opt, transform);
  out.model = std::move(f);
  return out;
}

// ---------------------------------------------------------------------------
// Online world modeling

struct OnlineConfig {
  std::size_t iterations = 20;     // N
  PlanConfig plan;                 // horizon H and planning iterations M live here
  double mix_ratio = 0.5;          // fraction of each finetuning batch drawn from the original data
  double lr = 1e-4;
  std::size_t steps_per_iteration = 50;
  std::size_t batch_size = 64;
};

/// Test hook: replace GBP with a fixed action source.
using ActionSource = std::function<std::vector<Action>(const Latent& z1, const Latent& zg, const Trajectory& window,
                                                       std::uint64_t seed)>;

struct OnlineResult {
  WorldModel model;
  Dataset corrected;
  std::size_t skipped = 0;
  std::vector<double> loss_trace;  // per finetuning step
};

/// Simulator-corrected dataset aggregation: plan with GBP from expert start/goal
/// pairs, replay the plan in the true environment, and finetune on the result.
inline OnlineResult online_wm(WorldModel f, const EnvSpec& spec, const Encoder& enc, const Dataset& data,
                              const OnlineConfig& cfg, std::uint64_t seed, const ActionSource& source = {}) {
  require(!data.trajectories.empty(), "online_wm: dataset is empty");
  require(cfg.mix_ratio >= 0.0 && cfg.mix_ratio <= 1.0, "online_wm: mix ratio must be in [0, 1]");
  const std::size_t H = cfg.plan.horizon;
  OnlineResult out;
  out.corrected.provenance = Provenance::corrected;
  AdamOptimizer opt(f.net.params, cfg.lr);
  CounterRng rng(derive_seed(seed, "online"));
  const auto expert_refs = flatten_transitions(data);

  for (std::size_t i = 0; i < cfg.iterations; ++i) {
    const auto& tr = data.trajectories[rng.below(data.trajectories.size())];
    if (tr.length() < H || tr.env_states.empty()) {
      log_warning("online_wm: sampled trajectory shorter than H+1 or without states, skipped");
      ++out.skipped;
      continue;
    }
    const auto offset = static_cast<std::size_t>(rng.below(tr.length() - H + 1));
    Trajectory window;
    window.latents.assign(tr.latents.begin() + static_cast<std::ptrdiff_t>(offset),
                          tr.latents.begin() + static_cast<std::ptrdiff_t>(offset + H + 1));
    window.actions.assign(tr.actions.begin() + static_cast<std::ptrdiff_t>(offset),
                          tr.actions.begin() + static_cast<std::ptrdiff_t>(offset + H));
    window.env_states.assign(tr.env_states.begin() + static_cast<std::ptrdiff_t>(offset),
                             tr.env_states.begin() + static_cast<std::ptrdiff_t>(offset + H + 1));
    const Latent& z1 = window.latents.front();
    const Latent& zg = window.latents.back();
    const auto plan_seed = derive_seed(seed, i);
    std::vector<Action> actions;
    if (source) {
      actions = source(z1, zg, window, plan_seed);
    } else {
      PlanConfig pc = cfg.plan;
      pc.seed = plan_seed;
      actions = gbp(f, z1, zg, pc).actions;
    }

    Trajectory corrected;
    corrected.latents.push_back(z1);
    corrected.env_states.push_back(window.env_states.front());
    EnvState s = window.env_states.front();
    for (const auto& a : actions) {
      s = step(spec, s, to_env_action(spec, a));
      corrected.env_states.push_back(s);
      corrected.latents.push_back(enc.encode(observe(spec, s)));
      corrected.actions.push_back(a);
    }
    out.corrected.trajectories.push_back(std::move(corrected));

    const auto new_refs = flatten_transitions(out.corrected);
    const auto n_orig = static_cast<std::size_t>(std::llround(cfg.mix_ratio * static_cast<double>(cfg.batch_size)));
    const std::size_t n_new = cfg.batch_size - n_orig;
    for (std::size_t k = 0; k < cfg.steps_per_iteration; ++k) {
      std::vector<TransitionRef> from_new, from_orig;
      for (std::size_t b = 0; b < n_new; ++b) from_new.push_back(new_refs[rng.below(new_refs.size())]);
      for (std::size_t b = 0; b < n_orig; ++b) from_orig.push_back(expert_refs[rng.below(expert_refs.size())]);
      std::vector<Batch> parts;
      if (!from_new.empty()) parts.push_back(gather_batch(out.corrected, from_new));
      if (!from_orig.empty()) parts.push_back(gather_batch(data, from_orig));
      Batch batch = parts.front();
      if (parts.size() == 2) {
        auto cat = [](const Tensor& x, const Tensor& y) {
          std::vector<double> v(x.vec());
          v.insert(v.end(), y.data().begin(), y.data().end());
          return Tensor::raw({x.rows() + y.rows(), x.cols()}, std::move(v));
        };
        batch = {cat(parts[0].z, parts[1].z), cat(parts[0].a, parts[1].a), cat(parts[0].z_next, parts[1].z_next)};
      }
      out.loss_trace.push_back(supervised_step(f, opt, batch));
    }
  }
  out.model = std::move(f);
  return out;
}

}  // namespace wmplan
