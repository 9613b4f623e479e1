#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "wmplanlab/encoder.hpp"
#include "wmplanlab/envs.hpp"
#include "wmplanlab/errors.hpp"
#include "wmplanlab/initnet.hpp"
#include "wmplanlab/optim.hpp"
#include "wmplanlab/rng.hpp"
#include "wmplanlab/tape.hpp"
#include "wmplanlab/worldmodel.hpp"

namespace wmplan {

// ---------------------------------------------------------------------------
// Goal loss

enum class GoalLossMode { final_state, weighted };

/// Weights w_2..w_{H+1} are stored unnormalized and divided by their sum when used.
struct GoalLossSpec {
  GoalLossMode mode = GoalLossMode::final_state;
  std::vector<double> weights;

  static GoalLossSpec final_state() { return {}; }

  /// w_i = base^i for i = 2..H+1 (2 upweights late states, 1/2 early ones).
  static GoalLossSpec exponential(std::size_t horizon, double base) {
    GoalLossSpec s{GoalLossMode::weighted, {}};
    for (std::size_t i = 2; i <= horizon + 1; ++i) s.weights.push_back(std::pow(base, static_cast<double>(i)));
    return s;
  }
};

/// zs: predicted z_2..z_{H+1}, each [B, d_z]; goal: [1, d_z]. Sums over the batch rows.
inline Var goal_loss(const GoalLossSpec& spec, std::span<const Var> zs, Var goal) {
  require(!zs.empty(), "goal_loss: horizon must be >= 1");
  if (spec.mode == GoalLossMode::final_state) return sum(square(sub(zs.back(), goal)));
  require(spec.weights.size() == zs.size(), "goal_loss: " + std::to_string(spec.weights.size()) +
                                                " weights for horizon " + std::to_string(zs.size()));
  double total = 0.0;
  for (double w : spec.weights) {
    require(w > 0.0, "goal_loss: weights must be positive");
    total += w;
  }
  const double h = static_cast<double>(zs.size());
  std::optional<Var> acc;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    const Var term = scale(sum(square(sub(zs[i], goal))), spec.weights[i] / total / h);
    acc = acc ? add(*acc, term) : term;
  }
  return *acc;
}

// ---------------------------------------------------------------------------
// Results and shared helpers

struct PlanResult {
  std::vector<Action> actions;
  std::vector<double> loss_trace;
  double wall_clock = 0.0;
  std::size_t iterations = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;  // loss of the returned actions
  bool failed = false;
  std::string error;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Per-row final-state cost for a batch of sequences: actions[t] is [B, d_a].
inline std::vector<double> final_costs(const WorldModel& f, const Latent& z1, const Latent& zg,
                                       const std::vector<Tensor>& actions) {
  const std::size_t B = actions.front().rows();
  std::vector<double> zrep;
  zrep.reserve(B * z1.size());
  for (std::size_t b = 0; b < B; ++b) zrep.insert(zrep.end(), z1.begin(), z1.end());
  const auto zs = rollout_model_values(f, Tensor::raw({B, z1.size()}, std::move(zrep)), actions);
  const Tensor& last = zs.back();
  std::vector<double> costs(B, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < zg.size(); ++k) {
      const double d = last.at(b, k) - zg[k];
      costs[b] += d * d;
    }
  return costs;
}

// Flat candidate matrix [B, H*d_a] <-> per-step tensors [B, d_a].
inline std::vector<Tensor> split_steps(const std::vector<double>& flat, std::size_t B, std::size_t H, std::size_t da) {
  std::vector<Tensor> out;
  out.reserve(H);
  for (std::size_t t = 0; t < H; ++t) {
    std::vector<double> step(B * da);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t k = 0; k < da; ++k) step[b * da + k] = flat[b * H * da + t * da + k];
    out.push_back(Tensor::raw({B, da}, std::move(step)));
  }
  return out;
}

inline std::vector<double> join_steps(const std::vector<Tensor>& steps, std::size_t B, std::size_t H, std::size_t da) {
  std::vector<double> flat(B * H * da);
  for (std::size_t t = 0; t < H; ++t)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t k = 0; k < da; ++k) flat[b * H * da + t * da + k] = steps[t][b * da + k];
  return flat;
}

inline std::vector<Action> unflatten(std::span<const double> flat, std::size_t H, std::size_t da) {
  std::vector<Action> out(H);
  for (std::size_t t = 0; t < H; ++t) out[t].assign(flat.begin() + t * da, flat.begin() + (t + 1) * da);
  return out;
}

inline Tensor clamp_tensor(const Tensor& x, double bound) {
  std::vector<double> v(x.vec());
  for (auto& e : v) e = std::clamp(e, -bound, bound);
  return Tensor::raw(x.shape(), std::move(v));
}

}  // namespace detail

inline double final_state_cost(const WorldModel& f, const Latent& z1, const Latent& zg, const std::vector<Action>& actions) {
  std::vector<Tensor> steps;
  for (const auto& a : actions) steps.push_back(Tensor::row(a));
  return detail::final_costs(f, z1, zg, steps).front();
}

// ---------------------------------------------------------------------------
// Gradient-based planning

enum class InitKind { gaussian, initnet };

struct PlanConfig {
  std::size_t horizon = 25;
  std::size_t iterations = 300;
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 0.3;
  GoalLossSpec loss;
  InitKind init = InitKind::gaussian;
  bool clamp = true;
  double action_bound = 1.0;  // model units
  bool best_iterate = true;
  std::uint64_t seed = 0;
};

/// Gradient descent on the action sequence through the differentiable rollout.
/// `init`, when given, replaces the Gaussian draw (init network or warm start).
inline PlanResult gbp(const WorldModel& f, const Latent& z1, const Latent& zg, const PlanConfig& cfg,
                      const std::vector<Action>* init = nullptr) {
  require(cfg.horizon >= 1, "gbp: horizon must be >= 1");
  require(cfg.iterations >= 1, "gbp: iterations must be >= 1");
  require(cfg.lr > 0.0, "gbp: step size must be positive");
  require(z1.size() == f.latent_dim && zg.size() == f.latent_dim, "gbp: latent dimension mismatch");
  const auto t0 = detail::Clock::now();
  const std::size_t H = cfg.horizon, da = f.action_dim;

  std::vector<Tensor> actions;
  actions.reserve(H);
  if (init) {
    require(init->size() == H, "gbp: initial action sequence has wrong length");
    for (const auto& a : *init) {
      require(a.size() == da, "gbp: initial action has wrong dimension");
      actions.push_back(Tensor::row(a));
    }
  } else {
    CounterRng rng(derive_seed(cfg.seed, "gbp-init"));
    for (std::size_t t = 0; t < H; ++t) {
      std::vector<double> a(da);
      for (auto& x : a) x = rng.normal();
      actions.push_back(Tensor::raw({1, da}, std::move(a)));
    }
  }
  if (cfg.clamp)
    for (auto& a : actions) a = detail::clamp_tensor(a, cfg.action_bound);

  AdamOptimizer adam;
  if (cfg.optimizer == OptimizerKind::adam) adam = AdamOptimizer(actions, cfg.lr);

  PlanResult res;
  std::vector<Tensor> best = actions;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    Tape tape;
    const auto p = bind_params(tape, f.net.params, false);
    std::vector<Var> a;
    a.reserve(H);
    for (const auto& x : actions) a.push_back(tape.variable(x));
    std::vector<Tensor> grads;
    double loss_value = 0.0;
    try {
      const auto zs = rollout_model(f, p, tape.constant(Tensor::row(z1)), a);
      const Var loss = goal_loss(cfg.loss, zs, tape.constant(Tensor::row(zg)));
      loss_value = loss.value().item();
      if (!std::isfinite(loss_value)) throw NumericError("gbp: non-finite goal loss at iteration " + std::to_string(it));
      grads = tape.grad(loss, a);
    } catch (const NumericError& e) {
      res.failed = true;
      res.error = e.what();
      break;
    }
    res.loss_trace.push_back(loss_value);
    if (it == 0) res.initial_loss = loss_value;
    if (loss_value < best_loss) {
      best_loss = loss_value;
      best = actions;
    }
    if (cfg.optimizer == OptimizerKind::adam) {
      adam.step(actions, grads);
    } else {
      for (std::size_t t = 0; t < H; ++t) actions[t] = sgd_step(actions[t], grads[t], cfg.lr);
    }
    if (cfg.clamp)
      for (auto& x : actions) x = detail::clamp_tensor(x, cfg.action_bound);
  }
  res.iterations = res.loss_trace.size();
  const auto& chosen = cfg.best_iterate ? best : actions;
  for (const auto& x : chosen) res.actions.push_back(x.vec());
  res.final_loss = cfg.best_iterate ? best_loss : std::numeric_limits<double>::quiet_NaN();
  if (!cfg.best_iterate && !res.failed) {
    Tape tape;
    const auto p = bind_params(tape, f.net.params, false);
    std::vector<Var> a;
    for (const auto& x : actions) a.push_back(tape.constant(x));
    res.final_loss = goal_loss(cfg.loss, rollout_model(f, p, tape.constant(Tensor::row(z1)), a),
                               tape.constant(Tensor::row(zg)))
                         .value()
                         .item();
  }
  res.wall_clock = detail::seconds_since(t0);
  return res;
}

// ---------------------------------------------------------------------------
// Cross-entropy method (and GradCEM)

enum class CovarianceMode { full, diagonal };

struct CemIteration {
  std::size_t index = 0;
  std::vector<double> costs;
  std::vector<std::size_t> elites;
  std::vector<double> mean;        // refit mean, H*d_a
  std::vector<double> covariance;  // refit covariance, row-major (H*d_a)^2
  bool fell_back_to_diagonal = false;
};

struct CemConfig {
  std::size_t population = 300;
  std::size_t elites = 30;
  std::size_t iterations = 30;
  double sigma0 = 1.0;
  CovarianceMode covariance = CovarianceMode::full;
  double jitter = 1e-6;
  bool clamp = true;
  double action_bound = 1.0;
  std::function<void(const CemIteration&)> observer;
};

struct GradRefineConfig {
  std::size_t steps = 2;
  double lr = 0.3;
};

namespace detail {

// Adam refinement of every candidate on its own final-state loss. Rows are independent.
inline std::vector<Tensor> refine_candidates(const WorldModel& f, const Latent& z1, const Latent& zg,
                                             std::vector<Tensor> steps, const GradRefineConfig& refine, bool clamp,
                                             double bound) {
  if (refine.steps == 0) return steps;
  const std::size_t B = steps.front().rows();
  std::vector<double> zrep;
  for (std::size_t b = 0; b < B; ++b) zrep.insert(zrep.end(), z1.begin(), z1.end());
  const Tensor z1b = Tensor::raw({B, z1.size()}, std::move(zrep));
  AdamOptimizer adam(steps, refine.lr);
  for (std::size_t k = 0; k < refine.steps; ++k) {
    Tape tape;
    const auto p = bind_params(tape, f.net.params, false);
    std::vector<Var> a;
    for (const auto& s : steps) a.push_back(tape.variable(s));
    const auto zs = rollout_model(f, p, tape.constant(z1b), a);
    const Var loss = sum(square(sub(zs.back(), tape.constant(Tensor::row(zg)))));
    auto grads = tape.grad(loss, a);
    adam.step(steps, grads);
    if (clamp)
      for (auto& s : steps) s = clamp_tensor(s, bound);
  }
  return steps;
}

}  // namespace detail

/// CEM over flattened sequences of length H*d_a; GradCEM when `refine.steps > 0`.
inline PlanResult gradcem(const WorldModel& f, const Latent& z1, const Latent& zg, const CemConfig& cfg,
                          const GradRefineConfig& refine, std::size_t horizon, std::uint64_t seed) {
  require(cfg.elites >= 1 && cfg.elites <= cfg.population, "cem: need 1 <= elites <= population");
  require(cfg.iterations >= 1 && horizon >= 1, "cem: iterations and horizon must be >= 1");
  require(z1.size() == f.latent_dim && zg.size() == f.latent_dim, "cem: latent dimension mismatch");
  using Mat = Eigen::MatrixXd;
  using VecX = Eigen::VectorXd;
  const auto t0 = detail::Clock::now();
  const std::size_t H = horizon, da = f.action_dim, D = H * da, N = cfg.population, K = cfg.elites;
  CounterRng rng(derive_seed(seed, "cem"));

  VecX mu = VecX::Zero(static_cast<Eigen::Index>(D));
  Mat chol = Mat::Identity(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(D)) * cfg.sigma0;
  PlanResult res;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::vector<double> flat(N * D);
    VecX xi(static_cast<Eigen::Index>(D));
    for (std::size_t j = 0; j < N; ++j) {
      for (Eigen::Index k = 0; k < xi.size(); ++k) xi[k] = rng.normal();
      const VecX sample = mu + chol.triangularView<Eigen::Lower>() * xi;
      for (std::size_t k = 0; k < D; ++k) {
        const double v = sample[static_cast<Eigen::Index>(k)];
        flat[j * D + k] = cfg.clamp ? std::clamp(v, -cfg.action_bound, cfg.action_bound) : v;
      }
    }
    auto steps = detail::split_steps(flat, N, H, da);
    if (refine.steps > 0) {
      steps = detail::refine_candidates(f, z1, zg, std::move(steps), refine, cfg.clamp, cfg.action_bound);
      flat = detail::join_steps(steps, N, H, da);
    }
    const auto costs = detail::final_costs(f, z1, zg, steps);
    if (std::any_of(costs.begin(), costs.end(), [](double c) { return std::isnan(c); })) {
      res.failed = true;
      res.error = "cem: NaN cost";
      break;
    }

    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return costs[a] < costs[b]; });
    order.resize(K);

    VecX new_mu = VecX::Zero(static_cast<Eigen::Index>(D));
    for (auto j : order)
      for (std::size_t k = 0; k < D; ++k) new_mu[static_cast<Eigen::Index>(k)] += flat[j * D + k];
    new_mu /= static_cast<double>(K);
    Mat cov = Mat::Zero(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(D));
    for (auto j : order) {
      VecX d(static_cast<Eigen::Index>(D));
      for (std::size_t k = 0; k < D; ++k) d[static_cast<Eigen::Index>(k)] = flat[j * D + k] - new_mu[static_cast<Eigen::Index>(k)];
      cov.noalias() += d * d.transpose();
    }
    cov /= static_cast<double>(K);

    bool fallback = cfg.covariance == CovarianceMode::diagonal;
    if (!fallback) {
      cov.diagonal().array() += cfg.jitter;
      Eigen::LLT<Mat> llt(cov);
      if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().allFinite()) {
        chol = llt.matrixL();
      } else {
        fallback = true;
      }
    }
    if (fallback) {
      chol = cov.diagonal().cwiseMax(0.0).cwiseSqrt().asDiagonal();
      if (cfg.covariance == CovarianceMode::full) cov = Mat(cov.diagonal().asDiagonal());
    }
    mu = new_mu;

    res.loss_trace.push_back(costs[order.front()]);
    if (cfg.observer) {
      CemIteration info;
      info.index = it;
      info.costs = costs;
      info.elites = order;
      info.mean.assign(mu.data(), mu.data() + mu.size());
      const Mat cov_rm = cov;
      info.covariance.resize(D * D);
      for (std::size_t r = 0; r < D; ++r)
        for (std::size_t c = 0; c < D; ++c)
          info.covariance[r * D + c] = cov_rm(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      info.fell_back_to_diagonal = fallback && cfg.covariance == CovarianceMode::full;
      cfg.observer(info);
    }
  }
  std::vector<double> mean(mu.data(), mu.data() + mu.size());
  res.actions = detail::unflatten(mean, H, da);
  res.iterations = res.loss_trace.size();
  res.initial_loss = res.loss_trace.empty() ? 0.0 : res.loss_trace.front();
  res.final_loss = final_state_cost(f, z1, zg, res.actions);
  res.wall_clock = detail::seconds_since(t0);
  return res;
}

inline PlanResult cem(const WorldModel& f, const Latent& z1, const Latent& zg, const CemConfig& cfg, std::size_t horizon,
                      std::uint64_t seed) {
  return gradcem(f, z1, zg, cfg, GradRefineConfig{0, 0.3}, horizon, seed);
}

// ---------------------------------------------------------------------------
// MPPI

struct MppiConfig {
  std::size_t samples = 5;
  double sigma = 0.5;
  double temperature = 1.0;
  std::size_t iterations = 50;
  bool include_nominal = false;  // first sample is the unperturbed nominal
  bool clamp = true;
  double action_bound = 1.0;
};

/// Softmin-weighted update of a nominal sequence (starts at zero).
inline PlanResult mppi(const WorldModel& f, const Latent& z1, const Latent& zg, const MppiConfig& cfg,
                       std::size_t horizon, std::uint64_t seed, const std::vector<Action>* nominal_init = nullptr) {
  require(cfg.samples >= 1, "mppi: samples must be >= 1");
  require(cfg.temperature > 0.0, "mppi: temperature must be positive");
  const auto t0 = detail::Clock::now();
  const std::size_t H = horizon, da = f.action_dim, D = H * da, N = cfg.samples;
  CounterRng rng(derive_seed(seed, "mppi"));
  std::vector<double> nominal(D, 0.0);
  if (nominal_init) {
    require(nominal_init->size() == H, "mppi: nominal sequence has wrong length");
    for (std::size_t t = 0; t < H; ++t)
      for (std::size_t k = 0; k < da; ++k) nominal[t * da + k] = (*nominal_init)[t][k];
  }
  PlanResult res;
  res.initial_loss = final_state_cost(f, z1, zg, detail::unflatten(nominal, H, da));
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::vector<double> flat(N * D), eps(N * D);
    for (std::size_t j = 0; j < N; ++j)
      for (std::size_t k = 0; k < D; ++k) {
        const double e = (cfg.include_nominal && j == 0) ? 0.0 : cfg.sigma * rng.normal();
        double v = nominal[k] + e;
        if (cfg.clamp) v = std::clamp(v, -cfg.action_bound, cfg.action_bound);
        flat[j * D + k] = v;
        eps[j * D + k] = v - nominal[k];
      }
    const auto costs = detail::final_costs(f, z1, zg, detail::split_steps(flat, N, H, da));
    const double cmin = *std::min_element(costs.begin(), costs.end());
    std::vector<double> w(N);
    double wsum = 0.0;
    for (std::size_t j = 0; j < N; ++j) wsum += (w[j] = std::exp(-(costs[j] - cmin) / cfg.temperature));
    for (std::size_t k = 0; k < D; ++k) {
      double delta = 0.0;
      for (std::size_t j = 0; j < N; ++j) delta += w[j] / wsum * eps[j * D + k];
      nominal[k] += delta;
    }
    const double c = final_state_cost(f, z1, zg, detail::unflatten(nominal, H, da));
    if (std::isnan(c)) {
      res.failed = true;
      res.error = "mppi: NaN cost";
      break;
    }
    res.loss_trace.push_back(c);
  }
  res.actions = detail::unflatten(nominal, H, da);
  res.iterations = res.loss_trace.size();
  res.final_loss = res.loss_trace.empty() ? res.initial_loss : res.loss_trace.back();
  res.wall_clock = detail::seconds_since(t0);
  return res;
}

// ---------------------------------------------------------------------------
// Planner selection and MPC

struct GbpPlanner {
  PlanConfig cfg;
  const InitNet* initnet = nullptr;  // required when cfg.init == initnet
};
struct CemPlanner {
  CemConfig cfg;
  std::size_t horizon = 25;
};
struct GradCemPlanner {
  CemConfig cfg;
  GradRefineConfig refine;
  std::size_t horizon = 25;
};
struct MppiPlanner {
  MppiConfig cfg;
  std::size_t horizon = 25;
};

using Planner = std::variant<GbpPlanner, CemPlanner, GradCemPlanner, MppiPlanner>;

inline std::size_t planner_horizon(const Planner& p) {
  return std::visit(
      [](const auto& x) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, GbpPlanner>)
          return x.cfg.horizon;
        else
          return x.horizon;
      },
      p);
}

/// Run one planner call. `warm` is an optional initial sequence (warm start).
inline PlanResult plan(const WorldModel& f, const Planner& planner, const Latent& z1, const Latent& zg,
                       std::uint64_t seed, const std::vector<Action>* warm = nullptr) {
  return std::visit(
      [&](const auto& p) -> PlanResult {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GbpPlanner>) {
          PlanConfig cfg = p.cfg;
          cfg.seed = seed;
          if (warm) return gbp(f, z1, zg, cfg, warm);
          if (cfg.init == InitKind::initnet) {
            require(p.initnet != nullptr, "plan: init network requested but not provided");
            const auto init = init_actions(*p.initnet, z1, zg);
            return gbp(f, z1, zg, cfg, &init);
          }
          return gbp(f, z1, zg, cfg);
        } else if constexpr (std::is_same_v<T, CemPlanner>) {
          return cem(f, z1, zg, p.cfg, p.horizon, seed);
        } else if constexpr (std::is_same_v<T, GradCemPlanner>) {
          return gradcem(f, z1, zg, p.cfg, p.refine, p.horizon, seed);
        } else {
          return mppi(f, z1, zg, p.cfg, p.horizon, seed, warm);
        }
      },
      planner);
}

struct MpcConfig {
  std::size_t mpc_steps = 10;
  std::size_t exec_per_step = 0;  // 0 means the full horizon
  bool warm_start = false;
};

struct MpcResult {
  bool success = false;
  std::vector<Action> executed;
  std::vector<EnvState> visited;  // includes the start state
  std::vector<PlanResult> plans;
  double plan_seconds = 0.0;
};

inline std::uint64_t mpc_step_seed(std::uint64_t seed, std::size_t step) { return derive_seed(seed, step); }

/// Plan, execute the first K actions in the simulator, re-encode the reached observation, replan.
inline MpcResult mpc(const EnvSpec& spec, const WorldModel& f, const Encoder& enc, const TaskInstance& task,
                     const Planner& planner, const MpcConfig& cfg, std::uint64_t seed) {
  const std::size_t H = planner_horizon(planner);
  const std::size_t K = cfg.exec_per_step == 0 ? H : cfg.exec_per_step;
  require(K >= 1 && K <= H, "mpc: actions executed per step must be in [1, H]");
  require(cfg.mpc_steps >= 1, "mpc: need at least one MPC step");
  MpcResult out;
  EnvState s = task.start;
  out.visited.push_back(s);
  out.success = success(spec, s, task);
  const Latent zg = enc.encode(task.goal_obs);
  std::vector<Action> warm;
  for (std::size_t k = 0; k < cfg.mpc_steps && !out.success; ++k) {
    const Latent z1 = enc.encode(observe(spec, s));
    PlanResult pr = plan(f, planner, z1, zg, mpc_step_seed(seed, k), (cfg.warm_start && !warm.empty()) ? &warm : nullptr);
    out.plan_seconds += pr.wall_clock;
    for (std::size_t t = 0; t < K && t < pr.actions.size(); ++t) {
      s = step(spec, s, to_env_action(spec, pr.actions[t]));
      out.executed.push_back(pr.actions[t]);
      out.visited.push_back(s);
      if (success(spec, s, task)) {
        out.success = true;
        break;
      }
    }
    if (cfg.warm_start) {
      warm.assign(pr.actions.begin() + static_cast<std::ptrdiff_t>(std::min(K, pr.actions.size())), pr.actions.end());
      while (warm.size() < H) warm.push_back(Action(f.action_dim, 0.0));
    }
    out.plans.push_back(std::move(pr));
  }
  return out;
}

}  // namespace wmplan
