#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "wmplanlab/encoder.hpp"
#include "wmplanlab/envs.hpp"
#include "wmplanlab/errors.hpp"
#include "wmplanlab/finetune.hpp"
#include "wmplanlab/planners.hpp"
#include "wmplanlab/worldmodel.hpp"

namespace wmplan {

using json = nlohmann::json;

inline constexpr const char* kReportSchema = "wmplanlab-report/1";

// ---------------------------------------------------------------------------
// Statistics

struct Interval {
  double lo = 0.0, hi = 0.0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Wilson score interval at 95% (z = 1.959964).
inline Interval wilson_interval(std::size_t successes, std::size_t n) {
  if (n == 0) return {0.0, 1.0};
  const double z = 1.959963984540054;
  const double nn = static_cast<double>(n), p = static_cast<double>(successes) / nn;
  const double denom = 1.0 + z * z / nn;
  const double center = (p + z * z / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

// ---------------------------------------------------------------------------
// Paired task sets

enum class EvalMode { open_loop, mpc };

inline const char* eval_mode_name(EvalMode m) { return m == EvalMode::open_loop ? "open-loop" : "mpc"; }

inline std::uint64_t task_seed(std::uint64_t seed, std::size_t i) { return derive_seed(derive_seed(seed, "tasks"), i); }
inline std::uint64_t plan_seed(std::uint64_t seed, std::size_t i) { return derive_seed(derive_seed(seed, "plan"), i); }

inline std::vector<TaskInstance> sample_tasks(const EnvSpec& spec, const std::vector<Episode>& data, std::size_t n,
                                              std::size_t horizon_gap, std::uint64_t seed) {
  require(n >= 1, "sample_tasks: n_tasks must be >= 1");
  std::vector<TaskInstance> tasks;
  tasks.reserve(n);
  for (std::size_t i = 0; i < n; ++i) tasks.push_back(sample_task(spec, data, horizon_gap, task_seed(seed, i)));
  return tasks;
}

inline std::uint64_t hash_tasks(const std::vector<TaskInstance>& tasks) {
  std::uint64_t h = fnv1a("tasks", 5);
  for (const auto& t : tasks) {
    const double v[] = {t.start.pos.x, t.start.pos.y, t.start.vel.x,      t.start.vel.y,
                        t.goal_state.pos.x, t.goal_state.pos.y, t.goal_state.vel.x, t.goal_state.vel.y};
    h = fnv1a(v, sizeof v, h);
    const std::uint64_t idx[] = {t.horizon_gap, t.source_traj, t.source_offset};
    h = fnv1a(idx, sizeof idx, h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Parallel map merged by index

/// Runs fn(i) for i in [0, n) on `workers` threads; results land at index i.
template <class R, class Fn>
std::vector<R> parallel_map(std::size_t n, std::size_t workers, Fn fn) {
  std::vector<R> out(n);
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

inline std::size_t default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------------------
// Success-rate grid

struct TaskRow {
  std::size_t task_id = 0;
  bool success = false;
  double plan_seconds = 0.0;  // summed over the planner calls of this task
  std::size_t plan_calls = 0;
  double final_loss = 0.0;    // planner loss of the first plan
  std::string error;
  friend bool operator==(const TaskRow&, const TaskRow&) = default;
};

struct EvalCell {
  std::string model;
  std::string planner;
  std::size_t n = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;
  Interval ci;
  double mean_plan_seconds = 0.0;  // per planner call
  std::vector<double> mean_loss_trace;
  std::vector<TaskRow> rows;
  friend bool operator==(const EvalCell&, const EvalCell&) = default;
};

struct EvalReport {
  std::string schema = kReportSchema;
  std::string mode = "open-loop";
  std::uint64_t seed = 0;
  std::size_t n_tasks = 0;
  std::size_t horizon_gap = 0;
  std::string task_set_hash;
  std::map<std::string, std::string> config_hashes;
  std::vector<EvalCell> cells;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct NamedModel {
  std::string name;
  const WorldModel* model = nullptr;
};

struct NamedPlanner {
  std::string name;
  Planner planner;
};

struct EvalConfig {
  std::size_t n_tasks = 100;
  std::size_t horizon_gap = 25;
  EvalMode mode = EvalMode::mpc;
  MpcConfig mpc;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

namespace detail {

inline EvalCell summarize_cell(std::string model, std::string planner, std::vector<TaskRow> rows,
                               const std::vector<std::vector<double>>& traces) {
  EvalCell cell;
  cell.model = std::move(model);
  cell.planner = std::move(planner);
  cell.n = rows.size();
  double secs = 0.0;
  std::size_t calls = 0;
  for (const auto& r : rows) {
    cell.successes += r.success ? 1 : 0;
    secs += r.plan_seconds;
    calls += r.plan_calls;
  }
  cell.success_rate = cell.n ? static_cast<double>(cell.successes) / static_cast<double>(cell.n) : 0.0;
  cell.ci = wilson_interval(cell.successes, cell.n);
  cell.mean_plan_seconds = calls ? secs / static_cast<double>(calls) : 0.0;
  std::size_t len = 0;
  bool any = false;
  for (const auto& t : traces) {
    if (t.empty()) continue;
    len = any ? std::min(len, t.size()) : t.size();
    any = true;
  }
  if (any) {
    cell.mean_loss_trace.assign(len, 0.0);
    std::size_t cnt = 0;
    for (const auto& t : traces) {
      if (t.empty()) continue;
      for (std::size_t i = 0; i < len; ++i) cell.mean_loss_trace[i] += t[i];
      ++cnt;
    }
    for (auto& x : cell.mean_loss_trace) x /= static_cast<double>(cnt);
  }
  cell.rows = std::move(rows);
  return cell;
}

}  // namespace detail

/// Paired success-rate grid: every (model, planner) cell sees the same tasks and
/// the same per-task planner seeds. Open-loop is one plan executed in full.
inline EvalReport evaluate(const EnvSpec& spec, const Encoder& enc, const std::vector<Episode>& data,
                           const std::vector<NamedModel>& models, const std::vector<NamedPlanner>& planners,
                           const EvalConfig& cfg) {
  const auto tasks = sample_tasks(spec, data, cfg.n_tasks, cfg.horizon_gap, cfg.seed);
  EvalReport rep;
  rep.mode = eval_mode_name(cfg.mode);
  rep.seed = cfg.seed;
  rep.n_tasks = cfg.n_tasks;
  rep.horizon_gap = cfg.horizon_gap;
  rep.task_set_hash = hex64(hash_tasks(tasks));
  for (const auto& m : models) {
    require(m.model != nullptr, "evaluate: null model '" + m.name + "'");
    for (const auto& p : planners) {
      MpcConfig mcfg = cfg.mpc;
      if (cfg.mode == EvalMode::open_loop) mcfg = MpcConfig{1, 0, false};
      struct Out {
        TaskRow row;
        std::vector<double> trace;
      };
      auto outs = parallel_map<Out>(tasks.size(), cfg.workers, [&](std::size_t i) {
        Out o;
        o.row.task_id = i;
        try {
          const auto r = mpc(spec, *m.model, enc, tasks[i], p.planner, mcfg, plan_seed(cfg.seed, i));
          o.row.success = r.success;
          o.row.plan_seconds = r.plan_seconds;
          o.row.plan_calls = r.plans.size();
          if (!r.plans.empty()) {
            o.row.final_loss = r.plans.front().final_loss;
            o.trace = r.plans.front().loss_trace;
            for (const auto& pr : r.plans)
              if (pr.failed && o.row.error.empty()) o.row.error = pr.error;
          }
        } catch (const std::exception& e) {
          o.row.error = e.what();
          log_warning("evaluate: task " + std::to_string(i) + " (" + m.name + ", " + p.name + "): " + e.what());
        }
        return o;
      });
      std::vector<TaskRow> rows;
      std::vector<std::vector<double>> traces;
      for (auto& o : outs) {
        rows.push_back(std::move(o.row));
        traces.push_back(std::move(o.trace));
      }
      rep.cells.push_back(detail::summarize_cell(m.name, p.name, std::move(rows), traces));
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Train-test gap

struct GapReport {
  std::size_t n = 0;
  double mean_expert = 0.0;
  double mean_planned = 0.0;
  double difference = 0.0;  // expert - planned
  std::vector<double> per_task_expert;
  std::vector<double> per_task_planned;
  friend bool operator==(const GapReport&, const GapReport&) = default;
};

/// Produces the planned sequence for one gap rollout; defaults to gbp.
using GapPlanner = std::function<std::vector<Action>(const Latent& z1, const Latent& zg, const TaskInstance& task,
                                                     std::uint64_t seed)>;

/// Mean world-model error along expert actions vs. planner actions from the same
/// start/goal pairs. Each rollout is averaged over its steps first.
inline GapReport train_test_gap(const WorldModel& f, const EnvSpec& spec, const Encoder& enc,
                                const std::vector<Episode>& data, const PlanConfig& plan_cfg, std::size_t n,
                                std::uint64_t seed, GapPlanner planner = {}, std::size_t workers = 1) {
  require(n >= 1, "train_test_gap: n must be >= 1");
  const auto tasks = sample_tasks(spec, data, n, plan_cfg.horizon, seed);
  struct Pair {
    double expert = 0.0, planned = 0.0;
  };
  const auto pairs = parallel_map<Pair>(n, workers, [&](std::size_t i) {
    const auto& task = tasks[i];
    std::vector<Action> expert;
    for (const auto& a : task.expert_actions) expert.push_back(to_model_action(spec, a));
    const Latent z1 = enc.encode(observe(spec, task.start));
    const Latent zg = enc.encode(task.goal_obs);
    std::vector<Action> planned;
    if (planner) {
      planned = planner(z1, zg, task, plan_seed(seed, i));
    } else {
      PlanConfig c = plan_cfg;
      c.seed = plan_seed(seed, i);
      planned = gbp(f, z1, zg, c).actions;
    }
    return Pair{wm_error(f, enc, spec, task.start, expert).mean, wm_error(f, enc, spec, task.start, planned).mean};
  });
  GapReport g;
  g.n = n;
  for (const auto& p : pairs) {
    g.per_task_expert.push_back(p.expert);
    g.per_task_planned.push_back(p.planned);
    g.mean_expert += p.expert;
    g.mean_planned += p.planned;
  }
  g.mean_expert /= static_cast<double>(n);
  g.mean_planned /= static_cast<double>(n);
  g.difference = g.mean_expert - g.mean_planned;
  return g;
}

// ---------------------------------------------------------------------------
// Loss landscape

struct LandscapeGrid {
  std::string model;
  std::size_t resolution = 0;
  double c_min = -1.25, c_max = 1.25;
  std::vector<double> alpha;          // flattened H*d_a direction
  std::vector<double> beta;
  std::vector<double> values;         // row-major [u][v]
  double anchor_loss = 0.0;           // goal loss of this model's own GBP anchor

  double coefficient(std::size_t i) const {
    return resolution == 1 ? c_min : c_min + (c_max - c_min) * static_cast<double>(i) / static_cast<double>(resolution - 1);
  }
  double at(std::size_t iu, std::size_t iv) const { return values[iu * resolution + iv]; }
  friend bool operator==(const LandscapeGrid&, const LandscapeGrid&) = default;
};

/// Sum of |differences| between horizontally and vertically adjacent cells.
inline double total_variation(const LandscapeGrid& g) {
  const std::size_t R = g.resolution;
  double tv = 0.0;
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < R; ++j) {
      if (i + 1 < R) tv += std::abs(g.at(i + 1, j) - g.at(i, j));
      if (j + 1 < R) tv += std::abs(g.at(i, j + 1) - g.at(i, j));
    }
  return tv;
}

struct LandscapeConfig {
  std::size_t resolution = 50;
  double c_min = -1.25, c_max = 1.25;
  PlanConfig anchor = [] {
    PlanConfig p;
    p.iterations = 300;
    p.optimizer = OptimizerKind::adam;
    p.lr = 1e-3;
    return p;
  }();
};

struct LandscapeResult {
  LandscapeGrid baseline;
  LandscapeGrid adversarial;
  std::vector<Action> a_gt;
  std::vector<Action> a_init;
  std::vector<Action> anchor_baseline;
  std::vector<Action> anchor_adversarial;
  bool degenerate = false;
};

/// Goal loss for a batch of flattened sequences [B, H*d_a] under `loss`.
inline std::vector<double> batch_goal_losses(const WorldModel& f, const Latent& z1, const Latent& zg,
                                             const GoalLossSpec& loss, const std::vector<double>& flat, std::size_t B,
                                             std::size_t H) {
  const std::size_t da = f.action_dim;
  const auto steps = detail::split_steps(flat, B, H, da);
  std::vector<double> zrep;
  zrep.reserve(B * z1.size());
  for (std::size_t b = 0; b < B; ++b) zrep.insert(zrep.end(), z1.begin(), z1.end());
  const auto zs = rollout_model_values(f, Tensor::raw({B, z1.size()}, std::move(zrep)), steps);
  std::vector<double> out(B, 0.0);
  double wsum = 0.0;
  for (double w : loss.weights) wsum += w;
  for (std::size_t t = 0; t < H; ++t) {
    double w;
    if (loss.mode == GoalLossMode::final_state) {
      if (t + 1 != H) continue;
      w = 1.0;
    } else {
      w = loss.weights[t] / wsum / static_cast<double>(H);
    }
    for (std::size_t b = 0; b < B; ++b) {
      double e = 0.0;
      for (std::size_t k = 0; k < zg.size(); ++k) {
        const double d = zs[t].at(b, k) - zg[k];
        e += d * d;
      }
      out[b] += w * e;
    }
  }
  return out;
}

namespace detail {

inline std::vector<double> flatten_actions(const std::vector<Action>& a) {
  std::vector<double> out;
  for (const auto& x : a) out.insert(out.end(), x.begin(), x.end());
  return out;
}

inline LandscapeGrid eval_grid(const WorldModel& f, const Latent& z1, const Latent& zg, const GoalLossSpec& loss,
                               const std::vector<double>& center, const std::vector<double>& alpha,
                               const std::vector<double>& beta, const LandscapeConfig& cfg, std::size_t H) {
  LandscapeGrid g;
  g.resolution = cfg.resolution;
  g.c_min = cfg.c_min;
  g.c_max = cfg.c_max;
  g.alpha = alpha;
  g.beta = beta;
  const std::size_t R = cfg.resolution, D = center.size();
  g.values.reserve(R * R);
  // One batched rollout per grid row keeps the tape small.
  for (std::size_t iu = 0; iu < R; ++iu) {
    std::vector<double> flat(R * D);
    const double u = g.coefficient(iu);
    for (std::size_t iv = 0; iv < R; ++iv) {
      const double v = g.coefficient(iv);
      for (std::size_t k = 0; k < D; ++k) flat[iv * D + k] = center[k] + u * alpha[k] + v * beta[k];
    }
    const auto row = batch_goal_losses(f, z1, zg, loss, flat, R, H);
    g.values.insert(g.values.end(), row.begin(), row.end());
  }
  return g;
}

}  // namespace detail

/// Goal-loss grids of two models over the same plane a_GT + u*alpha + v*beta,
/// alpha/beta pointing at each model's GBP solution from a shared fixed init.
inline LandscapeResult landscape(const WorldModel& f_base, const WorldModel& f_adv, const EnvSpec& spec,
                                 const Encoder& enc, const TaskInstance& task, const LandscapeConfig& cfg,
                                 std::uint64_t seed) {
  require(cfg.resolution >= 1, "landscape: resolution must be >= 1");
  require(f_base.latent_dim == f_adv.latent_dim && f_base.action_dim == f_adv.action_dim,
          "landscape: models must share latent and action dimensions");
  const std::size_t H = task.horizon_gap;
  require(H >= 1, "landscape: task horizon must be >= 1");
  PlanConfig pc = cfg.anchor;
  pc.horizon = H;
  pc.seed = seed;
  const Latent z1 = enc.encode(observe(spec, task.start));
  const Latent zg = enc.encode(task.goal_obs);

  LandscapeResult res;
  CounterRng rng(derive_seed(seed, "landscape-init"));
  for (std::size_t t = 0; t < H; ++t) {
    Action a(f_base.action_dim);
    for (auto& x : a) x = rng.normal();
    if (pc.clamp)
      for (auto& x : a) x = std::clamp(x, -pc.action_bound, pc.action_bound);
    res.a_init.push_back(std::move(a));
  }
  for (const auto& a : task.expert_actions) res.a_gt.push_back(to_model_action(spec, a));
  const auto rb = gbp(f_base, z1, zg, pc, &res.a_init);
  const auto ra = gbp(f_adv, z1, zg, pc, &res.a_init);
  res.anchor_baseline = rb.actions;
  res.anchor_adversarial = ra.actions;

  const auto center = detail::flatten_actions(res.a_gt);
  auto alpha = detail::flatten_actions(rb.actions), beta = detail::flatten_actions(ra.actions);
  double na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < center.size(); ++k) {
    alpha[k] -= center[k];
    beta[k] -= center[k];
    na += alpha[k] * alpha[k];
    nb += beta[k] * beta[k];
  }
  if (na < 1e-12 || nb < 1e-12) {
    res.degenerate = true;
    log_warning("landscape: degenerate direction (|alpha|^2=" + std::to_string(na) + ", |beta|^2=" +
                std::to_string(nb) + ")");
  }
  res.baseline = detail::eval_grid(f_base, z1, zg, pc.loss, center, alpha, beta, cfg, H);
  res.adversarial = detail::eval_grid(f_adv, z1, zg, pc.loss, center, alpha, beta, cfg, H);
  res.baseline.model = "baseline";
  res.adversarial.model = "adversarial";
  res.baseline.anchor_loss = rb.final_loss;
  res.adversarial.anchor_loss = ra.final_loss;
  return res;
}

// ---------------------------------------------------------------------------
// Linear probe decoder

struct ProbeDecoder {
  Eigen::MatrixXd weights;  // [d_z + 1, d_o], last row is the bias
  double rmse = 0.0;        // per-coordinate RMSE on the fit data
  bool ridge = false;

  Observation decode(const Latent& z) const {
    const auto dz = static_cast<Eigen::Index>(z.size());
    require(dz + 1 == weights.rows(), "probe decode: latent dimension mismatch");
    Observation o(static_cast<std::size_t>(weights.cols()));
    for (Eigen::Index c = 0; c < weights.cols(); ++c) {
      double v = weights(dz, c);
      for (Eigen::Index r = 0; r < dz; ++r) v += z[static_cast<std::size_t>(r)] * weights(r, c);
      o[static_cast<std::size_t>(c)] = v;
    }
    return o;
  }
};

/// Least-squares map [z, 1] -> o; ridge 1e-6 when the design matrix is rank-deficient.
inline ProbeDecoder train_probe_decoder(const std::vector<Latent>& zs, const std::vector<Observation>& obs) {
  require(!zs.empty() && zs.size() == obs.size(), "train_probe_decoder: need paired (z, o) samples");
  const auto n = static_cast<Eigen::Index>(zs.size());
  const auto dz = static_cast<Eigen::Index>(zs.front().size());
  const auto dobs = static_cast<Eigen::Index>(obs.front().size());
  Eigen::MatrixXd X(n, dz + 1), Y(n, dobs);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < dz; ++k) X(i, k) = zs[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    X(i, dz) = 1.0;
    for (Eigen::Index k = 0; k < dobs; ++k) Y(i, k) = obs[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  ProbeDecoder p;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() == X.cols()) {
    p.weights = qr.solve(Y);
  } else {
    p.ridge = true;
    Eigen::MatrixXd A = X.transpose() * X;
    A.diagonal().array() += 1e-6;
    p.weights = A.ldlt().solve(X.transpose() * Y);
  }
  const Eigen::MatrixXd resid = X * p.weights - Y;
  p.rmse = std::sqrt(resid.squaredNorm() / static_cast<double>(resid.size()));
  return p;
}

/// Pairs every encoded state of a dataset with its observation.
inline ProbeDecoder train_probe_decoder(const EnvSpec& spec, const Encoder& enc, const std::vector<Episode>& data) {
  std::vector<Latent> zs;
  std::vector<Observation> obs;
  for (const auto& ep : data)
    for (const auto& s : ep.states) {
      obs.push_back(observe(spec, s));
      zs.push_back(enc.encode(obs.back()));
    }
  return train_probe_decoder(zs, obs);
}

// ---------------------------------------------------------------------------
// Report files

inline json to_json(const EvalReport& r) {
  json cells = json::array();
  for (const auto& c : r.cells) {
    json rows = json::array();
    for (const auto& row : c.rows)
      rows.push_back({{"task_id", row.task_id},
                      {"success", row.success},
                      {"plan_calls", row.plan_calls},
                      {"final_loss", row.final_loss},
                      {"error", row.error}});
    cells.push_back({{"model", c.model},
                     {"planner", c.planner},
                     {"n", c.n},
                     {"successes", c.successes},
                     {"success_rate", c.success_rate},
                     {"wilson95", {c.ci.lo, c.ci.hi}},
                     {"mean_loss_trace", c.mean_loss_trace},
                     {"rows", rows}});
  }
  return {{"schema", r.schema},   {"mode", r.mode},
          {"seed", r.seed},       {"n_tasks", r.n_tasks},
          {"horizon_gap", r.horizon_gap}, {"task_set_hash", r.task_set_hash},
          {"config_hashes", r.config_hashes}, {"cells", cells}};
}

/// Wall-clock lives apart from report.json so that the latter is reproducible byte for byte.
inline json timing_json(const EvalReport& r) {
  json cells = json::array();
  for (const auto& c : r.cells) {
    std::vector<double> secs;
    for (const auto& row : c.rows) secs.push_back(row.plan_seconds);
    cells.push_back({{"model", c.model}, {"planner", c.planner}, {"mean_plan_seconds", c.mean_plan_seconds},
                     {"plan_seconds", secs}});
  }
  return {{"schema", r.schema}, {"cells", cells}};
}

inline EvalReport report_from_json(const json& j, const json* timing = nullptr) {
  EvalReport r;
  if (j.at("schema").get<std::string>() != kReportSchema)
    throw ConfigError("report: unsupported schema '" + j.at("schema").get<std::string>() + "'");
  r.schema = j.at("schema");
  r.mode = j.at("mode");
  r.seed = j.at("seed");
  r.n_tasks = j.at("n_tasks");
  r.horizon_gap = j.at("horizon_gap");
  r.task_set_hash = j.at("task_set_hash");
  r.config_hashes = j.at("config_hashes").get<std::map<std::string, std::string>>();
  for (const auto& jc : j.at("cells")) {
    EvalCell c;
    c.model = jc.at("model");
    c.planner = jc.at("planner");
    c.n = jc.at("n");
    c.successes = jc.at("successes");
    c.success_rate = jc.at("success_rate");
    c.ci = {jc.at("wilson95").at(0).get<double>(), jc.at("wilson95").at(1).get<double>()};
    c.mean_loss_trace = jc.at("mean_loss_trace").get<std::vector<double>>();
    for (const auto& jr : jc.at("rows")) {
      TaskRow row;
      row.task_id = jr.at("task_id");
      row.success = jr.at("success");
      row.plan_calls = jr.at("plan_calls");
      // Non-finite losses serialize as null.
      row.final_loss = jr.at("final_loss").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                     : jr.at("final_loss").get<double>();
      row.error = jr.at("error");
      c.rows.push_back(std::move(row));
    }
    r.cells.push_back(std::move(c));
  }
  if (timing) {
    const auto& tc = timing->at("cells");
    require(tc.size() == r.cells.size(), "report: timing file does not match report cells");
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
      r.cells[i].mean_plan_seconds = tc[i].at("mean_plan_seconds");
      const auto secs = tc[i].at("plan_seconds").get<std::vector<double>>();
      require(secs.size() == r.cells[i].rows.size(), "report: timing rows do not match report rows");
      for (std::size_t k = 0; k < secs.size(); ++k) r.cells[i].rows[k].plan_seconds = secs[k];
    }
  }
  return r;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

inline std::string cells_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "model,planner,mode,task_id,success,plan_seconds,final_loss\n";
  for (const auto& c : r.cells)
    for (const auto& row : c.rows)
      os << c.model << ',' << c.planner << ',' << r.mode << ',' << row.task_id << ',' << (row.success ? 1 : 0) << ','
         << format_double(row.plan_seconds) << ',' << format_double(row.final_loss) << '\n';
  return os.str();
}

/// Writes report.json, timing.json and cells.csv into `dir`.
inline void emit_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", to_json(r).dump(2) + "\n");
  write_text(dir / "timing.json", timing_json(r).dump(2) + "\n");
  write_text(dir / "cells.csv", cells_csv(r));
}

inline EvalReport parse_report(const std::filesystem::path& dir) {
  const auto j = json::parse(read_text(dir / "report.json"));
  if (std::filesystem::exists(dir / "timing.json")) {
    const auto t = json::parse(read_text(dir / "timing.json"));
    return report_from_json(j, &t);
  }
  return report_from_json(j);
}

inline json to_json(const GapReport& g) {
  return {{"schema", kReportSchema},          {"n", g.n},
          {"mean_expert", g.mean_expert},     {"mean_planned", g.mean_planned},
          {"difference", g.difference},       {"per_task_expert", g.per_task_expert},
          {"per_task_planned", g.per_task_planned}};
}

inline GapReport gap_from_json(const json& j) {
  GapReport g;
  g.n = j.at("n");
  g.mean_expert = j.at("mean_expert");
  g.mean_planned = j.at("mean_planned");
  g.difference = j.at("difference");
  g.per_task_expert = j.at("per_task_expert").get<std::vector<double>>();
  g.per_task_planned = j.at("per_task_planned").get<std::vector<double>>();
  return g;
}

/// Header plus one "u,v,value" row per cell.
inline std::string grid_csv(const LandscapeGrid& g) {
  std::ostringstream os;
  os << "u,v,value\n";
  for (std::size_t i = 0; i < g.resolution; ++i)
    for (std::size_t j = 0; j < g.resolution; ++j)
      os << format_double(g.coefficient(i)) << ',' << format_double(g.coefficient(j)) << ',' << format_double(g.at(i, j))
         << '\n';
  return os.str();
}

inline json to_json(const LandscapeGrid& g) {
  return {{"model", g.model},     {"resolution", g.resolution}, {"c_min", g.c_min},
          {"c_max", g.c_max},     {"alpha", g.alpha},           {"beta", g.beta},
          {"values", g.values},   {"anchor_loss", g.anchor_loss}, {"total_variation", total_variation(g)}};
}

inline LandscapeGrid grid_from_json(const json& j) {
  LandscapeGrid g;
  g.model = j.at("model");
  g.resolution = j.at("resolution");
  g.c_min = j.at("c_min");
  g.c_max = j.at("c_max");
  g.alpha = j.at("alpha").get<std::vector<double>>();
  g.beta = j.at("beta").get<std::vector<double>>();
  g.values = j.at("values").get<std::vector<double>>();
  g.anchor_loss = j.at("anchor_loss");
  require(g.values.size() == g.resolution * g.resolution, "landscape grid: value count does not match resolution");
  return g;
}

/// Decoded positions of a latent sequence, one CSV row per step.
inline std::string decoded_csv(const ProbeDecoder& probe, const std::vector<Latent>& zs) {
  std::ostringstream os;
  os << "step";
  for (Eigen::Index c = 0; c < probe.weights.cols(); ++c) os << ",o" << c;
  os << '\n';
  for (std::size_t t = 0; t < zs.size(); ++t) {
    os << t;
    for (double v : probe.decode(zs[t])) os << ',' << format_double(v);
    os << '\n';
  }
  return os.str();
}

}  // namespace wmplan
