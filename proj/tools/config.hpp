#pragma once

// Run configuration: a JSON tree whose defaults double as the schema.
// Presets and user files are patches merged over the defaults; any key
// missing from the defaults is rejected with its dotted path.

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include <json.hpp>

#include "wmplanlab/errors.hpp"
#include "wmplanlab/evalreport.hpp"
#include "wmplanlab/finetune.hpp"
#include "wmplanlab/initnet.hpp"
#include "wmplanlab/planners.hpp"

namespace wmplan::cli {

using json = nlohmann::json;

inline json default_config() {
  return json::parse(R"({
  "seed": 0,
  "out_dir": "run",
  "workers": 0,
  "env": {"kind": "wall2d"},
  "encoder": {"kind": "random-fourier", "latent_dim": 64, "sigma": 4.0},
  "data": {"path": "data", "n_traj": 1920, "traj_len": 50, "policy": "goal-seeking-noisy"},
  "model": {"path": "models/baseline", "hidden": [128, 128], "residual": true, "zero_last": true},
  "train": {"epochs": 20, "batch_size": 64, "lr": 0.001},
  "finetune_adv": {
    "input": "models/baseline", "output": "models/awm",
    "lambda_a": 0.08, "lambda_z": 0.2, "attack": "fgsm", "pgd_steps": 2, "init": "uniform",
    "radius_mode": "fixed", "per_dimension_std": false,
    "epochs": 2, "batch_size": 48, "lr": 0.0001
  },
  "finetune_online": {
    "input": "models/baseline", "output": "models/owm",
    "iterations": 20, "horizon": 25, "plan_iterations": 300, "plan_optimizer": "adam", "plan_lr": 0.3,
    "mix_ratio": 0.5, "lr": 0.0001, "steps_per_iteration": 50, "batch_size": 80
  },
  "initnet": {"output": "models/initnet", "horizon": 25, "epochs": 1, "lr": 0.001, "optimizer": "adam",
              "hidden": [128, 128]},
  "planners": {
    "gbp-adam": {"optimizer": "adam", "lr": 0.2, "iterations": 100, "horizon": 25, "loss": "final",
                 "weight_base": 2.0, "clamp": true},
    "gbp-gd": {"optimizer": "sgd", "lr": 1.0, "iterations": 100, "horizon": 25, "loss": "final",
               "weight_base": 2.0, "clamp": true},
    "gbp-initnet": {"optimizer": "adam", "lr": 0.2, "iterations": 100, "horizon": 25, "loss": "final",
                    "weight_base": 2.0, "clamp": true},
    "cem": {"population": 300, "elites": 30, "iterations": 30, "sigma0": 1.0, "horizon": 25},
    "gradcem": {"population": 50, "elites": 10, "iterations": 30, "sigma0": 1.0, "horizon": 25,
                "refine_steps": 2, "refine_lr": 0.3},
    "mppi": {"samples": 5, "sigma": 0.5, "temperature": 1.0, "iterations": 50, "horizon": 25}
  },
  "eval": {
    "report": "reports/eval", "mode": "mpc", "n_tasks": 100, "horizon_gap": 25,
    "mpc_steps": 10, "exec_per_step": 0, "warm_start": false,
    "task_source": "fresh", "task_pool": 200,
    "planners": ["gbp-adam"],
    "models": {"baseline": "models/baseline"}
  },
  "gap": {"report": "reports/gap", "model": "models/baseline", "n": 50, "planner": "gbp-gd",
          "plan_iterations": 300},
  "landscape": {"report": "reports/landscape", "baseline": "models/baseline", "adversarial": "models/awm",
                "n_tasks": 10, "horizon_gap": 25, "resolution": 50, "c_min": -1.25, "c_max": 1.25,
                "anchor_iterations": 300, "anchor_lr": 0.001}
})");
}

// Objects whose keys are user-chosen names.
inline bool is_open_map(const std::string& path) { return path == "eval.models"; }

inline std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

inline void merge_into(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected an object");
  if (is_open_map(path)) {
    for (auto it = patch.begin(); it != patch.end(); ++it)
      if (!it.value().is_string()) throw ConfigError(join_path(path, it.key()) + ": expected a string path");
    base = patch;
    return;
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const auto p = join_path(path, it.key());
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + p + "'");
    json& dst = base[it.key()];
    const json& src = it.value();
    if (dst.is_object()) {
      merge_into(dst, src, p);
    } else if (dst.is_number_integer() || dst.is_number_unsigned()) {
      if (src.is_number_integer() || src.is_number_unsigned()) {
        if (src.is_number_integer() && src.get<std::int64_t>() < 0 && dst.is_number_unsigned())
          throw ConfigError(p + ": must be non-negative");
        dst = src;
      } else if (src.is_number_float() && std::floor(src.get<double>()) == src.get<double>()) {
        dst = static_cast<std::int64_t>(src.get<double>());
      } else {
        throw ConfigError(p + ": expected an integer");
      }
    } else if (dst.is_number_float()) {
      if (!src.is_number()) throw ConfigError(p + ": expected a number");
      dst = src.get<double>();
    } else if (dst.is_boolean()) {
      if (!src.is_boolean()) throw ConfigError(p + ": expected true or false");
      dst = src;
    } else if (dst.is_string()) {
      if (!src.is_string()) throw ConfigError(p + ": expected a string");
      dst = src;
    } else if (dst.is_array()) {
      if (!src.is_array()) throw ConfigError(p + ": expected a list");
      if (!dst.empty())
        for (const auto& e : src)
          if (e.type() != dst.front().type() && !(e.is_number() && dst.front().is_number()))
            throw ConfigError(p + ": list element has the wrong type");
      dst = src;
    }
  }
}

inline json preset_patch(const std::string& name) {
  if (name == "wall-baseline") return json::object();
  if (name == "pointmass-baseline")
    return json::parse(R"({"env": {"kind": "pointmass"}, "data": {"n_traj": 2000, "traj_len": 100},
      "finetune_adv": {"batch_size": 16, "epochs": 1},
      "finetune_online": {"iterations": 500, "batch_size": 32}})");
  if (name == "wall-awm")
    return json::parse(R"({"eval": {"models": {"baseline": "models/baseline", "awm": "models/awm"}}})");
  if (name == "wall-owm")
    return json::parse(R"({"eval": {"models": {"baseline": "models/baseline", "owm": "models/owm"}}})");
  if (name == "longhorizon")
    return json::parse(R"({"env": {"kind": "pointmass"}, "data": {"n_traj": 2000, "traj_len": 100},
      "initnet": {"horizon": 50},
      "planners": {"gbp-adam": {"horizon": 50}, "gbp-gd": {"horizon": 50}, "gbp-initnet": {"horizon": 50}},
      "eval": {"horizon_gap": 50, "mpc_steps": 20, "exec_per_step": 1}})");
  throw ConfigError("unknown preset '" + name + "' (known: wall-baseline, pointmass-baseline, wall-awm, wall-owm, "
                    "longhorizon)");
}

/// `key=value` with a dotted key; the value is parsed as JSON when possible, else taken as a string.
inline json override_patch(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json patch = json::object();
  json* cur = &patch;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("--set: malformed key '" + key + "'");
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      break;
    }
    cur = &(*cur)[part];
    start = dot + 1;
  }
  return patch;
}

// ---------------------------------------------------------------------------
// Typed views

inline std::string one_of(const json& cfg, const std::string& path, std::initializer_list<const char*> allowed) {
  const json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    node = &node->at(path.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  const auto v = node->get<std::string>();
  std::string list;
  for (const char* a : allowed) {
    if (v == a) return v;
    list += (list.empty() ? "" : ", ") + std::string(a);
  }
  throw ConfigError(path + ": '" + v + "' is not one of " + list);
}

inline void positive(bool ok, const std::string& path, const std::string& what = "must be positive") {
  if (!ok) throw ConfigError(path + ": " + what);
}

inline EnvSpec env_from(const json& c) {
  return one_of(c, "env.kind", {"wall2d", "pointmass"}) == "wall2d" ? wall2d_spec() : point_mass_maze_spec();
}

inline Encoder encoder_from(const json& c, const EnvSpec& spec) {
  const auto kind = one_of(c, "encoder.kind", {"random-fourier", "identity"});
  if (kind == "identity") return Encoder::identity(spec.obs_dim());
  const std::size_t dz = c["encoder"]["latent_dim"];
  positive(dz >= 2 && dz % 2 == 0, "encoder.latent_dim", "must be an even number >= 2");
  return Encoder::random_fourier(spec.obs_dim(), dz, c["encoder"]["sigma"], c["seed"].get<std::uint64_t>());
}

inline OptimizerKind optimizer_from(const json& c, const std::string& path) {
  return one_of(c, path, {"adam", "sgd"}) == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
}

inline PlanConfig gbp_from(const json& c, const std::string& name) {
  const auto& p = c["planners"][name];
  const std::string base = "planners." + name;
  PlanConfig cfg;
  cfg.horizon = p["horizon"];
  cfg.iterations = p["iterations"];
  cfg.lr = p["lr"];
  positive(cfg.horizon >= 1, base + ".horizon");
  positive(cfg.iterations >= 1, base + ".iterations");
  positive(cfg.lr > 0.0, base + ".lr");
  cfg.optimizer = optimizer_from(c, base + ".optimizer");
  cfg.clamp = p["clamp"];
  if (one_of(c, base + ".loss", {"final", "weighted"}) == "weighted")
    cfg.loss = GoalLossSpec::exponential(cfg.horizon, p["weight_base"]);
  if (name == "gbp-initnet") cfg.init = InitKind::initnet;
  return cfg;
}

/// Planner by config name; `initnet` is needed only for gbp-initnet.
inline Planner planner_from(const json& c, const std::string& name, const InitNet* initnet) {
  if (!c["planners"].contains(name)) throw ConfigError("unknown planner '" + name + "'");
  const auto& p = c["planners"][name];
  if (name.rfind("gbp", 0) == 0) return GbpPlanner{gbp_from(c, name), initnet};
  if (name == "cem" || name == "gradcem") {
    CemConfig cc;
    cc.population = p["population"];
    cc.elites = p["elites"];
    cc.iterations = p["iterations"];
    cc.sigma0 = p["sigma0"];
    positive(cc.elites >= 1 && cc.elites <= cc.population, "planners." + name + ".elites",
             "must be in [1, population]");
    if (name == "cem") return CemPlanner{cc, p["horizon"]};
    return GradCemPlanner{cc, GradRefineConfig{p["refine_steps"], p["refine_lr"]}, p["horizon"]};
  }
  MppiConfig mc;
  mc.samples = p["samples"];
  mc.sigma = p["sigma"];
  mc.temperature = p["temperature"];
  mc.iterations = p["iterations"];
  positive(mc.temperature > 0.0, "planners.mppi.temperature");
  return MppiPlanner{mc, p["horizon"]};
}

inline TrainConfig train_from(const json& c) {
  TrainConfig t;
  t.epochs = c["train"]["epochs"];
  t.batch_size = c["train"]["batch_size"];
  t.lr = c["train"]["lr"];
  t.seed = derive_seed(c["seed"].get<std::uint64_t>(), "train");
  positive(t.epochs >= 1, "train.epochs");
  positive(t.batch_size >= 1, "train.batch_size");
  positive(t.lr > 0.0, "train.lr");
  return t;
}

inline std::pair<PerturbationConfig, TrainConfig> adversarial_from(const json& c) {
  const auto& a = c["finetune_adv"];
  PerturbationConfig p;
  p.lambda_a = a["lambda_a"];
  p.lambda_z = a["lambda_z"];
  positive(p.lambda_a >= 0.0, "finetune_adv.lambda_a", "must be >= 0");
  positive(p.lambda_z >= 0.0, "finetune_adv.lambda_z", "must be >= 0");
  p.attack = one_of(c, "finetune_adv.attack", {"fgsm", "pgd"}) == "fgsm" ? AttackKind::fgsm : AttackKind::pgd;
  p.pgd_steps = a["pgd_steps"];
  p.init = one_of(c, "finetune_adv.init", {"uniform", "zero"}) == "uniform" ? AttackInit::uniform : AttackInit::zero;
  p.radius_mode =
      one_of(c, "finetune_adv.radius_mode", {"fixed", "adaptive"}) == "fixed" ? RadiusMode::fixed : RadiusMode::adaptive;
  p.per_dimension_std = a["per_dimension_std"];
  TrainConfig t;
  t.epochs = a["epochs"];
  t.batch_size = a["batch_size"];
  t.lr = a["lr"];
  t.seed = derive_seed(c["seed"].get<std::uint64_t>(), "finetune-adv");
  positive(t.epochs >= 1, "finetune_adv.epochs");
  positive(t.batch_size >= 1, "finetune_adv.batch_size");
  positive(t.lr > 0.0, "finetune_adv.lr");
  return {p, t};
}

inline OnlineConfig online_from(const json& c) {
  const auto& o = c["finetune_online"];
  OnlineConfig cfg;
  cfg.iterations = o["iterations"];
  cfg.plan.horizon = o["horizon"];
  cfg.plan.iterations = o["plan_iterations"];
  cfg.plan.optimizer = optimizer_from(c, "finetune_online.plan_optimizer");
  cfg.plan.lr = o["plan_lr"];
  cfg.mix_ratio = o["mix_ratio"];
  cfg.lr = o["lr"];
  cfg.steps_per_iteration = o["steps_per_iteration"];
  cfg.batch_size = o["batch_size"];
  positive(cfg.mix_ratio >= 0.0 && cfg.mix_ratio <= 1.0, "finetune_online.mix_ratio", "must be in [0, 1]");
  positive(cfg.plan.horizon >= 1, "finetune_online.horizon");
  positive(cfg.plan.iterations >= 1, "finetune_online.plan_iterations");
  positive(cfg.lr > 0.0, "finetune_online.lr");
  positive(cfg.batch_size >= 1, "finetune_online.batch_size");
  return cfg;
}

inline InitNetConfig initnet_from(const json& c) {
  const auto& g = c["initnet"];
  InitNetConfig cfg;
  cfg.horizon = g["horizon"];
  cfg.epochs = g["epochs"];
  cfg.lr = g["lr"];
  cfg.optimizer = optimizer_from(c, "initnet.optimizer");
  cfg.hidden = g["hidden"].get<std::vector<std::size_t>>();
  cfg.seed = derive_seed(c["seed"].get<std::uint64_t>(), "initnet");
  positive(cfg.horizon >= 1, "initnet.horizon");
  positive(cfg.lr > 0.0, "initnet.lr");
  return cfg;
}

inline DataPolicy policy_from(const json& c) {
  return one_of(c, "data.policy", {"random", "goal-seeking-noisy"}) == "random" ? DataPolicy::random
                                                                                 : DataPolicy::goal_seeking_noisy;
}

}  // namespace wmplan::cli
