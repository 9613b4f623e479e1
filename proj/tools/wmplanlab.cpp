#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "wmplanlab/evalreport.hpp"
#include "wmplanlab/finetune.hpp"
#include "wmplanlab/initnet.hpp"
#include "wmplanlab/io.hpp"
#include "wmplanlab/planners.hpp"
#include "wmplanlab/worldmodel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wmplan;
using namespace wmplan::cli;

namespace {

struct Options {
  std::string config_file;
  std::string preset;
  std::vector<std::string> sets;
  std::size_t workers = 0;
  bool force = false;
  std::string planners;
  std::string models;
  std::string mode;
};

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, ',');)
    if (!part.empty()) out.push_back(part);
  return out;
}

json resolve_config(const Options& o) {
  json cfg = default_config();
  if (!o.preset.empty()) merge_into(cfg, preset_patch(o.preset), "");
  if (!o.config_file.empty()) {
    if (!fs::exists(o.config_file)) throw ConfigError("config file not found: " + o.config_file);
    const json user = json::parse(read_text(o.config_file), nullptr, false);
    if (user.is_discarded()) throw ConfigError("config file is not valid JSON: " + o.config_file);
    merge_into(cfg, user, "");
  }
  for (const auto& s : o.sets) merge_into(cfg, override_patch(s), "");
  if (const char* env = std::getenv("WMPLANLAB_SEED")) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw ConfigError("WMPLANLAB_SEED must be a non-negative integer");
    cfg["seed"] = v;
  }
  if (o.workers > 0) cfg["workers"] = o.workers;
  if (!o.mode.empty()) cfg["eval"]["mode"] = o.mode;
  if (!o.planners.empty()) cfg["eval"]["planners"] = split_csv(o.planners);
  if (!o.models.empty()) {
    json kept = json::object();
    for (const auto& name : split_csv(o.models)) {
      if (!cfg["eval"]["models"].contains(name)) throw ConfigError("--models: '" + name + "' is not in eval.models");
      kept[name] = cfg["eval"]["models"][name];
    }
    cfg["eval"]["models"] = kept;
  }
  return cfg;
}

std::string config_hash(const json& cfg) {
  json c = cfg;
  c.erase("workers");  // parallelism does not change results
  const auto s = c.dump();
  return hex64(fnv1a(s.data(), s.size()));
}

fs::path path_in(const json& cfg, const std::string& rel) {
  const fs::path p(rel);
  return p.is_absolute() ? p : fs::path(cfg["out_dir"].get<std::string>()) / p;
}

std::size_t workers_of(const json& cfg) {
  const std::size_t w = cfg["workers"];
  return w == 0 ? default_workers() : w;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& cfg, const json& outputs) {
  fs::create_directories(dir);
  json m = json::object();
  // A dataset directory already has a manifest describing its files; extend it.
  if (fs::exists(dir / "manifest.json")) {
    const auto old = json::parse(read_text(dir / "manifest.json"), nullptr, false);
    if (old.is_object() && old.value("schema", "") == kDatasetSchema) m = old;
  }
  m["command"] = command;
  m["config_hash"] = config_hash(cfg);
  m["config"] = cfg;
  m["outputs"] = outputs;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

std::uint64_t seed_of(const json& cfg) { return cfg["seed"].get<std::uint64_t>(); }

Dataset load_encoded(const json& cfg, const EnvSpec& spec, const Encoder& enc, std::vector<Episode>* raw = nullptr) {
  auto eps = load_episodes(path_in(cfg, cfg["data"]["path"]), spec);
  Dataset d = encode_episodes(spec, enc, eps);
  if (raw) *raw = std::move(eps);
  return d;
}

json trace_json(const TrainTrace& t) {
  return {{"epoch_loss", t.epoch_loss},
          {"steps", t.step_hashes.size()},
          {"final_param_hash", t.step_hashes.empty() ? "" : hex64(t.step_hashes.back())}};
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const json& cfg, const Options& o) {
  const auto spec = env_from(cfg);
  const std::size_t n = cfg["data"]["n_traj"], len = cfg["data"]["traj_len"];
  positive(n >= 1, "data.n_traj");
  positive(len >= 2, "data.traj_len", "must be >= 2");
  const auto policy = policy_from(cfg);
  const fs::path dir = path_in(cfg, cfg["data"]["path"]);
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!o.force) throw ConfigError("output directory " + dir.string() + " is not empty (use --force)");
    fs::remove_all(dir);
  }
  const auto eps = generate_dataset(spec, n, len, policy, derive_seed(seed_of(cfg), "data"));
  save_episodes(dir, spec, eps, {env_kind_name(spec.kind), n, len, policy_name(policy), seed_of(cfg)});
  const auto h = hex64(hash_directory(dir));
  write_manifest(dir, "gen-data", cfg, {{"dataset_hash", h}});
  std::cout << "wrote " << n << " trajectories to " << dir.string() << " (hash " << h << ")\n";
  return 0;
}

int cmd_train(const json& cfg) {
  const auto spec = env_from(cfg);
  const auto enc = encoder_from(cfg, spec);
  const auto data = load_encoded(cfg, spec, enc);
  const auto tc = train_from(cfg);
  auto f = WorldModel::make(enc.latent_dim(), spec.action_dim(), cfg["model"]["hidden"].get<std::vector<std::size_t>>(),
                            cfg["model"]["residual"], derive_seed(seed_of(cfg), "model-init"), cfg["model"]["zero_last"]);
  const auto res = train_teacher_forcing(std::move(f), data, tc);
  const fs::path dir = path_in(cfg, cfg["model"]["path"]);
  save_world_model(dir, res.model, enc.hash());
  write_text(dir / "trace.json", trace_json(res.trace).dump(2) + "\n");
  write_manifest(dir, "train", cfg, {{"param_hash", hex64(res.model.hash())}});
  std::cout << "trained " << tc.epochs << " epochs, final loss " << res.trace.epoch_loss.back() << " -> "
            << dir.string() << "\n";
  return 0;
}

int cmd_finetune_adv(const json& cfg) {
  const auto spec = env_from(cfg);
  const auto enc = encoder_from(cfg, spec);
  const auto data = load_encoded(cfg, spec, enc);
  auto f = load_world_model(path_in(cfg, cfg["finetune_adv"]["input"]), enc.hash());
  const auto [pc, tc] = adversarial_from(cfg);
  const auto res = adversarial_wm(std::move(f), data, pc, tc);
  const fs::path dir = path_in(cfg, cfg["finetune_adv"]["output"]);
  save_world_model(dir, res.model, enc.hash());
  json trace = trace_json(res.trace);
  if (!res.radii.empty()) trace["radii"] = {{"eps_a", res.radii.front().eps_a}, {"eps_z", res.radii.front().eps_z}};
  write_text(dir / "trace.json", trace.dump(2) + "\n");
  write_manifest(dir, "finetune-adv", cfg, {{"param_hash", hex64(res.model.hash())}});
  std::cout << "adversarial finetuning done -> " << dir.string() << "\n";
  return 0;
}

int cmd_finetune_online(const json& cfg) {
  const auto spec = env_from(cfg);
  const auto enc = encoder_from(cfg, spec);
  const auto data = load_encoded(cfg, spec, enc);
  auto f = load_world_model(path_in(cfg, cfg["finetune_online"]["input"]), enc.hash());
  const auto oc = online_from(cfg);
  const auto res = online_wm(std::move(f), spec, enc, data, oc, derive_seed(seed_of(cfg), "finetune-online"));
  const fs::path dir = path_in(cfg, cfg["finetune_online"]["output"]);
  save_world_model(dir, res.model, enc.hash());
  // T' in the dataset directory format, provenance "corrected".
  std::vector<Episode> corrected;
  for (const auto& tr : res.corrected.trajectories) {
    Episode ep;
    ep.states = tr.env_states;
    for (const auto& a : tr.actions) ep.actions.push_back(to_env_action(spec, a));
    corrected.push_back(std::move(ep));
  }
  if (!corrected.empty())
    save_episodes(dir / "corrected", spec, corrected,
                  {env_kind_name(spec.kind), corrected.size(), oc.plan.horizon + 1, "gbp", seed_of(cfg), "corrected"});
  write_text(dir / "trace.json", json{{"loss_trace", res.loss_trace}, {"skipped", res.skipped}}.dump(2) + "\n");
  write_manifest(dir, "finetune-online", cfg, {{"param_hash", hex64(res.model.hash())}});
  std::cout << "online finetuning done (" << res.corrected.trajectories.size() << " corrected trajectories) -> "
            << dir.string() << "\n";
  return 0;
}

int cmd_train_initnet(const json& cfg) {
  const auto spec = env_from(cfg);
  const auto enc = encoder_from(cfg, spec);
  const auto data = load_encoded(cfg, spec, enc);
  const auto ic = initnet_from(cfg);
  auto res = train_initnet(data, ic);
  const fs::path dir = path_in(cfg, cfg["initnet"]["output"]);
  save_initnet(dir, res.net, enc.hash());
  write_text(dir / "trace.json", json{{"loss_trace", res.loss_trace}}.dump() + "\n");
  write_manifest(dir, "train-initnet", cfg, {{"param_hash", hex64(res.net.net.hash())}});
  std::cout << "init network trained on " << res.loss_trace.size() << " windows -> " << dir.string() << "\n";
  return 0;
}

std::vector<Episode> task_pool(const json& cfg, const EnvSpec& spec) {
  const auto src = one_of(cfg, "eval.task_source", {"fresh", "train"});
  if (src == "train") return load_episodes(path_in(cfg, cfg["data"]["path"]), spec);
  const std::size_t n = cfg["eval"]["task_pool"];
  positive(n >= 1, "eval.task_pool");
  return generate_dataset(spec, n, cfg["data"]["traj_len"], policy_from(cfg), derive_seed(seed_of(cfg), "eval-pool"));
}

int cmd_eval(const json& cfg) {
  const auto spec = env_from(cfg);
  const auto enc = encoder_from(cfg, spec);
  const auto mode = one_of(cfg, "eval.mode", {"open-loop", "mpc"});
  const auto planner_names = cfg["eval"]["planners"].get<std::vector<std::string>>();
  if (planner_names.empty()) throw ConfigError("eval.planners: at least one planner required");
  if (cfg["eval"]["models"].empty()) throw ConfigError("eval.models: at least one model required");

  std::optional<InitNet> initnet;
  for (const auto& p : planner_names)
    if (p == "gbp-initnet" && !initnet) initnet = load_initnet(path_in(cfg, cfg["initnet"]["output"]), enc.hash());

  std::vector<std::pair<std::string, WorldModel>> loaded;
  for (auto it = cfg["eval"]["models"].begin(); it != cfg["eval"]["models"].end(); ++it) {
    const auto p = path_in(cfg, it.value().get<std::string>());
    if (!fs::exists(p / "checkpoint.json"))
      throw DatasetError("model '" + it.key() + "': checkpoint not found at " + p.string());
    loaded.emplace_back(it.key(), load_world_model(p, enc.hash()));
  }
  std::vector<NamedModel> models;
  for (const auto& [name, f] : loaded) models.push_back({name, &f});
  std::vector<NamedPlanner> planners;
  for (const auto& p : planner_names) planners.push_back({p, planner_from(cfg, p, initnet ? &*initnet : nullptr)});

  EvalConfig ec;
  ec.n_tasks = cfg["eval"]["n_tasks"];
  ec.horizon_gap = cfg["eval"]["horizon_gap"];
  ec.mode = mode == "mpc" ? EvalMode::mpc : EvalMode::open_loop;
  ec.mpc = MpcConfig{cfg["eval"]["mpc_steps"], cfg["eval"]["exec_per_step"], cfg["eval"]["warm_start"]};
  ec.seed = derive_seed(seed_of(cfg), "eval");
  ec.workers = workers_of(cfg);
  positive(ec.n_tasks >= 1, "eval.n_tasks");
  positive(ec.horizon_gap >= 1, "eval.horizon_gap");

  EvalReport rep = evaluate(spec, enc, task_pool(cfg, spec), models, planners, ec);
  rep.config_hashes["config"] = config_hash(cfg);
  for (const auto& [name, f] : loaded) rep.config_hashes["model:" + name] = hex64(f.hash());
  rep.config_hashes["encoder"] = hex64(enc.hash());

  // Cells from an earlier run over the same task set are kept unless recomputed.
  const fs::path dir = path_in(cfg, cfg["eval"]["report"]);
  if (fs::exists(dir / "report.json")) {
    const auto old = parse_report(dir);
    if (old.task_set_hash == rep.task_set_hash && old.mode == rep.mode && old.seed == rep.seed) {
      std::vector<EvalCell> merged;
      for (const auto& c : old.cells) {
        const bool replaced = std::any_of(rep.cells.begin(), rep.cells.end(), [&](const EvalCell& n) {
          return n.model == c.model && n.planner == c.planner;
        });
        if (!replaced) merged.push_back(c);
      }
      for (const auto& [k, v] : old.config_hashes)
        if (!rep.config_hashes.count(k)) rep.config_hashes[k] = v;
      merged.insert(merged.end(), rep.cells.begin(), rep.cells.end());
      std::stable_sort(merged.begin(), merged.end(), [](const EvalCell& a, const EvalCell& b) {
        return std::tie(a.model, a.planner) < std::tie(b.model, b.planner);
      });
      rep.cells = std::move(merged);
    }
  }
  emit_report(rep, dir);
  write_manifest(dir, "eval", cfg, {{"task_set_hash", rep.task_set_hash}});
  for (const auto& c : rep.cells)
    std::cout << c.model << " / " << c.planner << " [" << rep.mode << "]: " << c.successes << "/" << c.n
              << " success, mean plan " << c.mean_plan_seconds << " s\n";
  return 0;
}

int cmd_gap(const json& cfg) {
  const auto spec = env_from(cfg);
  const auto enc = encoder_from(cfg, spec);
  const auto f = load_world_model(path_in(cfg, cfg["gap"]["model"]), enc.hash());
  const auto eps = load_episodes(path_in(cfg, cfg["data"]["path"]), spec);
  const std::string pname = cfg["gap"]["planner"];
  if (pname.rfind("gbp", 0) != 0 || pname == "gbp-initnet")
    throw ConfigError("gap.planner: must be gbp-adam or gbp-gd");
  PlanConfig pc = gbp_from(cfg, pname);
  pc.iterations = cfg["gap"]["plan_iterations"];
  positive(pc.iterations >= 1, "gap.plan_iterations");
  const std::size_t n = cfg["gap"]["n"];
  positive(n >= 1, "gap.n");
  const auto g = train_test_gap(f, spec, enc, eps, pc, n, derive_seed(seed_of(cfg), "gap"), {}, workers_of(cfg));
  const fs::path dir = path_in(cfg, cfg["gap"]["report"]);
  fs::create_directories(dir);
  json j = to_json(g);
  j["config_hash"] = config_hash(cfg);
  j["model_hash"] = hex64(f.hash());
  write_text(dir / "report.json", j.dump(2) + "\n");
  write_manifest(dir, "gap", cfg, {{"model_hash", hex64(f.hash())}});
  std::cout << "mean error expert " << g.mean_expert << ", planned " << g.mean_planned << ", difference "
            << g.difference << "\n";
  return 0;
}

int cmd_landscape(const json& cfg) {
  const auto spec = env_from(cfg);
  const auto enc = encoder_from(cfg, spec);
  const auto& lc = cfg["landscape"];
  const auto fb = load_world_model(path_in(cfg, lc["baseline"]), enc.hash());
  const auto fa = load_world_model(path_in(cfg, lc["adversarial"]), enc.hash());
  const auto eps = load_episodes(path_in(cfg, cfg["data"]["path"]), spec);
  LandscapeConfig c;
  c.resolution = lc["resolution"];
  c.c_min = lc["c_min"];
  c.c_max = lc["c_max"];
  c.anchor.iterations = lc["anchor_iterations"];
  c.anchor.lr = lc["anchor_lr"];
  positive(c.resolution >= 1, "landscape.resolution");
  positive(c.c_max > c.c_min, "landscape.c_max", "must exceed c_min");
  const std::size_t n = lc["n_tasks"];
  positive(n >= 1, "landscape.n_tasks");
  const std::uint64_t seed = derive_seed(seed_of(cfg), "landscape");
  const auto tasks = sample_tasks(spec, eps, n, lc["horizon_gap"], seed);
  const fs::path dir = path_in(cfg, lc["report"]);
  fs::create_directories(dir);

  struct Out {
    LandscapeResult r;
  };
  const auto outs = parallel_map<Out>(n, workers_of(cfg), [&](std::size_t i) {
    return Out{landscape(fb, fa, spec, enc, tasks[i], c, plan_seed(seed, i))};
  });
  json per_task = json::array();
  std::size_t smoother = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = outs[i].r;
    const double tb = total_variation(r.baseline), ta = total_variation(r.adversarial);
    smoother += ta <= tb ? 1 : 0;
    write_text(dir / ("task_" + std::to_string(i) + "_baseline.csv"), grid_csv(r.baseline));
    write_text(dir / ("task_" + std::to_string(i) + "_adversarial.csv"), grid_csv(r.adversarial));
    per_task.push_back({{"task_id", i},
                        {"degenerate", r.degenerate},
                        {"baseline", to_json(r.baseline)},
                        {"adversarial", to_json(r.adversarial)}});
  }
  const json rep = {{"schema", kReportSchema},
                    {"config_hash", config_hash(cfg)},
                    {"seed", seed_of(cfg)},
                    {"task_set_hash", hex64(hash_tasks(tasks))},
                    {"fraction_adversarial_smoother", static_cast<double>(smoother) / static_cast<double>(n)},
                    {"tasks", per_task}};
  write_text(dir / "report.json", rep.dump(2) + "\n");
  write_manifest(dir, "landscape", cfg, {{"task_set_hash", hex64(hash_tasks(tasks))}});
  std::cout << "adversarial grid smoother on " << smoother << "/" << n << " tasks\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wmplanlab: planning with learned latent world models"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_file, "JSON config file");
    sub->add_option("--preset", o.preset, "named preset applied before the config file");
    sub->add_option("--set", o.sets, "override, e.g. --set train.epochs=5")->allow_extra_args(false);
    sub->add_option("--workers", o.workers, "worker threads (default: all cores)");
  };
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-data", "generate an expert dataset"},
      {"train", "teacher-forcing training"},
      {"finetune-online", "online world modeling"},
      {"finetune-adv", "adversarial world modeling"},
      {"train-initnet", "train the action initialization network"},
      {"eval", "success-rate grid"},
      {"gap", "train-test gap"},
      {"landscape", "goal-loss landscape grids"}};
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub);
    subs[name] = sub;
  }
  subs["gen-data"]->add_flag("--force", o.force, "overwrite a non-empty output directory");
  subs["eval"]->add_option("--planners", o.planners, "comma-separated planner names");
  subs["eval"]->add_option("--models", o.models, "comma-separated model names from eval.models");
  subs["eval"]->add_option("--mode", o.mode, "open-loop or mpc");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const json cfg = resolve_config(o);
    std::string cmd;
    for (const auto& [name, sub] : subs)
      if (sub->parsed()) cmd = name;
    if (cmd == "gen-data") return cmd_gen_data(cfg, o);
    if (cmd == "train") return cmd_train(cfg);
    if (cmd == "finetune-adv") return cmd_finetune_adv(cfg);
    if (cmd == "finetune-online") return cmd_finetune_online(cfg);
    if (cmd == "train-initnet") return cmd_train_initnet(cfg);
    if (cmd == "eval") return cmd_eval(cfg);
    if (cmd == "gap") return cmd_gap(cfg);
    if (cmd == "landscape") return cmd_landscape(cfg);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
